#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package (1.1.0) to gzipped IDX files.

Usage: mnist_from_npm.py <extracted-package-dir> <output-dir>

The package stores each digit class as a JSON array of 784-pixel images with
values byte/255 rounded to three decimals, which round(v * 255) inverts
exactly. Every class is split 80/20 in stored order, then each split is
shuffled with a fixed seed.
"""

import gzip
import json
import random
import struct
import sys
from pathlib import Path

PIXELS = 28 * 28


def load_class(package: Path, digit: int) -> list[bytes]:
    values = json.loads((package / "src" / "digits" / f"{digit}.json").read_text())["data"]
    if len(values) % PIXELS:
        raise SystemExit(f"digit {digit}: {len(values)} values is not a multiple of {PIXELS}")
    images = []
    for start in range(0, len(values), PIXELS):
        raw = [round(v * 255) for v in values[start : start + PIXELS]]
        if any(b < 0 or b > 255 for b in raw):
            raise SystemExit(f"digit {digit}: pixel out of range")
        images.append(bytes(raw))
    return images


def write_split(out: Path, name: str, samples: list[tuple[bytes, int]]) -> None:
    images = struct.pack(">IIII", 0x803, len(samples), 28, 28) + b"".join(s[0] for s in samples)
    labels = struct.pack(">II", 0x801, len(samples)) + bytes(s[1] for s in samples)
    # mtime=0 keeps the archives byte-reproducible.
    for suffix, payload in (("images-idx3-ubyte.gz", images), ("labels-idx1-ubyte.gz", labels)):
        with open(out / f"{name}-{suffix}", "wb") as f:
            with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(payload)


def main() -> None:
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    package, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        images = load_class(package, digit)
        cut = len(images) * 4 // 5
        train += [(img, digit) for img in images[:cut]]
        test += [(img, digit) for img in images[cut:]]
    random.Random(0).shuffle(train)
    random.Random(1).shuffle(test)
    write_split(out, "train", train)
    write_split(out, "test", test)
    print(f"train {len(train)} test {len(test)}")


if __name__ == "__main__":
    main()
