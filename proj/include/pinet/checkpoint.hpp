#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pinet/blocks.hpp"

namespace pinet {

/// Reference evaluations stored alongside the parameters: `outputs` row i is
/// the network evaluated at `inputs` row i when the checkpoint was written.
struct Witness {
  Tensor inputs;   // n x d
  Tensor outputs;  // n x o
};

struct DecodedCheckpoint {
  ProductNet net;
  std::optional<Witness> witness;
  bool checksum_ok = false;
};

class CorruptCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluates `net` at `points` seeded inputs drawn uniformly from [-1, 1]^d.
Witness make_witness(const ProductNet& net, std::size_t points, std::uint64_t seed);

/// Binary layout (all integers little-endian, see docs/formats.md):
///   "PINETCKP" u32 version=1 u32 block_count
///   per block: u8 variant u8 stabilizer u8 activation u8 0
///              u32 order rank input_dim output_dim bias_dim
///              u32 tensor_count, per tensor: u32 name_len, name,
///              u32 rank, u64 extents[rank], f64 values[]
///   u32 witness_points, f64 inputs[], f64 outputs[]
///   u32 crc32 of every preceding byte
std::vector<std::uint8_t> encode_checkpoint(const ProductNet& net, const Witness* witness);
/// Structural problems throw ParseError with the byte offset. A checksum
/// mismatch is reported through `checksum_ok`, not thrown.
DecodedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const ProductNet& net,
                      std::size_t witness_points = 16, std::uint64_t witness_seed = 0x5eed);
DecodedCheckpoint read_checkpoint(const std::filesystem::path& path);
/// read_checkpoint that throws CorruptCheckpointError on checksum mismatch.
ProductNet load_checkpoint(const std::filesystem::path& path);

}  // namespace pinet
