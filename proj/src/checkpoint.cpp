#include "pinet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <string>

#include "pinet/error.hpp"
#include "pinet/io.hpp"
#include "pinet/rng.hpp"

namespace pinet {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
// Refuse absurd extents before allocating.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw ParseError(std::string("truncated checkpoint: ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

Tensor read_values(Reader& r, Shape shape, const char* what) {
  std::vector<double> values(element_count(shape));
  r.need(values.size() * 8, what);
  for (auto& v : values) v = r.f64(what);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

Witness make_witness(const ProductNet& net, std::size_t points, std::uint64_t seed) {
  Rng rng(seed);
  Tensor inputs(Shape{points, net.input_dim()});
  for (auto& v : inputs.data()) v = rng.uniform(-1.0, 1.0);
  return Witness{inputs, net.forward(inputs)};
}

std::vector<std::uint8_t> encode_checkpoint(const ProductNet& net, const Witness* witness) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(net.blocks().size()));
  for (const auto& block : net.blocks()) {
    const auto& s = block.spec;
    w.u8(static_cast<std::uint8_t>(s.variant));
    w.u8(static_cast<std::uint8_t>(s.stabilizer));
    w.u8(static_cast<std::uint8_t>(s.activation));
    w.u8(0);
    for (auto v : {s.order, s.rank, s.input_dim, s.output_dim, s.bias_dim})
      w.u32(static_cast<std::uint32_t>(v));
    w.u32(static_cast<std::uint32_t>(block.params.tensors.size()));
    for (const auto& t : block.params.tensors) {
      w.u32(static_cast<std::uint32_t>(t.name.size()));
      w.raw(t.name.data(), t.name.size());
      w.u32(static_cast<std::uint32_t>(t.value.rank()));
      for (auto e : t.value.shape()) w.u64(e);
      for (double v : t.value.data()) w.f64(v);
    }
  }
  if (witness != nullptr) {
    w.u32(static_cast<std::uint32_t>(witness->inputs.rows()));
    for (double v : witness->inputs.data()) w.f64(v);
    for (double v : witness->outputs.data()) w.f64(v);
  } else {
    w.u32(0);
  }
  w.u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

DecodedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw ParseError("bad checkpoint magic", 0);
  }
  if (const auto version = r.u32("version"); version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);
  }
  const std::uint32_t block_count = r.u32("block count");
  if (block_count == 0) throw ParseError("checkpoint holds no blocks", 12);

  DecodedCheckpoint out;
  for (std::uint32_t b = 0; b < block_count; ++b) {
    const std::size_t block_offset = r.offset();
    PolyBlock block;
    const auto variant = r.u8("variant");
    const auto stabilizer = r.u8("stabilizer");
    const auto activation = r.u8("activation");
    r.u8("reserved");
    if (variant > 3 || stabilizer > 2 || activation > 2) {
      throw ParseError("invalid block enum field", block_offset);
    }
    auto& s = block.spec;
    s.variant = static_cast<Variant>(variant);
    s.stabilizer = static_cast<Stabilizer>(stabilizer);
    s.activation = static_cast<Activation>(activation);
    s.order = r.u32("order");
    s.rank = r.u32("rank");
    s.input_dim = r.u32("input_dim");
    s.output_dim = r.u32("output_dim");
    s.bias_dim = r.u32("bias_dim");
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("invalid block spec: ") + e.what(), block_offset);
    }
    const std::uint32_t tensors = r.u32("tensor count");
    for (std::uint32_t t = 0; t < tensors; ++t) {
      const std::size_t tensor_offset = r.offset();
      const std::uint32_t name_len = r.u32("name length");
      if (name_len > 64) throw ParseError("tensor name too long", tensor_offset);
      std::string name = r.str(name_len, "name");
      const std::uint32_t rank = r.u32("rank");
      if (rank > 8) throw ParseError("tensor rank too large", tensor_offset);
      Shape shape(rank);
      std::uint64_t count = 1;
      for (auto& e : shape) {
        const std::uint64_t extent = r.u64("extent");
        if (extent == 0 || extent > kMaxElements || count * extent > kMaxElements) {
          throw ParseError("tensor extent overflow", r.offset() - 8);
        }
        count *= extent;
        e = static_cast<std::size_t>(extent);
      }
      block.params.tensors.push_back({std::move(name), read_values(r, std::move(shape), "tensor payload")});
    }
    try {
      out.net.append(std::move(block));
    } catch (const std::exception& e) {
      throw ParseError(std::string("block does not match its spec: ") + e.what(), block_offset);
    }
  }

  const std::uint32_t points = r.u32("witness count");
  if (points > 0) {
    const std::size_t d = out.net.input_dim(), o = out.net.output_dim();
    Witness w;
    w.inputs = read_values(r, Shape{points, d}, "witness inputs");
    w.outputs = read_values(r, Shape{points, o}, "witness outputs");
    out.witness = std::move(w);
  }
  const std::size_t body = r.offset();
  const std::uint32_t stored = r.u32("checksum");
  if (r.offset() != bytes.size()) throw ParseError("trailing bytes after checksum", r.offset());
  out.checksum_ok = stored == crc32_of(bytes.first(body));
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const ProductNet& net,
                      std::size_t witness_points, std::uint64_t witness_seed) {
  std::optional<Witness> witness;
  if (witness_points > 0) witness = make_witness(net, witness_points, witness_seed);
  const auto bytes = encode_checkpoint(net, witness ? &*witness : nullptr);
  write_file_atomic(path, bytes);
}

DecodedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

ProductNet load_checkpoint(const std::filesystem::path& path) {
  auto decoded = read_checkpoint(path);
  if (!decoded.checksum_ok) throw CorruptCheckpointError("checksum mismatch in " + path.string());
  return std::move(decoded.net);
}

}  // namespace pinet
