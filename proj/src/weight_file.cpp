#include "dmnet/weight_file.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace dmnet {
namespace {

static_assert(std::endian::native == std::endian::little, "weight files assume little-endian hosts");
constexpr char kMagic[4] = {'D', 'M', 'B', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw WeightFileError("weight file truncated");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const ParamStore<float>& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& e : params.entries()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    for (int d : e.tensor.shape().dims) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(e.tensor.ptr());
    const std::size_t nbytes = e.tensor.numel() * sizeof(float);
    out.insert(out.end(), raw, raw + nbytes);
    crc = crc32(crc, raw, static_cast<uInt>(nbytes));
  }
  put_u32(out, static_cast<std::uint32_t>(crc));
  return out;
}

ParamStore<float> decode_weights(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw WeightFileError("bad magic, not a DMBN file");
  const std::uint32_t version = in.u32();
  if (version != kWeightFormatVersion) {
    throw WeightFileError("unsupported weight format version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  ParamStore<float> params;
  uLong crc = crc32(0L, Z_NULL, 0);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = in.u32();
    auto name_bytes = in.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    Shape shape;
    for (int& d : shape.dims) {
      const std::uint32_t v = in.u32();
      if (v > (1u << 30)) throw WeightFileError("implausible dimension in entry " + name);
      d = static_cast<int>(v);
    }
    auto payload = in.take(shape.numel() * sizeof(float));
    crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    std::vector<float> values(shape.numel());
    std::memcpy(values.data(), payload.data(), payload.size());
    params.add(std::move(name), Tensorf::from_vector(shape, std::move(values), true));
  }
  const std::uint32_t stored = in.u32();
  if (!in.done()) throw WeightFileError("trailing bytes after CRC");
  if (stored != static_cast<std::uint32_t>(crc)) throw WeightFileError("CRC mismatch, weight file corrupted");
  return params;
}

void save_weights(const std::filesystem::path& path, const ParamStore<float>& params) {
  const auto bytes = encode_weights(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WeightFileError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw WeightFileError("write failed: " + path.string());
}

ParamStore<float> load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WeightFileError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

void check_compatible(const ParamStore<float>& expected, const ParamStore<float>& loaded) {
  for (const auto& e : expected.entries()) {
    if (!loaded.contains(e.name)) throw WeightFileError("missing entry " + e.name);
    const Shape& got = loaded.get(e.name).shape();
    if (got != e.tensor.shape()) {
      throw WeightFileError("entry " + e.name + " has shape " + got.str() + ", expected " +
                            e.tensor.shape().str());
    }
  }
  for (const auto& e : loaded.entries()) {
    if (!expected.contains(e.name)) throw WeightFileError("unexpected entry " + e.name);
  }
}

}  // namespace dmnet
