#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vquant/errors.hpp"
#include "vquant/tensor.hpp"

namespace vquant {

// Little-endian primitives shared by the .vqtn and .vqtq readers/writers.
namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

// Cursor over a fully loaded file; every read checks the remaining length.
class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

  std::uint16_t u16() {
    const char* p = take(2);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) |
                                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[1])) << 8));
  }

  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
    return v;
  }

  float f32() {
    const char* p = take(4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError(context_ + ": truncated payload");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  void expect_magic(const char* magic) {
    const char* p = take(4);
    if (std::memcmp(p, magic, 4) != 0) throw FormatError(context_ + ": bad magic bytes");
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& context() const { return context_; }

 private:
  const std::string& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

inline std::string load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void store_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path + ": write failed");
}

}  // namespace detail

inline constexpr int kMaxTensorRank = 8;

// .vqtn layout (all little-endian):
//   magic "VQTN" | version u16 = 1 | dtype u8 = 0 (float32) | rank u8 |
//   rank x u64 dims | raw float32 payload
inline std::string encode_tensor(const DenseTensor& t) {
  if (t.rank() > static_cast<std::size_t>(kMaxTensorRank))
    throw FormatError("tensor rank exceeds " + std::to_string(kMaxTensorRank));
  std::string out;
  out.append("VQTN", 4);
  detail::put_u16(out, 1);
  detail::put_u8(out, 0);
  detail::put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) detail::put_u64(out, d);
  for (float v : t.values()) detail::put_f32(out, v);
  return out;
}

inline DenseTensor decode_tensor(const std::string& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  r.expect_magic("VQTN");
  if (r.u16() != 1) throw FormatError(context + ": unsupported format version");
  if (r.u8() != 0) throw FormatError(context + ": unsupported dtype code");
  int rank = r.u8();
  if (rank > kMaxTensorRank) throw FormatError(context + ": rank exceeds 8");
  std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
  for (auto& d : shape) {
    std::uint64_t dim = r.u64();
    if (dim == 0) throw FormatError(context + ": zero dimension");
    d = static_cast<std::size_t>(dim);
  }
  std::size_t n = shape_elements(shape);
  if (r.remaining() != n * 4) throw FormatError(context + ": payload size mismatch");
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32();
  DenseTensor t(std::move(shape), std::move(data));
  if (!t.all_finite()) throw FormatError(context + ": payload contains NaN or Inf");
  return t;
}

inline void write_tensor(const std::string& path, const DenseTensor& t) {
  detail::store_file(path, encode_tensor(t));
}

inline DenseTensor read_tensor(const std::string& path) {
  return decode_tensor(detail::load_file(path), path);
}

}  // namespace vquant
