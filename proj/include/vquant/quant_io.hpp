#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vquant/bitpack.hpp"
#include "vquant/errors.hpp"
#include "vquant/half.hpp"
#include "vquant/quant.hpp"
#include "vquant/tensor_io.hpp"

namespace vquant {

// .vqtq layout (all little-endian); full field-by-field description in
// docs/FORMATS.md:
//   magic "VQTQ" | version u16 = 1 | K u8 | mode u8 | range_policy u8 |
//   outlier_precision u8 | AR f64 | qmin f32 | qmax f32 | n u64 |
//   packed codes (ceil(n*K/8) bytes) | outlier count u64 |
//   outlier indices u64[] | outlier values (f32[] or binary16[]) |
//   has_mask u8 | mask (ceil(n/8) bytes, present iff has_mask = 1)
//
// The format stores the flat element count only; a reader reconstructs the
// tensor as rank-1.
inline std::string encode_quantized(const QuantizedTensor& q) {
  std::string out;
  out.append("VQTQ", 4);
  detail::put_u16(out, 1);
  detail::put_u8(out, static_cast<std::uint8_t>(q.config.bits));
  detail::put_u8(out, static_cast<std::uint8_t>(q.config.mode));
  detail::put_u8(out, static_cast<std::uint8_t>(q.config.range_policy));
  detail::put_u8(out, static_cast<std::uint8_t>(q.config.outlier_precision));
  detail::put_f64(out, q.config.large_ratio);
  detail::put_f32(out, q.qmin);
  detail::put_f32(out, q.qmax);
  detail::put_u64(out, q.size());
  out.append(reinterpret_cast<const char*>(q.codes.data()), q.codes.size());
  detail::put_u64(out, q.outliers.size());
  for (std::uint64_t idx : q.outliers.indices) detail::put_u64(out, idx);
  for (float v : q.outliers.values) {
    if (q.config.outlier_precision == OutlierPrecision::Bits16)
      detail::put_u16(out, float_to_half_bits(v));
    else
      detail::put_f32(out, v);
  }
  detail::put_u8(out, q.relu_mask.has_value() ? 1 : 0);
  if (q.relu_mask.has_value())
    out.append(reinterpret_cast<const char*>(q.relu_mask->data()), q.relu_mask->size());
  return out;
}

inline QuantizedTensor decode_quantized(const std::string& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  r.expect_magic("VQTQ");
  if (r.u16() != 1) throw FormatError(context + ": unsupported format version");

  QuantizedTensor q;
  q.config.bits = r.u8();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw FormatError(context + ": unknown mode code");
  q.config.mode = static_cast<QuantMode>(mode);
  const std::uint8_t policy = r.u8();
  if (policy > 2) throw FormatError(context + ": unknown range policy code");
  q.config.range_policy = static_cast<RangePolicy>(policy);
  const std::uint8_t precision = r.u8();
  if (precision > 1) throw FormatError(context + ": unknown outlier precision code");
  q.config.outlier_precision = static_cast<OutlierPrecision>(precision);
  q.config.large_ratio = r.f64();
  try {
    q.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(context + ": invalid stored config: " + e.what());
  }

  q.qmin = r.f32();
  q.qmax = r.f32();
  const std::uint64_t n = r.u64();
  if (n == 0) throw FormatError(context + ": empty tensor");
  q.shape = {static_cast<std::size_t>(n)};

  const std::size_t code_bytes = packed_code_bytes(n, q.config.bits);
  const char* codes = r.take(code_bytes);
  q.codes.assign(reinterpret_cast<const std::uint8_t*>(codes),
                 reinterpret_cast<const std::uint8_t*>(codes) + code_bytes);

  const std::uint64_t outlier_count = r.u64();
  if (outlier_count > n) throw FormatError(context + ": outlier count exceeds element count");
  q.outliers.indices.resize(outlier_count);
  for (auto& idx : q.outliers.indices) {
    idx = r.u64();
    if (idx >= n) throw FormatError(context + ": outlier index out of range");
  }
  for (std::size_t i = 1; i < q.outliers.indices.size(); ++i) {
    if (q.outliers.indices[i] <= q.outliers.indices[i - 1])
      throw FormatError(context + ": outlier indices not strictly increasing");
  }
  q.outliers.values.resize(outlier_count);
  for (auto& v : q.outliers.values) {
    v = (q.config.outlier_precision == OutlierPrecision::Bits16) ? half_bits_to_float(r.u16())
                                                                 : r.f32();
  }

  const std::uint8_t has_mask = r.u8();
  if (has_mask > 1) throw FormatError(context + ": bad mask flag");
  if (has_mask) {
    if (q.config.mode == QuantMode::RVQuant)
      throw FormatError(context + ": rv mode must not carry a separate mask");
    const std::size_t mask_bytes = (n + 7) / 8;
    const char* mask = r.take(mask_bytes);
    q.relu_mask.emplace(reinterpret_cast<const std::uint8_t*>(mask),
                        reinterpret_cast<const std::uint8_t*>(mask) + mask_bytes);
  }
  if (!r.at_end()) throw FormatError(context + ": trailing bytes");
  return q;
}

inline void write_quantized(const std::string& path, const QuantizedTensor& q) {
  detail::store_file(path, encode_quantized(q));
}

inline QuantizedTensor read_quantized(const std::string& path) {
  return decode_quantized(detail::load_file(path), path);
}

}  // namespace vquant
