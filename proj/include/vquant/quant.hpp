#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "vquant/bitpack.hpp"
#include "vquant/errors.hpp"
#include "vquant/half.hpp"
#include "vquant/tensor.hpp"

namespace vquant {

enum class QuantMode : std::uint8_t { VQuant = 0, RVQuant = 1 };
enum class RangePolicy : std::uint8_t { Symmetric = 0, Asymmetric = 1, Nonnegative = 2 };
enum class OutlierPrecision : std::uint8_t { Bits32 = 0, Bits16 = 1 };

inline const char* to_string(QuantMode m) { return m == QuantMode::VQuant ? "v" : "rv"; }
inline const char* to_string(RangePolicy p) {
  switch (p) {
    case RangePolicy::Symmetric: return "symmetric";
    case RangePolicy::Asymmetric: return "asymmetric";
    case RangePolicy::Nonnegative: return "nonnegative";
  }
  return "?";
}

struct QuantConfig {
  int bits = 3;
  double large_ratio = 0.0;  // fraction of elements kept exact, in [0, 1)
  QuantMode mode = QuantMode::VQuant;
  RangePolicy range_policy = RangePolicy::Symmetric;
  OutlierPrecision outlier_precision = OutlierPrecision::Bits32;

  void validate() const {
    if (bits < 1 || bits > 8) throw ConfigError("bitwidth must be in 1..8");
    if (large_ratio < 0.0 || large_ratio >= 1.0)
      throw ConfigError("large-value ratio must be in [0, 1)");
    if (mode == QuantMode::RVQuant) {
      if (bits < 2) throw ConfigError("rv mode requires at least 2 bits");
      if (range_policy != RangePolicy::Nonnegative)
        throw ConfigError("rv mode requires the nonnegative range policy");
    }
  }

  // Number of representable value levels (RV mode reserves code 0 for the
  // zero/blocked mask).
  int value_levels() const {
    return mode == QuantMode::RVQuant ? (1 << bits) - 1 : (1 << bits);
  }
};

// Exact-valued large elements, coordinate format over the flat index space.
struct OutlierSet {
  std::vector<std::uint64_t> indices;  // strictly increasing
  std::vector<float> values;           // already rounded to outlier precision

  std::size_t size() const { return indices.size(); }

  bool contains(std::uint64_t index) const {
    return std::binary_search(indices.begin(), indices.end(), index);
  }
};

struct ProfileResult {
  float threshold = std::numeric_limits<float>::infinity();
  std::vector<std::uint64_t> indices;  // sorted ascending
};

inline std::size_t outlier_count(double ratio, std::size_t n) {
  auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  return std::min(k, n);
}

// Selects the round(ratio*N) largest-magnitude elements. Boundary ties go to
// the smaller flat index. Threshold is the smallest selected magnitude, +inf
// when nothing is selected.
inline ProfileResult profile_threshold(const DenseTensor& t, double ratio) {
  if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("large-value ratio must be in [0, 1)");
  const std::size_t n = t.size();
  if (n == 0) throw DimensionError("cannot profile an empty tensor");
  const std::size_t k = outlier_count(ratio, n);
  ProfileResult result;
  if (k == 0) return result;

  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto values = t.values();
  auto larger = [&](std::uint64_t a, std::uint64_t b) {
    const float ma = std::fabs(values[a]), mb = std::fabs(values[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    larger);
  result.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  result.threshold = std::fabs(values[result.indices.back()]);  // smallest selected magnitude
  std::sort(result.indices.begin(), result.indices.end());
  return result;
}

// Uniform level grid over the small-value region. All grid arithmetic runs in
// double, derived from the float32 range endpoints; encode/decode and the
// brute-force oracle therefore agree exactly.
struct LevelGrid {
  double origin = 0.0;  // level value at the lowest code
  double step = 0.0;
  int first_code = 0;  // 0 for V mode, 1 for RV mode (code 0 reserved)
  int last_code = 0;

  double level(int code) const { return origin + step * (code - first_code); }

  // The value dequantize will actually emit for a code (float32-rounded).
  double emitted(int code) const {
    return static_cast<double>(static_cast<float>(level(code)));
  }

  static LevelGrid of(const QuantConfig& cfg, float qmin, float qmax) {
    LevelGrid g;
    if (cfg.mode == QuantMode::RVQuant) {
      const int levels = cfg.value_levels();  // 2^K - 1, codes 1..2^K-1
      g.step = static_cast<double>(qmax) / levels;
      g.origin = g.step;  // value levels span (0, qmax] starting at step
      g.first_code = 1;
      g.last_code = levels;
    } else {
      const int levels = cfg.value_levels();  // 2^K, codes 0..2^K-1
      g.step = (static_cast<double>(qmax) - static_cast<double>(qmin)) / (levels - 1);
      g.origin = static_cast<double>(qmin);
      g.first_code = 0;
      g.last_code = levels - 1;
    }
    return g;
  }

  // Nearest emitted level; ties go to the smaller-magnitude level, and if
  // both candidates have equal magnitude, to the lower code. Distances are
  // measured against the float32-rounded level values so the chosen code
  // minimizes the actual reconstruction error.
  int encode(float value) const {
    if (!(step > 0.0)) return first_code;
    const double x = static_cast<double>(value);
    double t = (x - origin) / step;
    if (t <= 0.0) return first_code;
    const int span = last_code - first_code;
    if (t >= span) return last_code;
    const int lo = first_code + static_cast<int>(t);
    const int hi = lo + 1;
    const double d_lo = std::fabs(x - emitted(lo));
    const double d_hi = std::fabs(emitted(hi) - x);
    if (d_lo < d_hi) return lo;
    if (d_hi < d_lo) return hi;
    const double m_lo = std::fabs(emitted(lo)), m_hi = std::fabs(emitted(hi));
    if (m_lo != m_hi) return m_lo < m_hi ? lo : hi;
    return lo;
  }
};

// Bit-packed quantized tensor: K-bit codes for the small-value majority plus
// exact high-precision outliers. Outlier positions carry placeholder code 0.
struct QuantizedTensor {
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> codes;  // packed, K bits per element
  float qmin = 0.0f;
  float qmax = 0.0f;
  QuantConfig config;
  OutlierSet outliers;
  std::optional<std::vector<std::uint8_t>> relu_mask;  // V mode on post-ReLU data only

  std::size_t size() const { return shape_elements(shape); }

  std::uint32_t code_at(std::size_t i) const { return packed_code_at(codes, config.bits, i); }

  LevelGrid grid() const { return LevelGrid::of(config, qmin, qmax); }

  // Level spacing of the small-value region.
  double step() const { return grid().step; }

  float level_value(std::uint32_t code) const {
    if (config.mode == QuantMode::RVQuant && code == 0) return 0.0f;
    return static_cast<float>(grid().level(static_cast<int>(code)));
  }

  bool mask_bit(std::size_t i) const {
    return relu_mask.has_value() && packed_bit_at(*relu_mask, i);
  }

  // Whether the stored element was strictly positive (ReLU pass-through
  // semantics). V mode consults the explicit mask; RV mode derives it from
  // the reserved code and the outlier values.
  bool active(std::size_t i) const {
    if (relu_mask.has_value()) return packed_bit_at(*relu_mask, i);
    if (config.mode != QuantMode::RVQuant)
      throw StateError("activity query requires rv mode or a stored mask");
    auto it = std::lower_bound(outliers.indices.begin(), outliers.indices.end(), i);
    if (it != outliers.indices.end() && *it == i)
      return outliers.values[static_cast<std::size_t>(it - outliers.indices.begin())] > 0.0f;
    return code_at(i) != 0;
  }
};

inline float store_outlier_value(float v, OutlierPrecision precision) {
  return precision == OutlierPrecision::Bits16 ? round_to_half(v) : v;
}

inline QuantizedTensor quantize(const DenseTensor& t, const QuantConfig& cfg,
                                bool with_mask = false) {
  cfg.validate();
  if (t.size() == 0) throw DimensionError("cannot quantize an empty tensor");
  if (with_mask) {
    if (cfg.mode == QuantMode::RVQuant)
      throw ConfigError("rv mode encodes the mask in code 0; no separate mask exists");
    if (cfg.range_policy != RangePolicy::Nonnegative)
      throw ConfigError("a relu mask requires the nonnegative range policy");
  }

  QuantizedTensor q;
  q.shape = t.shape();
  q.config = cfg;

  ProfileResult profile = profile_threshold(t, cfg.large_ratio);
  auto values = t.values();
  const std::size_t n = values.size();

  q.outliers.indices = std::move(profile.indices);
  q.outliers.values.reserve(q.outliers.indices.size());
  for (std::uint64_t idx : q.outliers.indices)
    q.outliers.values.push_back(store_outlier_value(values[idx], cfg.outlier_precision));

  // Small-value range under the configured policy.
  float lo = 0.0f, hi = 0.0f, max_abs = 0.0f;
  bool any_small = false;
  {
    std::size_t next_outlier = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (next_outlier < q.outliers.indices.size() && q.outliers.indices[next_outlier] == i) {
        ++next_outlier;
        continue;
      }
      const float v = values[i];
      if (cfg.range_policy == RangePolicy::Nonnegative && v < 0.0f)
        throw ConfigError("nonnegative range policy given a negative small value");
      if (!any_small) {
        lo = hi = v;
        any_small = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      max_abs = std::max(max_abs, std::fabs(v));
    }
  }
  if (!any_small) {
    q.qmin = q.qmax = 0.0f;
  } else {
    switch (cfg.range_policy) {
      case RangePolicy::Symmetric:
        q.qmin = -max_abs;
        q.qmax = max_abs;
        break;
      case RangePolicy::Asymmetric:
        q.qmin = lo;
        q.qmax = hi;
        break;
      case RangePolicy::Nonnegative:
        q.qmin = 0.0f;
        q.qmax = hi;
        break;
    }
  }

  const LevelGrid grid = LevelGrid::of(cfg, q.qmin, q.qmax);
  std::vector<std::uint32_t> flat(n, 0);
  std::size_t next_outlier = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (next_outlier < q.outliers.indices.size() && q.outliers.indices[next_outlier] == i) {
      ++next_outlier;  // placeholder code 0
      continue;
    }
    const float v = values[i];
    if (cfg.mode == QuantMode::RVQuant) {
      flat[i] = (v == 0.0f) ? 0u : static_cast<std::uint32_t>(grid.encode(v));
    } else {
      flat[i] = static_cast<std::uint32_t>(grid.encode(v));
    }
  }
  q.codes = pack_codes(flat, cfg.bits);

  if (with_mask) {
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = values[i] > 0.0f ? 1 : 0;
    q.relu_mask = pack_bits(bits);
  }
  return q;
}

inline DenseTensor dequantize(const QuantizedTensor& q) {
  const std::size_t n = q.size();
  std::vector<float> out(n);
  const LevelGrid grid = q.grid();
  std::size_t next_outlier = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (next_outlier < q.outliers.indices.size() && q.outliers.indices[next_outlier] == i) {
      out[i] = q.outliers.values[next_outlier];
      ++next_outlier;
      continue;
    }
    const std::uint32_t code = q.code_at(i);
    if (q.config.mode == QuantMode::RVQuant && code == 0) {
      out[i] = 0.0f;
    } else {
      out[i] = static_cast<float>(grid.level(static_cast<int>(code)));
    }
  }
  return DenseTensor(q.shape, std::move(out));
}

struct QuantErrorStats {
  double mse = 0.0;
  double max_abs = 0.0;
  double small_max_abs = 0.0;  // non-outlier elements only
};

inline QuantErrorStats quant_error(const DenseTensor& original, const QuantizedTensor& q) {
  if (original.shape() != q.shape) throw DimensionError("quant_error shape mismatch");
  const DenseTensor restored = dequantize(q);
  QuantErrorStats stats;
  const std::size_t n = original.size();
  std::size_t next_outlier = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double err = std::fabs(static_cast<double>(original.at(i)) - restored.at(i));
    stats.mse += err * err;
    stats.max_abs = std::max(stats.max_abs, err);
    const bool is_outlier =
        next_outlier < q.outliers.indices.size() && q.outliers.indices[next_outlier] == i;
    if (is_outlier) {
      ++next_outlier;
    } else {
      stats.small_max_abs = std::max(stats.small_max_abs, err);
    }
  }
  stats.mse /= static_cast<double>(n);
  return stats;
}

}  // namespace vquant
