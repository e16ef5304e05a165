#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "vquant/errors.hpp"
#include "vquant/quant.hpp"

namespace vquant {

// Stored-size fraction relative to full-precision float32 storage.
//
//   small codes:  K/32 of full precision (+1/32 for the separate relu mask in
//                 V mode when one is stored; RV mode folds the mask into the
//                 reserved code level)
//   outliers:     coordinate format doubles the raw outlier payload, so the
//                 term is 2*AR at 32-bit outlier precision and AR at 16-bit.
//
// memory_fraction(3, 0.02, V, mask)  = 4/32 + 0.04 = 0.165   (6.06x reduction)
// memory_fraction(3, 0.02, RV)       = 3/32 + 0.04 = 0.13375 (7.48x reduction)
inline double memory_fraction(int bits, double large_ratio, QuantMode mode, bool with_mask,
                              OutlierPrecision precision = OutlierPrecision::Bits32) {
  if (bits < 1) throw ConfigError("bitwidth must be positive");
  if (large_ratio < 0.0 || large_ratio >= 1.0)
    throw ConfigError("large-value ratio must be in [0, 1)");
  double code_bits = bits;
  if (mode == QuantMode::VQuant && with_mask) code_bits += 1.0;
  const double outlier_term =
      (precision == OutlierPrecision::Bits32 ? 2.0 : 1.0) * large_ratio;
  return code_bits / 32.0 + outlier_term;
}

inline double memory_fraction(const QuantConfig& cfg, bool with_mask) {
  return memory_fraction(cfg.bits, cfg.large_ratio, cfg.mode, with_mask, cfg.outlier_precision);
}

// Comparator model of sqrt-segmented activation checkpointing: segments of
// length round(sqrt(N)); retained memory is the segment-boundary activations
// plus the largest segment's activations (the re-computation workspace),
// capped at full cost. This is an accounting model, not a scheduler.
inline double checkpoint_fraction(std::span<const std::size_t> layer_sizes) {
  if (layer_sizes.empty()) throw ConfigError("checkpoint model requires at least one layer");
  const std::size_t n = layer_sizes.size();
  const auto segment =
      static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  const std::size_t s = std::max<std::size_t>(1, segment);

  double total = 0.0, boundaries = 0.0, workspace = 0.0;
  double current = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += static_cast<double>(layer_sizes[i]);
    current += static_cast<double>(layer_sizes[i]);
    const bool segment_end = ((i + 1) % s == 0) || (i + 1 == n);
    if (segment_end) {
      boundaries += static_cast<double>(layer_sizes[i]);
      workspace = std::max(workspace, current);
      current = 0.0;
    }
  }
  return std::min(1.0, (boundaries + workspace) / total);
}

}  // namespace vquant
