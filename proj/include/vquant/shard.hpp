#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "vquant/errors.hpp"
#include "vquant/quant.hpp"

namespace vquant {

// Data-parallel partition: contiguous equal-size chunks of the flat tensor,
// remainder in the last shard. Models per-worker mini-batch shards.
struct ShardPlan {
  std::size_t num_workers = 1;

  void validate(std::size_t elements) const {
    if (num_workers < 1) throw ConfigError("shard plan needs at least one worker");
    if (num_workers > elements)
      throw ConfigError("shard plan has more workers (" + std::to_string(num_workers) +
                        ") than elements (" + std::to_string(elements) + ")");
  }

  // Half-open [begin, end) ranges, one per worker.
  std::vector<std::pair<std::size_t, std::size_t>> ranges(std::size_t elements) const {
    validate(elements);
    const std::size_t base = elements / num_workers;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(num_workers);
    for (std::size_t w = 0; w < num_workers; ++w) {
      const std::size_t begin = w * base;
      const std::size_t end = (w + 1 == num_workers) ? elements : begin + base;
      out.emplace_back(begin, end);
    }
    return out;
  }
};

struct LocalQuantizeResult {
  std::vector<QuantizedTensor> shards;
  DenseTensor merged;  // concatenated shard dequantizations, original order
};

// Each worker profiles and quantizes its own shard with the same config (same
// AR, local range). With one worker this is bit-identical to global quantize.
inline LocalQuantizeResult local_quantize(const DenseTensor& t, const QuantConfig& cfg,
                                          const ShardPlan& plan) {
  cfg.validate();
  const auto ranges = plan.ranges(t.size());
  LocalQuantizeResult result;
  result.shards.reserve(ranges.size());
  std::vector<float> merged(t.size());
  for (const auto& [begin, end] : ranges) {
    std::vector<float> chunk(t.values().begin() + static_cast<std::ptrdiff_t>(begin),
                             t.values().begin() + static_cast<std::ptrdiff_t>(end));
    DenseTensor shard({end - begin}, std::move(chunk));
    QuantizedTensor q = quantize(shard, cfg);
    DenseTensor restored = dequantize(q);
    std::copy(restored.values().begin(), restored.values().end(),
              merged.begin() + static_cast<std::ptrdiff_t>(begin));
    result.shards.push_back(std::move(q));
  }
  result.merged = DenseTensor(t.shape(), std::move(merged));
  return result;
}

struct DivergenceReport {
  std::size_t workers = 1;
  std::size_t global_outliers = 0;
  std::size_t local_outliers = 0;
  double jaccard = 1.0;  // local vs global outlier index sets
  double mse_local = 0.0;
  double mse_global = 0.0;
  double mse_ratio = 1.0;
};

// Quantifies how much per-shard top-k selection diverges from global top-k,
// and what it costs in reconstruction error.
inline DivergenceReport selection_divergence(const DenseTensor& t, const QuantConfig& cfg,
                                             const ShardPlan& plan) {
  cfg.validate();
  DivergenceReport report;
  report.workers = plan.num_workers;

  QuantizedTensor global = quantize(t, cfg);
  report.mse_global = quant_error(t, global).mse;
  report.global_outliers = global.outliers.size();

  LocalQuantizeResult local = local_quantize(t, cfg, plan);
  const auto ranges = plan.ranges(t.size());
  std::vector<std::uint64_t> local_indices;
  for (std::size_t w = 0; w < ranges.size(); ++w) {
    for (std::uint64_t idx : local.shards[w].outliers.indices)
      local_indices.push_back(idx + ranges[w].first);
  }
  report.local_outliers = local_indices.size();

  double se = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = static_cast<double>(t.at(i)) - local.merged.at(i);
    se += d * d;
  }
  report.mse_local = se / static_cast<double>(t.size());

  std::size_t intersection = 0;
  {
    const auto& g = global.outliers.indices;
    std::size_t gi = 0;
    std::sort(local_indices.begin(), local_indices.end());
    for (std::uint64_t idx : local_indices) {
      while (gi < g.size() && g[gi] < idx) ++gi;
      if (gi < g.size() && g[gi] == idx) ++intersection;
    }
  }
  const std::size_t union_size =
      report.global_outliers + report.local_outliers - intersection;
  report.jaccard = union_size == 0
                       ? 1.0
                       : static_cast<double>(intersection) / static_cast<double>(union_size);
  if (report.mse_global > 0.0) {
    report.mse_ratio = report.mse_local / report.mse_global;
  } else {
    report.mse_ratio = report.mse_local == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  }
  return report;
}

}  // namespace vquant
