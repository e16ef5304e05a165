#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vquant/datasets.hpp"
#include "vquant/memory_model.hpp"
#include "vquant/mlp.hpp"
#include "vquant/schedule.hpp"

namespace vquant {

struct TrainConfig {
  double learning_rate = 0.1;
  // Learning-rate multiplier applied at each phase boundary (the annealing
  // experiments step the rate down 10x per phase; 1.0 keeps it constant).
  double phase_lr_decay = 1.0;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  AnnealSchedule schedule;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(phase_lr_decay > 0.0) || phase_lr_decay > 1.0)
      throw ConfigError("phase lr decay must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (epochs < 1) throw ConfigError("epoch count must be positive");
    schedule.validate(epochs);
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based in reports
  std::string phase;
  double loss = 0.0;
  double accuracy = 0.0;  // percent
  std::uint64_t stored_activation_bytes = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  std::string divergence_message;
  std::uint64_t seed = 0;

  double final_accuracy() const { return epochs.empty() ? 0.0 : epochs.back().accuracy; }
  double final_loss() const { return epochs.empty() ? 0.0 : epochs.back().loss; }
};

struct TrainResult {
  MlpNetwork net;
  TrainReport report;
};

// Top-1 accuracy in percent; ties broken toward the lower class index.
inline double accuracy(const MlpNetwork& net, const Dataset& data) {
  std::size_t hits = 0;
  const std::size_t n = data.samples();
  // Evaluate in one batch per 256 samples to bound the working set.
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    DenseTensor x = DenseTensor::zeros({count, data.dim()});
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < data.dim(); ++c) x(r, c) = data.features(start + r, c);
    DenseTensor logits = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
      logits = affine_forward(logits, net.layers[l]);
      if (l + 1 < net.depth()) logits = relu(logits);
    }
    for (std::size_t r = 0; r < count; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits(r, c) > logits(r, best)) best = c;
      if (static_cast<int>(best) == data.labels[start + r]) ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

// Modeled size of the stored activations for one batch: quantized hidden
// layers cost memory_fraction of their float32 size (rounded per layer); the
// input batch and the logits stay full precision and are excluded here.
inline std::uint64_t stored_activation_bytes(const MlpNetwork& net, std::size_t batch_size,
                                             const std::optional<QuantConfig>& cfg) {
  std::uint64_t total = 0;
  for (std::size_t l = 0; l + 1 < net.depth(); ++l) {
    const double full = static_cast<double>(batch_size * net.layers[l].weights.rows() * 4);
    const double fraction =
        cfg.has_value() ? memory_fraction(*cfg, cfg->mode == QuantMode::VQuant) : 1.0;
    total += static_cast<std::uint64_t>(std::llround(full * fraction));
  }
  return total;
}

// Quantized back-propagation training loop: full-precision forward, hidden
// activations stored per the active phase config, deltas from weights and
// masks only, dequantized activations in the weight-gradient products.
inline TrainResult train(MlpNetwork net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (data.dim() != net.input_dim()) throw DimensionError("dataset does not fit the network");
  if (data.classes > net.output_dim()) throw DimensionError("more classes than output units");

  TrainResult result;
  result.report.seed = cfg.seed;
  RngStream shuffle_rng(cfg.seed ^ 0x5DEECE66Dull);

  std::vector<std::size_t> order(data.samples());
  std::iota(order.begin(), order.end(), 0);

  const auto batch_count =
      (data.samples() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::size_t phase_idx = cfg.schedule.phase_index(epoch);
    const TrainPhase& phase = cfg.schedule.phases[phase_idx];
    const float lr = static_cast<float>(
        cfg.learning_rate * std::pow(cfg.phase_lr_decay, static_cast<double>(phase_idx)));
    // Fisher-Yates with the deterministic stream.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_below(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    try {
      for (std::size_t b = 0; b < batch_count; ++b) {
        const std::size_t start = b * static_cast<std::size_t>(cfg.batch_size);
        const std::size_t count =
            std::min(static_cast<std::size_t>(cfg.batch_size), data.samples() - start);
        DenseTensor x = DenseTensor::zeros({count, data.dim()});
        std::vector<int> labels(count);
        for (std::size_t r = 0; r < count; ++r) {
          const std::size_t src = order[start + r];
          labels[r] = data.labels[src];
          for (std::size_t c = 0; c < data.dim(); ++c) x(r, c) = data.features(src, c);
        }
        ForwardTrace trace = forward(net, x, labels);
        std::vector<LayerCache> caches = store_activations(trace, phase.config);
        Gradients grads = backward(net, trace.probs, labels, caches);
        sgd_step(net, grads, lr);
        loss_sum += trace.loss * static_cast<double>(count);
        seen += count;
      }
      net.require_finite();
    } catch (const NumericError& e) {
      result.report.diverged = true;
      result.report.divergence_message = e.what();
      break;
    }

    EpochRecord record;
    record.epoch = epoch + 1;
    record.phase = phase.label();
    record.loss = loss_sum / static_cast<double>(seen);
    record.accuracy = accuracy(net, data);
    record.stored_activation_bytes =
        stored_activation_bytes(net, static_cast<std::size_t>(cfg.batch_size), phase.config);
    result.report.epochs.push_back(std::move(record));
  }

  result.net = std::move(net);
  return result;
}

}  // namespace vquant
