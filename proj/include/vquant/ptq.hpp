#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "vquant/datasets.hpp"
#include "vquant/memory_model.hpp"
#include "vquant/mlp.hpp"
#include "vquant/rng.hpp"
#include "vquant/train.hpp"

namespace vquant {

// Post-training quantization config. Bit value 32 bypasses quantization on
// that side (the full-precision reference point).
struct InferenceQuantConfig {
  int weight_bits = 4;
  int act_bits = 4;
  double weight_ratio = 0.01;
  double act_ratio = 0.01;
  OutlierPrecision outlier_precision = OutlierPrecision::Bits16;

  bool weights_bypassed() const { return weight_bits == 32; }
  bool acts_bypassed() const { return act_bits == 32; }

  void validate() const {
    if ((weight_bits < 1 || weight_bits > 8) && weight_bits != 32)
      throw ConfigError("weight bits must be 1..8 or 32 (bypass)");
    if ((act_bits < 1 || act_bits > 8) && act_bits != 32)
      throw ConfigError("activation bits must be 1..8 or 32 (bypass)");
    if (weight_ratio < 0.0 || weight_ratio >= 1.0 || act_ratio < 0.0 || act_ratio >= 1.0)
      throw ConfigError("large-value ratios must be in [0, 1)");
  }

  QuantConfig weight_config() const {
    return {.bits = weight_bits, .large_ratio = weight_ratio, .mode = QuantMode::VQuant,
            .range_policy = RangePolicy::Symmetric, .outlier_precision = outlier_precision};
  }

  QuantConfig act_config(RangePolicy policy) const {
    return {.bits = act_bits, .large_ratio = act_ratio, .mode = QuantMode::VQuant,
            .range_policy = policy, .outlier_precision = outlier_precision};
  }

  // Combined storage fraction (weights and activations weighted equally).
  double model_memory_fraction() const {
    const double w = weights_bypassed()
                         ? 1.0
                         : memory_fraction(weight_bits, weight_ratio, QuantMode::VQuant, false,
                                           outlier_precision);
    const double a = acts_bypassed()
                         ? 1.0
                         : memory_fraction(act_bits, act_ratio, QuantMode::VQuant, false,
                                           outlier_precision);
    return 0.5 * (w + a);
  }

  std::string label() const {
    auto side = [](int bits, double ratio) {
      if (bits == 32) return std::string("F");
      std::string s = std::to_string(bits) + ":";
      std::string r = std::to_string(ratio * 100.0);
      r.erase(r.find_last_not_of('0') + 1);
      if (!r.empty() && r.back() == '.') r.pop_back();
      return s + r;
    };
    return side(weight_bits, weight_ratio) + "w/" + side(act_bits, act_ratio) + "a";
  }
};

// A network with statically quantized weights. `layers` holds the dequantized
// view used by the forward pass; `quantized_weights` the codec payloads.
struct QuantizedMlp {
  std::vector<MlpLayer> layers;
  std::vector<QuantizedTensor> quantized_weights;
  InferenceQuantConfig config;

  std::size_t depth() const { return layers.size(); }
};

// Quantizes every layer's weights once (per-tensor, symmetric). Biases stay
// full precision. Activations are handled per batch at forward time.
inline QuantizedMlp quantize_model(const MlpNetwork& net, const InferenceQuantConfig& cfg) {
  cfg.validate();
  net.validate();
  QuantizedMlp out;
  out.config = cfg;
  for (const auto& layer : net.layers) {
    if (cfg.weights_bypassed()) {
      out.layers.push_back(layer);
      continue;
    }
    QuantizedTensor q = quantize(layer.weights, cfg.weight_config());
    out.layers.push_back({dequantize(q), layer.bias});
    out.quantized_weights.push_back(std::move(q));
  }
  return out;
}

// Quantize-dequantize an activation tensor against its own per-batch
// distribution (exact profiling of the current batch).
inline DenseTensor fake_quantize_activation(const DenseTensor& act, const QuantConfig& cfg) {
  return dequantize(quantize(act, cfg));
}

// Trace of a quantized forward pass, keeping what the pass-through backward
// needs: the values each layer actually consumed and the pre-quantization
// ReLU activity.
struct PtqTrace {
  std::vector<DenseTensor> layer_inputs;                // one per layer
  std::vector<std::vector<std::uint8_t>> hidden_active; // one per hidden activation
  DenseTensor probs;
  double loss = 0.0;
};

inline PtqTrace ptq_forward(const QuantizedMlp& qnet, const DenseTensor& batch,
                            std::span<const int> labels) {
  if (batch.rank() != 2 || batch.cols() != qnet.layers.front().weights.cols())
    throw DimensionError("batch shape does not match the input layer");
  PtqTrace trace;
  DenseTensor x = batch;  // first-layer inputs stay full precision
  for (std::size_t l = 0; l < qnet.depth(); ++l) {
    trace.layer_inputs.push_back(x);
    DenseTensor z = affine_forward(x, qnet.layers[l]);
    if (l + 1 < qnet.depth()) {
      DenseTensor y = relu(z);
      std::vector<std::uint8_t> active(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) active[i] = y.at(i) > 0.0f ? 1 : 0;
      trace.hidden_active.push_back(std::move(active));
      x = qnet.config.acts_bypassed()
              ? std::move(y)
              : fake_quantize_activation(y, qnet.config.act_config(RangePolicy::Nonnegative));
    } else {
      x = qnet.config.acts_bypassed()
              ? std::move(z)
              : fake_quantize_activation(z, qnet.config.act_config(RangePolicy::Asymmetric));
    }
  }
  softmax_cross_entropy(x, labels, trace.probs, trace.loss);
  return trace;
}

inline std::vector<int> ptq_predict(const QuantizedMlp& qnet, const DenseTensor& batch) {
  std::vector<int> labels(batch.rows(), 0);  // ignored by the argmax
  PtqTrace trace = ptq_forward(qnet, batch, labels);
  std::vector<int> pred(batch.rows());
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < trace.probs.cols(); ++c)
      if (trace.probs(b, c) > trace.probs(b, best)) best = c;
    pred[b] = static_cast<int>(best);
  }
  return pred;
}

// Top-1 accuracy (percent) of the quantized view on a dataset.
inline double ptq_accuracy(const QuantizedMlp& qnet, const Dataset& data) {
  std::size_t hits = 0;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < data.samples(); start += chunk) {
    const std::size_t count = std::min(chunk, data.samples() - start);
    DenseTensor x = DenseTensor::zeros({count, data.dim()});
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < data.dim(); ++c) x(r, c) = data.features(start + r, c);
    std::vector<int> pred = ptq_predict(qnet, x);
    for (std::size_t r = 0; r < count; ++r)
      if (pred[r] == data.labels[start + r]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(data.samples());
}

struct FinetuneOptions {
  int epochs = 2;
  double learning_rate = 0.02;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

// Pass-through gradients for the quantized forward: the standard backward
// formulas evaluated at the dequantized weights and the activations the
// quantized pass actually consumed (both quantizers treated as identity).
inline Gradients finetune_gradients(const QuantizedMlp& qnet, const PtqTrace& trace,
                                    std::span<const int> labels) {
  MlpNetwork view;
  view.layers = qnet.layers;
  return backprop_core(view, trace.layer_inputs, trace.hidden_active, trace.probs, labels);
}

// Quantization-aware fine-tuning: forward through the quantized view,
// gradients applied to the full-precision weights, view refreshed after
// every step. Zero epochs returns the input net unchanged.
inline MlpNetwork finetune(MlpNetwork net, const InferenceQuantConfig& cfg,
                           const FinetuneOptions& opt, const Dataset& data) {
  cfg.validate();
  if (opt.epochs < 0) throw ConfigError("negative fine-tune epoch count");
  if (opt.epochs == 0) return net;
  if (!(opt.learning_rate > 0.0) || opt.batch_size < 1)
    throw ConfigError("bad fine-tune options");

  RngStream shuffle_rng(opt.seed ^ 0x9E3779B9ull);
  std::vector<std::size_t> order(data.samples());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_below(i);
      std::swap(order[i - 1], order[j]);
    }
    const std::size_t batch_size = static_cast<std::size_t>(opt.batch_size);
    for (std::size_t start = 0; start < data.samples(); start += batch_size) {
      const std::size_t count = std::min(batch_size, data.samples() - start);
      DenseTensor x = DenseTensor::zeros({count, data.dim()});
      std::vector<int> labels(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t src = order[start + r];
        labels[r] = data.labels[src];
        for (std::size_t c = 0; c < data.dim(); ++c) x(r, c) = data.features(src, c);
      }
      QuantizedMlp view = quantize_model(net, cfg);
      PtqTrace trace = ptq_forward(view, x, labels);
      Gradients grads = finetune_gradients(view, trace, labels);
      sgd_step(net, grads, static_cast<float>(opt.learning_rate));
    }
    net.require_finite();
  }
  return net;
}

struct CandidateResult {
  InferenceQuantConfig config;
  double accuracy_before = 0.0;  // percent, straight PTQ
  double accuracy = 0.0;         // percent, after fine-tuning
  double memory_fraction = 1.0;
};

struct SweepResult {
  std::vector<CandidateResult> candidates;
  double float_accuracy = 0.0;   // percent
  double target_accuracy = 0.0;  // percent
  bool none_qualify = false;
  std::size_t selected = 0;  // index into candidates (best found when none qualify)
};

// Evaluates every candidate with fine-tuning and selects the minimal-bitwidth
// config meeting the target; memory fraction breaks ties. When nothing
// qualifies, reports the best found with none_qualify set.
inline SweepResult sweep(const MlpNetwork& net, std::span<const InferenceQuantConfig> candidates,
                         double target_drop_points, const FinetuneOptions& opt,
                         const Dataset& finetune_data, const Dataset& eval_data, int jobs = 1) {
  if (candidates.empty()) throw ConfigError("sweep needs at least one candidate");
  if (jobs < 1) throw ConfigError("jobs must be positive");

  SweepResult result;
  result.float_accuracy = accuracy(net, eval_data);
  result.target_accuracy = result.float_accuracy - target_drop_points;

  auto evaluate = [&](const InferenceQuantConfig& cfg) {
    CandidateResult r;
    r.config = cfg;
    r.memory_fraction = cfg.model_memory_fraction();
    r.accuracy_before = ptq_accuracy(quantize_model(net, cfg), eval_data);
    MlpNetwork tuned = finetune(net, cfg, opt, finetune_data);
    r.accuracy = ptq_accuracy(quantize_model(tuned, cfg), eval_data);
    return r;
  };

  result.candidates.resize(candidates.size());
  if (jobs == 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      result.candidates[i] = evaluate(candidates[i]);
  } else {
    // Independent evaluations; merged by index, so the outcome does not
    // depend on completion order.
    std::vector<std::future<CandidateResult>> futures;
    futures.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
      futures.push_back(std::async(std::launch::async, evaluate, candidates[i]));
    for (std::size_t i = 0; i < candidates.size(); ++i)
      result.candidates[i] = futures[i].get();
  }

  std::optional<std::size_t> chosen;
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    if (c.accuracy < result.target_accuracy) continue;
    if (!chosen.has_value()) {
      chosen = i;
      continue;
    }
    const auto& best = result.candidates[*chosen];
    if (c.config.weight_bits < best.config.weight_bits ||
        (c.config.weight_bits == best.config.weight_bits &&
         c.memory_fraction < best.memory_fraction)) {
      chosen = i;
    }
  }
  if (chosen.has_value()) {
    result.selected = *chosen;
  } else {
    result.none_qualify = true;
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.candidates.size(); ++i) {
      const auto& c = result.candidates[i];
      const auto& b = result.candidates[best];
      if (c.accuracy > b.accuracy ||
          (c.accuracy == b.accuracy && c.memory_fraction < b.memory_fraction))
        best = i;
    }
    result.selected = best;
  }
  return result;
}

}  // namespace vquant
