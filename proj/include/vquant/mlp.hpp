#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vquant/errors.hpp"
#include "vquant/quant.hpp"
#include "vquant/rng.hpp"
#include "vquant/tensor.hpp"

namespace vquant {

struct MlpLayer {
  DenseTensor weights;  // [fan_out x fan_in]
  DenseTensor bias;     // [fan_out]
};

// Fully connected ReLU network: ReLU on every hidden layer, identity at the
// output feeding softmax cross-entropy.
struct MlpNetwork {
  std::vector<MlpLayer> layers;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().weights.cols(); }
  std::size_t output_dim() const { return layers.back().weights.rows(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].weights.rank() != 2 || layers[l].bias.rank() != 1)
        throw DimensionError("layer " + std::to_string(l) + " has malformed tensors");
      if (layers[l].bias.size() != layers[l].weights.rows())
        throw DimensionError("layer " + std::to_string(l) + " bias size mismatch");
      if (l > 0 && layers[l].weights.cols() != layers[l - 1].weights.rows())
        throw DimensionError("layer " + std::to_string(l) + " fan-in mismatch");
    }
  }

  void require_finite() const {
    for (const auto& l : layers) {
      if (!l.weights.all_finite() || !l.bias.all_finite())
        throw NumericError("network weights are no longer finite");
    }
  }

  // He-style init: gaussian weights scaled by sqrt(2/fan_in), zero biases.
  static MlpNetwork init(std::span<const std::size_t> layer_sizes, RngStream& rng) {
    if (layer_sizes.size() < 2) throw ConfigError("need at least input and output sizes");
    MlpNetwork net;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      std::vector<float> w(fan_out * fan_in);
      for (auto& v : w) v = static_cast<float>(scale * rng.next_gaussian());
      net.layers.push_back({DenseTensor({fan_out, fan_in}, std::move(w)),
                            DenseTensor::zeros({fan_out})});
    }
    return net;
  }
};

// x [B x fan_in] * W^T + b -> [B x fan_out]; fixed left-to-right accumulation.
inline DenseTensor affine_forward(const DenseTensor& x, const MlpLayer& layer) {
  const std::size_t batch = x.rows(), fan_in = x.cols(), fan_out = layer.weights.rows();
  if (layer.weights.cols() != fan_in) throw DimensionError("affine fan-in mismatch");
  DenseTensor out = DenseTensor::zeros({batch, fan_out});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < fan_out; ++j) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < fan_in; ++i) acc += x(b, i) * layer.weights(j, i);
      out(b, j) = acc + layer.bias.at(j);
    }
  }
  return out;
}

inline DenseTensor relu(const DenseTensor& z) {
  DenseTensor out = z;
  for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return out;
}

struct ForwardTrace {
  // activations[0] is the input batch, activations[1..L-1] the hidden
  // post-ReLU outputs, activations[L] the logits.
  std::vector<DenseTensor> activations;
  DenseTensor probs;  // [B x classes]
  double loss = 0.0;  // mean cross-entropy over the batch
};

// Softmax cross-entropy on logits; probabilities and loss accumulate in
// double, probs stored as float32.
inline void softmax_cross_entropy(const DenseTensor& logits, std::span<const int> labels,
                                  DenseTensor& probs_out, double& loss_out) {
  const std::size_t batch = logits.rows(), classes = logits.cols();
  if (labels.size() != batch) throw DimensionError("label count differs from batch size");
  probs_out = DenseTensor::zeros({batch, classes});
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw DimensionError("label " + std::to_string(label) + " out of range");
    double max_logit = logits(b, 0);
    for (std::size_t c = 1; c < classes; ++c)
      max_logit = std::max(max_logit, static_cast<double>(logits(b, c)));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
      denom += std::exp(static_cast<double>(logits(b, c)) - max_logit);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) {
      const double logp = static_cast<double>(logits(b, c)) - max_logit - log_denom;
      probs_out(b, c) = static_cast<float>(std::exp(logp));
      if (c == static_cast<std::size_t>(label)) total -= logp;
    }
  }
  loss_out = total / static_cast<double>(batch);
  if (!std::isfinite(loss_out))
    throw NumericError("loss is not finite (batch of " + std::to_string(batch) + ")");
}

// Full-precision forward pass. Quantization never touches this path: the
// loss is identical under every storage config.
inline ForwardTrace forward(const MlpNetwork& net, const DenseTensor& batch,
                            std::span<const int> labels) {
  if (batch.rank() != 2 || batch.cols() != net.input_dim())
    throw DimensionError("batch shape does not match the input layer");
  ForwardTrace trace;
  trace.activations.reserve(net.depth() + 1);
  trace.activations.push_back(batch);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    DenseTensor z = affine_forward(trace.activations.back(), net.layers[l]);
    trace.activations.push_back(l + 1 < net.depth() ? relu(z) : std::move(z));
  }
  softmax_cross_entropy(trace.activations.back(), labels, trace.probs, trace.loss);
  return trace;
}

// Per-layer stored activation: quantized for hidden layers under a storage
// config, full precision otherwise. The input batch and the logits are
// always kept in full precision.
using LayerCache = std::variant<DenseTensor, QuantizedTensor>;

inline std::vector<LayerCache> store_activations(const ForwardTrace& trace,
                                                 const std::optional<QuantConfig>& cfg) {
  std::vector<LayerCache> caches;
  caches.reserve(trace.activations.size());
  const std::size_t last = trace.activations.size() - 1;
  for (std::size_t i = 0; i < trace.activations.size(); ++i) {
    const bool hidden = i > 0 && i < last;
    if (hidden && cfg.has_value()) {
      if (cfg->range_policy != RangePolicy::Nonnegative)
        throw ConfigError("activation storage requires the nonnegative range policy");
      for (float v : trace.activations[i].values()) {
        if (v < 0.0f) throw StateError("negative post-relu activation; relu contract violated");
      }
      caches.emplace_back(quantize(trace.activations[i], *cfg,
                                   /*with_mask=*/cfg->mode == QuantMode::VQuant));
    } else {
      caches.emplace_back(trace.activations[i]);
    }
  }
  return caches;
}

struct Gradients {
  std::vector<DenseTensor> weights;
  std::vector<DenseTensor> biases;
};

namespace detail {

// delta [B x fan_out], y [B x fan_in] -> [fan_out x fan_in], accumulating
// over the batch left to right.
inline DenseTensor weight_gradient(const DenseTensor& delta, const DenseTensor& y) {
  const std::size_t batch = delta.rows(), fan_out = delta.cols(), fan_in = y.cols();
  DenseTensor g = DenseTensor::zeros({fan_out, fan_in});
  for (std::size_t j = 0; j < fan_out; ++j) {
    for (std::size_t i = 0; i < fan_in; ++i) {
      float acc = 0.0f;
      for (std::size_t b = 0; b < batch; ++b) acc += delta(b, j) * y(b, i);
      g(j, i) = acc;
    }
  }
  return g;
}

inline DenseTensor bias_gradient(const DenseTensor& delta) {
  DenseTensor g = DenseTensor::zeros({delta.cols()});
  for (std::size_t j = 0; j < delta.cols(); ++j) {
    float acc = 0.0f;
    for (std::size_t b = 0; b < delta.rows(); ++b) acc += delta(b, j);
    g.at(j) = acc;
  }
  return g;
}

}  // namespace detail

// Shared back-propagation core. Local gradients (deltas) are computed from
// weights and the ReLU activity masks only; stored activation values enter
// solely through the weight-gradient products. `layer_inputs[l]` is the
// stored input of layer l, `hidden_active[l-1]` the activity mask of that
// input for l >= 1.
inline Gradients backprop_core(const MlpNetwork& net,
                               const std::vector<DenseTensor>& layer_inputs,
                               const std::vector<std::vector<std::uint8_t>>& hidden_active,
                               const DenseTensor& probs, std::span<const int> labels) {
  const std::size_t depth = net.depth();
  if (layer_inputs.size() != depth) throw StateError("layer input cache missing or stale");
  if (hidden_active.size() + 1 != depth) throw StateError("activity mask cache missing");
  const std::size_t batch = probs.rows(), classes = probs.cols();

  Gradients grads;
  grads.weights.resize(depth);
  grads.biases.resize(depth);

  // Output delta from softmax cross-entropy, scaled for the batch mean.
  DenseTensor delta = DenseTensor::zeros({batch, classes});
  const float inv_batch = 1.0f / static_cast<float>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < classes; ++c) {
      const float target = (static_cast<std::size_t>(labels[b]) == c) ? 1.0f : 0.0f;
      delta(b, c) = (probs(b, c) - target) * inv_batch;
    }
  }

  for (std::size_t l = depth; l-- > 0;) {
    grads.weights[l] = detail::weight_gradient(delta, layer_inputs[l]);
    grads.biases[l] = detail::bias_gradient(delta);
    if (l == 0) break;
    // delta_prev = (delta . W_l) masked by the ReLU activity of layer l's input.
    DenseTensor next = matmul(delta, net.layers[l].weights);
    const std::vector<std::uint8_t>& active = hidden_active[l - 1];
    for (std::size_t b = 0; b < next.rows(); ++b)
      for (std::size_t i = 0; i < next.cols(); ++i)
        if (!active[b * next.cols() + i]) next(b, i) = 0.0f;
    delta = std::move(next);
  }
  return grads;
}

// Back-propagation from stored caches: dequantized activations feed the
// weight gradients; deltas depend only on weights and the stored masks.
inline Gradients backward(const MlpNetwork& net, const DenseTensor& probs,
                          std::span<const int> labels, const std::vector<LayerCache>& caches) {
  if (caches.size() != net.depth() + 1) throw StateError("cache count does not match network");
  std::vector<DenseTensor> inputs;
  inputs.reserve(net.depth());
  std::vector<std::vector<std::uint8_t>> active(net.depth() - 1);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const LayerCache& cache = caches[l];
    if (std::holds_alternative<DenseTensor>(cache)) {
      const DenseTensor& a = std::get<DenseTensor>(cache);
      inputs.push_back(a);
      if (l > 0) {
        active[l - 1].resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) active[l - 1][i] = a.at(i) > 0.0f ? 1 : 0;
      }
    } else {
      const QuantizedTensor& q = std::get<QuantizedTensor>(cache);
      inputs.push_back(dequantize(q));
      if (l > 0) {
        active[l - 1].resize(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) active[l - 1][i] = q.active(i) ? 1 : 0;
      }
    }
  }
  return backprop_core(net, inputs, active, probs, labels);
}

// w <- w - lr * grad.
inline void sgd_step(MlpNetwork& net, const Gradients& grads, float learning_rate) {
  if (grads.weights.size() != net.depth()) throw StateError("gradient count mismatch");
  for (std::size_t l = 0; l < net.depth(); ++l) {
    if (!grads.weights[l].all_finite() || !grads.biases[l].all_finite())
      throw NumericError("non-finite gradient at layer " + std::to_string(l));
    if (!grads.weights[l].same_shape(net.layers[l].weights) ||
        !grads.biases[l].same_shape(net.layers[l].bias))
      throw DimensionError("gradient shape mismatch at layer " + std::to_string(l));
    auto w = net.layers[l].weights.values();
    auto gw = grads.weights[l].values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * gw[i];
    auto b = net.layers[l].bias.values();
    auto gb = grads.biases[l].values();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * gb[i];
  }
}

}  // namespace vquant
