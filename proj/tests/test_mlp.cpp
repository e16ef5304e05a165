#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "vquant/mlp.hpp"
#include "vquant/rng.hpp"

using namespace vquant;

namespace {

MlpNetwork hand_net_222() {
  MlpNetwork net;
  net.layers.push_back({DenseTensor({2, 2}, {0.5f, -0.25f, 1.0f, 0.75f}),
                        DenseTensor({2}, {0.1f, -0.1f})});
  net.layers.push_back({DenseTensor({2, 2}, {0.2f, -0.5f, -0.3f, 0.4f}),
                        DenseTensor({2}, {0.0f, 0.2f})});
  return net;
}

bool tensors_bit_equal(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * 4) == 0;
}

// Independent double-precision forward pass used as the finite-difference
// oracle; mirrors the engine formulas but shares no code with them.
double loss_oracle(const std::vector<std::vector<double>>& weights,
                   const std::vector<std::vector<double>>& biases,
                   const std::vector<std::size_t>& sizes, const DenseTensor& x,
                   const std::vector<int>& labels) {
  const std::size_t batch = x.rows();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> act(x.cols());
    for (std::size_t i = 0; i < x.cols(); ++i) act[i] = x(b, i);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
      std::vector<double> next(fan_out);
      for (std::size_t j = 0; j < fan_out; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < fan_in; ++i) acc += weights[l][j * fan_in + i] * act[i];
        acc += biases[l][j];
        next[j] = (l + 2 < sizes.size()) ? std::max(0.0, acc) : acc;
      }
      act = std::move(next);
    }
    double m = act[0];
    for (double v : act) m = std::max(m, v);
    double denom = 0.0;
    for (double v : act) denom += std::exp(v - m);
    total -= act[static_cast<std::size_t>(labels[b])] - m - std::log(denom);
  }
  return total / static_cast<double>(batch);
}

}  // namespace

TEST_CASE("zero-weight network gives uniform softmax and ln(C) loss") {
  MlpNetwork net;
  net.layers.push_back({DenseTensor::zeros({3, 4}), DenseTensor::zeros({3})});
  DenseTensor x = sample(Distribution::gaussian(0, 1), {5, 4}, 1);
  std::vector<int> labels{0, 1, 2, 0, 1};
  ForwardTrace trace = forward(net, x, labels);
  CHECK(std::fabs(trace.loss - std::log(3.0)) < 1e-6);
  for (std::size_t i = 0; i < trace.probs.size(); ++i)
    CHECK(std::fabs(trace.probs.at(i) - 1.0f / 3.0f) < 1e-6f);
}

TEST_CASE("hand-computed 2-2-2 forward pass") {
  MlpNetwork net = hand_net_222();
  DenseTensor x({2, 2}, {1.0f, 2.0f, 0.5f, -1.0f});
  std::vector<int> labels{1, 0};
  ForwardTrace trace = forward(net, x, labels);
  // Frozen from an independent double-precision evaluation.
  CHECK(std::fabs(trace.loss - 0.369517512385) < 1e-5);
  CHECK(trace.activations.size() == 3);
  // Hidden activations [0.1, 2.4] and [0.6, 0.0].
  CHECK(std::fabs(trace.activations[1](0, 0) - 0.1f) < 1e-6f);
  CHECK(std::fabs(trace.activations[1](0, 1) - 2.4f) < 1e-6f);
  CHECK(trace.activations[1](1, 1) == 0.0f);
}

TEST_CASE("forward rejects bad shapes and labels") {
  MlpNetwork net = hand_net_222();
  DenseTensor bad({2, 3}, std::vector<float>(6, 0.0f));
  std::vector<int> labels{0, 1};
  CHECK_THROWS_AS(forward(net, bad, labels), DimensionError);
  DenseTensor x({2, 2}, std::vector<float>(4, 0.0f));
  std::vector<int> bad_labels{0, 7};
  CHECK_THROWS_AS(forward(net, x, bad_labels), DimensionError);
}

TEST_CASE("storing activations never perturbs the forward trace") {
  MlpNetwork net = hand_net_222();
  DenseTensor x({2, 2}, {1.0f, 2.0f, 0.5f, -1.0f});
  std::vector<int> labels{1, 0};
  ForwardTrace trace = forward(net, x, labels);
  const double loss = trace.loss;
  for (int bits : {2, 3}) {
    QuantConfig cfg{.bits = bits, .large_ratio = 0.02, .mode = QuantMode::RVQuant,
                    .range_policy = RangePolicy::Nonnegative};
    auto caches = store_activations(trace, cfg);
    CHECK(trace.loss == loss);
    CHECK(caches.size() == 3);
    CHECK(std::holds_alternative<DenseTensor>(caches.front()));
    CHECK(std::holds_alternative<DenseTensor>(caches.back()));
    CHECK(std::holds_alternative<QuantizedTensor>(caches[1]));
  }
}

TEST_CASE("all-dead hidden layer stores all-zero rv codes") {
  MlpNetwork net;
  // Negative bias guarantees dead ReLU outputs for zero input.
  net.layers.push_back({DenseTensor::zeros({4, 2}), DenseTensor({4}, {-1, -1, -1, -1})});
  net.layers.push_back({DenseTensor::zeros({2, 4}), DenseTensor::zeros({2})});
  DenseTensor x = DenseTensor::zeros({3, 2});
  std::vector<int> labels{0, 1, 0};
  ForwardTrace trace = forward(net, x, labels);
  QuantConfig cfg{.bits = 3, .large_ratio = 0.02, .mode = QuantMode::RVQuant,
                  .range_policy = RangePolicy::Nonnegative};
  auto caches = store_activations(trace, cfg);
  const auto& q = std::get<QuantizedTensor>(caches[1]);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!q.outliers.contains(i)) CHECK(q.code_at(i) == 0);
    CHECK_FALSE(q.active(i));
  }
}

TEST_CASE("stored hidden activations stay within the codec bound") {
  RngStream rng(21);
  MlpNetwork net = MlpNetwork::init(std::vector<std::size_t>{8, 100, 4}, rng);
  DenseTensor x = sample(Distribution::gaussian(0, 1), {100, 8}, rng);
  std::vector<int> labels(100, 0);
  ForwardTrace trace = forward(net, x, labels);
  QuantConfig cfg{.bits = 3, .large_ratio = 0.02, .mode = QuantMode::RVQuant,
                  .range_policy = RangePolicy::Nonnegative};
  auto caches = store_activations(trace, cfg);
  const auto& q = std::get<QuantizedTensor>(caches[1]);
  // 10^4-element activation at AR=2% keeps exactly 200 outliers.
  CHECK(q.size() == 10000);
  CHECK(q.outliers.size() == 200);
  DenseTensor restored = dequantize(q);
  const double step = q.step();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double err = std::fabs(static_cast<double>(restored.at(i)) -
                                 trace.activations[1].at(i));
    CHECK(err <= (trace.activations[1].at(i) < step / 2.0 ? step : step / 2.0));
  }
}

TEST_CASE("negative activation under nonnegative storage is an internal error") {
  ForwardTrace trace;
  trace.activations.push_back(DenseTensor::zeros({1, 2}));
  trace.activations.push_back(DenseTensor({1, 2}, {0.5f, -0.25f}));
  trace.activations.push_back(DenseTensor::zeros({1, 2}));
  QuantConfig cfg{.bits = 3, .large_ratio = 0.0, .mode = QuantMode::RVQuant,
                  .range_policy = RangePolicy::Nonnegative};
  CHECK_THROWS_AS(store_activations(trace, cfg), StateError);
}

TEST_CASE("local gradients are identical under every storage config") {
  RngStream rng(33);
  MlpNetwork net = MlpNetwork::init(std::vector<std::size_t>{6, 12, 10, 3}, rng);
  DenseTensor x = sample(Distribution::gaussian(0, 1), {16, 6}, rng);
  std::vector<int> labels(16);
  for (auto& l : labels) l = static_cast<int>(rng.next_below(3));
  ForwardTrace trace = forward(net, x, labels);

  auto full = backward(net, trace.probs, labels, store_activations(trace, std::nullopt));

  std::vector<QuantConfig> configs{
      {.bits = 2, .large_ratio = 0.0, .mode = QuantMode::RVQuant,
       .range_policy = RangePolicy::Nonnegative},
      {.bits = 3, .large_ratio = 0.02, .mode = QuantMode::RVQuant,
       .range_policy = RangePolicy::Nonnegative},
      {.bits = 2, .large_ratio = 0.0, .mode = QuantMode::VQuant,
       .range_policy = RangePolicy::Nonnegative},
      {.bits = 3, .large_ratio = 0.02, .mode = QuantMode::VQuant,
       .range_policy = RangePolicy::Nonnegative},
  };
  for (const auto& cfg : configs) {
    auto quant = backward(net, trace.probs, labels, store_activations(trace, cfg));
    // Bias gradients are the per-layer column sums of delta: bitwise equality
    // witnesses delta equality at every layer.
    for (std::size_t l = 0; l < net.depth(); ++l)
      CHECK(tensors_bit_equal(quant.biases[l], full.biases[l]));
    // Layer 0 consumes the full-precision input batch, so its weight
    // gradient must also match bitwise.
    CHECK(tensors_bit_equal(quant.weights[0], full.weights[0]));
  }
}

TEST_CASE("weight-gradient error is bounded by |delta| times half a step") {
  RngStream rng(44);
  MlpNetwork net = MlpNetwork::init(std::vector<std::size_t>{5, 20, 8, 3}, rng);
  DenseTensor x = sample(Distribution::gaussian(0, 1), {12, 5}, rng);
  std::vector<int> labels(12);
  for (auto& l : labels) l = static_cast<int>(rng.next_below(3));
  ForwardTrace trace = forward(net, x, labels);

  QuantConfig cfg{.bits = 3, .large_ratio = 0.02, .mode = QuantMode::VQuant,
                  .range_policy = RangePolicy::Nonnegative};
  auto caches = store_activations(trace, cfg);
  auto full = backward(net, trace.probs, labels, store_activations(trace, std::nullopt));
  auto quant = backward(net, trace.probs, labels, caches);

  // Independent delta recomputation (double precision) for the bound.
  const std::size_t batch = x.rows();
  std::vector<std::vector<double>> delta(net.depth());
  delta[net.depth() - 1].resize(batch * net.output_dim());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < net.output_dim(); ++c)
      delta[net.depth() - 1][b * net.output_dim() + c] =
          (static_cast<double>(trace.probs(b, c)) -
           (static_cast<std::size_t>(labels[b]) == c ? 1.0 : 0.0)) /
          static_cast<double>(batch);
  for (std::size_t l = net.depth() - 1; l > 0; --l) {
    const auto& w = net.layers[l].weights;
    delta[l - 1].assign(batch * w.cols(), 0.0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < w.cols(); ++i) {
        if (!(trace.activations[l](b, i) > 0.0f)) continue;
        double acc = 0.0;
        for (std::size_t j = 0; j < w.rows(); ++j)
          acc += delta[l][b * w.rows() + j] * w(j, i);
        delta[l - 1][b * w.cols() + i] = acc;
      }
  }

  for (std::size_t l = 1; l < net.depth(); ++l) {
    const auto& q = std::get<QuantizedTensor>(caches[l]);
    const double half_step = q.step() / 2.0;
    const std::size_t fan_out = net.layers[l].weights.rows();
    const std::size_t fan_in = net.layers[l].weights.cols();
    for (std::size_t j = 0; j < fan_out; ++j) {
      for (std::size_t i = 0; i < fan_in; ++i) {
        double delta_mag = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
          delta_mag += std::fabs(delta[l][b * fan_out + j]);
        const double diff = std::fabs(static_cast<double>(quant.weights[l](j, i)) -
                                      full.weights[l](j, i));
        // Small slack absorbs float32 accumulation rounding.
        CHECK(diff <= delta_mag * half_step + 1e-6);
      }
    }
  }
}

TEST_CASE("full-precision backprop matches central finite differences") {
  RngStream rng(58);
  const std::vector<std::size_t> sizes{2, 3, 2};  // 17 parameters
  MlpNetwork net = MlpNetwork::init(sizes, rng);
  DenseTensor x = sample(Distribution::gaussian(0, 1), {6, 2}, rng);
  std::vector<int> labels{0, 1, 1, 0, 1, 0};
  ForwardTrace trace = forward(net, x, labels);

  // Guard: stay away from ReLU kinks so the h=1e-3 stencil is smooth.
  float min_abs_z = 1e9f;
  for (std::size_t b = 0; b < x.rows(); ++b)
    for (std::size_t j = 0; j < 3; ++j) {
      float z = net.layers[0].bias.at(j);
      for (std::size_t i = 0; i < 2; ++i) z += net.layers[0].weights(j, i) * x(b, i);
      min_abs_z = std::min(min_abs_z, std::fabs(z));
    }
  REQUIRE(min_abs_z > 0.02f);

  auto grads = backward(net, trace.probs, labels, store_activations(trace, std::nullopt));

  std::vector<std::vector<double>> weights(2), biases(2);
  for (std::size_t l = 0; l < 2; ++l) {
    for (float v : net.layers[l].weights.values()) weights[l].push_back(v);
    for (float v : net.layers[l].bias.values()) biases[l].push_back(v);
  }
  const double h = 1e-3;
  std::size_t checked = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t k = 0; k < weights[l].size() + biases[l].size(); ++k) {
      const bool is_weight = k < weights[l].size();
      double& param = is_weight ? weights[l][k] : biases[l][k - weights[l].size()];
      const double saved = param;
      param = saved + h;
      const double up = loss_oracle(weights, biases, sizes, x, labels);
      param = saved - h;
      const double down = loss_oracle(weights, biases, sizes, x, labels);
      param = saved;
      const double fd = (up - down) / (2.0 * h);
      const double bp = is_weight ? grads.weights[l].at(k)
                                  : grads.biases[l].at(k - weights[l].size());
      const double scale = std::max(std::fabs(fd), std::fabs(bp));
      if (scale < 1e-9) continue;  // dead-unit parameter: both sides zero
      CHECK(std::fabs(fd - bp) / scale <= 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 15);  // nearly every parameter carried signal
}

TEST_CASE("sgd step basics") {
  MlpNetwork net = hand_net_222();
  MlpNetwork before = net;
  Gradients grads;
  grads.weights = {DenseTensor({2, 2}, {1, 2, 3, 4}), DenseTensor({2, 2}, {5, 6, 7, 8})};
  grads.biases = {DenseTensor({2}, {1, 1}), DenseTensor({2}, {2, 2})};

  sgd_step(net, grads, 0.0f);
  for (std::size_t l = 0; l < 2; ++l)
    CHECK(tensors_bit_equal(net.layers[l].weights, before.layers[l].weights));

  sgd_step(net, grads, 0.5f);
  CHECK(net.layers[0].weights(0, 0) == 0.5f - 0.5f * 1.0f);
  CHECK(net.layers[1].bias.at(0) == 0.0f - 0.5f * 2.0f);

  grads.weights[0].at(0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(sgd_step(net, grads, 0.1f), NumericError);
}

TEST_CASE("two recomputed steps differ from one step at summed gradients") {
  RngStream rng(3);
  MlpNetwork base = MlpNetwork::init(std::vector<std::size_t>{2, 3, 2}, rng);
  DenseTensor x = sample(Distribution::gaussian(0, 1), {4, 2}, rng);
  std::vector<int> labels{0, 1, 0, 1};
  const float lr = 0.5f;

  // Path A: two steps, gradients recomputed in between.
  MlpNetwork a = base;
  for (int s = 0; s < 2; ++s) {
    ForwardTrace t = forward(a, x, labels);
    auto g = backward(a, t.probs, labels, store_activations(t, std::nullopt));
    sgd_step(a, g, lr);
  }

  // Path B: one step with the doubled first gradient.
  MlpNetwork b = base;
  ForwardTrace t = forward(b, x, labels);
  auto g = backward(b, t.probs, labels, store_activations(t, std::nullopt));
  Gradients doubled = g;
  for (auto& w : doubled.weights)
    for (float& v : w.values()) v *= 2.0f;
  for (auto& bias : doubled.biases)
    for (float& v : bias.values()) v *= 2.0f;
  sgd_step(b, doubled, lr);

  bool identical = true;
  for (std::size_t l = 0; l < a.depth() && identical; ++l)
    identical = tensors_bit_equal(a.layers[l].weights, b.layers[l].weights);
  CHECK_FALSE(identical);
}
