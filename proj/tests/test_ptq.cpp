#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <tuple>
#include <filesystem>
#include <vector>

#include "vquant/model_io.hpp"
#include "vquant/ptq.hpp"

using namespace vquant;

namespace {

struct Toy {
  Dataset train_set;
  Dataset eval_set;
  MlpNetwork net;
  double float_accuracy = 0.0;
};

// A trained toy classifier shared by the PTQ tests.
const Toy& toy() {
  static const Toy instance = [] {
    Toy t;
    Dataset all = make_blobs(1024, 4, 8, 2.2, 1.0, 424242);
    std::tie(t.train_set, t.eval_set) = split_dataset(all, 0.5);
    RngStream rng(15);
    MlpNetwork net = MlpNetwork::init(std::vector<std::size_t>{8, 24, 16, 4}, rng);
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 32;
    cfg.epochs = 25;
    cfg.seed = 15;
    cfg.schedule = AnnealSchedule::constant(25, std::nullopt);
    t.net = train(net, t.train_set, cfg).net;
    t.float_accuracy = accuracy(t.net, t.eval_set);
    return t;
  }();
  return instance;
}

}  // namespace

TEST_CASE("bypass config reproduces the float network exactly") {
  InferenceQuantConfig cfg{.weight_bits = 32, .act_bits = 32};
  QuantizedMlp q = quantize_model(toy().net, cfg);
  // Weight tensors are untouched.
  for (std::size_t l = 0; l < q.depth(); ++l) {
    CHECK(std::memcmp(q.layers[l].weights.values().data(),
                      toy().net.layers[l].weights.values().data(),
                      q.layers[l].weights.size() * 4) == 0);
  }
  CHECK(ptq_accuracy(q, toy().eval_set) == toy().float_accuracy);

  // Predictions match the float argmax sample by sample.
  DenseTensor x = DenseTensor::zeros({16, toy().eval_set.dim()});
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = toy().eval_set.features(r, c);
  std::vector<int> pred = ptq_predict(q, x);
  DenseTensor logits = x;
  for (std::size_t l = 0; l < toy().net.depth(); ++l) {
    logits = affine_forward(logits, toy().net.layers[l]);
    if (l + 1 < toy().net.depth()) logits = relu(logits);
  }
  for (std::size_t r = 0; r < 16; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    CHECK(pred[r] == static_cast<int>(best));
  }
}

TEST_CASE("8-bit quantization stays close to float accuracy") {
  InferenceQuantConfig cfg{.weight_bits = 8, .act_bits = 8, .weight_ratio = 0.0,
                           .act_ratio = 0.0};
  QuantizedMlp q = quantize_model(toy().net, cfg);
  const double acc = ptq_accuracy(q, toy().eval_set);
  CHECK(std::fabs(acc - toy().float_accuracy) <= 0.5);
}

TEST_CASE("1-bit quantization collapses but completes") {
  InferenceQuantConfig cfg{.weight_bits = 1, .act_bits = 1, .weight_ratio = 0.0,
                           .act_ratio = 0.0};
  QuantizedMlp q = quantize_model(toy().net, cfg);
  const double acc = ptq_accuracy(q, toy().eval_set);
  CHECK(acc < toy().float_accuracy);  // large drop recorded, no crash
  CHECK(acc >= 0.0);
}

TEST_CASE("weight quantization respects the codec contract") {
  InferenceQuantConfig cfg{.weight_bits = 4, .act_bits = 4, .weight_ratio = 0.02,
                           .act_ratio = 0.01};
  QuantizedMlp q = quantize_model(toy().net, cfg);
  REQUIRE(q.quantized_weights.size() == toy().net.depth());
  for (std::size_t l = 0; l < q.depth(); ++l) {
    const auto& qw = q.quantized_weights[l];
    const auto want = static_cast<std::size_t>(
        std::llround(0.02 * static_cast<double>(toy().net.layers[l].weights.size())));
    CHECK(qw.outliers.size() == want);
    // 16-bit outlier storage: exact at binary16 precision.
    for (std::size_t k = 0; k < qw.outliers.size(); ++k) {
      const float original = toy().net.layers[l].weights.at(qw.outliers.indices[k]);
      CHECK(qw.outliers.values[k] == round_to_half(original));
    }
  }
}

TEST_CASE("zero fine-tune epochs returns the net unchanged") {
  InferenceQuantConfig cfg{.weight_bits = 4, .act_bits = 4};
  FinetuneOptions opt{.epochs = 0, .learning_rate = 0.05, .batch_size = 32, .seed = 3};
  MlpNetwork tuned = finetune(toy().net, cfg, opt, toy().train_set);
  for (std::size_t l = 0; l < tuned.depth(); ++l) {
    CHECK(std::memcmp(tuned.layers[l].weights.values().data(),
                      toy().net.layers[l].weights.values().data(),
                      tuned.layers[l].weights.size() * 4) == 0);
  }
}

TEST_CASE("pass-through gradients equal the float backward on the quantized view") {
  InferenceQuantConfig cfg{.weight_bits = 3, .act_bits = 3, .weight_ratio = 0.01,
                           .act_ratio = 0.01};
  QuantizedMlp view = quantize_model(toy().net, cfg);
  DenseTensor x = DenseTensor::zeros({8, toy().train_set.dim()});
  std::vector<int> labels(8);
  for (std::size_t r = 0; r < 8; ++r) {
    labels[r] = toy().train_set.labels[r];
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = toy().train_set.features(r, c);
  }
  PtqTrace trace = ptq_forward(view, x, labels);
  Gradients got = finetune_gradients(view, trace, labels);

  // Oracle: a float network whose weights are the dequantized values, run
  // through the standard backward on the same consumed activations.
  MlpNetwork substituted;
  substituted.layers = view.layers;
  std::vector<LayerCache> caches;
  for (const auto& input : trace.layer_inputs) caches.emplace_back(input);
  caches.emplace_back(DenseTensor::zeros({1, 1}));  // logits cache unused by backward
  // backward() derives hidden activity from the cached dense inputs; those
  // are the post-quantization activations, whose sign pattern may differ
  // from the pre-quantization one, so compare against backprop_core driven
  // by the trace masks instead.
  Gradients want =
      backprop_core(substituted, trace.layer_inputs, trace.hidden_active, trace.probs, labels);
  for (std::size_t l = 0; l < got.weights.size(); ++l) {
    CHECK(std::memcmp(got.weights[l].values().data(), want.weights[l].values().data(),
                      got.weights[l].size() * 4) == 0);
    CHECK(std::memcmp(got.biases[l].values().data(), want.biases[l].values().data(),
                      got.biases[l].size() * 4) == 0);
  }
}

TEST_CASE("fine-tuning recovers quantized accuracy across seeds") {
  InferenceQuantConfig cfg{.weight_bits = 4, .act_bits = 4, .weight_ratio = 0.01,
                           .act_ratio = 0.01};
  const double before = ptq_accuracy(quantize_model(toy().net, cfg), toy().eval_set);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    FinetuneOptions opt{.epochs = 2, .learning_rate = 0.02, .batch_size = 32, .seed = seed};
    MlpNetwork tuned = finetune(toy().net, cfg, opt, toy().train_set);
    const double after = ptq_accuracy(quantize_model(tuned, cfg), toy().eval_set);
    // Monotone help within slack: fine-tuning never substantially hurts.
    CHECK(after >= before - 0.5);
  }
}

TEST_CASE("sweep selects the minimal qualifying bitwidth") {
  std::vector<InferenceQuantConfig> candidates{
      {.weight_bits = 4, .act_bits = 4, .weight_ratio = 0.01, .act_ratio = 0.01},
      {.weight_bits = 5, .act_bits = 5, .weight_ratio = 0.01, .act_ratio = 0.01},
      {.weight_bits = 8, .act_bits = 8, .weight_ratio = 0.0, .act_ratio = 0.0},
  };
  FinetuneOptions opt{.epochs = 2, .learning_rate = 0.02, .batch_size = 32, .seed = 7};
  SweepResult result =
      sweep(toy().net, candidates, 1.0, opt, toy().train_set, toy().eval_set);
  REQUIRE(result.candidates.size() == 3);
  REQUIRE_FALSE(result.none_qualify);
  const auto& sel = result.candidates[result.selected];
  CHECK(sel.accuracy >= result.target_accuracy);
  CHECK(sel.config.weight_bits <= 5);
  // Selection soundness: nothing with strictly smaller weight bits qualifies.
  for (const auto& c : result.candidates) {
    if (c.config.weight_bits < sel.config.weight_bits)
      CHECK(c.accuracy < result.target_accuracy);
  }
}

TEST_CASE("single qualifying candidate is selected") {
  std::vector<InferenceQuantConfig> candidates{{.weight_bits = 32, .act_bits = 32}};
  FinetuneOptions opt{.epochs = 0, .learning_rate = 0.02, .batch_size = 32, .seed = 7};
  SweepResult result =
      sweep(toy().net, candidates, 1.0, opt, toy().train_set, toy().eval_set);
  CHECK_FALSE(result.none_qualify);
  CHECK(result.selected == 0);
  CHECK(result.candidates[0].accuracy == result.float_accuracy);
}

TEST_CASE("all candidates failing yields a none-qualify result") {
  std::vector<InferenceQuantConfig> candidates{
      {.weight_bits = 1, .act_bits = 1, .weight_ratio = 0.0, .act_ratio = 0.0},
      {.weight_bits = 1, .act_bits = 1, .weight_ratio = 0.01, .act_ratio = 0.01},
  };
  FinetuneOptions opt{.epochs = 1, .learning_rate = 0.02, .batch_size = 32, .seed = 7};
  SweepResult result =
      sweep(toy().net, candidates, 0.1, opt, toy().train_set, toy().eval_set);
  CHECK(result.none_qualify);
  CHECK(result.selected < result.candidates.size());
  // Best found is reported.
  for (const auto& c : result.candidates)
    CHECK(result.candidates[result.selected].accuracy >= c.accuracy);
}

TEST_CASE("parallel sweep matches sequential results") {
  std::vector<InferenceQuantConfig> candidates{
      {.weight_bits = 4, .act_bits = 4, .weight_ratio = 0.01, .act_ratio = 0.01},
      {.weight_bits = 8, .act_bits = 8, .weight_ratio = 0.0, .act_ratio = 0.0},
  };
  FinetuneOptions opt{.epochs = 1, .learning_rate = 0.02, .batch_size = 32, .seed = 7};
  SweepResult seq = sweep(toy().net, candidates, 1.0, opt, toy().train_set, toy().eval_set, 1);
  SweepResult par = sweep(toy().net, candidates, 1.0, opt, toy().train_set, toy().eval_set, 2);
  REQUIRE(seq.candidates.size() == par.candidates.size());
  CHECK(seq.selected == par.selected);
  for (std::size_t i = 0; i < seq.candidates.size(); ++i) {
    CHECK(seq.candidates[i].accuracy == par.candidates[i].accuracy);
    CHECK(seq.candidates[i].accuracy_before == par.candidates[i].accuracy_before);
  }
}

TEST_CASE("model checkpoint round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "vquant_model_ck";
  fs::remove_all(dir);
  save_model(dir.string(), toy().net);
  MlpNetwork back = load_model(dir.string());
  REQUIRE(back.depth() == toy().net.depth());
  for (std::size_t l = 0; l < back.depth(); ++l) {
    CHECK(back.layers[l].weights == toy().net.layers[l].weights);
    CHECK(back.layers[l].bias == toy().net.layers[l].bias);
  }
  // Corrupt the manifest: load must fail cleanly.
  std::ofstream bad(dir / "manifest.json");
  bad << "{\"format\": \"other\"}";
  bad.close();
  CHECK_THROWS_AS(load_model(dir.string()), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("inference config validation") {
  InferenceQuantConfig bad{.weight_bits = 9};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  InferenceQuantConfig bad2{.weight_bits = 4, .act_bits = 0};
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
  InferenceQuantConfig bad3{.weight_bits = 4, .act_bits = 4, .weight_ratio = 1.0};
  CHECK_THROWS_AS(bad3.validate(), ConfigError);
}
