#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vquant/errors.hpp"
#include "vquant/rng.hpp"
#include "vquant/tensor.hpp"
#include "vquant/tensor_io.hpp"

namespace vquant {

struct Dataset {
  DenseTensor features;  // [samples x dim]
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t samples() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

// Seeded gaussian blobs: class centers drawn on a scaled gaussian shell,
// samples assigned round-robin. `separation` controls center spread relative
// to the within-class `spread`.
inline Dataset make_blobs(std::size_t samples, std::size_t classes, std::size_t dim,
                          double separation, double spread, std::uint64_t seed) {
  if (samples == 0 || classes < 2 || dim == 0) throw ConfigError("bad blob dataset shape");
  RngStream rng(seed);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& center : centers)
    for (auto& c : center) c = separation * rng.next_gaussian();

  Dataset data;
  std::vector<float> x(samples * dim);
  data.labels.resize(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t cls = s % classes;
    data.labels[s] = static_cast<int>(cls);
    for (std::size_t d = 0; d < dim; ++d)
      x[s * dim + d] = static_cast<float>(centers[cls][d] + spread * rng.next_gaussian());
  }
  data.features = DenseTensor({samples, dim}, std::move(x));
  data.classes = classes;
  return data;
}

// "Digits"-style set: each class is a seeded 8x8 prototype pattern plus
// gaussian pixel noise. 64 features per sample.
inline Dataset make_digits(std::size_t samples, std::size_t classes, double noise,
                           std::uint64_t seed) {
  if (samples == 0 || classes < 2 || classes > 10) throw ConfigError("digits need 2..10 classes");
  constexpr std::size_t kPixels = 64;
  RngStream rng(seed);
  std::vector<std::vector<double>> prototypes(classes, std::vector<double>(kPixels));
  for (auto& proto : prototypes)
    for (auto& p : proto) p = rng.next_unit() < 0.45 ? 1.0 : 0.0;

  Dataset data;
  std::vector<float> x(samples * kPixels);
  data.labels.resize(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t cls = s % classes;
    data.labels[s] = static_cast<int>(cls);
    for (std::size_t d = 0; d < kPixels; ++d)
      x[s * kPixels + d] = static_cast<float>(prototypes[cls][d] + noise * rng.next_gaussian());
  }
  data.features = DenseTensor({samples, kPixels}, std::move(x));
  data.classes = classes;
  return data;
}

// Leading/trailing split. Samples from the generators above are laid out
// round-robin by class, so both halves stay class-balanced.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double eval_fraction) {
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
    throw ConfigError("eval fraction must be in (0, 1)");
  const std::size_t total = data.samples();
  const auto eval_count = static_cast<std::size_t>(std::llround(eval_fraction * total));
  if (eval_count == 0 || eval_count == total) throw ConfigError("split leaves an empty side");
  const std::size_t train_count = total - eval_count;

  auto slice = [&](std::size_t begin, std::size_t count) {
    Dataset part;
    std::vector<float> x(count * data.dim());
    part.labels.resize(count);
    for (std::size_t r = 0; r < count; ++r) {
      part.labels[r] = data.labels[begin + r];
      for (std::size_t c = 0; c < data.dim(); ++c)
        x[r * data.dim() + c] = data.features(begin + r, c);
    }
    part.features = DenseTensor({count, data.dim()}, std::move(x));
    part.classes = data.classes;
    return part;
  };
  return {slice(0, train_count), slice(train_count, eval_count)};
}

// Dataset files: a features tensor [N x D] and a rank-1 labels tensor with
// integral float values 0..classes-1.
inline void write_dataset(const std::string& features_path, const std::string& labels_path,
                          const Dataset& data) {
  write_tensor(features_path, data.features);
  const std::size_t count = data.labels.size();
  std::vector<float> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<float>(data.labels[i]);
  write_tensor(labels_path, DenseTensor({count}, std::move(labels)));
}

inline Dataset read_dataset(const std::string& features_path, const std::string& labels_path) {
  Dataset data;
  data.features = read_tensor(features_path);
  if (data.features.rank() != 2) throw FormatError(features_path + ": features must be rank-2");
  DenseTensor labels = read_tensor(labels_path);
  if (labels.rank() != 1 || labels.size() != data.features.rows())
    throw FormatError(labels_path + ": labels must be rank-1 with one entry per sample");
  data.labels.resize(labels.size());
  int max_label = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float v = labels.at(i);
    if (v < 0.0f || v != std::floor(v) || v > 1e6f)
      throw FormatError(labels_path + ": labels must be small nonnegative integers");
    data.labels[i] = static_cast<int>(v);
    max_label = std::max(max_label, data.labels[i]);
  }
  data.classes = static_cast<std::size_t>(max_label) + 1;
  return data;
}

}  // namespace vquant
