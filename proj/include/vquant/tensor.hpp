#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vquant/errors.hpp"

namespace vquant {

// Element count of a shape. The empty shape is a rank-0 scalar with one element.
inline std::size_t shape_elements(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// Dense row-major float32 tensor. Immutable by convention once handed to an
// operation; all operations return fresh tensors.
class DenseTensor {
 public:
  DenseTensor() = default;

  DenseTensor(std::vector<std::size_t> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive");
    }
    if (data_.size() != shape_elements(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape element count " +
                           std::to_string(shape_elements(shape_)));
    }
  }

  static DenseTensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_elements(shape);
    return DenseTensor(std::move(shape), std::vector<float>(n, 0.0f));
  }

  // Rank-1 convenience constructor.
  static DenseTensor vector_of(std::vector<float> values) {
    std::size_t n = values.size();
    return DenseTensor({n}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }

  float at(std::size_t i) const { return data_[i]; }
  float& at(std::size_t i) { return data_[i]; }

  // Rank-2 accessors.
  std::size_t rows() const {
    require_rank2();
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank2();
    return shape_[1];
  }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

  bool all_finite() const {
    for (float v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void require_finite(const std::string& context) const {
    if (!all_finite()) throw NumericError(context + ": tensor contains NaN or Inf");
  }

  bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

  bool operator==(const DenseTensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void require_rank2() const {
    if (shape_.size() != 2) throw DimensionError("rank-2 tensor required");
  }

  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

// Matrix product with fixed left-to-right float32 accumulation. The summation
// order is part of the contract: results are bit-reproducible across runs.
inline DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul requires rank-2 tensors");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions differ: " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  DenseTensor out = DenseTensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t t = 0; t < k; ++t) acc += a(i, t) * b(t, j);
      out(i, j) = acc;
    }
  }
  return out;
}

inline DenseTensor transpose(const DenseTensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose requires a rank-2 tensor");
  DenseTensor out = DenseTensor::zeros({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace vquant
