#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pctrans/errors.hpp"

namespace pctrans::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Storage starts on a 64-byte boundary. Vectorized reductions split their
// work by alignment, so a fixed boundary keeps results bit-identical from
// run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

// Dense row-major float32 tensor. Most of the library works on rank-2
// tensors (rows = points or events, cols = channels); rank-0 holds scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}
  Tensor(Shape shape, const std::vector<float>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    if (shape_size(shape_) != values_.size()) {
      throw ConfigError("tensor shape " + shape_str(shape_) + " holds " +
                        std::to_string(shape_size(shape_)) + " values, got " +
                        std::to_string(values_.size()));
    }
  }

  static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) {
    return Tensor(Shape{rows, cols}, fill);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Rank-2 views; a rank-1 tensor reads as a single row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    if (shape_.size() == 2) return shape_[1];
    return shape_.empty() ? 1 : shape_[0];
  }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }
  float& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  float item() const {
    if (values_.size() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape_));
    return values_[0];
  }

  std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }
  std::span<float> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }

  void fill(float v) { std::fill(values_.begin(), values_.end(), v); }
  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != values_.size()) {
      throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<float, AlignedAllocator<float>> values_;
};

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("max_abs_diff: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace pctrans::numerics
