#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"

namespace vf {

using Shape = std::array<std::size_t, 4>;

inline std::string shape_str(const Shape& s) {
  return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]) + "]";
}

/// Dense rank-4 [n, c, h, w] row-major array. Lower-rank quantities (bias
/// vectors, scalars) use trailing ones.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape[0] * shape[1] * shape[2] * shape[3], fill) {}
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_[0]; }
  std::size_t c() const { return shape_[1]; }
  std::size_t h() const { return shape_[2]; }
  std::size_t w() const { return shape_[3]; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return shape_[2] * shape_[3]; }
  std::size_t sample_size() const { return shape_[1] * plane(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[index(n, c, y, x)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  T* sample(std::size_t n) { return data_.data() + n * sample_size(); }
  const T* sample(std::size_t n) const { return data_.data() + n * sample_size(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

template <class T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  require(t.all_finite(), Errc::NonFinite, what + " contains NaN or Inf");
}

template <class T>
void require_shape(const Tensor<T>& t, const Shape& s, const std::string& what) {
  require(t.shape() == s, Errc::ShapeMismatch,
          what + ": expected " + shape_str(s) + ", got " + shape_str(t.shape()));
}

}  // namespace vf
