#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace chartdet::nn {

// Dense row-major tensor. Shapes use int dims; data is contiguous.
template <class T>
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) { resize(std::move(shape)); }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  void resize(std::vector<int> shape) {
    shape_ = std::move(shape);
    data_.assign(static_cast<std::size_t>(numel_of(shape_)), T(0));
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Indexing helpers for the common ranks.
  T& at2(int i, int j) {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  const T& at2(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  T& at4(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
                     shape_[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
                     shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  // In-place y += alpha * x, shapes must match.
  void add_scaled(const Tensor& x, T alpha) {
    assert(x.numel() == numel());
    for (std::int64_t i = 0; i < numel(); ++i) data_[static_cast<std::size_t>(i)] += alpha * x[i];
  }

  Tensor reshaped(std::vector<int> shape) const {
    assert(numel_of(shape) == numel());
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  static std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

// A learnable tensor with its gradient accumulator.
template <class T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  void init_shape(std::vector<int> shape) {
    value.resize(shape);
    grad.resize(std::move(shape));
  }
  void zero_grad() { grad.zero(); }
};

template <class T>
using NamedParams = std::vector<std::pair<std::string, Param<T>*>>;

}  // namespace chartdet::nn
