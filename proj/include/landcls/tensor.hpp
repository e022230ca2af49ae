#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "landcls/errors.hpp"

namespace landcls {

// Ordered list of dimension sizes. A default-constructed Shape is "unset"
// (rank 0, zero elements) and only appears in default-constructed tensors.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ShapeError("shape needs at least one dimension");
    for (auto d : dims_) {
      if (d == 0) throw ShapeError("zero-sized dimension in shape " + to_string());
    }
  }

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  bool empty() const noexcept { return dims_.empty(); }

  std::size_t numel() const noexcept {
    if (dims_.empty()) return 0;
    std::size_t n = 1;
    for (auto d : dims_) n *= d;
    return n;
  }

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

  bool operator==(const Shape&) const = default;

 private:
  std::vector<std::size_t> dims_;
};

// Dense row-major tensor. Image batches are N x C x H x W.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), values_(shape_.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.numel()) {
      throw ShapeError("tensor of shape " + shape_.to_string() + " given " +
                       std::to_string(values_.size()) + " values");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  // 4-d element access for N x C x H x W tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
  }
  Tensor reshaped(Shape shape) && {
    if (shape.numel() != values_.size()) {
      throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  void fill(T v) {
    for (auto& x : values_) x = v;
  }

  bool all_finite() const noexcept {
    if constexpr (std::is_floating_point_v<T>) {
      for (auto x : values_) {
        if (!std::isfinite(x)) return false;
      }
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  // Value equality (IEEE ==); see bit_equal for bitwise comparison.
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  std::vector<T> values_;
};

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) noexcept {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

// Parameter or gradient tensors keyed by their full entry name.
template <typename T>
using NamedTensors = std::map<std::string, Tensor<T>>;

enum class Padding { same, valid };

const char* to_string(Padding p) noexcept;
Padding parse_padding(const std::string& s);

// Sliding-window geometry shared by convolutions and pools.
struct Window {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::valid;
};

// Resolved output size and padding amounts for one input size.
// "same": out = ceil(in / stride), total pad = max((out-1)*stride + k - in, 0)
// with the odd unit on the bottom/right. "valid": out = floor((in-k)/stride)+1.
struct WindowPlan {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t pad_bottom = 0;
  std::size_t pad_right = 0;
};

WindowPlan plan_window(std::size_t in_h, std::size_t in_w, const Window& window);

// c = a * b for rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Raw row-major GEMM: c (m x n) = op(a) * op(b), op(a) is m x k, op(b) is k x n.
// With accumulate, the product is added to c. Every output element is reduced
// over k in ascending order, independent of blocking.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate);

// Rows enumerate (c, kh, kw) row-major, columns enumerate (n, oh, ow).
template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const Window& window);

// Adjoint of im2col: scatter-adds every column back into its patch.
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& input_shape, const Window& window);

// Single-sample kernels used by the convolution layers. `cols` is
// (C*kh*kw) x (out_h*out_w); `input`/`output` point at one C x H x W image.
template <typename T>
void im2col_sample(const T* input, std::size_t channels, std::size_t height, std::size_t width,
                   const Window& window, const WindowPlan& plan, T* cols);
template <typename T>
void col2im_sample(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
                   const Window& window, const WindowPlan& plan, T* output);

// Index of the maximum along `axis`; ties resolve to the lowest index.
template <typename T>
Tensor<std::int64_t> argmax_axis(const Tensor<T>& t, std::size_t axis);

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace landcls
