#include "landcls/tensor.hpp"

#include <algorithm>
#include <vector>

namespace landcls {

const char* to_string(FormatErrorKind kind) noexcept {
  switch (kind) {
    case FormatErrorKind::bad_magic: return "bad magic";
    case FormatErrorKind::unsupported_version: return "unsupported version";
    case FormatErrorKind::checksum_mismatch: return "checksum mismatch";
    case FormatErrorKind::truncated: return "truncated";
    case FormatErrorKind::malformed: return "malformed";
  }
  return "unknown";
}

const char* to_string(Padding p) noexcept { return p == Padding::same ? "same" : "valid"; }

Padding parse_padding(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw ValidationError("unknown padding mode '" + s + "'");
}

namespace {

void plan_axis(std::size_t in, std::size_t k, std::size_t stride, Padding padding,
               std::size_t& out, std::size_t& before, std::size_t& after) {
  if (stride == 0 || k == 0) throw ShapeError("kernel and stride must be positive");
  if (padding == Padding::same) {
    out = (in + stride - 1) / stride;
    std::size_t needed = (out - 1) * stride + k;
    std::size_t total = needed > in ? needed - in : 0;
    before = total / 2;
    after = total - before;
  } else {
    if (k > in) {
      throw ShapeError("kernel " + std::to_string(k) + " larger than input " + std::to_string(in));
    }
    out = (in - k) / stride + 1;
    before = after = 0;
  }
}

}  // namespace

WindowPlan plan_window(std::size_t in_h, std::size_t in_w, const Window& window) {
  WindowPlan plan;
  plan_axis(in_h, window.kernel_h, window.stride_h, window.padding, plan.out_h, plan.pad_top,
            plan.pad_bottom);
  plan_axis(in_w, window.kernel_w, window.stride_w, window.padding, plan.out_w, plan.pad_left,
            plan.pad_right);
  return plan;
}

namespace {

constexpr std::size_t kTileN = 256;
constexpr std::size_t kTileK = 128;

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t j0 = 0; j0 < n; j0 += kTileN) {
    const std::size_t j1 = std::min(n, j0 + kTileN);
    for (std::size_t p0 = 0; p0 < k; p0 += kTileK) {
      const std::size_t p1 = std::min(k, p0 + kTileK);
      for (std::size_t i = 0; i < m; ++i) {
        T* __restrict crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = p0; p < p1; ++p) {
          const T av = arow[p];
          if (av == T{0}) continue;
          const T* __restrict brow = b + p * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  constexpr std::size_t B = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += B) {
    for (std::size_t c0 = 0; c0 < cols; c0 += B) {
      const std::size_t r1 = std::min(rows, r0 + B);
      const std::size_t c1 = std::min(cols, c0 + B);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t cc = c0; cc < c1; ++cc) out[cc * rows + r] = src[r * cols + cc];
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<T> at, bt;
  if (trans_a) {
    at = transposed(a, k, m);
    a = at.data();
  }
  if (trans_b) {
    bt = transposed(b, n, k);
    b = bt.data();
  }
  gemm_nn(m, n, k, a, b, c);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul needs rank-2 operands");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + a.shape().to_string() + " x " +
                     b.shape().to_string());
  }
  Tensor<T> c(Shape{a.dim(0), b.dim(1)});
  gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), c.data(), false);
  return c;
}

template <typename T>
void im2col_sample(const T* input, std::size_t channels, std::size_t height, std::size_t width,
                   const Window& w, const WindowPlan& plan, T* cols) {
  const std::size_t spatial = plan.out_h * plan.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = input + c * height * width;
    for (std::size_t kh = 0; kh < w.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < w.kernel_w; ++kw, ++row) {
        T* dst = cols + row * spatial;
        for (std::size_t oh = 0; oh < plan.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * w.stride_h + kh) -
                                    static_cast<std::ptrdiff_t>(plan.pad_top);
          T* out_row = dst + oh * plan.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(out_row, out_row + plan.out_w, T{0});
            continue;
          }
          const T* in_row = plane + static_cast<std::size_t>(ih) * width;
          for (std::size_t ow = 0; ow < plan.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * w.stride_w + kw) -
                                      static_cast<std::ptrdiff_t>(plan.pad_left);
            out_row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width))
                              ? T{0}
                              : in_row[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_sample(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
                   const Window& w, const WindowPlan& plan, T* output) {
  const std::size_t spatial = plan.out_h * plan.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = output + c * height * width;
    for (std::size_t kh = 0; kh < w.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < w.kernel_w; ++kw, ++row) {
        const T* src = cols + row * spatial;
        for (std::size_t oh = 0; oh < plan.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * w.stride_h + kh) -
                                    static_cast<std::ptrdiff_t>(plan.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
          T* out_row = plane + static_cast<std::size_t>(ih) * width;
          const T* in_row = src + oh * plan.out_w;
          for (std::size_t ow = 0; ow < plan.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * w.stride_w + kw) -
                                      static_cast<std::ptrdiff_t>(plan.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) continue;
            out_row[static_cast<std::size_t>(iw)] += in_row[ow];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const Window& window) {
  if (input.rank() != 4) throw ShapeError("im2col expects N x C x H x W, got " + input.shape().to_string());
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const WindowPlan plan = plan_window(h, w, window);
  const std::size_t rows = c * window.kernel_h * window.kernel_w;
  const std::size_t spatial = plan.out_h * plan.out_w;
  Tensor<T> cols(Shape{rows, n * spatial});
  std::vector<T> scratch(rows * spatial);
  for (std::size_t s = 0; s < n; ++s) {
    im2col_sample(input.data() + s * c * h * w, c, h, w, window, plan, scratch.data());
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(scratch.data() + r * spatial, spatial, cols.data() + r * n * spatial + s * spatial);
    }
  }
  return cols;
}

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& input_shape, const Window& window) {
  if (input_shape.rank() != 4) throw ShapeError("col2im expects an N x C x H x W geometry");
  const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const WindowPlan plan = plan_window(h, w, window);
  const std::size_t rows = c * window.kernel_h * window.kernel_w;
  const std::size_t spatial = plan.out_h * plan.out_w;
  if (cols.rank() != 2 || cols.dim(0) != rows || cols.dim(1) != n * spatial) {
    throw ShapeError("col2im columns " + cols.shape().to_string() + " do not match geometry " +
                     input_shape.to_string());
  }
  Tensor<T> out(input_shape);
  std::vector<T> scratch(rows * spatial);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(cols.data() + r * n * spatial + s * spatial, spatial, scratch.data() + r * spatial);
    }
    col2im_sample(scratch.data(), c, h, w, window, plan, out.data() + s * c * h * w);
  }
  return out;
}

template <typename T>
Tensor<std::int64_t> argmax_axis(const Tensor<T>& t, std::size_t axis) {
  if (axis >= t.rank()) throw ShapeError("argmax axis out of range");
  const auto& dims = t.shape().dims();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
  const std::size_t len = dims[axis];
  std::vector<std::size_t> out_dims;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i != axis) out_dims.push_back(dims[i]);
  }
  if (out_dims.empty()) out_dims.push_back(1);
  Tensor<std::int64_t> out{Shape(out_dims)};
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const T* base = t.data() + o * len * inner + in;
      std::size_t best = 0;
      for (std::size_t i = 1; i < len; ++i) {
        if (base[i * inner] > base[best * inner]) best = i;
      }
      out[o * inner + in] = static_cast<std::int64_t>(best);
    }
  }
  return out;
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) throw ShapeError("dot operands differ in size");
  T s{0};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

#define LANDCLS_INSTANTIATE(T)                                                                  \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, \
                        T*, bool);                                                              \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> im2col<T>(const Tensor<T>&, const Window&);                                \
  template Tensor<T> col2im<T>(const Tensor<T>&, const Shape&, const Window&);                  \
  template void im2col_sample<T>(const T*, std::size_t, std::size_t, std::size_t,               \
                                 const Window&, const WindowPlan&, T*);                         \
  template void col2im_sample<T>(const T*, std::size_t, std::size_t, std::size_t,               \
                                 const Window&, const WindowPlan&, T*);                         \
  template Tensor<std::int64_t> argmax_axis<T>(const Tensor<T>&, std::size_t);                  \
  template T dot<T>(const Tensor<T>&, const Tensor<T>&);

LANDCLS_INSTANTIATE(float)
LANDCLS_INSTANTIATE(double)

#undef LANDCLS_INSTANTIATE

}  // namespace landcls
