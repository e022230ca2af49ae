#include "landcls/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "landcls/rng.hpp"

namespace landcls {

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::relu6: return "relu6";
    case Activation::softmax: return "softmax";
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "relu6") return Activation::relu6;
  if (s == "softmax") return Activation::softmax;
  throw ValidationError("unknown activation '" + s + "'");
}

namespace {

void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + " expects N x C x H x W, got " + s.to_string());
}

template <typename T>
void check_bias(const Tensor<T>* bias, std::size_t channels, const char* what) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw ShapeError(std::string(what) + " bias shape " + bias->shape().to_string() +
                     " does not match " + std::to_string(channels) + " outputs");
  }
}

bool is_pointwise(const Window& w, const WindowPlan& plan) {
  return w.kernel_h == 1 && w.kernel_w == 1 && w.stride_h == 1 && w.stride_w == 1 &&
         plan.pad_top == 0 && plan.pad_left == 0 && plan.pad_bottom == 0 && plan.pad_right == 0;
}

}  // namespace

template <typename T>
Forward<T, ConvCache<T>> conv2d_forward(const Tensor<T>& input, const Conv2dParams<T>& p) {
  require_rank4(input.shape(), "conv2d");
  const Tensor<T>& w = p.weight;
  if (w.rank() != 4) throw ShapeError("conv2d weight must be Cout x Cin x kH x kW");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), wd = input.dim(3);
  const std::size_t cout = w.dim(0);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(cin) +
                     " channels, weight expects " + std::to_string(w.dim(1)));
  }
  check_bias(p.bias, cout, "conv2d");
  const Window window{w.dim(2), w.dim(3), p.stride_h, p.stride_w, p.padding};
  const WindowPlan plan = plan_window(h, wd, window);
  const std::size_t spatial = plan.out_h * plan.out_w;
  const std::size_t rows = cin * window.kernel_h * window.kernel_w;

  Tensor<T> out(Shape{n, cout, plan.out_h, plan.out_w});
  const bool pointwise = is_pointwise(window, plan);
  std::vector<T> cols(pointwise ? 0 : rows * spatial);
  for (std::size_t s = 0; s < n; ++s) {
    const T* x = input.data() + s * cin * h * wd;
    const T* c = x;
    if (!pointwise) {
      im2col_sample(x, cin, h, wd, window, plan, cols.data());
      c = cols.data();
    }
    T* y = out.data() + s * cout * spatial;
    gemm(false, false, cout, spatial, rows, w.data(), c, y, false);
    if (p.bias) {
      for (std::size_t o = 0; o < cout; ++o) {
        const T b = (*p.bias)[o];
        T* plane = y + o * spatial;
        for (std::size_t i = 0; i < spatial; ++i) plane[i] += b;
      }
    }
  }
  return {std::move(out), ConvCache<T>{input, &w, p.bias != nullptr, window}};
}

template <typename T>
LayerGrads<T> conv2d_backward(const ConvCache<T>& cache, const Tensor<T>& upstream,
                              bool need_input_grad) {
  const Tensor<T>& input = cache.input;
  const Tensor<T>& w = *cache.weight;
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), wd = input.dim(3);
  const std::size_t cout = w.dim(0);
  const WindowPlan plan = plan_window(h, wd, cache.window);
  const std::size_t spatial = plan.out_h * plan.out_w;
  const std::size_t rows = cin * cache.window.kernel_h * cache.window.kernel_w;
  if (upstream.shape() != Shape{n, cout, plan.out_h, plan.out_w}) {
    throw ShapeError("conv2d upstream gradient " + upstream.shape().to_string() +
                     " does not match cached output geometry");
  }
  LayerGrads<T> g;
  g.weight = Tensor<T>(w.shape());
  if (cache.has_bias) g.bias = Tensor<T>(Shape{cout});
  if (need_input_grad) g.input = Tensor<T>(input.shape());

  const bool pointwise = is_pointwise(cache.window, plan);
  std::vector<T> cols(pointwise ? 0 : rows * spatial);
  std::vector<T> dcols(rows * spatial);
  for (std::size_t s = 0; s < n; ++s) {
    const T* x = input.data() + s * cin * h * wd;
    const T* dy = upstream.data() + s * cout * spatial;
    const T* c = x;
    if (!pointwise) {
      im2col_sample(x, cin, h, wd, cache.window, plan, cols.data());
      c = cols.data();
    }
    gemm(false, true, cout, rows, spatial, dy, c, g.weight.data(), true);
    if (cache.has_bias) {
      for (std::size_t o = 0; o < cout; ++o) {
        T acc{0};
        const T* plane = dy + o * spatial;
        for (std::size_t i = 0; i < spatial; ++i) acc += plane[i];
        g.bias[o] += acc;
      }
    }
    if (need_input_grad) {
      T* dx = g.input.data() + s * cin * h * wd;
      if (pointwise) {
        gemm(true, false, rows, spatial, cout, w.data(), dy, dx, false);
      } else {
        gemm(true, false, rows, spatial, cout, w.data(), dy, dcols.data(), false);
        col2im_sample(dcols.data(), cin, h, wd, cache.window, plan, dx);
      }
    }
  }
  return g;
}

template <typename T>
Forward<T, DepthwiseCache<T>> depthwise_conv2d_forward(const Tensor<T>& input,
                                                       const DepthwiseConv2dParams<T>& p) {
  require_rank4(input.shape(), "depthwise_conv2d");
  const Tensor<T>& w = p.weight;
  const std::size_t n = input.dim(0), ch = input.dim(1), h = input.dim(2), wd = input.dim(3);
  if (w.rank() != 4 || w.dim(1) != 1 || w.dim(0) != ch) {
    throw ShapeError("depthwise_conv2d weight " + w.shape().to_string() + " does not match " +
                     std::to_string(ch) + " input channels");
  }
  check_bias(p.bias, ch, "depthwise_conv2d");
  const Window window{w.dim(2), w.dim(3), p.stride_h, p.stride_w, p.padding};
  const WindowPlan plan = plan_window(h, wd, window);
  Tensor<T> out(Shape{n, ch, plan.out_h, plan.out_w});
  const auto pt = static_cast<std::ptrdiff_t>(plan.pad_top);
  const auto pl = static_cast<std::ptrdiff_t>(plan.pad_left);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* x = input.data() + (s * ch + c) * h * wd;
      const T* k = w.data() + c * window.kernel_h * window.kernel_w;
      T* y = out.data() + (s * ch + c) * plan.out_h * plan.out_w;
      const T b = p.bias ? (*p.bias)[c] : T{0};
      for (std::size_t oh = 0; oh < plan.out_h; ++oh) {
        for (std::size_t ow = 0; ow < plan.out_w; ++ow) {
          T acc{0};
          for (std::size_t kh = 0; kh < window.kernel_h; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * window.stride_h + kh) - pt;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kw = 0; kw < window.kernel_w; ++kw) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * window.stride_w + kw) - pl;
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
              acc += x[static_cast<std::size_t>(ih) * wd + static_cast<std::size_t>(iw)] *
                     k[kh * window.kernel_w + kw];
            }
          }
          y[oh * plan.out_w + ow] = acc + b;
        }
      }
    }
  }
  return {std::move(out), DepthwiseCache<T>{input, &w, p.bias != nullptr, window}};
}

template <typename T>
LayerGrads<T> depthwise_conv2d_backward(const DepthwiseCache<T>& cache, const Tensor<T>& upstream,
                                        bool need_input_grad) {
  const Tensor<T>& input = cache.input;
  const Tensor<T>& w = *cache.weight;
  const std::size_t n = input.dim(0), ch = input.dim(1), h = input.dim(2), wd = input.dim(3);
  const Window& window = cache.window;
  const WindowPlan plan = plan_window(h, wd, window);
  if (upstream.shape() != Shape{n, ch, plan.out_h, plan.out_w}) {
    throw ShapeError("depthwise_conv2d upstream gradient does not match cached geometry");
  }
  LayerGrads<T> g;
  g.weight = Tensor<T>(w.shape());
  if (cache.has_bias) g.bias = Tensor<T>(Shape{ch});
  if (need_input_grad) g.input = Tensor<T>(input.shape());
  const auto pt = static_cast<std::ptrdiff_t>(plan.pad_top);
  const auto pl = static_cast<std::ptrdiff_t>(plan.pad_left);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* x = input.data() + (s * ch + c) * h * wd;
      const T* k = w.data() + c * window.kernel_h * window.kernel_w;
      T* dk = g.weight.data() + c * window.kernel_h * window.kernel_w;
      T* dx = need_input_grad ? g.input.data() + (s * ch + c) * h * wd : nullptr;
      const T* dy = upstream.data() + (s * ch + c) * plan.out_h * plan.out_w;
      T bias_acc{0};
      for (std::size_t oh = 0; oh < plan.out_h; ++oh) {
        for (std::size_t ow = 0; ow < plan.out_w; ++ow) {
          const T up = dy[oh * plan.out_w + ow];
          bias_acc += up;
          for (std::size_t kh = 0; kh < window.kernel_h; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * window.stride_h + kh) - pt;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kw = 0; kw < window.kernel_w; ++kw) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * window.stride_w + kw) - pl;
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
              const std::size_t xi = static_cast<std::size_t>(ih) * wd + static_cast<std::size_t>(iw);
              dk[kh * window.kernel_w + kw] += up * x[xi];
              if (dx) dx[xi] += up * k[kh * window.kernel_w + kw];
            }
          }
        }
      }
      if (cache.has_bias) g.bias[c] += bias_acc;
    }
  }
  return g;
}

template <typename T>
Forward<T, MaxPoolCache> maxpool2d_forward(const Tensor<T>& input, const PoolConfig& config) {
  if (config.kind != PoolKind::max) throw ValidationError("maxpool2d_forward needs a max pool config");
  require_rank4(input.shape(), "maxpool2d");
  const std::size_t n = input.dim(0), ch = input.dim(1), h = input.dim(2), wd = input.dim(3);
  const Window& window = config.window;
  const WindowPlan plan = plan_window(h, wd, window);
  Tensor<T> out(Shape{n, ch, plan.out_h, plan.out_w});
  MaxPoolCache cache{input.shape(), std::vector<std::size_t>(out.size())};
  const auto pt = static_cast<std::ptrdiff_t>(plan.pad_top);
  const auto pl = static_cast<std::ptrdiff_t>(plan.pad_left);
  std::size_t o = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (s * ch + c) * h * wd;
      const T* x = input.data() + base;
      for (std::size_t oh = 0; oh < plan.out_h; ++oh) {
        for (std::size_t ow = 0; ow < plan.out_w; ++ow, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = std::numeric_limits<std::size_t>::max();
          for (std::size_t kh = 0; kh < window.kernel_h; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * window.stride_h + kh) - pt;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kw = 0; kw < window.kernel_w; ++kw) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * window.stride_w + kw) - pl;
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
              const std::size_t xi = static_cast<std::size_t>(ih) * wd + static_cast<std::size_t>(iw);
              if (best_i == std::numeric_limits<std::size_t>::max() || x[xi] > best) {
                best = x[xi];
                best_i = xi;
              }
            }
          }
          out[o] = best;
          cache.argmax[o] = base + best_i;
        }
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> maxpool2d_backward(const MaxPoolCache& cache, const Tensor<T>& upstream) {
  if (upstream.size() != cache.argmax.size()) {
    throw ShapeError("maxpool2d upstream gradient does not match cached output");
  }
  Tensor<T> dx(cache.input_shape);
  for (std::size_t o = 0; o < upstream.size(); ++o) dx[cache.argmax[o]] += upstream[o];
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input) {
  require_rank4(input.shape(), "global_avg_pool2d");
  const std::size_t n = input.dim(0), ch = input.dim(1), spatial = input.dim(2) * input.dim(3);
  Tensor<T> out(Shape{n, ch});
  for (std::size_t i = 0; i < n * ch; ++i) {
    const T* x = input.data() + i * spatial;
    T acc{0};
    for (std::size_t j = 0; j < spatial; ++j) acc += x[j];
    out[i] = acc / static_cast<T>(spatial);
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool2d_backward(const Shape& input_shape, const Tensor<T>& upstream) {
  require_rank4(input_shape, "global_avg_pool2d");
  const std::size_t nc = input_shape[0] * input_shape[1];
  const std::size_t spatial = input_shape[2] * input_shape[3];
  if (upstream.size() != nc) throw ShapeError("global_avg_pool2d upstream gradient has wrong size");
  Tensor<T> dx(input_shape);
  for (std::size_t i = 0; i < nc; ++i) {
    const T v = upstream[i] / static_cast<T>(spatial);
    std::fill_n(dx.data() + i * spatial, spatial, v);
  }
  return dx;
}

template <typename T>
Forward<T, DenseCache<T>> dense_forward(const Tensor<T>& input, const DenseParams<T>& p) {
  const Tensor<T>& w = p.weight;
  if (input.rank() != 2 || w.rank() != 2 || input.dim(1) != w.dim(0)) {
    throw ShapeError("dense width mismatch: input " + input.shape().to_string() + ", weight " +
                     w.shape().to_string());
  }
  const std::size_t n = input.dim(0), in = w.dim(0), out_w = w.dim(1);
  check_bias(p.bias, out_w, "dense");
  Tensor<T> out(Shape{n, out_w});
  gemm(false, false, n, out_w, in, input.data(), w.data(), out.data(), false);
  if (p.bias) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) out[i * out_w + j] += (*p.bias)[j];
    }
  }
  return {std::move(out), DenseCache<T>{input, &w, p.bias != nullptr}};
}

template <typename T>
LayerGrads<T> dense_backward(const DenseCache<T>& cache, const Tensor<T>& upstream,
                             bool need_input_grad) {
  const Tensor<T>& w = *cache.weight;
  const std::size_t n = cache.input.dim(0), in = w.dim(0), out_w = w.dim(1);
  if (upstream.shape() != Shape{n, out_w}) {
    throw ShapeError("dense upstream gradient " + upstream.shape().to_string() +
                     " does not match output (" + std::to_string(n) + ", " + std::to_string(out_w) + ")");
  }
  LayerGrads<T> g;
  g.weight = Tensor<T>(w.shape());
  gemm(true, false, in, out_w, n, cache.input.data(), upstream.data(), g.weight.data(), false);
  if (cache.has_bias) {
    g.bias = Tensor<T>(Shape{out_w});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) g.bias[j] += upstream[i * out_w + j];
    }
  }
  if (need_input_grad) {
    g.input = Tensor<T>(cache.input.shape());
    gemm(false, true, n, in, out_w, upstream.data(), w.data(), g.input.data(), false);
  }
  return g;
}

template <typename T>
Forward<T, ActivationCache<T>> activation_forward(const Tensor<T>& input, Activation kind) {
  Tensor<T> out = input;
  switch (kind) {
    case Activation::linear: break;
    case Activation::relu:
      for (auto& v : out.values()) v = v > T{0} ? v : T{0};
      break;
    case Activation::relu6:
      for (auto& v : out.values()) v = std::min(std::max(v, T{0}), T{6});
      break;
    case Activation::softmax:
      throw ValidationError("softmax is applied by the loss, not as a standalone activation");
  }
  return {std::move(out), ActivationCache<T>{input, kind}};
}

template <typename T>
Tensor<T> activation_backward(const ActivationCache<T>& cache, const Tensor<T>& upstream) {
  if (upstream.shape() != cache.input.shape()) throw ShapeError("activation upstream gradient shape mismatch");
  Tensor<T> dx = upstream;
  const Tensor<T>& x = cache.input;
  switch (cache.kind) {
    case Activation::linear: break;
    case Activation::relu:
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x[i] > T{0})) dx[i] = T{0};
      }
      break;
    case Activation::relu6:
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x[i] > T{0} && x[i] < T{6})) dx[i] = T{0};
      }
      break;
    case Activation::softmax:
      throw StateError("softmax backward is only available fused with cross-entropy");
  }
  return dx;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects N x K logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    T* dst = out.data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - mx);
      sum += dst[j];
    }
    for (std::size_t j = 0; j < k; ++j) dst[j] /= sum;
  }
  return out;
}

template <typename T>
Forward<T, DropoutCache> dropout_apply(const Tensor<T>& input, const DropoutConfig& config) {
  if (!(config.rate >= 0.0 && config.rate < 1.0)) throw ValidationError("dropout rate must be in [0, 1)");
  DropoutCache cache{input.shape(), {}, 1.0};
  if (config.mode == Mode::infer || config.rate == 0.0) return {input, std::move(cache)};
  const std::uint64_t base = derive_seed(config.seed, {config.layer_id, config.step});
  cache.scale = 1.0 / (1.0 - config.rate);
  cache.keep.resize(input.size());
  Tensor<T> out(input.shape());
  const T scale = static_cast<T>(cache.scale);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool keep = to_unit(mix64(base + i)) >= config.rate;
    cache.keep[i] = keep ? 1 : 0;
    out[i] = keep ? input[i] * scale : T{0};
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> dropout_backward(const DropoutCache& cache, const Tensor<T>& upstream) {
  if (upstream.shape() != cache.shape) throw ShapeError("dropout upstream gradient shape mismatch");
  if (cache.keep.empty()) return upstream;
  Tensor<T> dx(upstream.shape());
  const T scale = static_cast<T>(cache.scale);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = cache.keep[i] ? upstream[i] * scale : T{0};
  return dx;
}

template <typename T>
Tensor<T> batchnorm_inference(const Tensor<T>& input, const BatchNormParams<T>& p) {
  require_rank4(input.shape(), "batchnorm");
  const std::size_t n = input.dim(0), ch = input.dim(1), spatial = input.dim(2) * input.dim(3);
  for (const Tensor<T>* t : {&p.gamma, &p.beta, &p.moving_mean, &p.moving_variance}) {
    if (t->rank() != 1 || t->dim(0) != ch) {
      throw ShapeError("batchnorm parameter shape " + t->shape().to_string() + " does not match " +
                       std::to_string(ch) + " channels");
    }
  }
  if (!(p.epsilon >= 0.0)) throw ValidationError("batchnorm epsilon must be non-negative");
  std::vector<T> scale(ch), shift(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    if (p.moving_variance[c] < T{0}) throw ValidationError("batchnorm moving variance is negative");
    scale[c] = p.gamma[c] / std::sqrt(p.moving_variance[c] + static_cast<T>(p.epsilon));
    shift[c] = p.beta[c] - p.moving_mean[c] * scale[c];
  }
  Tensor<T> out(input.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* x = input.data() + (s * ch + c) * spatial;
      T* y = out.data() + (s * ch + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) y[i] = x[i] * scale[c] + shift[c];
    }
  }
  return out;
}

namespace {

template <typename T>
struct BackwardVisitor {
  const Tensor<T>& upstream;
  bool need_input;

  LayerGrads<T> operator()(const ConvCache<T>& c) const { return conv2d_backward(c, upstream, need_input); }
  LayerGrads<T> operator()(const DepthwiseCache<T>& c) const {
    return depthwise_conv2d_backward(c, upstream, need_input);
  }
  LayerGrads<T> operator()(const MaxPoolCache& c) const { return {maxpool2d_backward(c, upstream), {}, {}}; }
  LayerGrads<T> operator()(const GlobalPoolCache& c) const {
    return {global_avg_pool2d_backward(c.input_shape, upstream), {}, {}};
  }
  LayerGrads<T> operator()(const DenseCache<T>& c) const { return dense_backward(c, upstream, need_input); }
  LayerGrads<T> operator()(const ActivationCache<T>& c) const { return {activation_backward(c, upstream), {}, {}}; }
  LayerGrads<T> operator()(const DropoutCache& c) const { return {dropout_backward(c, upstream), {}, {}}; }
  LayerGrads<T> operator()(const ReshapeCache& c) const { return {upstream.reshaped(c.input_shape), {}, {}}; }
  LayerGrads<T> operator()(const ResidualCache& c) const {
    if (upstream.shape() != c.shape) throw ShapeError("residual upstream gradient shape mismatch");
    return {upstream, {}, {}};
  }
  LayerGrads<T> operator()(const FrozenCache& c) const {
    throw StateError("layer '" + c.layer + "' is inference-only batch norm and cannot be trained through");
  }
};

}  // namespace

template <typename T>
LayerGrads<T> layer_backward(const LayerCache<T>& cache, const Tensor<T>& upstream, bool need_input_grad) {
  return std::visit(BackwardVisitor<T>{upstream, need_input_grad}, cache);
}

#define LANDCLS_INSTANTIATE(T)                                                                       \
  template Forward<T, ConvCache<T>> conv2d_forward<T>(const Tensor<T>&, const Conv2dParams<T>&);     \
  template LayerGrads<T> conv2d_backward<T>(const ConvCache<T>&, const Tensor<T>&, bool);            \
  template Forward<T, DepthwiseCache<T>> depthwise_conv2d_forward<T>(const Tensor<T>&,               \
                                                                     const DepthwiseConv2dParams<T>&); \
  template LayerGrads<T> depthwise_conv2d_backward<T>(const DepthwiseCache<T>&, const Tensor<T>&,    \
                                                      bool);                                         \
  template Forward<T, MaxPoolCache> maxpool2d_forward<T>(const Tensor<T>&, const PoolConfig&);       \
  template Tensor<T> maxpool2d_backward<T>(const MaxPoolCache&, const Tensor<T>&);                   \
  template Tensor<T> global_avg_pool2d<T>(const Tensor<T>&);                                         \
  template Tensor<T> global_avg_pool2d_backward<T>(const Shape&, const Tensor<T>&);                  \
  template Forward<T, DenseCache<T>> dense_forward<T>(const Tensor<T>&, const DenseParams<T>&);      \
  template LayerGrads<T> dense_backward<T>(const DenseCache<T>&, const Tensor<T>&, bool);            \
  template Forward<T, ActivationCache<T>> activation_forward<T>(const Tensor<T>&, Activation);       \
  template Tensor<T> activation_backward<T>(const ActivationCache<T>&, const Tensor<T>&);            \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                   \
  template Forward<T, DropoutCache> dropout_apply<T>(const Tensor<T>&, const DropoutConfig&);        \
  template Tensor<T> dropout_backward<T>(const DropoutCache&, const Tensor<T>&);                     \
  template Tensor<T> batchnorm_inference<T>(const Tensor<T>&, const BatchNormParams<T>&);            \
  template LayerGrads<T> layer_backward<T>(const LayerCache<T>&, const Tensor<T>&, bool);

LANDCLS_INSTANTIATE(float)
LANDCLS_INSTANTIATE(double)

#undef LANDCLS_INSTANTIATE

}  // namespace landcls
