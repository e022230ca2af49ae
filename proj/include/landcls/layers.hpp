#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "landcls/tensor.hpp"

namespace landcls {

enum class Activation { linear, relu, relu6, softmax };
enum class Mode { train, infer };

const char* to_string(Activation a) noexcept;
Activation parse_activation(const std::string& s);

// Forward result of a layer: its output plus whatever backward needs.
template <typename T, typename Cache>
struct Forward {
  Tensor<T> output;
  Cache cache;
};

// Gradients of one layer call. `weight`/`bias` stay empty for
// parameterless layers, `input` stays empty when it was not requested.
template <typename T>
struct LayerGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

// Weights are Cout x Cin x kH x kW; bias is Cout or null.
template <typename T>
struct Conv2dParams {
  const Tensor<T>& weight;
  const Tensor<T>* bias = nullptr;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::valid;
};

// Weights are C x 1 x kH x kW (depth multiplier 1); bias is C or null.
template <typename T>
struct DepthwiseConv2dParams {
  const Tensor<T>& weight;
  const Tensor<T>* bias = nullptr;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::valid;
};

// Weights are in x out.
template <typename T>
struct DenseParams {
  const Tensor<T>& weight;
  const Tensor<T>* bias = nullptr;
};

template <typename T>
struct BatchNormParams {
  const Tensor<T>& gamma;
  const Tensor<T>& beta;
  const Tensor<T>& moving_mean;
  const Tensor<T>& moving_variance;
  double epsilon = 1e-3;
};

// Inverted dropout. The mask is a pure function of (seed, layer_id, step).
struct DropoutConfig {
  double rate = 0.5;
  std::uint64_t seed = 0;
  Mode mode = Mode::infer;
  std::uint64_t layer_id = 0;
  std::uint64_t step = 0;
};

enum class PoolKind { max, global_average };

struct PoolConfig {
  PoolKind kind = PoolKind::max;
  Window window{3, 3, 2, 2, Padding::valid};
};

template <typename T>
struct ConvCache {
  Tensor<T> input;
  const Tensor<T>* weight = nullptr;
  bool has_bias = false;
  Window window;
};

template <typename T>
struct DepthwiseCache {
  Tensor<T> input;
  const Tensor<T>* weight = nullptr;
  bool has_bias = false;
  Window window;
};

struct MaxPoolCache {
  Shape input_shape;
  // Flat input index of the winning element for every output element.
  std::vector<std::size_t> argmax;
};

struct GlobalPoolCache {
  Shape input_shape;
};

template <typename T>
struct DenseCache {
  Tensor<T> input;
  const Tensor<T>* weight = nullptr;
  bool has_bias = false;
};

template <typename T>
struct ActivationCache {
  Tensor<T> input;
  Activation kind = Activation::linear;
};

struct DropoutCache {
  Shape shape;
  std::vector<std::uint8_t> keep;  // empty means identity
  double scale = 1.0;
};

struct ReshapeCache {
  Shape input_shape;
};

struct ResidualCache {
  Shape shape;
};

// Layers that cannot be differentiated (inference-mode batch norm).
struct FrozenCache {
  std::string layer;
};

template <typename T>
using LayerCache = std::variant<ConvCache<T>, DepthwiseCache<T>, MaxPoolCache, GlobalPoolCache,
                                DenseCache<T>, ActivationCache<T>, DropoutCache, ReshapeCache,
                                ResidualCache, FrozenCache>;

template <typename T>
Forward<T, ConvCache<T>> conv2d_forward(const Tensor<T>& input, const Conv2dParams<T>& p);
template <typename T>
LayerGrads<T> conv2d_backward(const ConvCache<T>& cache, const Tensor<T>& upstream,
                              bool need_input_grad = true);

template <typename T>
Forward<T, DepthwiseCache<T>> depthwise_conv2d_forward(const Tensor<T>& input,
                                                       const DepthwiseConv2dParams<T>& p);
template <typename T>
LayerGrads<T> depthwise_conv2d_backward(const DepthwiseCache<T>& cache, const Tensor<T>& upstream,
                                        bool need_input_grad = true);

template <typename T>
Forward<T, MaxPoolCache> maxpool2d_forward(const Tensor<T>& input, const PoolConfig& config);
template <typename T>
Tensor<T> maxpool2d_backward(const MaxPoolCache& cache, const Tensor<T>& upstream);

// N x C x H x W -> N x C spatial mean.
template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input);
template <typename T>
Tensor<T> global_avg_pool2d_backward(const Shape& input_shape, const Tensor<T>& upstream);

template <typename T>
Forward<T, DenseCache<T>> dense_forward(const Tensor<T>& input, const DenseParams<T>& p);
template <typename T>
LayerGrads<T> dense_backward(const DenseCache<T>& cache, const Tensor<T>& upstream,
                             bool need_input_grad = true);

// relu, relu6, linear. Softmax is only available fused with the loss.
template <typename T>
Forward<T, ActivationCache<T>> activation_forward(const Tensor<T>& input, Activation kind);
template <typename T>
Tensor<T> activation_backward(const ActivationCache<T>& cache, const Tensor<T>& upstream);

// Row-wise softmax over an N x K tensor, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
Forward<T, DropoutCache> dropout_apply(const Tensor<T>& input, const DropoutConfig& config);
template <typename T>
Tensor<T> dropout_backward(const DropoutCache& cache, const Tensor<T>& upstream);

template <typename T>
Tensor<T> batchnorm_inference(const Tensor<T>& input, const BatchNormParams<T>& p);

// Dispatches to the matching backward. Residual and reshape caches pass the
// upstream gradient through; batch norm raises StateError.
template <typename T>
LayerGrads<T> layer_backward(const LayerCache<T>& cache, const Tensor<T>& upstream,
                             bool need_input_grad = true);

}  // namespace landcls
