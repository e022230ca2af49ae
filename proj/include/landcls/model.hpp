#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "landcls/layers.hpp"
#include "landcls/preprocessing.hpp"
#include "landcls/tensor.hpp"

namespace landcls {

enum class LayerKind {
  conv2d,
  depthwise_conv2d,
  maxpool,
  global_avg_pool,
  dense,
  activation,
  dropout,
  batchnorm,
  flatten,
  residual_add,
};

const char* to_string(LayerKind kind) noexcept;

// One node of a model graph. Names follow `<blockpath>/<layerkind>_<index>`;
// parameter entries append `/weight`, `/bias`, `/gamma`, `/beta`,
// `/moving_mean` or `/moving_variance`.
struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  std::string name;
  bool frozen = false;
  std::size_t units = 0;  // conv2d filters, dense width
  Window window;          // conv2d, depthwise_conv2d, maxpool
  bool use_bias = true;
  Activation activation = Activation::linear;
  double rate = 0.0;     // dropout
  double epsilon = 1e-3; // batchnorm
  // residual_add: index of the layer whose output is added to this layer's
  // input; -1 is the graph input.
  std::ptrdiff_t skip_from = -1;
};

struct ParameterInfo {
  std::string name;
  Shape shape;
  std::size_t layer = 0;
  // False for batch-norm moving statistics, which are never optimized.
  bool trainable_kind = true;
};

// Immutable computation graph: a sequence of layers plus residual joins.
// Shape inference runs at construction; an invalid graph never exists.
class ModelGraph {
 public:
  ModelGraph(std::string architecture_id, Shape input_shape, std::vector<LayerSpec> layers,
             std::string base_architecture_id = {}, std::size_t base_layer_count = 0);

  const std::string& architecture_id() const noexcept { return architecture_id_; }
  // Architecture id of the imported base for transfer graphs, else empty.
  const std::string& base_architecture_id() const noexcept { return base_id_; }
  std::size_t base_layer_count() const noexcept { return base_layers_; }

  // Per-sample input shape, C x H x W.
  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  // Per-sample output shape of every layer (batch dimension omitted).
  const std::vector<Shape>& output_shapes() const noexcept { return output_shapes_; }
  const Shape& output_shape() const noexcept { return output_shapes_.back(); }
  const std::vector<ParameterInfo>& parameters() const noexcept { return parameters_; }

  // True when the graph ends in a softmax over class scores.
  bool is_classifier() const noexcept { return classifier_; }
  // Class count for classifiers, 0 for feature extractors.
  std::size_t num_classes() const noexcept { return classifier_ ? output_shape()[0] : 0; }

  std::optional<std::size_t> find_layer(const std::string& name) const;
  std::size_t parameter_count(const LayerSpec& layer) const;

 private:
  std::string architecture_id_;
  std::string base_id_;
  std::size_t base_layers_ = 0;
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> output_shapes_;
  std::vector<ParameterInfo> parameters_;
  bool classifier_ = false;
};

enum class HeadPooling { flatten, global_average };

struct HeadLayer {
  std::size_t units = 512;
  Activation activation = Activation::relu;
  double dropout = 0.5;  // 0 means no dropout layer
};

struct HeadSpec {
  HeadPooling pooling = HeadPooling::global_average;
  std::vector<HeadLayer> hidden{HeadLayer{}};
  std::size_t num_classes = 4;
  // When set, the pooled base feature width must equal this value.
  std::optional<std::size_t> expected_input_width;
};

// pooling -> dense 512 relu -> dropout 0.5 -> dense K -> softmax.
HeadSpec default_head(HeadPooling pooling, std::size_t num_classes);
// Global-average pooling for MobileNetV2 bases, flatten for everything else.
HeadSpec default_head_for(const ModelGraph& base, std::size_t num_classes);

ModelGraph build_paper_cnn(std::size_t num_classes = 4, std::size_t input_size = 224);
// Same layer kinds as the paper CNN at tiny widths, for gradient checks and
// desk-scale training runs.
ModelGraph build_mini_cnn(std::size_t num_classes = 4, std::size_t input_size = 8);
// With the reference head: 13 conv + 3 dense layers. Without it: the
// convolutional base ending in a 512 x (S/32) x (S/32) feature tensor.
ModelGraph build_vgg16(std::size_t num_classes = 1000, bool include_reference_head = true,
                       std::size_t input_size = 224);
ModelGraph build_mobilenet_v2_base(double width_multiplier = 1.0, std::size_t input_size = 224);
// Base plus global-average pool, dense K and softmax.
ModelGraph build_mobilenet_v2(double width_multiplier, std::size_t num_classes,
                              std::size_t input_size = 224);

// Channel rounding of the MobileNetV2 reference: nearest multiple of 8,
// never below 8 and never below 0.9x the scaled value.
std::size_t round_channels(double scaled, std::size_t divisor = 8);

ModelGraph attach_transfer_head(const ModelGraph& base, const HeadSpec& head, bool freeze_base = true);

// Rebuilds a graph from an architecture id:
//   paper_cnn | mini_cnn | vgg16 | vgg16_reference | mobilenet_v2_wNNN |
//   mobilenet_v2_wNNN_reference, optionally suffixed `@<input size>`, and
//   optionally followed by `+head[<pool>;<units>:<act>:<rate>;...]`.
// `num_classes` is ignored for base (feature) ids.
ModelGraph build_from_architecture_id(const std::string& id, std::size_t num_classes);
std::string head_id_suffix(const HeadSpec& head);

std::size_t count_parameters(const ModelGraph& graph, bool trainable_only);
std::vector<std::string> trainable_parameter_names(const ModelGraph& graph);

// He-uniform conv/dense weights, zero biases, identity batch norm.
template <typename T>
NamedTensors<T> initialize_parameters(const ModelGraph& graph, std::uint64_t seed);

template <typename T>
class Model {
 public:
  explicit Model(ModelGraph graph) : graph_(std::move(graph)) {}
  Model(ModelGraph graph, NamedTensors<T> params) : graph_(std::move(graph)) {
    set_parameters(std::move(params));
  }

  const ModelGraph& graph() const noexcept { return graph_; }
  const NamedTensors<T>& parameters() const noexcept { return params_; }
  // Mutable access for the optimizer. Shapes must not change.
  NamedTensors<T>& mutable_parameters() noexcept { return params_; }

  bool populated() const noexcept { return populated_; }

  // Input normalization declared by the weights this model was loaded from.
  const std::optional<Preprocessing>& preprocessing() const noexcept { return preprocessing_; }
  void set_preprocessing(std::optional<Preprocessing> p) { preprocessing_ = p; }

  // Replaces every parameter at once. The set must match the graph exactly.
  void set_parameters(NamedTensors<T> params);

 private:
  ModelGraph graph_;
  NamedTensors<T> params_;
  bool populated_ = false;
  std::optional<Preprocessing> preprocessing_;
};

struct ForwardOptions {
  Mode mode = Mode::infer;
  std::uint64_t dropout_seed = 0;
  std::uint64_t step = 0;
};

template <typename T>
struct ForwardTrace {
  // caches[i] is set for the layers backward will visit.
  std::vector<std::optional<LayerCache<T>>> caches;
  std::size_t first_cached = 0;
  bool train = false;
  Shape batch_shape;
};

template <typename T>
struct ForwardResult {
  // Class probabilities for classifiers, base features otherwise.
  Tensor<T> output;
  // Pre-softmax scores; empty for feature extractors.
  Tensor<T> logits;
  ForwardTrace<T> trace;
};

template <typename T>
ForwardResult<T> model_forward(const Model<T>& model, const Tensor<T>& batch, const ForwardOptions& options);

// Reverse pass from the gradient w.r.t. the logits (or features for a base
// graph). Returns gradients for exactly the trainable parameter set.
template <typename T>
NamedTensors<T> model_backward(const Model<T>& model, const ForwardTrace<T>& trace, const Tensor<T>& logit_grad);

}  // namespace landcls
