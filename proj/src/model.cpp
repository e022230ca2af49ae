#include "landcls/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "landcls/rng.hpp"

namespace landcls {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::depthwise_conv2d: return "depthwise_conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::activation: return "activation";
    case LayerKind::dropout: return "dropout";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual_add: return "residual_add";
  }
  return "unknown";
}

namespace {

std::string layer_label(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " '" + l.name + "'";
}

}  // namespace

ModelGraph::ModelGraph(std::string architecture_id, Shape input_shape, std::vector<LayerSpec> layers,
                       std::string base_architecture_id, std::size_t base_layer_count)
    : architecture_id_(std::move(architecture_id)),
      base_id_(std::move(base_architecture_id)),
      base_layers_(base_layer_count),
      input_shape_(std::move(input_shape)),
      layers_(std::move(layers)) {
  if (input_shape_.rank() != 3) throw ShapeError("graph input must be C x H x W");
  if (layers_.empty()) throw ValidationError("graph has no layers");
  if (base_layers_ > layers_.size()) throw ValidationError("base layer count exceeds layer count");
  std::set<std::string> names;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name.empty()) throw ValidationError("layer " + std::to_string(i) + " has no name");
    if (!names.insert(layers_[i].name).second) throw ValidationError("duplicate layer name '" + layers_[i].name + "'");
  }

  Shape current = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const std::string label = layer_label(i, l);
    auto need_rank = [&](std::size_t r) {
      if (current.rank() != r) {
        throw ShapeError(label + " expects a rank-" + std::to_string(r) + " input, got " + current.to_string());
      }
    };
    auto add_param = [&](const char* suffix, Shape s, bool trainable = true) {
      parameters_.push_back({l.name + "/" + suffix, std::move(s), i, trainable});
    };
    switch (l.kind) {
      case LayerKind::conv2d: {
        need_rank(3);
        if (l.units == 0) throw ValidationError(label + " needs at least one filter");
        const WindowPlan plan = plan_window(current[1], current[2], l.window);
        add_param("weight", Shape{l.units, current[0], l.window.kernel_h, l.window.kernel_w});
        if (l.use_bias) add_param("bias", Shape{l.units});
        current = Shape{l.units, plan.out_h, plan.out_w};
        break;
      }
      case LayerKind::depthwise_conv2d: {
        need_rank(3);
        const WindowPlan plan = plan_window(current[1], current[2], l.window);
        add_param("weight", Shape{current[0], 1, l.window.kernel_h, l.window.kernel_w});
        if (l.use_bias) add_param("bias", Shape{current[0]});
        current = Shape{current[0], plan.out_h, plan.out_w};
        break;
      }
      case LayerKind::maxpool: {
        need_rank(3);
        const WindowPlan plan = plan_window(current[1], current[2], l.window);
        current = Shape{current[0], plan.out_h, plan.out_w};
        break;
      }
      case LayerKind::global_avg_pool:
        need_rank(3);
        current = Shape{current[0]};
        break;
      case LayerKind::dense:
        need_rank(1);
        if (l.units == 0) throw ValidationError(label + " needs at least one unit");
        add_param("weight", Shape{current[0], l.units});
        if (l.use_bias) add_param("bias", Shape{l.units});
        current = Shape{l.units};
        break;
      case LayerKind::activation:
        if (l.activation == Activation::softmax) {
          if (i + 1 != layers_.size()) throw ValidationError(label + ": softmax is only allowed as the final layer");
          need_rank(1);
          classifier_ = true;
        }
        break;
      case LayerKind::dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ValidationError(label + ": dropout rate must be in [0, 1)");
        break;
      case LayerKind::batchnorm:
        need_rank(3);
        if (!(l.epsilon > 0.0)) throw ValidationError(label + ": batch-norm epsilon must be positive");
        add_param("gamma", Shape{current[0]});
        add_param("beta", Shape{current[0]});
        add_param("moving_mean", Shape{current[0]}, false);
        add_param("moving_variance", Shape{current[0]}, false);
        break;
      case LayerKind::flatten:
        current = Shape{current.numel()};
        break;
      case LayerKind::residual_add: {
        if (l.skip_from < -1 || l.skip_from >= static_cast<std::ptrdiff_t>(i)) {
          throw ValidationError(label + ": residual source must precede the join");
        }
        const Shape& skip = l.skip_from < 0 ? input_shape_ : output_shapes_[static_cast<std::size_t>(l.skip_from)];
        if (skip != current) {
          throw ShapeError(label + ": residual joins " + current.to_string() + " with " + skip.to_string());
        }
        break;
      }
    }
    output_shapes_.push_back(current);
  }
}

std::optional<std::size_t> ModelGraph::find_layer(const std::string& name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ModelGraph::parameter_count(const LayerSpec& layer) const {
  std::size_t n = 0;
  for (const auto& p : parameters_) {
    if (layers_[p.layer].name == layer.name) n += p.shape.numel();
  }
  return n;
}

HeadSpec default_head(HeadPooling pooling, std::size_t num_classes) {
  HeadSpec h;
  h.pooling = pooling;
  h.num_classes = num_classes;
  return h;
}

HeadSpec default_head_for(const ModelGraph& base, std::size_t num_classes) {
  const bool mobilenet = base.architecture_id().rfind("mobilenet_v2", 0) == 0;
  return default_head(mobilenet ? HeadPooling::global_average : HeadPooling::flatten, num_classes);
}

namespace {

// Accumulates layers with `<block>/<kind>_<index>` names.
class GraphBuilder {
 public:
  void block(std::string path) {
    block_ = std::move(path);
    counters_.clear();
  }

  std::ptrdiff_t last() const { return static_cast<std::ptrdiff_t>(layers_.size()) - 1; }

  LayerSpec& add(LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    const std::size_t idx = counters_[kind]++;
    l.name = block_ + "/" + to_string(kind) + "_" + std::to_string(idx);
    layers_.push_back(std::move(l));
    return layers_.back();
  }

  void conv(std::size_t filters, std::size_t k, std::size_t stride, Padding pad, bool bias = true) {
    auto& l = add(LayerKind::conv2d);
    l.units = filters;
    l.window = Window{k, k, stride, stride, pad};
    l.use_bias = bias;
  }
  void depthwise(std::size_t k, std::size_t stride, Padding pad, bool bias = true) {
    auto& l = add(LayerKind::depthwise_conv2d);
    l.window = Window{k, k, stride, stride, pad};
    l.use_bias = bias;
  }
  void act(Activation a) { add(LayerKind::activation).activation = a; }
  void maxpool(std::size_t k, std::size_t stride) {
    add(LayerKind::maxpool).window = Window{k, k, stride, stride, Padding::valid};
  }
  void dense(std::size_t units) { add(LayerKind::dense).units = units; }
  void dropout(double rate) { add(LayerKind::dropout).rate = rate; }
  void batchnorm(double eps) { add(LayerKind::batchnorm).epsilon = eps; }
  void flatten() { add(LayerKind::flatten); }
  void gap() { add(LayerKind::global_avg_pool); }
  void residual(std::ptrdiff_t from) { add(LayerKind::residual_add).skip_from = from; }

  std::vector<LayerSpec> take() { return std::move(layers_); }

 private:
  std::string block_;
  std::map<LayerKind, std::size_t> counters_;
  std::vector<LayerSpec> layers_;
};

std::string size_suffix(std::size_t input_size) {
  return input_size == 224 ? "" : "@" + std::to_string(input_size);
}

std::string width_tag(double width) {
  const long pct = std::lround(width * 100.0);
  std::ostringstream os;
  os << "w";
  if (pct < 100) os << '0';
  if (pct < 10) os << '0';
  os << pct;
  return os.str();
}

void require_classes(std::size_t num_classes) {
  if (num_classes < 2) throw ValidationError("a classifier needs at least two classes");
}

}  // namespace

ModelGraph build_paper_cnn(std::size_t num_classes, std::size_t input_size) {
  require_classes(num_classes);
  GraphBuilder b;
  b.block("features");
  b.conv(64, 7, 2, Padding::same);
  b.act(Activation::relu);
  b.maxpool(3, 2);
  b.conv(128, 3, 1, Padding::same);
  b.act(Activation::relu);
  b.maxpool(3, 2);
  b.conv(256, 3, 1, Padding::same);
  b.act(Activation::relu);
  b.conv(256, 3, 1, Padding::same);
  b.act(Activation::relu);
  b.maxpool(3, 2);
  b.flatten();
  b.block("classifier");
  b.dense(512);
  b.act(Activation::relu);
  b.dropout(0.5);
  b.dense(512);
  b.act(Activation::relu);
  b.dropout(0.5);
  b.dense(num_classes);
  b.act(Activation::softmax);
  return ModelGraph("paper_cnn" + size_suffix(input_size), Shape{3, input_size, input_size}, b.take());
}

ModelGraph build_mini_cnn(std::size_t num_classes, std::size_t input_size) {
  require_classes(num_classes);
  GraphBuilder b;
  b.block("features");
  b.conv(16, 3, 2, Padding::same);
  b.act(Activation::relu);
  b.conv(32, 3, 1, Padding::same);
  b.act(Activation::relu);
  b.maxpool(3, 2);
  b.flatten();
  b.block("classifier");
  b.dense(64);
  b.act(Activation::relu);
  b.dropout(0.5);
  b.dense(64);
  b.act(Activation::relu);
  b.dropout(0.5);
  b.dense(num_classes);
  b.act(Activation::softmax);
  return ModelGraph("mini_cnn" + size_suffix(input_size), Shape{3, input_size, input_size}, b.take());
}

ModelGraph build_vgg16(std::size_t num_classes, bool include_reference_head, std::size_t input_size) {
  static constexpr std::size_t widths[5] = {64, 128, 256, 512, 512};
  static constexpr std::size_t depth[5] = {2, 2, 3, 3, 3};
  GraphBuilder b;
  for (std::size_t blk = 0; blk < 5; ++blk) {
    b.block("block" + std::to_string(blk + 1));
    for (std::size_t j = 0; j < depth[blk]; ++j) {
      b.conv(widths[blk], 3, 1, Padding::same);
      b.act(Activation::relu);
    }
    b.maxpool(2, 2);
  }
  if (!include_reference_head) {
    return ModelGraph("vgg16" + size_suffix(input_size), Shape{3, input_size, input_size}, b.take());
  }
  require_classes(num_classes);
  const auto base_count = static_cast<std::size_t>(b.last() + 1);
  b.block("classifier");
  b.flatten();
  b.dense(4096);
  b.act(Activation::relu);
  b.dense(4096);
  b.act(Activation::relu);
  b.dense(num_classes);
  b.act(Activation::softmax);
  return ModelGraph("vgg16_reference" + size_suffix(input_size), Shape{3, input_size, input_size}, b.take(),
                    "vgg16" + size_suffix(input_size), base_count);
}

std::size_t round_channels(double scaled, std::size_t divisor) {
  const auto d = static_cast<long>(divisor);
  long v = std::max(d, static_cast<long>(scaled + static_cast<double>(divisor) / 2.0) / d * d);
  if (static_cast<double>(v) < 0.9 * scaled) v += d;
  return static_cast<std::size_t>(v);
}

namespace {

constexpr double kMobileNetBnEpsilon = 1e-3;

struct Bottleneck {
  std::size_t expansion, channels, repeats, stride;
};

constexpr Bottleneck kBottlenecks[] = {
    {1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
    {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1},
};

std::vector<LayerSpec> mobilenet_base_layers(double width) {
  GraphBuilder b;
  b.block("stem");
  std::size_t channels = round_channels(32.0 * width);
  b.conv(channels, 3, 2, Padding::same, false);
  b.batchnorm(kMobileNetBnEpsilon);
  b.act(Activation::relu6);
  std::size_t index = 0;
  for (const auto& stage : kBottlenecks) {
    const std::size_t out = round_channels(static_cast<double>(static_cast<std::size_t>(
        static_cast<double>(stage.channels) * width)));
    for (std::size_t r = 0; r < stage.repeats; ++r, ++index) {
      const std::size_t stride = r == 0 ? stage.stride : 1;
      const std::ptrdiff_t block_input = b.last();
      std::string name = "block_";
      if (index < 10) name += '0';
      b.block(name + std::to_string(index));
      if (stage.expansion != 1) {
        b.conv(channels * stage.expansion, 1, 1, Padding::same, false);
        b.batchnorm(kMobileNetBnEpsilon);
        b.act(Activation::relu6);
      }
      b.depthwise(3, stride, Padding::same, false);
      b.batchnorm(kMobileNetBnEpsilon);
      b.act(Activation::relu6);
      b.conv(out, 1, 1, Padding::same, false);
      b.batchnorm(kMobileNetBnEpsilon);
      if (stride == 1 && channels == out) b.residual(block_input);
      channels = out;
    }
  }
  b.block("top");
  const std::size_t last = width > 1.0 ? round_channels(1280.0 * width) : 1280;
  b.conv(last, 1, 1, Padding::same, false);
  b.batchnorm(kMobileNetBnEpsilon);
  b.act(Activation::relu6);
  return b.take();
}

}  // namespace

ModelGraph build_mobilenet_v2_base(double width_multiplier, std::size_t input_size) {
  if (!(width_multiplier > 0.0)) throw ValidationError("width multiplier must be positive");
  return ModelGraph("mobilenet_v2_" + width_tag(width_multiplier) + size_suffix(input_size),
                    Shape{3, input_size, input_size}, mobilenet_base_layers(width_multiplier));
}

ModelGraph build_mobilenet_v2(double width_multiplier, std::size_t num_classes, std::size_t input_size) {
  if (!(width_multiplier > 0.0)) throw ValidationError("width multiplier must be positive");
  require_classes(num_classes);
  auto layers = mobilenet_base_layers(width_multiplier);
  const std::size_t base_count = layers.size();
  GraphBuilder b;
  b.block("classifier");
  b.gap();
  b.dense(num_classes);
  b.act(Activation::softmax);
  for (auto& l : b.take()) layers.push_back(std::move(l));
  const std::string base = "mobilenet_v2_" + width_tag(width_multiplier) + size_suffix(input_size);
  return ModelGraph(base + "_reference", Shape{3, input_size, input_size}, std::move(layers), base, base_count);
}

std::string head_id_suffix(const HeadSpec& head) {
  std::ostringstream os;
  os << "+head[" << (head.pooling == HeadPooling::global_average ? "gap" : "flatten");
  for (const auto& h : head.hidden) os << ";" << h.units << ":" << to_string(h.activation) << ":" << h.dropout;
  os << "]";
  return os.str();
}

ModelGraph attach_transfer_head(const ModelGraph& base, const HeadSpec& head, bool freeze_base) {
  if (base.is_classifier()) throw ValidationError("transfer base must end in a feature tensor, not a classifier");
  require_classes(head.num_classes);
  const Shape& features = base.output_shape();
  if (features.rank() != 3) throw ShapeError("transfer base output " + features.to_string() + " is not C x H x W");
  const std::size_t width = head.pooling == HeadPooling::global_average ? features[0] : features.numel();
  if (head.expected_input_width && *head.expected_input_width != width) {
    throw ShapeError("head expects " + std::to_string(*head.expected_input_width) + " input features, base provides " +
                     std::to_string(width));
  }
  std::vector<LayerSpec> layers = base.layers();
  for (auto& l : layers) l.frozen = freeze_base;
  const std::size_t base_count = layers.size();
  GraphBuilder b;
  b.block("head");
  if (head.pooling == HeadPooling::global_average) {
    b.gap();
  } else {
    b.flatten();
  }
  for (const auto& h : head.hidden) {
    if (h.activation == Activation::softmax) throw ValidationError("hidden head layers cannot use softmax");
    b.dense(h.units);
    b.act(h.activation);
    if (h.dropout > 0.0) b.dropout(h.dropout);
  }
  b.dense(head.num_classes);
  b.act(Activation::softmax);
  for (auto& l : b.take()) layers.push_back(std::move(l));
  return ModelGraph(base.architecture_id() + head_id_suffix(head), base.input_shape(), std::move(layers),
                    base.architecture_id(), base_count);
}

namespace {

HeadSpec parse_head(const std::string& body, std::size_t num_classes) {
  HeadSpec h;
  h.num_classes = num_classes;
  h.hidden.clear();
  std::vector<std::string> parts;
  std::stringstream ss(body);
  for (std::string part; std::getline(ss, part, ';');) parts.push_back(part);
  if (parts.empty()) throw ValidationError("empty head description");
  if (parts[0] == "gap") {
    h.pooling = HeadPooling::global_average;
  } else if (parts[0] == "flatten") {
    h.pooling = HeadPooling::flatten;
  } else {
    throw ValidationError("unknown head pooling '" + parts[0] + "'");
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    std::stringstream ls(parts[i]);
    std::string units, act, rate;
    if (!std::getline(ls, units, ':') || !std::getline(ls, act, ':') || !std::getline(ls, rate)) {
      throw ValidationError("malformed head layer '" + parts[i] + "'");
    }
    try {
      h.hidden.push_back({static_cast<std::size_t>(std::stoul(units)), parse_activation(act), std::stod(rate)});
    } catch (const std::logic_error&) {
      throw ValidationError("malformed head layer '" + parts[i] + "'");
    }
  }
  return h;
}

}  // namespace

ModelGraph build_from_architecture_id(const std::string& id, std::size_t num_classes) {
  std::string base = id;
  std::optional<std::string> head;
  if (auto plus = id.find("+head["); plus != std::string::npos) {
    if (id.back() != ']') throw ValidationError("malformed architecture id '" + id + "'");
    base = id.substr(0, plus);
    head = id.substr(plus + 6, id.size() - plus - 7);
  }
  std::size_t input_size = 224;
  if (auto at = base.find('@'); at != std::string::npos) {
    try {
      input_size = std::stoul(base.substr(at + 1));
    } catch (const std::logic_error&) {
      throw ValidationError("malformed input size in architecture id '" + id + "'");
    }
    base = base.substr(0, at);
  }
  bool reference = false;
  const std::string ref_suffix = "_reference";
  if (base.size() > ref_suffix.size() && base.compare(base.size() - ref_suffix.size(), ref_suffix.size(), ref_suffix) == 0) {
    reference = true;
    base.resize(base.size() - ref_suffix.size());
  }
  if (reference && head) throw ValidationError("a reference classifier cannot carry a transfer head: '" + id + "'");

  if (base == "paper_cnn" || base == "mini_cnn") {
    if (head || reference) throw ValidationError("'" + base + "' has its own classifier");
    return base == "paper_cnn" ? build_paper_cnn(num_classes, input_size) : build_mini_cnn(num_classes, input_size);
  }
  std::optional<ModelGraph> graph;
  if (base == "vgg16") {
    graph = reference ? build_vgg16(num_classes, true, input_size) : build_vgg16(0, false, input_size);
  } else if (base.rfind("mobilenet_v2_w", 0) == 0) {
    double width = 0.0;
    try {
      width = static_cast<double>(std::stoul(base.substr(14))) / 100.0;
    } catch (const std::logic_error&) {
      throw ValidationError("malformed width in architecture id '" + id + "'");
    }
    graph = reference ? build_mobilenet_v2(width, num_classes, input_size) : build_mobilenet_v2_base(width, input_size);
  } else {
    throw ValidationError("unknown architecture id '" + id + "'");
  }
  if (head) return attach_transfer_head(*graph, parse_head(*head, num_classes), false);
  return std::move(*graph);
}

std::size_t count_parameters(const ModelGraph& graph, bool trainable_only) {
  std::size_t n = 0;
  for (const auto& p : graph.parameters()) {
    if (trainable_only && (!p.trainable_kind || graph.layers()[p.layer].frozen)) continue;
    n += p.shape.numel();
  }
  return n;
}

std::vector<std::string> trainable_parameter_names(const ModelGraph& graph) {
  std::vector<std::string> names;
  for (const auto& p : graph.parameters()) {
    if (p.trainable_kind && !graph.layers()[p.layer].frozen) names.push_back(p.name);
  }
  return names;
}

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::char_traits<char>::length(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

template <typename T>
NamedTensors<T> initialize_parameters(const ModelGraph& graph, std::uint64_t seed) {
  NamedTensors<T> out;
  for (const auto& p : graph.parameters()) {
    Tensor<T> t(p.shape);
    if (ends_with(p.name, "/weight")) {
      // fan_in: Cin*kH*kW for conv, kH*kW for depthwise, in for dense.
      const auto& d = p.shape.dims();
      const std::size_t fan_in = d.size() == 4 ? d[1] * d[2] * d[3] : d[0];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      Rng rng(derive_seed(seed, {name_hash(p.name)}));
      for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
    } else if (ends_with(p.name, "/gamma") || ends_with(p.name, "/moving_variance")) {
      t.fill(T{1});
    }
    out.emplace(p.name, std::move(t));
  }
  return out;
}

template <typename T>
void Model<T>::set_parameters(NamedTensors<T> params) {
  std::vector<std::string> problems;
  std::set<std::string> expected;
  for (const auto& p : graph_.parameters()) {
    expected.insert(p.name);
    auto it = params.find(p.name);
    if (it == params.end()) {
      problems.push_back("missing '" + p.name + "'");
    } else if (it->second.shape() != p.shape) {
      problems.push_back("'" + p.name + "' has shape " + it->second.shape().to_string() + ", expected " +
                         p.shape.to_string());
    }
  }
  for (const auto& [name, _] : params) {
    if (!expected.count(name)) problems.push_back("unexpected '" + name + "'");
  }
  if (!problems.empty()) {
    std::string msg = "parameter set does not match graph " + graph_.architecture_id() + ":";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ValidationError(msg);
  }
  params_ = std::move(params);
  populated_ = true;
}

namespace {

template <typename T>
const Tensor<T>* find_param(const NamedTensors<T>& params, const std::string& name) {
  auto it = params.find(name);
  return it == params.end() ? nullptr : &it->second;
}

std::size_t first_trainable_layer(const ModelGraph& g) {
  for (const auto& p : g.parameters()) {
    if (p.trainable_kind && !g.layers()[p.layer].frozen) return p.layer;
  }
  return g.layers().size();
}

}  // namespace

template <typename T>
ForwardResult<T> model_forward(const Model<T>& model, const Tensor<T>& batch, const ForwardOptions& options) {
  if (!model.populated()) throw StateError("model weights are not populated");
  const ModelGraph& g = model.graph();
  const auto& in = g.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2]) {
    throw ShapeError("batch " + batch.shape().to_string() + " does not match model input " + in.to_string());
  }
  const auto& layers = g.layers();
  const auto& params = model.parameters();
  const std::size_t n = batch.dim(0);

  ForwardResult<T> result;
  ForwardTrace<T>& trace = result.trace;
  trace.train = options.mode == Mode::train;
  trace.batch_shape = batch.shape();
  trace.caches.resize(layers.size());
  trace.first_cached = trace.train ? first_trainable_layer(g) : layers.size();

  std::vector<bool> skip_source(layers.size(), false);
  bool input_is_skip = false;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::residual_add) continue;
    if (l.skip_from < 0) {
      input_is_skip = true;
    } else {
      skip_source[static_cast<std::size_t>(l.skip_from)] = true;
    }
  }
  std::map<std::ptrdiff_t, Tensor<T>> saved;
  if (input_is_skip) saved.emplace(-1, batch);

  auto batched = [n](const Shape& s) {
    std::vector<std::size_t> d{n};
    d.insert(d.end(), s.dims().begin(), s.dims().end());
    return Shape(d);
  };

  Tensor<T> x = batch;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const bool keep = trace.train && i >= trace.first_cached;
    const Tensor<T>* w = find_param(params, l.name + "/weight");
    const Tensor<T>* b = find_param(params, l.name + "/bias");
    std::optional<LayerCache<T>> cache;
    Tensor<T> y;
    switch (l.kind) {
      case LayerKind::conv2d: {
        auto f = conv2d_forward(x, Conv2dParams<T>{*w, b, l.window.stride_h, l.window.stride_w, l.window.padding});
        y = std::move(f.output);
        if (keep) cache = std::move(f.cache);
        break;
      }
      case LayerKind::depthwise_conv2d: {
        auto f = depthwise_conv2d_forward(
            x, DepthwiseConv2dParams<T>{*w, b, l.window.stride_h, l.window.stride_w, l.window.padding});
        y = std::move(f.output);
        if (keep) cache = std::move(f.cache);
        break;
      }
      case LayerKind::maxpool: {
        auto f = maxpool2d_forward(x, PoolConfig{PoolKind::max, l.window});
        y = std::move(f.output);
        if (keep) cache = std::move(f.cache);
        break;
      }
      case LayerKind::global_avg_pool:
        y = global_avg_pool2d(x);
        if (keep) cache = GlobalPoolCache{x.shape()};
        break;
      case LayerKind::dense: {
        auto f = dense_forward(x, DenseParams<T>{*w, b});
        y = std::move(f.output);
        if (keep) cache = std::move(f.cache);
        break;
      }
      case LayerKind::activation:
        if (l.activation == Activation::softmax) {
          result.logits = x;
          y = softmax(x);
        } else {
          auto f = activation_forward(x, l.activation);
          y = std::move(f.output);
          if (keep) cache = std::move(f.cache);
        }
        break;
      case LayerKind::dropout: {
        DropoutConfig cfg{l.rate, options.dropout_seed, options.mode, i, options.step};
        auto f = dropout_apply(x, cfg);
        y = std::move(f.output);
        if (keep) cache = std::move(f.cache);
        break;
      }
      case LayerKind::batchnorm: {
        const std::string& p = l.name;
        const BatchNormParams<T> bn{params.at(p + "/gamma"), params.at(p + "/beta"), params.at(p + "/moving_mean"),
                                    params.at(p + "/moving_variance"), l.epsilon};
        y = batchnorm_inference(x, bn);
        if (keep) cache = FrozenCache{l.name};
        break;
      }
      case LayerKind::flatten:
        if (keep) cache = ReshapeCache{x.shape()};
        y = std::move(x).reshaped(batched(g.output_shapes()[i]));
        break;
      case LayerKind::residual_add: {
        const Tensor<T>& skip = saved.at(l.skip_from);
        y = std::move(x);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += skip[j];
        if (keep) cache = ResidualCache{y.shape()};
        break;
      }
    }
    if (!y.all_finite()) {
      throw NumericalError("non-finite value in output of " + layer_label(i, l));
    }
    if (skip_source[i]) saved.insert_or_assign(static_cast<std::ptrdiff_t>(i), y);
    trace.caches[i] = std::move(cache);
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

template <typename T>
NamedTensors<T> model_backward(const Model<T>& model, const ForwardTrace<T>& trace, const Tensor<T>& logit_grad) {
  const ModelGraph& g = model.graph();
  const auto& layers = g.layers();
  if (!trace.train || trace.caches.size() != layers.size()) {
    throw StateError("backward needs the trace of a train-mode forward on the same graph");
  }
  const std::size_t n = trace.batch_shape[0];
  NamedTensors<T> grads;
  for (const auto& name : trainable_parameter_names(g)) {
    grads.emplace(name, Tensor<T>(model.parameters().at(name).shape()));
  }
  if (trace.first_cached >= layers.size()) return grads;

  const std::size_t top = g.is_classifier() ? layers.size() - 2 : layers.size() - 1;
  const Shape& top_shape = g.output_shapes()[top];
  if (logit_grad.rank() != top_shape.rank() + 1 || logit_grad.dim(0) != n ||
      !std::equal(top_shape.dims().begin(), top_shape.dims().end(), logit_grad.shape().dims().begin() + 1)) {
    throw ShapeError("upstream gradient " + logit_grad.shape().to_string() + " does not match model output");
  }

  std::vector<Tensor<T>> pending(layers.size());
  pending[top] = logit_grad;
  auto accumulate = [&](std::size_t idx, const Tensor<T>& grad) {
    if (pending[idx].empty()) {
      pending[idx] = grad;
    } else {
      for (std::size_t j = 0; j < grad.size(); ++j) pending[idx][j] += grad[j];
    }
  };

  for (std::size_t i = top + 1; i-- > trace.first_cached;) {
    if (pending[i].empty()) continue;
    const LayerSpec& l = layers[i];
    if (!trace.caches[i]) throw StateError("missing cache for " + layer_label(i, l));
    const bool need_input = i > trace.first_cached;
    LayerGrads<T> lg = layer_backward(*trace.caches[i], pending[i], need_input);
    if (!l.frozen) {
      if (!lg.weight.empty()) grads.at(l.name + "/weight") = std::move(lg.weight);
      if (!lg.bias.empty()) grads.at(l.name + "/bias") = std::move(lg.bias);
    }
    if (l.kind == LayerKind::residual_add && l.skip_from >= static_cast<std::ptrdiff_t>(trace.first_cached)) {
      accumulate(static_cast<std::size_t>(l.skip_from), pending[i]);
    }
    if (need_input) accumulate(i - 1, lg.input);
    pending[i] = Tensor<T>();
  }
  return grads;
}

#define LANDCLS_INSTANTIATE(T)                                                                     \
  template NamedTensors<T> initialize_parameters<T>(const ModelGraph&, std::uint64_t);             \
  template class Model<T>;                                                                          \
  template ForwardResult<T> model_forward<T>(const Model<T>&, const Tensor<T>&, const ForwardOptions&); \
  template NamedTensors<T> model_backward<T>(const Model<T>&, const ForwardTrace<T>&, const Tensor<T>&);

LANDCLS_INSTANTIATE(float)
LANDCLS_INSTANTIATE(double)

#undef LANDCLS_INSTANTIATE

}  // namespace landcls
