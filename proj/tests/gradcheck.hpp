#pragma once

// Finite-difference checks shared by the unit tests and the acceptance run.

#include <string>
#include <vector>

#include "landcls/layers.hpp"
#include "landcls/model.hpp"
#include "landcls/optim.hpp"
#include "support.hpp"

namespace testsupport {

struct GradCheck {
  std::string what;
  double error = 0.0;
};

inline std::vector<GradCheck> layer_gradchecks(std::uint64_t seed) {
  using namespace landcls;
  std::vector<GradCheck> out;
  std::uint64_t s = seed * 1000;

  struct ConvCase {
    const char* tag;
    std::size_t k, stride;
    Padding pad;
  };
  for (const ConvCase& c : {ConvCase{"3x3 s1 same", 3, 1, Padding::same}, ConvCase{"3x3 s2 valid", 3, 2, Padding::valid},
                            ConvCase{"7x7 s2 same", 7, 2, Padding::same}, ConvCase{"1x1", 1, 1, Padding::valid}}) {
    auto x = random_tensor<double>(Shape{2, 3, 8, 8}, ++s);
    auto w = random_tensor<double>(Shape{4, 3, c.k, c.k}, ++s);
    auto b = random_tensor<double>(Shape{4}, ++s);
    const Conv2dParams<double> p{w, &b, c.stride, c.stride, c.pad};
    const auto fw = conv2d_forward(x, p);
    const auto r = random_tensor<double>(fw.output.shape(), ++s);
    const auto g = conv2d_backward(fw.cache, r);
    auto f = [&] { return weighted_sum(conv2d_forward(x, p).output, r); };
    const std::string tag = std::string("conv2d ") + c.tag;
    out.push_back({tag + " input", fd_check(x, g.input, f)});
    out.push_back({tag + " weight", fd_check(w, g.weight, f)});
    out.push_back({tag + " bias", fd_check(b, g.bias, f)});
  }

  for (std::size_t stride : {1, 2}) {
    auto x = random_tensor<double>(Shape{2, 3, 8, 8}, ++s);
    auto w = random_tensor<double>(Shape{3, 1, 3, 3}, ++s);
    auto b = random_tensor<double>(Shape{3}, ++s);
    const DepthwiseConv2dParams<double> p{w, &b, stride, stride, Padding::same};
    const auto fw = depthwise_conv2d_forward(x, p);
    const auto r = random_tensor<double>(fw.output.shape(), ++s);
    const auto g = depthwise_conv2d_backward(fw.cache, r);
    auto f = [&] { return weighted_sum(depthwise_conv2d_forward(x, p).output, r); };
    const std::string tag = "depthwise_conv2d s" + std::to_string(stride);
    out.push_back({tag + " input", fd_check(x, g.input, f)});
    out.push_back({tag + " weight", fd_check(w, g.weight, f)});
    out.push_back({tag + " bias", fd_check(b, g.bias, f)});
  }

  {
    auto x = random_tensor<double>(Shape{2, 3, 8, 8}, ++s);
    const PoolConfig cfg{};
    const auto fw = maxpool2d_forward(x, cfg);
    const auto r = random_tensor<double>(fw.output.shape(), ++s);
    const auto gx = maxpool2d_backward(fw.cache, r);
    out.push_back({"maxpool input", fd_check(x, gx, [&] { return weighted_sum(maxpool2d_forward(x, cfg).output, r); })});
  }
  {
    auto x = random_tensor<double>(Shape{2, 3, 5, 4}, ++s);
    const auto r = random_tensor<double>(Shape{2, 3}, ++s);
    const auto gx = global_avg_pool2d_backward(x.shape(), r);
    out.push_back({"global_avg_pool input", fd_check(x, gx, [&] { return weighted_sum(global_avg_pool2d(x), r); })});
  }
  {
    auto x = random_tensor<double>(Shape{3, 7}, ++s);
    auto w = random_tensor<double>(Shape{7, 5}, ++s);
    auto b = random_tensor<double>(Shape{5}, ++s);
    const DenseParams<double> p{w, &b};
    const auto fw = dense_forward(x, p);
    const auto r = random_tensor<double>(fw.output.shape(), ++s);
    const auto g = dense_backward(fw.cache, r);
    auto f = [&] { return weighted_sum(dense_forward(x, p).output, r); };
    out.push_back({"dense input", fd_check(x, g.input, f)});
    out.push_back({"dense weight", fd_check(w, g.weight, f)});
    out.push_back({"dense bias", fd_check(b, g.bias, f)});
  }
  for (Activation a : {Activation::relu, Activation::relu6, Activation::linear}) {
    auto x = random_tensor<double>(Shape{4, 25}, ++s, -3.0, 9.0);
    const auto fw = activation_forward(x, a);
    const auto r = random_tensor<double>(x.shape(), ++s);
    const auto gx = activation_backward(fw.cache, r);
    out.push_back({std::string(to_string(a)) + " input",
                   fd_check(x, gx, [&] { return weighted_sum(activation_forward(x, a).output, r); })});
  }
  {
    auto x = random_tensor<double>(Shape{4, 25}, ++s);
    const DropoutConfig cfg{0.5, s, Mode::train, 2, 7};
    const auto fw = dropout_apply(x, cfg);
    const auto r = random_tensor<double>(x.shape(), ++s);
    const auto gx = dropout_backward(fw.cache, r);
    out.push_back({"dropout input", fd_check(x, gx, [&] { return weighted_sum(dropout_apply(x, cfg).output, r); })});
  }
  {
    auto logits = random_tensor<double>(Shape{3, 4}, ++s, -2.0, 2.0);
    const auto labels = labels_of({2, 0, 3});
    const auto loss = cross_entropy_with_softmax(logits, labels);
    out.push_back({"softmax cross-entropy logits", fd_check(logits, loss.logit_grad, [&] {
                     return cross_entropy_with_softmax(logits, labels).loss;
                   })});
  }
  return out;
}

// Expand, depthwise, project and join back onto the input, then pool and
// classify. Every layer kind that can carry gradients, residual join included.
inline landcls::ModelGraph residual_test_graph() {
  using namespace landcls;
  std::vector<LayerSpec> l;
  l.push_back({.kind = LayerKind::conv2d, .name = "blk/conv2d_0", .units = 6, .window = {1, 1, 1, 1, Padding::valid}});
  l.push_back({.kind = LayerKind::activation, .name = "blk/activation_1", .window = {}, .activation = Activation::relu6});
  l.push_back({.kind = LayerKind::depthwise_conv2d, .name = "blk/depthwise_conv2d_2", .window = {3, 3, 1, 1, Padding::same}});
  l.push_back({.kind = LayerKind::activation, .name = "blk/activation_3", .window = {}, .activation = Activation::relu});
  l.push_back({.kind = LayerKind::conv2d, .name = "blk/conv2d_4", .units = 3, .window = {1, 1, 1, 1, Padding::valid}});
  l.push_back({.kind = LayerKind::residual_add, .name = "blk/residual_add_5", .window = {}, .skip_from = -1});
  l.push_back({.kind = LayerKind::maxpool, .name = "blk/maxpool_6", .window = {2, 2, 2, 2, Padding::valid}});
  l.push_back({.kind = LayerKind::global_avg_pool, .name = "head/global_avg_pool_7", .window = {}});
  l.push_back({.kind = LayerKind::dense, .name = "head/dense_8", .units = 4, .window = {}});
  l.push_back({.kind = LayerKind::activation, .name = "head/activation_9", .window = {}, .activation = Activation::softmax});
  return ModelGraph("residual_test", Shape{3, 6, 6}, std::move(l));
}

// Initialized parameters with random biases: zero biases behind a dead
// channel put ReLU inputs exactly on the kink.
inline landcls::NamedTensors<double> gradcheck_parameters(const landcls::ModelGraph& g, std::uint64_t seed) {
  auto params = landcls::initialize_parameters<double>(g, seed);
  std::uint64_t s = seed * 7919;
  for (auto& [name, t] : params) {
    if (name.ends_with("/bias")) t = random_tensor<double>(t.shape(), ++s, -0.2, 0.2);
  }
  return params;
}

inline double mini_cnn_gradcheck(std::uint64_t seed) {
  using namespace landcls;
  const ModelGraph g = build_mini_cnn(4, 8);
  Model<double> model(g, gradcheck_parameters(g, seed));
  const auto x = random_tensor<double>(Shape{2, 3, 8, 8}, seed + 500, 0.0, 1.0);
  return model_fd_check(model, x, labels_of({static_cast<std::int64_t>(seed % 4), 1}), seed);
}

inline double residual_gradcheck(std::uint64_t seed) {
  using namespace landcls;
  const ModelGraph g = residual_test_graph();
  Model<double> model(g, gradcheck_parameters(g, seed));
  const auto x = random_tensor<double>(Shape{2, 3, 6, 6}, seed + 600, -1.0, 1.0);
  return model_fd_check(model, x, labels_of({3, static_cast<std::int64_t>(seed % 4)}), seed);
}

}  // namespace testsupport
