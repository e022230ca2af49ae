#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "landcls/layers.hpp"
#include "support.hpp"

using namespace landcls;
using testsupport::random_tensor;

namespace {

// Direct nested-loop convolution with explicit zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                           std::size_t stride, Padding pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const WindowPlan p = plan_window(h, wd, Window{k, k, stride, stride, pad});
  Tensor<double> y(Shape{n, cout, p.out_h, p.out_w});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oh = 0; oh < p.out_h; ++oh)
        for (std::size_t ow = 0; ow < p.out_w; ++ow) {
          double acc = b ? (*b)[o] : 0.0;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(p.pad_top);
                const long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(p.pad_left);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(h) || iw >= static_cast<long>(wd)) continue;
                acc += x.at(s, c, ih, iw) * w.at(o, c, kh, kw);
              }
          y.at(s, o, oh, ow) = acc;
        }
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d") {
  SUBCASE("stem geometry") {
    const Tensor<float> x(Shape{1, 3, 224, 224}, 0.5f);
    const Tensor<float> w(Shape{64, 3, 7, 7}, 0.01f);
    const auto y = conv2d_forward(x, Conv2dParams<float>{w, nullptr, 2, 2, Padding::same});
    CHECK(y.output.shape() == Shape{1, 64, 112, 112});
  }
  SUBCASE("1x1 identity") {
    const auto x = random_tensor<double>(Shape{2, 3, 4, 5}, 1);
    Tensor<double> w(Shape{3, 3, 1, 1});
    for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
    const Tensor<double> b(Shape{3});
    const auto y = conv2d_forward(x, Conv2dParams<double>{w, &b});
    CHECK(bit_equal(y.output, x));
  }
  SUBCASE("all ones") {
    const Tensor<double> x(Shape{1, 1, 3, 3}, 1.0);
    const Tensor<double> w(Shape{1, 1, 3, 3}, 1.0);
    const auto y = conv2d_forward(x, Conv2dParams<double>{w});
    REQUIRE(y.output.shape() == Shape{1, 1, 1, 1});
    CHECK(y.output[0] == 9.0);
  }
  SUBCASE("matches the nested-loop oracle") {
    std::uint64_t seed = 40;
    for (std::size_t stride : {1, 2, 3}) {
      for (Padding pad : {Padding::same, Padding::valid}) {
        const auto x = random_tensor<double>(Shape{2, 3, 9, 8}, ++seed);
        const auto w = random_tensor<double>(Shape{4, 3, 3, 3}, ++seed);
        const auto b = random_tensor<double>(Shape{4}, ++seed);
        const auto y = conv2d_forward(x, Conv2dParams<double>{w, &b, stride, stride, pad});
        CHECK(max_abs_diff(y.output, conv_oracle(x, w, &b, stride, pad)) < 1e-12);
      }
    }
  }
  SUBCASE("channel mismatch") {
    const Tensor<double> x(Shape{1, 2, 3, 3});
    const Tensor<double> w(Shape{1, 3, 3, 3});
    CHECK_THROWS_AS(conv2d_forward(x, Conv2dParams<double>{w}), ShapeError);
  }
}

TEST_CASE("depthwise conv2d") {
  SUBCASE("delta kernel is the identity") {
    const auto x = random_tensor<double>(Shape{2, 3, 5, 5}, 2);
    Tensor<double> w(Shape{3, 1, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) w.at(c, 0, 1, 1) = 1.0;
    const auto y = depthwise_conv2d_forward(x, DepthwiseConv2dParams<double>{w, nullptr, 1, 1, Padding::same});
    CHECK(bit_equal(y.output, x));
  }
  SUBCASE("stride 2 same on 4x4") {
    const auto x = random_tensor<double>(Shape{1, 2, 4, 4}, 3);
    const auto w = random_tensor<double>(Shape{2, 1, 3, 3}, 4);
    const auto y = depthwise_conv2d_forward(x, DepthwiseConv2dParams<double>{w, nullptr, 2, 2, Padding::same});
    CHECK(y.output.shape() == Shape{1, 2, 2, 2});
  }
  SUBCASE("channels never mix") {
    auto x = random_tensor<double>(Shape{1, 2, 6, 6}, 5);
    const auto w = random_tensor<double>(Shape{2, 1, 3, 3}, 6);
    const auto b = random_tensor<double>(Shape{2}, 7);
    const DepthwiseConv2dParams<double> p{w, &b, 1, 1, Padding::same};
    const auto before = depthwise_conv2d_forward(x, p).output;
    for (std::size_t i = 0; i < 36; ++i) x[i] += 10.0;
    const auto after = depthwise_conv2d_forward(x, p).output;
    for (std::size_t i = 36; i < 72; ++i) CHECK(after[i] == before[i]);
  }
  SUBCASE("equals a per-channel single-filter conv") {
    const auto x = random_tensor<double>(Shape{2, 3, 7, 7}, 8);
    const auto w = random_tensor<double>(Shape{3, 1, 3, 3}, 9);
    const auto y = depthwise_conv2d_forward(x, DepthwiseConv2dParams<double>{w, nullptr, 2, 2, Padding::same});
    for (std::size_t c = 0; c < 3; ++c) {
      Tensor<double> xc(Shape{2, 1, 7, 7}), wc(Shape{1, 1, 3, 3});
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < 49; ++i) xc[s * 49 + i] = x[(s * 3 + c) * 49 + i];
      for (std::size_t i = 0; i < 9; ++i) wc[i] = w[c * 9 + i];
      const auto yc = conv_oracle(xc, wc, nullptr, 2, Padding::same);
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(yc[s * 16 + i] - y.output[(s * 3 + c) * 16 + i]) < 1e-12);
    }
  }
}

TEST_CASE("max pool") {
  const Tensor<float> big(Shape{1, 64, 112, 112}, 1.0f);
  CHECK(maxpool2d_forward(big, PoolConfig{}).output.shape() == Shape{1, 64, 55, 55});

  const Tensor<double> seven(Shape{1, 2, 5, 5}, 7.0);
  const auto pooled = maxpool2d_forward(seven, PoolConfig{}).output;
  CHECK(pooled.shape() == Shape{1, 2, 2, 2});
  for (double v : pooled.values()) CHECK(v == 7.0);

  Tensor<double> x(Shape{1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i + 1);
  const auto y = maxpool2d_forward(x, PoolConfig{PoolKind::max, Window{2, 2, 2, 2, Padding::valid}});
  CHECK(y.output == Tensor<double>(Shape{1, 1, 2, 2}, {6, 8, 14, 16}));
}

TEST_CASE("global average pool") {
  CHECK(global_avg_pool2d(Tensor<double>(Shape{1, 2, 3, 3}, 7.0)) == Tensor<double>(Shape{1, 2}, 7.0));
  CHECK(global_avg_pool2d(Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4}))[0] == 2.5);
  CHECK(global_avg_pool2d(Tensor<float>(Shape{1, 1280, 7, 7})).shape() == Shape{1, 1280});
}

TEST_CASE("dense") {
  const Tensor<double> x(Shape{1, 2}, {1, 2});
  const Tensor<double> w(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor<double> b(Shape{2}, {3, 3});
  CHECK(dense_forward(x, DenseParams<double>{w, &b}).output == Tensor<double>(Shape{1, 2}, {4, 5}));
  CHECK(dense_forward(x, DenseParams<double>{w}).output == x);

  const Tensor<float> flat(Shape{1, 43264});
  const Tensor<float> w1(Shape{43264, 512});
  const Tensor<float> b1(Shape{512});
  CHECK(w1.size() + b1.size() == 22151680);
  CHECK(dense_forward(flat, DenseParams<float>{w1, &b1}).output.shape() == Shape{1, 512});

  SUBCASE("input gradient is upstream times W transposed") {
    const Tensor<double> w2(Shape{2, 2}, {1, 2, 3, 4});
    const auto fw = dense_forward(x, DenseParams<double>{w2});
    const Tensor<double> up(Shape{1, 2}, {1, -1});
    const auto g = dense_backward(fw.cache, up);
    // [1,-1] * [[1,3],[2,4]] = [-1, -1]
    CHECK(g.input == Tensor<double>(Shape{1, 2}, {-1, -1}));
    // x^T * up = [[1,-1],[2,-2]]
    CHECK(g.weight == Tensor<double>(Shape{2, 2}, {1, -1, 2, -2}));
  }
}

TEST_CASE("activations") {
  const Tensor<double> x(Shape{3}, {-3, 5, 7});
  CHECK(activation_forward(x, Activation::relu).output == Tensor<double>(Shape{3}, {0, 5, 7}));
  CHECK(activation_forward(x, Activation::relu6).output == Tensor<double>(Shape{3}, {0, 5, 6}));
  CHECK(activation_forward(x, Activation::linear).output == x);

  const auto r = random_tensor<double>(Shape{1000}, 12, -10, 10);
  const auto relu = activation_forward(r, Activation::relu).output;
  const auto relu6 = activation_forward(r, Activation::relu6).output;
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(relu[i] == (r[i] > 0 ? r[i] : 0.0));
    CHECK(relu6[i] == std::min(std::max(r[i], 0.0), 6.0));
  }

  const auto fw = activation_forward(Tensor<double>(Shape{1}, {-1.0}), Activation::relu);
  CHECK(activation_backward(fw.cache, Tensor<double>(Shape{1}, {123.0}))[0] == 0.0);
}

TEST_CASE("softmax") {
  const auto eq = softmax(Tensor<double>(Shape{1, 4}, 3.0));
  for (double v : eq.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const auto p = softmax(Tensor<double>(Shape{1, 4}, {1, 2, 3, 4}));
  double denom = 0;
  for (int i = 1; i <= 4; ++i) denom += std::exp(i);
  const double expect[4] = {0.0320586, 0.0871443, 0.2368828, 0.6439143};
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(p[i] - expect[i]) < 1e-6);
    CHECK(std::abs(p[i] - std::exp(i + 1) / denom) < 1e-15);
  }

  const auto logits = random_tensor<double>(Shape{5, 7}, 13, -5, 5);
  Tensor<double> shifted = logits;
  for (auto& v : shifted.values()) v += 37.5;
  const auto a = softmax(logits), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-7);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += a[r * 7 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const auto f = softmax(random_tensor<float>(Shape{5, 7}, 14, -30, 30));
  for (std::size_t r = 0; r < 5; ++r) {
    float s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += f[r * 7 + j];
    CHECK(std::abs(s - 1.0f) < 1e-6f);
  }
  // large logits stay finite
  CHECK(softmax(Tensor<float>(Shape{1, 3}, {1000.f, 999.f, -1000.f})).all_finite());
}

TEST_CASE("dropout") {
  const auto x = random_tensor<double>(Shape{4, 10}, 15);
  CHECK(bit_equal(dropout_apply(x, DropoutConfig{0.0, 1, Mode::train}).output, x));
  CHECK(bit_equal(dropout_apply(x, DropoutConfig{0.5, 1, Mode::infer}).output, x));

  const Tensor<double> ones(Shape{100000}, 1.0);
  const auto y = dropout_apply(ones, DropoutConfig{0.5, 99, Mode::train, 3, 0});
  double mean = 0;
  for (double v : y.output.values()) {
    CHECK((v == 0.0 || v == 2.0));
    mean += v;
  }
  mean /= 100000.0;
  CHECK(std::abs(mean - 1.0) < 0.02);

  const auto again = dropout_apply(ones, DropoutConfig{0.5, 99, Mode::train, 3, 0});
  CHECK(bit_equal(y.output, again.output));
  const auto next_step = dropout_apply(ones, DropoutConfig{0.5, 99, Mode::train, 3, 1});
  CHECK_FALSE(bit_equal(y.output, next_step.output));

  CHECK_THROWS_AS(dropout_apply(x, DropoutConfig{1.0, 1, Mode::train}), ValidationError);
}

TEST_CASE("dropout keeps the expectation over many trials") {
  const Tensor<double> x(Shape{8}, {0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4});
  double in_mean = 0, out_mean = 0;
  for (double v : x.values()) in_mean += v;
  in_mean /= 8;
  const std::size_t trials = 20000;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto y = dropout_apply(x, DropoutConfig{0.5, 5, Mode::train, 0, t});
    for (double v : y.output.values()) out_mean += v;
  }
  out_mean /= 8.0 * trials;
  CHECK(std::abs(out_mean - in_mean) / in_mean < 0.02);
}

TEST_CASE("batch norm inference") {
  const Tensor<double> x(Shape{1, 1, 1, 1}, 5.0);
  const Tensor<double> g(Shape{1}, 2.0), b(Shape{1}, 1.0), m(Shape{1}, 3.0), v(Shape{1}, 4.0);
  CHECK(batchnorm_inference(x, BatchNormParams<double>{g, b, m, v, 0.0})[0] == 3.0);

  const auto r = random_tensor<double>(Shape{2, 3, 4, 4}, 16);
  const Tensor<double> one(Shape{3}, 1.0), zero(Shape{3}, 0.0);
  const auto id = batchnorm_inference(r, BatchNormParams<double>{one, zero, zero, one, 1e-12});
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(id[i] - r[i]) < 1e-11);

  auto perturbed = r;
  for (std::size_t i = 0; i < 16; ++i) perturbed[i] += 1.0;  // sample 0, channel 0
  const auto gamma = random_tensor<double>(Shape{3}, 17), beta = random_tensor<double>(Shape{3}, 18);
  const BatchNormParams<double> p{gamma, beta, zero, one};
  const auto y0 = batchnorm_inference(r, p), y1 = batchnorm_inference(perturbed, p);
  for (std::size_t i = 16; i < r.size(); ++i) CHECK(y0[i] == y1[i]);
}

TEST_CASE("batch norm cannot be trained through") {
  const LayerCache<double> cache = FrozenCache{"base/batchnorm_0"};
  CHECK_THROWS_AS(layer_backward(cache, Tensor<double>(Shape{1, 1, 1, 1})), StateError);
}

TEST_CASE("finite inputs give finite outputs") {
  const auto x = random_tensor<float>(Shape{2, 3, 6, 6}, 19, -1e3, 1e3);
  const auto w = random_tensor<float>(Shape{4, 3, 3, 3}, 20, -1e3, 1e3);
  CHECK(conv2d_forward(x, Conv2dParams<float>{w, nullptr, 1, 1, Padding::same}).output.all_finite());
  CHECK(maxpool2d_forward(x, PoolConfig{}).output.all_finite());
  CHECK(global_avg_pool2d(x).all_finite());
  CHECK(activation_forward(x, Activation::relu6).output.all_finite());
}
