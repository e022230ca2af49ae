#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"

using namespace landcls;
using namespace testsupport;

TEST_CASE("every layer kind agrees with central differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& c : layer_gradchecks(seed)) {
      INFO(c.what << " seed " << seed << " error " << c.error);
      CHECK(c.error < 1e-5);
    }
  }
}

TEST_CASE("miniature CNN end to end") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double e = mini_cnn_gradcheck(seed);
    INFO("seed " << seed << " error " << e);
    CHECK(e < 1e-5);
  }
}

TEST_CASE("residual graph end to end") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double e = residual_gradcheck(seed);
    INFO("seed " << seed << " error " << e);
    CHECK(e < 1e-5);
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  const ModelGraph g = build_mini_cnn(4, 8);
  Model<double> model(g, initialize_parameters<double>(g, 3));
  const auto x = random_tensor<double>(Shape{2, 3, 8, 8}, 4, 0.0, 1.0);
  const auto fr = model_forward(model, x, ForwardOptions{Mode::train, 1, 0});
  const auto grads = model_backward(model, fr.trace, Tensor<double>(fr.logits.shape()));
  CHECK(grads.size() == trainable_parameter_names(g).size());
  for (const auto& [name, t] : grads) {
    for (double v : t.values()) CHECK(v == 0.0);
  }
}
