#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "landcls/tensor.hpp"

namespace landcls {

constexpr double kProbabilityFloor = 1e-12;

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> logit_grad;  // (softmax - onehot) / N
};

// Mean categorical cross-entropy over N rows with the softmax fused in.
// Labels are class indices in [0, K).
template <typename T>
LossResult<T> cross_entropy_with_softmax(const Tensor<T>& logits, const Tensor<std::int64_t>& labels);

struct AdamHyper {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moments for exactly the trainable parameter set.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  NamedTensors<T> first_moment;
  NamedTensors<T> second_moment;

  AdamState() = default;
  AdamState(AdamHyper h, const NamedTensors<T>& params, const std::vector<std::string>& trainable);
};

// One Adam update of every parameter named in `state`. `grads` must cover
// exactly that set; parameters outside it are never touched.
template <typename T>
void adam_step(NamedTensors<T>& params, const NamedTensors<T>& grads, AdamState<T>& state);

struct MetricsReport {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t samples = 0;
  // confusion[true][predicted]
  std::vector<std::vector<std::uint64_t>> confusion;
  std::vector<double> precision;
  std::vector<double> recall;

  bool operator==(const MetricsReport&) const = default;
};

// Accumulates predictions batch by batch; `finish` yields the report.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t num_classes);

  template <typename T>
  void add(const Tensor<T>& probs, const Tensor<std::int64_t>& labels);

  MetricsReport finish() const;

 private:
  std::size_t classes_;
  std::vector<std::vector<std::uint64_t>> confusion_;
  double loss_sum_ = 0.0;
  std::size_t samples_ = 0;
};

template <typename T>
MetricsReport evaluate_metrics(const Tensor<T>& probs, const Tensor<std::int64_t>& labels);

}  // namespace landcls
