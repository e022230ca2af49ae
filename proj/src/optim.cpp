#include "landcls/optim.hpp"

#include <algorithm>
#include <cmath>

#include "landcls/layers.hpp"

namespace landcls {

namespace {

void check_labels(const Tensor<std::int64_t>& labels, std::size_t n, std::size_t k) {
  if (labels.size() != n) {
    throw ValidationError("expected " + std::to_string(n) + " labels, got " + std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

template <typename T>
LossResult<T> cross_entropy_with_softmax(const Tensor<T>& logits, const Tensor<std::int64_t>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross-entropy expects N x K logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  check_labels(labels, n, k);
  Tensor<T> probs = softmax(logits);
  double loss = 0.0;
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(labels[i]);
    const double p = std::max(static_cast<double>(probs[i * k + label]), kProbabilityFloor);
    loss -= std::log(p);
    probs[i * k + label] -= T{1};
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] *= inv_n;
  }
  return {loss / static_cast<double>(n), std::move(probs)};
}

template <typename T>
AdamState<T>::AdamState(AdamHyper h, const NamedTensors<T>& params,
                        const std::vector<std::string>& trainable)
    : hyper(h) {
  if (!(h.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(h.beta1 > 0.0 && h.beta1 < 1.0 && h.beta2 > 0.0 && h.beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in (0, 1)");
  }
  if (!(h.epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  for (const auto& name : trainable) {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("trainable parameter '" + name + "' has no tensor");
    first_moment.emplace(name, Tensor<T>(it->second.shape()));
    second_moment.emplace(name, Tensor<T>(it->second.shape()));
  }
}

template <typename T>
void adam_step(NamedTensors<T>& params, const NamedTensors<T>& grads, AdamState<T>& state) {
  if (grads.size() != state.first_moment.size()) {
    throw ValidationError("gradient set has " + std::to_string(grads.size()) + " tensors, optimizer tracks " +
                          std::to_string(state.first_moment.size()));
  }
  for (const auto& [name, g] : grads) {
    auto m = state.first_moment.find(name);
    if (m == state.first_moment.end()) throw ValidationError("gradient for untracked parameter '" + name + "'");
    auto p = params.find(name);
    if (p == params.end() || p->second.shape() != g.shape() || m->second.shape() != g.shape()) {
      throw ValidationError("shape mismatch for parameter '" + name + "'");
    }
  }
  state.step += 1;
  const double b1 = state.hyper.beta1, b2 = state.hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.hyper.learning_rate, eps = state.hyper.epsilon;
  for (const auto& [name, g] : grads) {
    Tensor<T>& theta = params.at(name);
    Tensor<T>& m = state.first_moment.at(name);
    Tensor<T>& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
}

MetricsAccumulator::MetricsAccumulator(std::size_t num_classes)
    : classes_(num_classes), confusion_(num_classes, std::vector<std::uint64_t>(num_classes, 0)) {
  if (num_classes == 0) throw ValidationError("metrics need at least one class");
}

template <typename T>
void MetricsAccumulator::add(const Tensor<T>& probs, const Tensor<std::int64_t>& labels) {
  if (probs.rank() != 2 || probs.dim(1) != classes_) {
    throw ShapeError("probabilities " + probs.shape().to_string() + " do not have " +
                     std::to_string(classes_) + " columns");
  }
  const std::size_t n = probs.dim(0);
  check_labels(labels, n, classes_);
  const Tensor<std::int64_t> predicted = argmax_axis(probs, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto truth = static_cast<std::size_t>(labels[i]);
    confusion_[truth][static_cast<std::size_t>(predicted[i])] += 1;
    loss_sum_ -= std::log(std::max(static_cast<double>(probs[i * classes_ + truth]), kProbabilityFloor));
  }
  samples_ += n;
}

MetricsReport MetricsAccumulator::finish() const {
  MetricsReport r;
  r.samples = samples_;
  r.confusion = confusion_;
  r.precision.assign(classes_, 0.0);
  r.recall.assign(classes_, 0.0);
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < classes_; ++c) {
    trace += confusion_[c][c];
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < classes_; ++j) {
      row += confusion_[c][j];
      col += confusion_[j][c];
    }
    // 0/0 is defined as 0.
    if (col) r.precision[c] = static_cast<double>(confusion_[c][c]) / static_cast<double>(col);
    if (row) r.recall[c] = static_cast<double>(confusion_[c][c]) / static_cast<double>(row);
  }
  if (samples_) {
    r.accuracy = static_cast<double>(trace) / static_cast<double>(samples_);
    r.loss = loss_sum_ / static_cast<double>(samples_);
  }
  return r;
}

template <typename T>
MetricsReport evaluate_metrics(const Tensor<T>& probs, const Tensor<std::int64_t>& labels) {
  if (probs.rank() != 2) throw ShapeError("evaluate_metrics expects N x K probabilities");
  MetricsAccumulator acc(probs.dim(1));
  acc.add(probs, labels);
  return acc.finish();
}

#define LANDCLS_INSTANTIATE(T)                                                                          \
  template LossResult<T> cross_entropy_with_softmax<T>(const Tensor<T>&, const Tensor<std::int64_t>&); \
  template struct AdamState<T>;                                                                         \
  template void adam_step<T>(NamedTensors<T>&, const NamedTensors<T>&, AdamState<T>&);                 \
  template void MetricsAccumulator::add<T>(const Tensor<T>&, const Tensor<std::int64_t>&);             \
  template MetricsReport evaluate_metrics<T>(const Tensor<T>&, const Tensor<std::int64_t>&);

LANDCLS_INSTANTIATE(float)
LANDCLS_INSTANTIATE(double)

#undef LANDCLS_INSTANTIATE

}  // namespace landcls
