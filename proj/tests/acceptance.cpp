// One pass/fail line per acceptance criterion. Exit status is the number of
// failing lines.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "gradcheck.hpp"
#include "landcls/train.hpp"
#include "support.hpp"

using namespace landcls;
using namespace testsupport;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = s < limit_seconds;
  const bool ok = v.pass && in_time;
  failures += !ok;
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.2f s, limit %g s%s", s, limit_seconds, in_time ? "" : " EXCEEDED");
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << v.detail << " [" << timing << "]" << std::endl;
}

std::string num(double v, const char* f = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TrainConfig blob_config() {
  TrainConfig c;
  c.model = "mini_cnn";
  c.input_size = 8;
  c.epochs = 30;
  c.fractions = SplitFractions{0.75, 0.125, 0.125};
  return c;
}

Verdict architecture() {
  const ModelGraph g = build_paper_cnn(4);
  std::size_t row = 0, matched = 0;
  bool aligned = true;
  for (std::size_t i = 0; i < g.layers().size(); ++i) {
    const LayerSpec& l = g.layers()[i];
    if (l.kind == LayerKind::activation) continue;
    if (row >= kPaperRows.size()) {
      aligned = false;
      break;
    }
    const PaperRow& want = kPaperRows[row++];
    matched += l.kind == want.kind && g.output_shapes()[i].numel() == want.elements && g.parameter_count(l) == want.params;
  }
  aligned = aligned && row == kPaperRows.size();
  const std::size_t total = count_parameters(g, false);
  return {aligned && matched == kPaperRows.size() && total == 23384964,
          "total " + std::to_string(total) + " (want 23384964), " + std::to_string(matched) + "/" +
              std::to_string(kPaperRows.size()) + " summary rows match"};
}

Verdict gradients() {
  double layer_worst = 0, mini_worst = 0, residual_worst = 0;
  std::string worst_what;
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& c : layer_gradchecks(seed)) {
      ++checks;
      if (c.error >= layer_worst) {
        layer_worst = c.error;
        worst_what = c.what;
      }
    }
    mini_worst = std::max(mini_worst, mini_cnn_gradcheck(seed));
    residual_worst = std::max(residual_worst, residual_gradcheck(seed));
  }
  const bool ok = layer_worst < 1e-5 && mini_worst < 1e-5 && residual_worst < 1e-5;
  return {ok, "5 seeds, " + std::to_string(checks) + " layer checks max rel err " + num(layer_worst) + " (" +
                  worst_what + "), mini CNN 8x8/4 classes " + num(mini_worst) + ", residual graph " +
                  num(residual_worst) + ", threshold 1e-5"};
}

Verdict loss_optimizer() {
  const auto uniform = cross_entropy_with_softmax(Tensor<double>(Shape{3, 4}, -0.7), labels_of({0, 2, 3}));
  const double ce_err = std::abs(uniform.loss - std::log(4.0));

  const auto logits = random_tensor<double>(Shape{32, 4}, 7, -8, 8);
  Tensor<std::int64_t> labels(Shape{32});
  for (std::size_t i = 0; i < 32; ++i) labels[i] = static_cast<std::int64_t>((i * 7) % 4);
  const auto r = cross_entropy_with_softmax(logits, labels);
  double row_worst = 0;
  for (std::size_t i = 0; i < 32; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += r.logit_grad[i * 4 + j];
    row_worst = std::max(row_worst, std::abs(s));
  }

  // Scalar hand oracle: theta 1.0, gradients 1.0 then 0.5, default hyperparameters.
  const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, theta = 1.0;
  std::vector<double> expect;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : 0.5;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    theta -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    expect.push_back(theta);
  }
  NamedTensors<double> p;
  p.emplace("net/dense_0/weight", Tensor<double>(Shape{1}, 1.0));
  AdamState<double> st(AdamHyper{}, p, {"net/dense_0/weight"});
  double adam_worst = 0;
  for (int t = 0; t < 2; ++t) {
    NamedTensors<double> g;
    g.emplace("net/dense_0/weight", Tensor<double>(Shape{1}, t == 0 ? 1.0 : 0.5));
    adam_step(p, g, st);
    adam_worst = std::max(adam_worst, std::abs(p.at("net/dense_0/weight")[0] - expect[static_cast<std::size_t>(t)]));
  }
  return {ce_err < 1e-9 && row_worst < 1e-10 && adam_worst < 1e-12,
          "|CE - ln4| " + num(ce_err) + " (< 1e-9), max |row sum| " + num(row_worst) + " (< 1e-10), Adam 1-2 step err " +
              num(adam_worst) + " (< 1e-12)"};
}

Verdict preprocessing_split() {
  const auto m = counting_manifest(land_classes(), 2600);
  const auto a = stratified_split(m, SplitFractions{}, 1);
  const auto b = stratified_split(m, SplitFractions{}, 1);
  std::vector<std::array<std::size_t, 3>> per(4, {0, 0, 0});
  for (std::size_t i = 0; i < m.size(); ++i) per[static_cast<std::size_t>(m.label(i))][static_cast<std::size_t>(a.tags[i])]++;
  bool per_ok = true;
  for (const auto& c : per) per_ok = per_ok && c[0] == 1820 && c[1] == 390 && c[2] == 390;
  const bool totals = a.count(SplitTag::train) == 7280 && a.count(SplitTag::val) == 1560 && a.count(SplitTag::test) == 1560;

  // Crop: exact central window of coordinate-coded images.
  bool crop_ok = true;
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{300, 200}, {201, 200}, {120, 257}, {64, 64}}) {
    const Image src = coordinate_image(w, h);
    const Image c = square_crop(src);
    const std::size_t side = std::min(w, h), x0 = (w - side) / 2, y0 = (h - side) / 2;
    crop_ok = crop_ok && c.width == side && c.height == side;
    for (std::size_t y = 0; crop_ok && y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch) crop_ok = crop_ok && c.at(x, y, ch) == src.at(x0 + x, y0 + y, ch);
  }
  Image board(448, 448);
  for (std::size_t y = 0; y < 448; ++y)
    for (std::size_t x = 0; x < 448; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) board.at(x, y, ch) = ((x / 7 + y / 7) % 2) ? 255 : 0;
  int resize_worst = resize_oracle_error(board, 224);
  resize_worst = std::max(resize_worst, resize_oracle_error(random_image(300, 300, 4), 224));
  resize_worst = std::max(resize_worst, resize_oracle_error(random_image(50, 50, 5), 224));
  return {totals && per_ok && a == b && crop_ok && resize_worst <= 1,
          "10400 -> " + std::to_string(a.count(SplitTag::train)) + "/" + std::to_string(a.count(SplitTag::val)) + "/" +
              std::to_string(a.count(SplitTag::test)) + ", per class " + (per_ok ? "1820/390/390" : "MISMATCH") +
              ", rerun " + (a == b ? "identical" : "DIFFERENT") + ", crop " + (crop_ok ? "exact" : "WRONG") +
              ", resize max step gap " + std::to_string(resize_worst) + " (<= 1)"};
}

Verdict learnability() {
  const auto manifest = blob_manifest(16, 8);
  const TrainConfig cfg = blob_config();
  const auto split = stratified_split(manifest, cfg.fractions, cfg.seed_split);

  struct Result {
    NamedTensors<float> params;
    std::vector<EpochLog> logs;
    std::size_t first_perfect = 0;
    double final_accuracy = 0;
  };
  auto run = [&] {
    Result r;
    auto prep = prepare_model<float>(cfg, manifest.num_classes());
    r.logs = train_model(prep.model, manifest, split, cfg, prep.preprocess, [&](const EpochLog& e) {
      if (!r.first_perfect && evaluate(prep.model, manifest, split, SplitTag::train, prep.preprocess).accuracy == 1.0)
        r.first_perfect = e.epoch;
    });
    r.final_accuracy = evaluate(prep.model, manifest, split, SplitTag::train, prep.preprocess).accuracy;
    r.params = prep.model.parameters();
    return r;
  };
  const Result a = run();
  const Result b = run();
  bool identical = a.params.size() == b.params.size() && a.logs.size() == b.logs.size();
  for (const auto& [name, t] : a.params) identical = identical && b.params.count(name) && bit_equal(t, b.params.at(name));
  for (std::size_t i = 0; identical && i < a.logs.size(); ++i) {
    const EpochLog &x = a.logs[i], &y = b.logs[i];
    identical = x.train_loss == y.train_loss && x.train_accuracy == y.train_accuracy && x.val_loss == y.val_loss &&
                x.val_accuracy == y.val_accuracy;
  }
  const bool learned = a.first_perfect >= 1 && a.first_perfect <= 30;
  return {learned && identical && a.first_perfect == b.first_perfect,
          std::to_string(manifest.size()) + " blob images (" + std::to_string(split.count(SplitTag::train)) +
              " train), mini CNN, batch " + std::to_string(cfg.batch_size) + ", Adam lr " + num(cfg.learning_rate) +
              ": train accuracy 100% first at epoch " + std::to_string(a.first_perfect) + ", after 30 epochs " +
              num(100 * a.final_accuracy, "%.1f") + "%, rerun " + (identical ? "bit-identical" : "DIFFERENT")};
}

std::vector<SweepTable> sweep_tables;

Verdict sweep_structure() {
  const auto manifest = blob_manifest(16, 8);
  SweepGrid grid;
  grid.base = blob_config();
  grid.base.epochs = 10;
  const auto split = stratified_split(manifest, grid.base.fractions, grid.base.seed_split);
  sweep_tables = sweep(grid, manifest, split);

  const std::vector<std::vector<std::string>> columns{
      {"Batch size", "Final Training accuracy", "Final Validation accuracy"},
      {"Epoch number", "Final training accuracy", "Final validation accuracy"},
      {"Learning rate", "Final training accuracy", "Final validation accuracy"}};
  const std::vector<std::vector<std::string>> rows{{"90", "50", "15"}, {"10", "4", "2"}, {"0.01", "0.001", "0.0001"}};
  bool ok = sweep_tables.size() == 3;
  std::size_t failed = 0;
  for (std::size_t t = 0; ok && t < 3; ++t) {
    const auto& tab = sweep_tables[t];
    ok = tab.columns.size() >= 3 && std::equal(columns[t].begin(), columns[t].end(), tab.columns.begin()) &&
         tab.rows.size() == 3;
    for (std::size_t r = 0; ok && r < 3; ++r) {
      ok = tab.rows[r].value == rows[t][r];
      failed += tab.rows[r].failed;
    }
  }
  return {ok && failed == 0, "3 tables x 3 rows with the batch/epoch/learning-rate headings, " + std::to_string(failed) +
                                 " failed cells (64 blob images, mini CNN)"};
}

Verdict frozen_base() {
  const auto manifest = blob_manifest(4, 224);
  TrainConfig cfg;
  cfg.model = "mobilenet_v2";
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.fractions = SplitFractions{0.5, 0.25, 0.25};
  const auto split = stratified_split(manifest, cfg.fractions, cfg.seed_split);
  auto prep = prepare_model<float>(cfg, 4);
  const ModelGraph& g = prep.model.graph();

  const auto x = random_tensor<float>(Shape{2, 3, 224, 224}, 9, 0, 1);
  const auto fr = model_forward(prep.model, x, ForwardOptions{Mode::train, 1, 0});
  const auto loss = cross_entropy_with_softmax(fr.logits, labels_of({0, 3}));
  const auto grads = model_backward(prep.model, fr.trace, loss.logit_grad);
  std::size_t grad_elems = 0;
  bool head_only = true;
  for (const auto& [name, t] : grads) {
    head_only = head_only && name.rfind("head/", 0) == 0;
    grad_elems += t.size();
  }

  const NamedTensors<float> before = prep.model.parameters();
  train_model(prep.model, manifest, split, cfg, prep.preprocess);
  std::size_t base_tensors = 0, base_changed = 0, head_changed = 0;
  for (const auto& [name, t] : before) {
    const bool same = bit_equal(t, prep.model.parameters().at(name));
    if (name.rfind("head/", 0) == 0) {
      head_changed += !same;
    } else {
      ++base_tensors;
      base_changed += !same;
    }
  }
  const std::size_t trainable = count_parameters(g, true);
  return {head_only && base_changed == 0 && head_changed > 0 && grad_elems == trainable && trainable == 657924,
          "MobileNetV2 w1.0 random base: " + std::to_string(base_changed) + "/" + std::to_string(base_tensors) +
              " base tensors changed, " + std::to_string(head_changed) + " head tensors changed, gradients " +
              (head_only ? "head-only" : "LEAK INTO BASE") + ", " + std::to_string(grad_elems) +
              " gradient elements = trainable " + std::to_string(trainable) +
              " (1280*512+512 + 512*4+4)"};
}

}  // namespace

int main() {
  criterion("architecture fidelity", 1, architecture);
  criterion("gradient correctness", 60, gradients);
  criterion("loss/optimizer oracles", 1, loss_optimizer);
  criterion("preprocessing/split", 10, preprocessing_split);
  criterion("learnability smoke test", 300, learnability);
  criterion("sweep structure", 1800, sweep_structure);
  criterion("transfer freeze contract", 60, frozen_base);
  if (!sweep_tables.empty()) {
    std::istringstream text(format_sweep(sweep_tables));
    std::string line;
    while (std::getline(text, line)) std::cout << "    " << line << "\n";
  }
  return failures;
}
