#include "landcls/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "landcls/errors.hpp"

namespace landcls {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::set<std::string> kModels{"paper_cnn", "mini_cnn", "vgg16", "mobilenet_v2"};

bool is_transfer_model(const std::string& m) { return m == "vgg16" || m == "mobilenet_v2"; }

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string(), "cannot create output directory");
}

}  // namespace

void TrainConfig::validate() const {
  if (!kModels.count(model)) throw ValidationError("unknown model '" + model + "'");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be positive");
  if (input_size < 1) throw ValidationError("input size must be positive");
  if (!(width > 0.0)) throw ValidationError("width multiplier must be positive");
  if (augment.rotation_degrees < 0.0) throw ValidationError("rotation range must be non-negative");
  if (fractions.train <= 0 || fractions.val <= 0 || fractions.test <= 0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be positive and sum to 1");
  }
  if (!base_weights.empty() && !is_transfer_model(model)) {
    throw ValidationError("base weights only apply to vgg16 and mobilenet_v2");
  }
}

bool TrainConfig::operator==(const TrainConfig& o) const {
  return model == o.model && input_size == o.input_size && width == o.width && batch_size == o.batch_size &&
         epochs == o.epochs && learning_rate == o.learning_rate && seed_split == o.seed_split &&
         seed_shuffle == o.seed_shuffle && seed_init == o.seed_init && seed_dropout == o.seed_dropout &&
         augment.enabled == o.augment.enabled && augment.horizontal_flip == o.augment.horizontal_flip &&
         augment.rotation_degrees == o.augment.rotation_degrees && augment.seed == o.augment.seed &&
         augment.materialize == o.augment.materialize &&
         fractions.train == o.fractions.train && fractions.val == o.fractions.val &&
         fractions.test == o.fractions.test && base_weights == o.base_weights && freeze_base == o.freeze_base &&
         deterministic == o.deterministic && f64_verify == o.f64_verify;
}

namespace {

ordered_json config_json(const TrainConfig& c) {
  ordered_json j;
  j["model"] = c.model;
  j["input_size"] = c.input_size;
  j["width"] = c.width;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = "adam";
  j["seeds"] = {{"split", c.seed_split}, {"shuffle", c.seed_shuffle}, {"init", c.seed_init}, {"dropout", c.seed_dropout}};
  j["augment"] = {{"enabled", c.augment.enabled},
                  {"horizontal_flip", c.augment.horizontal_flip},
                  {"rotation_degrees", c.augment.rotation_degrees},
                  {"seed", c.augment.seed},
                  {"materialize", c.augment.materialize}};
  j["split_fractions"] = {{"train", c.fractions.train}, {"val", c.fractions.val}, {"test", c.fractions.test}};
  j["base_weights"] = c.base_weights;
  j["freeze_base"] = c.freeze_base;
  j["deterministic"] = c.deterministic;
  j["f64_verify"] = c.f64_verify;
  return j;
}

template <typename V>
void read_key(const json& obj, const char* key, V& out, std::set<std::string>& seen) {
  seen.insert(key);
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<V>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, _] : obj.items()) {
    if (!known.count(k)) throw ValidationError("unknown config key '" + where + k + "'");
  }
}

const json& object_at(const json& j, const char* key) {
  static const json empty = json::object();
  auto it = j.find(key);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw ValidationError(std::string("config key '") + key + "' must be an object");
  return *it;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2) + "\n"; }

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  if (j.contains("config") && j["config"].is_object()) j = j["config"];
  TrainConfig c;
  std::set<std::string> known{"seeds", "augment", "split_fractions", "optimizer"};
  read_key(j, "model", c.model, known);
  read_key(j, "input_size", c.input_size, known);
  read_key(j, "width", c.width, known);
  read_key(j, "batch_size", c.batch_size, known);
  read_key(j, "epochs", c.epochs, known);
  read_key(j, "learning_rate", c.learning_rate, known);
  read_key(j, "base_weights", c.base_weights, known);
  read_key(j, "freeze_base", c.freeze_base, known);
  read_key(j, "deterministic", c.deterministic, known);
  read_key(j, "f64_verify", c.f64_verify, known);
  reject_unknown(j, known, "");
  if (j.contains("optimizer") && j["optimizer"] != "adam") throw ValidationError("only the adam optimizer is supported");

  std::set<std::string> k2;
  const json& seeds = object_at(j, "seeds");
  read_key(seeds, "split", c.seed_split, k2);
  read_key(seeds, "shuffle", c.seed_shuffle, k2);
  read_key(seeds, "init", c.seed_init, k2);
  read_key(seeds, "dropout", c.seed_dropout, k2);
  reject_unknown(seeds, k2, "seeds.");
  std::set<std::string> k3;
  const json& aug = object_at(j, "augment");
  read_key(aug, "enabled", c.augment.enabled, k3);
  read_key(aug, "horizontal_flip", c.augment.horizontal_flip, k3);
  read_key(aug, "rotation_degrees", c.augment.rotation_degrees, k3);
  read_key(aug, "seed", c.augment.seed, k3);
  read_key(aug, "materialize", c.augment.materialize, k3);
  reject_unknown(aug, k3, "augment.");
  std::set<std::string> k4;
  const json& fr = object_at(j, "split_fractions");
  read_key(fr, "train", c.fractions.train, k4);
  read_key(fr, "val", c.fractions.val, k4);
  read_key(fr, "test", c.fractions.test, k4);
  reject_unknown(fr, k4, "split_fractions.");
  c.validate();
  return c;
}

bool RunReport::same_results(const RunReport& o) const {
  if (!(config == o.config) || architecture_id != o.architecture_id || class_names != o.class_names ||
      total_parameters != o.total_parameters || trainable_parameters != o.trainable_parameters ||
      train_samples != o.train_samples || val_samples != o.val_samples || test_samples != o.test_samples ||
      epochs.size() != o.epochs.size() || test != o.test) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = o.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.train_accuracy != b.train_accuracy ||
        a.val_loss != b.val_loss || a.val_accuracy != b.val_accuracy) {
      return false;
    }
  }
  return true;
}

ModelGraph build_training_graph(const TrainConfig& config, std::size_t num_classes, const WeightContainer* base_weights) {
  config.validate();
  if (config.model == "paper_cnn") return build_paper_cnn(num_classes, config.input_size);
  if (config.model == "mini_cnn") return build_mini_cnn(num_classes, config.input_size);
  std::optional<ModelGraph> base;
  if (base_weights) {
    base = build_from_architecture_id(base_weights->architecture_id, 0);
    const std::string family = config.model == "vgg16" ? "vgg16" : "mobilenet_v2_w";
    if (base->is_classifier() || base->architecture_id().rfind(family, 0) != 0) {
      throw ValidationError("container architecture '" + base_weights->architecture_id + "' is not a " +
                            config.model + " base");
    }
  } else if (config.model == "vgg16") {
    base = build_vgg16(0, false, config.input_size);
  } else {
    base = build_mobilenet_v2_base(config.width, config.input_size);
  }
  return attach_transfer_head(*base, default_head_for(*base, num_classes), config.freeze_base);
}

template <typename T>
PreparedModel<T> prepare_model(const TrainConfig& config, std::size_t num_classes) {
  std::optional<WeightContainer> base;
  if (!config.base_weights.empty()) base = load_weights(config.base_weights);
  ModelGraph graph = build_training_graph(config, num_classes, base ? &*base : nullptr);
  NamedTensors<T> init = initialize_parameters<T>(graph, config.seed_init);
  PreparedModel<T> out{Model<T>(std::move(graph), std::move(init)), {}, {}};
  out.preprocess.target = out.model.graph().input_shape()[1];
  out.preprocess.augment = config.augment;
  if (base) {
    apply_weights(out.model, *base, {true, ApplyScope::base});
    out.declared = base->preprocessing;
    out.preprocess.mode = NormalizationMode::container_declared;
    out.preprocess.declared = base->preprocessing;
  }
  return out;
}

template <typename T>
MetricsReport evaluate(const Model<T>& model, const DatasetManifest& manifest, const SplitAssignment& split,
                       SplitTag tag, const PreprocessOptions& preprocess, std::size_t batch_size) {
  if (!model.populated()) throw StateError("evaluate needs populated weights");
  if (!model.graph().is_classifier()) throw StateError("evaluate needs a classifier graph");
  const std::size_t k = model.graph().num_classes();
  if (k != manifest.num_classes()) {
    throw ValidationError("model predicts " + std::to_string(k) + " classes, data has " +
                          std::to_string(manifest.num_classes()));
  }
  PreprocessOptions opts = preprocess;
  opts.augment.enabled = false;
  BatchStream<T> stream(manifest, split, tag, batch_size, 0, 0, opts, false);
  MetricsAccumulator acc(k);
  while (auto batch = stream.next()) {
    const auto fr = model_forward(model, batch->inputs, ForwardOptions{});
    acc.add(fr.output, batch->labels);
  }
  return acc.finish();
}

template <typename T>
std::vector<EpochLog> train_model(Model<T>& model, const DatasetManifest& manifest, const SplitAssignment& split,
                                  const TrainConfig& config, const PreprocessOptions& preprocess,
                                  const EpochCallback& on_epoch) {
  config.validate();
  if (!model.populated()) throw StateError("train needs initialized or loaded weights");
  const ModelGraph& g = model.graph();
  if (!g.is_classifier()) throw StateError("train needs a classifier graph");
  const std::size_t k = g.num_classes();
  if (k != manifest.num_classes()) {
    throw ValidationError("model predicts " + std::to_string(k) + " classes, data has " +
                          std::to_string(manifest.num_classes()));
  }
  if (split.tags.size() != manifest.size()) throw ValidationError("split does not match manifest");
  std::size_t first_trainable = g.layers().size();
  for (const auto& p : g.parameters()) {
    if (p.trainable_kind && !g.layers()[p.layer].frozen) first_trainable = std::min(first_trainable, p.layer);
  }
  for (std::size_t i = first_trainable; i < g.layers().size(); ++i) {
    if (g.layers()[i].kind == LayerKind::batchnorm) {
      throw StateError("batch norm layer " + g.layers()[i].name +
                       " would need a backward pass; freeze the base to train this graph");
    }
  }

  AdamState<T> state(AdamHyper{config.learning_rate}, model.parameters(), trainable_parameter_names(g));
  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchStream<T> stream(manifest, split, SplitTag::train, config.batch_size, config.seed_shuffle, epoch, preprocess);
    MetricsAccumulator acc(k);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    while (auto batch = stream.next()) {
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch->index);
      if (batch->split != SplitTag::train) throw StateError(where + " is not from the train split");
      for (std::size_t r : batch->records) {
        if (split.tags[r] != SplitTag::train) {
          throw StateError(where + " carries " + to_string(split.tags[r]) + " record " + std::to_string(r));
        }
      }
      ForwardResult<T> fr;
      try {
        fr = model_forward(model, batch->inputs, ForwardOptions{Mode::train, config.seed_dropout, state.step});
      } catch (const NumericalError& e) {
        throw NumericalError(where + ": " + e.what());
      }
      const auto loss = cross_entropy_with_softmax(fr.logits, batch->labels);
      if (!std::isfinite(loss.loss)) throw NumericalError(where + ": non-finite loss");
      const NamedTensors<T> grads = model_backward(model, fr.trace, loss.logit_grad);
      for (const auto& [name, grad] : grads) {
        if (!grad.all_finite()) throw NumericalError(where + ": non-finite gradient for " + name);
      }
      adam_step(model.mutable_parameters(), grads, state);
      const std::size_t n = batch->labels.size();
      loss_sum += loss.loss * static_cast<double>(n);
      seen += n;
      acc.add(fr.output, batch->labels);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.train_accuracy = acc.finish().accuracy;
    MetricsReport val;
    try {
      val = evaluate(model, manifest, split, SplitTag::val, preprocess, config.batch_size);
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + " validation: " + e.what());
    }
    log.val_loss = val.loss;
    log.val_accuracy = val.accuracy;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

namespace {

template <typename T>
TrainOutcome run_typed(const TrainConfig& config, const DatasetManifest& manifest, const SplitAssignment& split,
                       const EpochCallback& on_epoch) {
  PreparedModel<T> prep = prepare_model<T>(config, manifest.num_classes());
  TrainOutcome out;
  RunReport& r = out.report;
  r.config = config;
  r.architecture_id = prep.model.graph().architecture_id();
  r.class_names = manifest.class_names();
  r.total_parameters = count_parameters(prep.model.graph(), false);
  r.trainable_parameters = count_parameters(prep.model.graph(), true);
  r.train_samples = split.count(SplitTag::train);
  r.val_samples = split.count(SplitTag::val);
  r.test_samples = split.count(SplitTag::test);
  r.epochs = train_model(prep.model, manifest, split, config, prep.preprocess, on_epoch);
  r.test = evaluate(prep.model, manifest, split, SplitTag::test, prep.preprocess, config.batch_size);
  out.weights = to_container(prep.model, prep.declared);
  return out;
}

}  // namespace

TrainOutcome run_experiment(const TrainConfig& config, const DatasetManifest& manifest, const SplitAssignment& split,
                            const EpochCallback& on_epoch) {
  config.validate();
  return config.f64_verify ? run_typed<double>(config, manifest, split, on_epoch)
                           : run_typed<float>(config, manifest, split, on_epoch);
}

namespace {

ordered_json metrics_json(const MetricsReport& m) {
  ordered_json j;
  j["accuracy"] = m.accuracy;
  j["loss"] = m.loss;
  j["samples"] = m.samples;
  j["confusion"] = m.confusion;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  return j;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& metrics, const std::vector<std::string>& class_names) {
  ordered_json j = metrics_json(metrics);
  j["classes"] = class_names;
  return j.dump(2) + "\n";
}

std::vector<fs::path> emit_report(const RunReport& report, const fs::path& dir) {
  make_dir(dir);
  std::vector<fs::path> paths;

  ordered_json j;
  j["config"] = config_json(report.config);
  j["architecture_id"] = report.architecture_id;
  j["classes"] = report.class_names;
  j["parameters"] = {{"total", report.total_parameters}, {"trainable", report.trainable_parameters}};
  j["samples"] = {{"train", report.train_samples}, {"val", report.val_samples}, {"test", report.test_samples}};
  j["final_training_accuracy"] = "running average over the last epoch's training batches";
  j["loss_reduction"] = "mean over the batch";
  ordered_json epochs = ordered_json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_accuracy},
                      {"seconds", e.seconds}});
  }
  j["epochs"] = epochs;
  j["test"] = report.test ? metrics_json(*report.test) : ordered_json(nullptr);

  const fs::path run = dir / "run.json";
  auto out = open_out(run);
  out << j.dump(2) << '\n';
  finish(out, run);
  paths.push_back(run);

  const fs::path ep = dir / "epochs.csv";
  out = open_out(ep);
  out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_accuracy) << ',' << fmt(e.val_loss) << ','
        << fmt(e.val_accuracy) << ',' << fmt(e.seconds, "%.3f") << '\n';
  }
  finish(out, ep);
  paths.push_back(ep);

  const fs::path cm = dir / "confusion.csv";
  out = open_out(cm);
  out << "true\\predicted";
  for (const auto& c : report.class_names) out << ',' << csv_escape(c);
  out << '\n';
  if (report.test) {
    for (std::size_t i = 0; i < report.test->confusion.size(); ++i) {
      out << csv_escape(i < report.class_names.size() ? report.class_names[i] : std::to_string(i));
      for (auto v : report.test->confusion[i]) out << ',' << v;
      out << '\n';
    }
  }
  finish(out, cm);
  paths.push_back(cm);

  const fs::path pd = dir / "plotdata.csv";
  out = open_out(pd);
  out << "epoch,split,metric,value\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ",train,loss," << fmt(e.train_loss) << '\n';
    out << e.epoch << ",train,accuracy," << fmt(e.train_accuracy) << '\n';
    out << e.epoch << ",val,loss," << fmt(e.val_loss) << '\n';
    out << e.epoch << ",val,accuracy," << fmt(e.val_accuracy) << '\n';
  }
  finish(out, pd);
  paths.push_back(pd);
  return paths;
}

void SweepGrid::validate() const {
  if (batch_sizes.empty() || epochs.empty() || learning_rates.empty()) {
    throw ValidationError("every sweep axis needs at least one value");
  }
  base.validate();
  for (auto b : batch_sizes) {
    if (b < 1) throw ValidationError("sweep batch sizes must be at least 1");
  }
  for (auto e : epochs) {
    if (e < 1) throw ValidationError("sweep epoch counts must be at least 1");
  }
  for (auto lr : learning_rates) {
    if (!(lr > 0.0)) throw ValidationError("sweep learning rates must be positive");
  }
}

std::vector<SweepTable> sweep(const SweepGrid& grid, const DatasetManifest& manifest, const SplitAssignment& split,
                              const SweepCallback& on_row) {
  grid.validate();
  const std::vector<std::string> tail{"Test accuracy", "Test loss"};
  std::vector<SweepTable> tables(3);
  tables[0] = {SweepAxis::batch_size, "Effect of batch size",
               {"Batch size", "Final Training accuracy", "Final Validation accuracy"}, {}};
  tables[1] = {SweepAxis::epochs, "Effect of epoch count",
               {"Epoch number", "Final training accuracy", "Final validation accuracy"}, {}};
  tables[2] = {SweepAxis::learning_rate, "Effect of learning rate",
               {"Learning rate", "Final training accuracy", "Final validation accuracy"}, {}};
  for (auto& t : tables) t.columns.insert(t.columns.end(), tail.begin(), tail.end());

  auto cell = [&](SweepTable& table, TrainConfig cfg, std::string value) {
    SweepRow row;
    row.value = std::move(value);
    try {
      const TrainOutcome out = run_experiment(cfg, manifest, split);
      row.final_train_accuracy = out.report.epochs.back().train_accuracy;
      row.final_val_accuracy = out.report.epochs.back().val_accuracy;
      row.test_accuracy = out.report.test->accuracy;
      row.test_loss = out.report.test->loss;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    table.rows.push_back(row);
    if (on_row) on_row(table, row);
  };
  for (auto b : grid.batch_sizes) {
    TrainConfig cfg = grid.base;
    cfg.batch_size = b;
    cell(tables[0], cfg, std::to_string(b));
  }
  for (auto e : grid.epochs) {
    TrainConfig cfg = grid.base;
    cfg.epochs = e;
    cell(tables[1], cfg, std::to_string(e));
  }
  for (auto lr : grid.learning_rates) {
    TrainConfig cfg = grid.base;
    cfg.learning_rate = lr;
    cell(tables[2], cfg, fmt(lr, "%g"));
  }
  return tables;
}

std::string format_sweep(const std::vector<SweepTable>& tables) {
  std::string s;
  for (const auto& t : tables) {
    if (!s.empty()) s += '\n';
    s += "# " + t.caption + '\n';
    for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "\t" : "") + t.columns[i];
    s += '\n';
    for (const auto& r : t.rows) {
      s += r.value;
      if (r.failed) {
        s += "\tFAILED\tFAILED\tFAILED\tFAILED\n";
      } else {
        s += '\t' + fmt(100.0 * r.final_train_accuracy, "%.1f%%") + '\t' + fmt(100.0 * r.final_val_accuracy, "%.1f%%") +
             '\t' + fmt(100.0 * r.test_accuracy, "%.1f%%") + '\t' + fmt(r.test_loss, "%.4f") + '\n';
      }
    }
    for (const auto& r : t.rows) {
      if (r.failed) s += "# " + t.columns[0] + " " + r.value + " failed: " + r.error + '\n';
    }
  }
  return s;
}

std::vector<fs::path> emit_sweep(const std::vector<SweepTable>& tables, const fs::path& dir) {
  make_dir(dir);
  const fs::path txt = dir / "sweep.tsv";
  auto out = open_out(txt);
  out << format_sweep(tables);
  finish(out, txt);

  const fs::path csv = dir / "sweep.csv";
  out = open_out(csv);
  out << "table,setting,value,final_train_acc,final_val_acc,test_acc,test_loss,status,error\n";
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (const auto& r : tables[i].rows) {
      out << i + 1 << ',' << csv_escape(tables[i].columns[0]) << ',' << r.value << ',';
      if (r.failed) {
        out << ",,,,failed," << csv_escape(r.error) << '\n';
      } else {
        out << fmt(r.final_train_accuracy) << ',' << fmt(r.final_val_accuracy) << ',' << fmt(r.test_accuracy) << ','
            << fmt(r.test_loss) << ",ok,\n";
      }
    }
  }
  finish(out, csv);
  return {txt, csv};
}

#define LANDCLS_INSTANTIATE(T)                                                                                  \
  template PreparedModel<T> prepare_model<T>(const TrainConfig&, std::size_t);                                 \
  template std::vector<EpochLog> train_model<T>(Model<T>&, const DatasetManifest&, const SplitAssignment&,    \
                                                const TrainConfig&, const PreprocessOptions&,                 \
                                                const EpochCallback&);                                        \
  template MetricsReport evaluate<T>(const Model<T>&, const DatasetManifest&, const SplitAssignment&, SplitTag, \
                                     const PreprocessOptions&, std::size_t);

LANDCLS_INSTANTIATE(float)
LANDCLS_INSTANTIATE(double)

#undef LANDCLS_INSTANTIATE

}  // namespace landcls
