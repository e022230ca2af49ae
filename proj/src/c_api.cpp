#define LANDCLS_BUILDING_LIBRARY
#include "landcls/landcls.h"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <new>
#include <sstream>

#include "landcls/data.hpp"
#include "landcls/errors.hpp"
#include "landcls/train.hpp"
#include "landcls/weights_io.hpp"

struct lc_config {
  landcls::TrainConfig config;
};

struct lc_text {
  std::string text;
};

struct lc_model {
  landcls::Model<float> model;
  landcls::Preprocessing preprocessing;
  std::vector<std::string> classes;
};

namespace {

namespace fs = std::filesystem;
using namespace landcls;

thread_local std::string g_error;
thread_local std::string g_kind;

void set_error(std::string kind, const std::string& msg) {
  g_kind = std::move(kind);
  g_error = msg;
}

template <typename F>
lc_status guard(F&& f) noexcept {
  try {
    f();
    g_error.clear();
    g_kind.clear();
    return LC_OK;
  } catch (const FormatError& e) {
    std::string kind = to_string(e.kind());
    for (auto& ch : kind) ch = ch == ' ' ? '_' : ch;
    set_error("format:" + kind, e.what());
    return LC_ERR_IO;
  } catch (const IoError& e) {
    set_error("io", e.what());
    return LC_ERR_IO;
  } catch (const NumericalError& e) {
    set_error("numerical", e.what());
    return LC_ERR_NUMERICAL;
  } catch (const ShapeError& e) {
    set_error("shape", e.what());
    return LC_ERR_VALIDATION;
  } catch (const StateError& e) {
    set_error("state", e.what());
    return LC_ERR_VALIDATION;
  } catch (const ValidationError& e) {
    set_error("validation", e.what());
    return LC_ERR_VALIDATION;
  } catch (const std::filesystem::filesystem_error& e) {
    set_error("io", e.what());
    return LC_ERR_IO;
  } catch (const std::bad_alloc&) {
    set_error("internal", "out of memory");
    return LC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    set_error("internal", e.what());
    return LC_ERR_INTERNAL;
  } catch (...) {
    set_error("internal", "unknown failure");
    return LC_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ValidationError(std::string(what) + " must not be null");
}

lc_text* make_text(std::string s) { return new lc_text{std::move(s)}; }

void emit(lc_progress_fn fn, void* user, const std::string& line) {
  if (fn) fn(user, line.c_str());
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ValidationError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    throw ValidationError("'" + key + "' expects a number, got '" + v + "'");
  }
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValidationError("'" + key + "' expects true or false, got '" + v + "'");
}

void set_key(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "model") c.model = v;
  else if (key == "input_size") c.input_size = parse_u64(key, v);
  else if (key == "width") c.width = parse_double(key, v);
  else if (key == "batch_size") c.batch_size = parse_u64(key, v);
  else if (key == "epochs") c.epochs = parse_u64(key, v);
  else if (key == "lr" || key == "learning_rate") c.learning_rate = parse_double(key, v);
  else if (key == "seed_split") c.seed_split = parse_u64(key, v);
  else if (key == "seed_shuffle") c.seed_shuffle = parse_u64(key, v);
  else if (key == "seed_init") c.seed_init = parse_u64(key, v);
  else if (key == "seed_dropout") c.seed_dropout = parse_u64(key, v);
  else if (key == "augment") c.augment.enabled = parse_bool(key, v);
  else if (key == "augment_seed") c.augment.seed = parse_u64(key, v);
  else if (key == "augment_rotation") c.augment.rotation_degrees = parse_double(key, v);
  else if (key == "augment_flip") c.augment.horizontal_flip = parse_bool(key, v);
  else if (key == "augment_materialize") c.augment.materialize = parse_bool(key, v);
  else if (key == "base_weights") c.base_weights = v;
  else if (key == "freeze_base") c.freeze_base = parse_bool(key, v);
  else if (key == "deterministic") c.deterministic = parse_bool(key, v);
  else if (key == "f64_verify") c.f64_verify = parse_bool(key, v);
  else if (key == "train_fraction") c.fractions.train = parse_double(key, v);
  else if (key == "val_fraction") c.fractions.val = parse_double(key, v);
  else if (key == "test_fraction") c.fractions.test = parse_double(key, v);
  else throw ValidationError("unknown config key '" + key + "'");
}

std::string counts_summary(const ResolvedData& d) {
  std::ostringstream s;
  s << "records " << d.manifest.size() << "\n";
  s << "classes " << d.manifest.num_classes() << "\n";
  for (SplitTag tag : {SplitTag::train, SplitTag::val, SplitTag::test}) {
    s << to_string(tag) << ' ' << d.split.count(tag);
    std::vector<std::size_t> per(d.manifest.num_classes(), 0);
    for (std::size_t i = 0; i < d.split.tags.size(); ++i) {
      if (d.split.tags[i] == tag) ++per[static_cast<std::size_t>(d.manifest.label(i))];
    }
    for (std::size_t c = 0; c < per.size(); ++c) s << ' ' << d.manifest.class_names()[c] << '=' << per[c];
    s << '\n';
  }
  s << "skipped " << d.skipped.size() << "\n";
  return s.str();
}

ResolvedData resolve(const char* data, const TrainConfig& c) {
  require(data, "data path");
  return resolve_dataset(data, c.fractions, c.seed_split);
}

void write_split_outputs(const ResolvedData& d, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "cannot create output directory");
  write_split_csv(d.manifest, d.split, dir / "split.csv");
  write_skip_report(d.skipped, dir / "skipped.csv");
}

std::string fmt_epoch(const EpochLog& e, std::size_t total) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch %zu/%zu train_loss=%.6f train_acc=%.4f val_loss=%.6f val_acc=%.4f (%.2fs)",
                e.epoch, total, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.seconds);
  return buf;
}

std::vector<std::string> read_classes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open class list");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Class count of a classifier container: width of its last dense bias.
std::size_t infer_classes(const WeightContainer& c) {
  for (auto it = c.entries.rbegin(); it != c.entries.rend(); ++it) {
    const std::string& n = it->first;
    if (n.find("/dense_") != std::string::npos && n.size() > 5 && n.compare(n.size() - 5, 5, "/bias") == 0) {
      return it->second.size();
    }
  }
  return 0;
}

}  // namespace

extern "C" {

const char* lc_version(void) { return "1.0.0"; }
const char* lc_last_error(void) { return g_error.c_str(); }
const char* lc_last_error_kind(void) { return g_kind.c_str(); }

const char* lc_text_data(const lc_text* text) { return text ? text->text.c_str() : ""; }
size_t lc_text_size(const lc_text* text) { return text ? text->text.size() : 0; }
void lc_text_free(lc_text* text) { delete text; }

lc_status lc_config_new(lc_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new lc_config{};
  });
}

lc_status lc_config_from_json(const char* json, lc_config** out) {
  return guard([&] {
    require(json, "json");
    require(out, "out");
    *out = new lc_config{config_from_json(json)};
  });
}

void lc_config_free(lc_config* config) { delete config; }

lc_status lc_config_set(lc_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    set_key(config->config, key, value);
  });
}

lc_status lc_config_to_json(const lc_config* config, lc_text** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    *out = make_text(config_to_json(config->config));
  });
}

lc_status lc_split(const char* data, const lc_config* config, const char* out_dir, lc_text** summary) {
  return guard([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    config->config.validate();
    const ResolvedData d = resolve(data, config->config);
    write_split_outputs(d, out_dir);
    if (summary) *summary = make_text(counts_summary(d));
  });
}

lc_status lc_train(const char* data, const lc_config* config, const char* out_dir, lc_progress_fn progress, void* user,
                   lc_text** summary) {
  return guard([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    const TrainConfig& cfg = config->config;
    cfg.validate();
    const ResolvedData d = resolve(data, cfg);
    const fs::path dir = out_dir;
    write_split_outputs(d, dir);
    emit(progress, user, counts_summary(d));
    TrainOutcome out = run_experiment(cfg, d.manifest, d.split,
                                      [&](const EpochLog& e) { emit(progress, user, fmt_epoch(e, cfg.epochs)); });
    const fs::path weights = dir / "weights.lwts";
    save_weights(out.weights, weights);
    {
      const fs::path classes = dir / "classes.txt";
      std::ofstream cl(classes, std::ios::binary | std::ios::trunc);
      for (const auto& c : d.manifest.class_names()) cl << c << '\n';
      if (!cl) throw IoError(classes.string(), "write failed");
    }
    out.report.artifacts = {weights.string(), (dir / "classes.txt").string(), (dir / "split.csv").string()};
    for (const auto& p : emit_report(out.report, dir)) out.report.artifacts.push_back(p.string());
    std::ostringstream s;
    char buf[128];
    std::snprintf(buf, sizeof buf, "test_accuracy %.6f\ntest_loss %.6f\n", out.report.test->accuracy,
                  out.report.test->loss);
    s << "architecture " << out.report.architecture_id << "\n";
    s << "parameters " << out.report.total_parameters << " trainable " << out.report.trainable_parameters << "\n";
    s << buf;
    for (const auto& a : out.report.artifacts) s << "wrote " << a << "\n";
    if (summary) *summary = make_text(s.str());
  });
}

lc_status lc_sweep(const char* data, const lc_config* base, const size_t* batch_sizes, size_t n_batch,
                   const size_t* epochs, size_t n_epochs, const double* learning_rates, size_t n_lr,
                   const char* out_dir, lc_progress_fn progress, void* user, lc_text** table) {
  return guard([&] {
    require(base, "config");
    require(out_dir, "out_dir");
    SweepGrid grid;
    grid.base = base->config;
    if (batch_sizes && n_batch) grid.batch_sizes.assign(batch_sizes, batch_sizes + n_batch);
    if (epochs && n_epochs) grid.epochs.assign(epochs, epochs + n_epochs);
    if (learning_rates && n_lr) grid.learning_rates.assign(learning_rates, learning_rates + n_lr);
    grid.validate();
    const ResolvedData d = resolve(data, grid.base);
    write_split_outputs(d, out_dir);
    emit(progress, user, counts_summary(d));
    const auto tables = sweep(grid, d.manifest, d.split, [&](const SweepTable& t, const SweepRow& r) {
      emit(progress, user,
           t.columns[0] + " " + r.value + (r.failed ? " failed: " + r.error : " done"));
    });
    emit_sweep(tables, out_dir);
    if (table) *table = make_text(format_sweep(tables));
  });
}

lc_status lc_model_load(const char* weights_path, const char* classes_path, lc_model** out) {
  return guard([&] {
    require(weights_path, "weights path");
    require(out, "out");
    const WeightContainer c = load_weights(weights_path);
    validate_container(c);
    const std::size_t k = infer_classes(c);
    ModelGraph graph = build_from_architecture_id(c.architecture_id, k);
    Model<float> model(std::move(graph));
    std::vector<std::string> classes;
    if (model.graph().is_classifier()) {
      fs::path cp = classes_path ? fs::path(classes_path) : fs::path(weights_path).parent_path() / "classes.txt";
      std::error_code ec;
      if (classes_path || fs::exists(cp, ec)) {
        classes = read_classes(cp);
        if (classes.size() != model.graph().num_classes()) {
          throw ValidationError("class list has " + std::to_string(classes.size()) + " names, model has " +
                                std::to_string(model.graph().num_classes()) + " classes");
        }
      } else {
        for (std::size_t i = 0; i < model.graph().num_classes(); ++i) classes.push_back("class_" + std::to_string(i));
      }
    }
    apply_weights(model, c);
    *out = new lc_model{std::move(model), c.preprocessing, std::move(classes)};
  });
}

void lc_model_free(lc_model* model) { delete model; }

const char* lc_model_architecture(const lc_model* model) {
  return model ? model->model.graph().architecture_id().c_str() : "";
}

int lc_model_is_classifier(const lc_model* model) { return model && model->model.graph().is_classifier() ? 1 : 0; }

size_t lc_model_output_size(const lc_model* model) { return model ? model->model.graph().output_shape().numel() : 0; }

const char* lc_model_class_name(const lc_model* model, size_t index) {
  if (!model || index >= model->classes.size()) return nullptr;
  return model->classes[index].c_str();
}

lc_status lc_model_predict_image(const lc_model* model, const char* image_path, float* out, size_t out_len) {
  return guard([&] {
    require(model, "model");
    require(image_path, "image path");
    require(out, "out");
    const ModelGraph& g = model->model.graph();
    const std::size_t need = g.output_shape().numel();
    if (out_len < need) throw ValidationError("output buffer holds " + std::to_string(out_len) + " values, need " +
                                              std::to_string(need));
    PreprocessOptions opts;
    opts.target = g.input_shape()[1];
    opts.mode = NormalizationMode::container_declared;
    opts.declared = model->preprocessing;
    Tensor<float> x = preprocess<float>(decode_image(image_path), opts, std::nullopt);
    std::vector<std::size_t> dims{1};
    dims.insert(dims.end(), x.shape().dims().begin(), x.shape().dims().end());
    const auto fr = model_forward(model->model, std::move(x).reshaped(Shape(dims)), ForwardOptions{});
    std::copy_n(fr.output.data(), need, out);
  });
}

lc_status lc_model_evaluate(const lc_model* model, const char* data, const char* split, const lc_config* config,
                            lc_text** report) {
  return guard([&] {
    require(model, "model");
    require(split, "split");
    require(report, "report");
    const TrainConfig cfg = config ? config->config : TrainConfig{};
    const SplitTag tag = parse_split_tag(split);
    const ResolvedData d = resolve(data, cfg);
    const auto& names = d.manifest.class_names();
    bool defaults = true;
    for (std::size_t i = 0; i < model->classes.size(); ++i) {
      defaults = defaults && model->classes[i] == "class_" + std::to_string(i);
    }
    if (!defaults && model->classes != names) {
      throw ValidationError("dataset classes do not match the model's class list");
    }
    PreprocessOptions opts;
    opts.target = model->model.graph().input_shape()[1];
    opts.mode = NormalizationMode::container_declared;
    opts.declared = model->preprocessing;
    const MetricsReport m = evaluate(model->model, d.manifest, d.split, tag, opts, cfg.batch_size);
    *report = make_text(metrics_to_json(m, names));
  });
}

lc_status lc_inspect_weights(const char* weights_path, lc_text** listing, uint64_t* total_parameters) {
  return guard([&] {
    require(weights_path, "weights path");
    const WeightContainer c = load_weights(weights_path);
    std::ostringstream s;
    s << "format_version " << c.format_version << "\n";
    s << "architecture_id " << c.architecture_id << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "preprocessing scale=%.9g offsets=%.9g,%.9g,%.9g\n", c.preprocessing.scale,
                  c.preprocessing.offsets[0], c.preprocessing.offsets[1], c.preprocessing.offsets[2]);
    s << buf;
    s << "entries " << c.entries.size() << "\n";
    for (const auto& [name, t] : c.entries) s << name << ' ' << t.shape().to_string() << ' ' << t.size() << "\n";
    const std::uint64_t total = c.parameter_count();
    s << "total " << total << "\n";
    if (listing) *listing = make_text(s.str());
    if (total_parameters) *total_parameters = total;
  });
}

}  // extern "C"
