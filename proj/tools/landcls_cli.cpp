// landcls: command-line front end over the landcls C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "landcls/landcls.h"

namespace {

using nlohmann::ordered_json;

struct TextDeleter {
  void operator()(lc_text* t) const noexcept { lc_text_free(t); }
};
using Text = std::unique_ptr<lc_text, TextDeleter>;

struct ConfigDeleter {
  void operator()(lc_config* c) const noexcept { lc_config_free(c); }
};
using Config = std::unique_ptr<lc_config, ConfigDeleter>;

struct ModelDeleter {
  void operator()(lc_model* m) const noexcept { lc_model_free(m); }
};
using ModelHandle = std::unique_ptr<lc_model, ModelDeleter>;

// Thrown to unwind with an exit code after a C API failure.
struct Failure {
  int code;
};

int exit_code(lc_status s) {
  switch (s) {
    case LC_OK: return 0;
    case LC_ERR_VALIDATION: return 1;
    case LC_ERR_IO: return 2;
    case LC_ERR_NUMERICAL: return 3;
    case LC_ERR_INTERNAL: return 1;
  }
  return 1;
}

void check(lc_status s) {
  if (s == LC_OK) return;
  std::cerr << "error [" << lc_last_error_kind() << "]: " << lc_last_error() << "\n";
  throw Failure{exit_code(s)};
}

std::string take(lc_text* raw) {
  Text t(raw);
  return lc_text_data(t.get());
}

void print_progress(void*, const char* line) {
  std::cerr << line;
  const std::string s = line;
  if (s.empty() || s.back() != '\n') std::cerr << '\n';
}

// Flags shared by every training-flavoured subcommand. Values stay unset
// unless given, so a --config file supplies everything else.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::map<std::string, CLI::Option*> switch_opts;
  std::string config_file;

  void value(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help,
             const char* type = "INT") {
    app->add_option(flag, values[key], help)->type_name(type);
  }
  void toggle(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    switch_opts[key] = app->add_flag("--" + name + ",!--no-" + name, switches[key], help);
  }

  void attach(CLI::App* app, bool training) {
    app->add_option("--config", config_file, "resolved config or run.json to start from");
    value(app, "--seed-split", "seed_split", "split permutation seed (default 1)");
    value(app, "--train-fraction", "train_fraction", "default 0.70", "FLOAT");
    value(app, "--val-fraction", "val_fraction", "default 0.15", "FLOAT");
    value(app, "--test-fraction", "test_fraction", "default 0.15", "FLOAT");
    value(app, "--batch-size", "batch_size", "default 90");
    if (!training) return;
    value(app, "--model", "model", "paper_cnn | mini_cnn | vgg16 | mobilenet_v2", "NAME");
    value(app, "--input-size", "input_size", "input side in pixels (default 224)");
    value(app, "--width", "width", "MobileNetV2 width multiplier (default 1.0)", "FLOAT");
    value(app, "--base-weights", "base_weights", "pretrained base container", "PATH");
    value(app, "--epochs", "epochs", "default 10");
    value(app, "--lr", "lr", "Adam learning rate (default 0.001)", "FLOAT");
    value(app, "--seed-shuffle", "seed_shuffle", "batch order seed (default 2)");
    value(app, "--seed-init", "seed_init", "weight init seed (default 3)");
    value(app, "--seed-dropout", "seed_dropout", "dropout mask seed (default 4)");
    value(app, "--augment-seed", "augment_seed", "augmentation seed (default 0)");
    value(app, "--augment-rotation", "augment_rotation", "max rotation in degrees (default 10)", "FLOAT");
    toggle(app, "freeze-base", "freeze_base", "train only the head (default: on with --base-weights)");
    toggle(app, "augment", "augment", "random flips and rotations on training images");
    toggle(app, "augment-materialize", "augment_materialize", "add one fixed augmented copy per training image");
    toggle(app, "deterministic", "deterministic", "reproducible run (default on)");
    toggle(app, "f64-verify", "f64_verify", "64-bit arithmetic");
  }

  Config build() const {
    lc_config* raw = nullptr;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) {
        std::cerr << "error [io]: cannot open " << config_file << "\n";
        throw Failure{2};
      }
      std::stringstream ss;
      ss << in.rdbuf();
      check(lc_config_from_json(ss.str().c_str(), &raw));
    } else {
      check(lc_config_new(&raw));
    }
    Config cfg(raw);
    bool freeze_given = false;
    for (const auto& [key, v] : values) {
      if (!v.empty()) check(lc_config_set(cfg.get(), key.c_str(), v.c_str()));
    }
    for (const auto& [key, opt] : switch_opts) {
      if (opt->count() == 0) continue;
      freeze_given = freeze_given || key == "freeze_base";
      check(lc_config_set(cfg.get(), key.c_str(), switches.at(key) ? "true" : "false"));
    }
    if (!freeze_given && config_file.empty() && switch_opts.count("freeze_base")) {
      const bool has_base = values.count("base_weights") && !values.at("base_weights").empty();
      check(lc_config_set(cfg.get(), "freeze_base", has_base ? "true" : "false"));
    }
    return cfg;
  }
};

ordered_json config_json(const lc_config* cfg) {
  lc_text* t = nullptr;
  check(lc_config_to_json(cfg, &t));
  return ordered_json::parse(take(t));
}

// Fields the --config file may supply when the flag is absent.
std::string from_file(const std::string& config_file, const std::string& key, const std::string& given) {
  if (!given.empty() || config_file.empty()) return given;
  std::ifstream in(config_file);
  try {
    const auto j = ordered_json::parse(in);
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
  } catch (const std::exception&) {
  }
  return given;
}

void print_resolved(const std::string& sub, const ordered_json& extra, const lc_config* cfg) {
  ordered_json j;
  j["subcommand"] = sub;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  if (cfg) j["config"] = config_json(cfg);
  std::cerr << "resolved config:\n" << j.dump(2) << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Land-cover image classifier: split, train, evaluate, predict, sweep, inspect weights."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lc_version()));

  std::string data, out, weights, classes;

  auto* split = app.add_subcommand("split", "scan a dataset and write a stratified train/val/test split");
  ConfigFlags split_flags;
  split->add_option("--data", data, "dataset directory or manifest CSV");
  split->add_option("--out", out, "output directory");
  split_flags.attach(split, false);

  auto* train = app.add_subcommand("train", "train a model and write weights plus a run report");
  ConfigFlags train_flags;
  train->add_option("--data", data, "dataset directory, manifest CSV or split CSV");
  train->add_option("--out", out, "output directory (default run)");
  train_flags.attach(train, true);

  auto* eval = app.add_subcommand("eval", "evaluate a weights container on one split");
  ConfigFlags eval_flags;
  std::string split_tag = "test";
  eval->add_option("--weights", weights, "weights container")->required();
  eval->add_option("--data", data, "dataset directory, manifest CSV or split CSV")->required();
  eval->add_option("--classes", classes, "class list (default classes.txt beside the weights)");
  eval->add_option("--split", split_tag, "train | val | test (default test)");
  eval_flags.attach(eval, false);

  auto* predict = app.add_subcommand("predict", "classify images, one output line per image");
  std::vector<std::string> images;
  predict->add_option("--weights", weights, "weights container")->required();
  predict->add_option("--classes", classes, "class list (default classes.txt beside the weights)");
  predict->add_option("images", images, "image files")->required();

  auto* sweep = app.add_subcommand("sweep", "batch size, epoch and learning rate tables");
  ConfigFlags sweep_flags;
  std::string sweep_batch, sweep_epochs, sweep_lr;
  sweep->add_option("--data", data, "dataset directory, manifest CSV or split CSV");
  sweep->add_option("--out", out, "output directory (default sweep)");
  sweep->add_option("--sweep-batch", sweep_batch, "comma list (default 90,50,15)");
  sweep->add_option("--sweep-epochs", sweep_epochs, "comma list (default 10,4,2)");
  sweep->add_option("--sweep-lr", sweep_lr, "comma list (default 0.01,0.001,0.0001)");
  sweep_flags.attach(sweep, true);

  auto* inspect = app.add_subcommand("inspect-weights", "list container entries and the parameter total");
  inspect->add_option("weights", weights, "weights container")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error [usage]: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return 1;
  }

  auto need = [](const std::string& v, const char* flag, const CLI::App* sub) {
    if (v.empty()) {
      std::cerr << "error [usage]: " << flag << " is required\n\n" << sub->help();
      throw Failure{1};
    }
  };

  if (*split) {
    data = from_file(split_flags.config_file, "data", data);
    out = from_file(split_flags.config_file, "out", out);
    need(data, "--data", split);
    need(out, "--out", split);
    Config cfg = split_flags.build();
    print_resolved("split", {{"data", data}, {"out", out}}, cfg.get());
    lc_text* summary = nullptr;
    check(lc_split(data.c_str(), cfg.get(), out.c_str(), &summary));
    std::cout << take(summary);
    return 0;
  }

  if (*train) {
    data = from_file(train_flags.config_file, "data", data);
    out = from_file(train_flags.config_file, "out", out);
    need(data, "--data", train);
    if (out.empty()) out = "run";
    Config cfg = train_flags.build();
    print_resolved("train", {{"data", data}, {"out", out}}, cfg.get());
    lc_text* summary = nullptr;
    check(lc_train(data.c_str(), cfg.get(), out.c_str(), print_progress, nullptr, &summary));
    std::cout << take(summary);
    return 0;
  }

  if (*eval) {
    Config cfg = eval_flags.build();
    print_resolved("eval", {{"weights", weights}, {"data", data}, {"classes", classes}, {"split", split_tag}},
                   cfg.get());
    lc_model* raw = nullptr;
    check(lc_model_load(weights.c_str(), classes.empty() ? nullptr : classes.c_str(), &raw));
    ModelHandle model(raw);
    lc_text* report = nullptr;
    check(lc_model_evaluate(model.get(), data.c_str(), split_tag.c_str(), cfg.get(), &report));
    std::cout << take(report);
    return 0;
  }

  if (*predict) {
    print_resolved("predict", {{"weights", weights}, {"classes", classes}, {"images", images}}, nullptr);
    lc_model* raw = nullptr;
    check(lc_model_load(weights.c_str(), classes.empty() ? nullptr : classes.c_str(), &raw));
    ModelHandle model(raw);
    const std::size_t n = lc_model_output_size(model.get());
    const bool classifier = lc_model_is_classifier(model.get()) != 0;
    std::vector<float> values(n);
    int worst = 0;
    for (const auto& path : images) {
      const lc_status s = lc_model_predict_image(model.get(), path.c_str(), values.data(), values.size());
      if (s != LC_OK) {
        std::cerr << "error [" << lc_last_error_kind() << "]: " << lc_last_error() << "\n";
        worst = std::max(worst, exit_code(s));
        continue;
      }
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (values[i] > values[best]) best = i;
      }
      std::string line = path + ' ';
      line += classifier ? lc_model_class_name(model.get(), best) : "feature_" + std::to_string(best);
      char buf[32];
      for (float v : values) {
        std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(v));
        line += buf;
      }
      std::cout << line << '\n';
    }
    return worst;
  }

  if (*sweep) {
    data = from_file(sweep_flags.config_file, "data", data);
    out = from_file(sweep_flags.config_file, "out", out);
    need(data, "--data", sweep);
    if (out.empty()) out = "sweep";
    Config cfg = sweep_flags.build();
    std::vector<std::size_t> batches, epochs;
    std::vector<double> lrs;
    try {
      for (const auto& s : split_list(sweep_batch)) batches.push_back(std::stoul(s));
      for (const auto& s : split_list(sweep_epochs)) epochs.push_back(std::stoul(s));
      for (const auto& s : split_list(sweep_lr)) lrs.push_back(std::stod(s));
    } catch (const std::logic_error&) {
      std::cerr << "error [usage]: sweep lists must be comma-separated numbers\n";
      return 1;
    }
    auto list = [](const auto& v, const auto& fallback) { return v.empty() ? ordered_json(fallback) : ordered_json(v); };
    print_resolved("sweep",
                   {{"data", data},
                    {"out", out},
                    {"sweep_batch", list(batches, std::vector<int>{90, 50, 15})},
                    {"sweep_epochs", list(epochs, std::vector<int>{10, 4, 2})},
                    {"sweep_lr", list(lrs, std::vector<double>{0.01, 0.001, 0.0001})}},
                   cfg.get());
    lc_text* table = nullptr;
    check(lc_sweep(data.c_str(), cfg.get(), batches.data(), batches.size(), epochs.data(), epochs.size(), lrs.data(),
                   lrs.size(), out.c_str(), print_progress, nullptr, &table));
    std::cout << take(table);
    return 0;
  }

  if (*inspect) {
    print_resolved("inspect-weights", {{"weights", weights}}, nullptr);
    lc_text* listing = nullptr;
    std::uint64_t total = 0;
    check(lc_inspect_weights(weights.c_str(), &listing, &total));
    std::cout << take(listing);
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Failure& f) {
    return f.code;
  }
}
