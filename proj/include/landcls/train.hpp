#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "landcls/data.hpp"
#include "landcls/model.hpp"
#include "landcls/optim.hpp"
#include "landcls/weights_io.hpp"

namespace landcls {

struct TrainConfig {
  // paper_cnn | mini_cnn | vgg16 | mobilenet_v2
  std::string model = "paper_cnn";
  std::size_t input_size = 224;
  double width = 1.0;  // mobilenet_v2 only
  std::size_t batch_size = 90;
  std::size_t epochs = 10;
  double learning_rate = 0.001;
  std::uint64_t seed_split = 1;
  std::uint64_t seed_shuffle = 2;
  std::uint64_t seed_init = 3;
  std::uint64_t seed_dropout = 4;
  AugmentConfig augment;
  SplitFractions fractions;
  std::string base_weights;  // container path for vgg16 / mobilenet_v2
  bool freeze_base = true;
  // Recorded for reproducibility; every kernel here runs in a fixed
  // reduction order, so results never depend on scheduling.
  bool deterministic = true;
  // Train and evaluate in 64-bit arithmetic.
  bool f64_verify = false;

  // Throws ValidationError.
  void validate() const;
  bool operator==(const TrainConfig& o) const;
};

std::string config_to_json(const TrainConfig& config);
// Accepts a bare config object or a run.json (reads its "config" member).
// Missing keys keep their defaults; unknown keys are errors.
TrainConfig config_from_json(const std::string& json);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // running average over the epoch's batches
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct RunReport {
  TrainConfig config;
  std::string architecture_id;
  std::vector<std::string> class_names;
  std::size_t total_parameters = 0;
  std::size_t trainable_parameters = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::size_t test_samples = 0;
  std::vector<EpochLog> epochs;
  std::optional<MetricsReport> test;
  std::vector<std::string> artifacts;

  // Equality of everything except wall-clock seconds and artifact paths.
  bool same_results(const RunReport& o) const;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// The graph a config trains: model-zoo builder, or base plus transfer head.
// With base weights, the base architecture comes from the container.
ModelGraph build_training_graph(const TrainConfig& config, std::size_t num_classes,
                                const WeightContainer* base_weights = nullptr);

template <typename T>
struct PreparedModel {
  Model<T> model;
  PreprocessOptions preprocess;
  Preprocessing declared;  // written to the exported container
};

// Builds, initializes from seed_init and imports base weights when configured.
template <typename T>
PreparedModel<T> prepare_model(const TrainConfig& config, std::size_t num_classes);

// Runs config.epochs epochs of Adam on the train split, validating after
// each. Never reads a test-split record.
template <typename T>
std::vector<EpochLog> train_model(Model<T>& model, const DatasetManifest& manifest, const SplitAssignment& split,
                                  const TrainConfig& config, const PreprocessOptions& preprocess,
                                  const EpochCallback& on_epoch = {});

template <typename T>
MetricsReport evaluate(const Model<T>& model, const DatasetManifest& manifest, const SplitAssignment& split,
                       SplitTag tag, const PreprocessOptions& preprocess, std::size_t batch_size = 90);

struct TrainOutcome {
  WeightContainer weights;
  RunReport report;
};

// prepare_model, train_model, then a single test-split evaluation.
TrainOutcome run_experiment(const TrainConfig& config, const DatasetManifest& manifest, const SplitAssignment& split,
                            const EpochCallback& on_epoch = {});

std::string metrics_to_json(const MetricsReport& metrics, const std::vector<std::string>& class_names);

// Writes run.json, epochs.csv, confusion.csv and plotdata.csv into `dir`
// and returns their paths.
std::vector<std::filesystem::path> emit_report(const RunReport& report, const std::filesystem::path& dir);

enum class SweepAxis { batch_size, epochs, learning_rate };

struct SweepGrid {
  TrainConfig base;
  std::vector<std::size_t> batch_sizes{90, 50, 15};
  std::vector<std::size_t> epochs{10, 4, 2};
  std::vector<double> learning_rates{0.01, 0.001, 0.0001};

  void validate() const;
};

struct SweepRow {
  std::string value;  // the varied setting, as printed
  bool failed = false;
  std::string error;
  double final_train_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
};

struct SweepTable {
  SweepAxis axis = SweepAxis::batch_size;
  std::string caption;
  std::vector<std::string> columns;
  std::vector<SweepRow> rows;
};

using SweepCallback = std::function<void(const SweepTable&, const SweepRow&)>;

// One table per axis, varying that axis with the others held at `base`.
// A failing cell is recorded and the sweep continues.
std::vector<SweepTable> sweep(const SweepGrid& grid, const DatasetManifest& manifest, const SplitAssignment& split,
                              const SweepCallback& on_row = {});

// Tab-separated rendering with captions, accuracies as percentages.
std::string format_sweep(const std::vector<SweepTable>& tables);
std::vector<std::filesystem::path> emit_sweep(const std::vector<SweepTable>& tables, const std::filesystem::path& dir);

}  // namespace landcls
