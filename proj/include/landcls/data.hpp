#pragma once

#include <array>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "landcls/image.hpp"
#include "landcls/preprocessing.hpp"
#include "landcls/tensor.hpp"

namespace landcls {

struct ImageRecord {
  std::string source_path;
  std::string class_name;
  std::size_t width = 0;
  std::size_t height = 0;
  // In-memory raster; when null the file at source_path is decoded on demand.
  std::shared_ptr<const Image> pixels;
};

class DatasetManifest {
 public:
  DatasetManifest() = default;
  // Class codes are assigned in ascending lexicographic order of class name.
  explicit DatasetManifest(std::vector<ImageRecord> records);

  const std::vector<ImageRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  std::int64_t class_code(const std::string& name) const;
  std::int64_t label(std::size_t record) const noexcept { return labels_[record]; }

 private:
  std::vector<ImageRecord> records_;
  std::vector<std::string> class_names_;
  std::map<std::string, std::int64_t> class_index_;
  std::vector<std::int64_t> labels_;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct ScanResult {
  DatasetManifest manifest;
  std::vector<SkippedFile> skipped;
};

struct ScanOptions {
  // Decode every file fully instead of only reading its header.
  bool full_decode = true;
};

// `<root>/<class_name>/*.{jpg,jpeg,png}`. Files that fail to decode are
// reported in `skipped`; an empty root or an empty class is an error.
ScanResult scan_dataset(const std::filesystem::path& root, const ScanOptions& options = {});
// CSV with header `path,class`; relative paths resolve against the CSV's directory.
ScanResult load_manifest_csv(const std::filesystem::path& csv, const ScanOptions& options = {});
void write_skip_report(const std::vector<SkippedFile>& skipped, const std::filesystem::path& path);

Image load_pixels(const ImageRecord& record);

// RFC 4180 quoting when the field needs it.
std::string csv_escape(const std::string& field);

enum class SplitTag : std::uint8_t { train, val, test };
const char* to_string(SplitTag tag) noexcept;
SplitTag parse_split_tag(const std::string& s);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitAssignment {
  std::vector<SplitTag> tags;  // one per manifest record
  SplitFractions fractions;
  std::uint64_t seed = 0;

  // Record indices carrying `tag`, in manifest order.
  std::vector<std::size_t> indices(SplitTag tag) const;
  std::size_t count(SplitTag tag) const;
  bool operator==(const SplitAssignment& o) const { return tags == o.tags && seed == o.seed; }
};

// Per class: shuffle by a seed-derived permutation, cut at floor(n*train)
// and floor(n*(train+val)); the flooring remainder lands in test.
SplitAssignment stratified_split(const DatasetManifest& manifest, const SplitFractions& fractions, std::uint64_t seed);
// CSV `path,class,split`.
void write_split_csv(const DatasetManifest& manifest, const SplitAssignment& split, const std::filesystem::path& path);

struct SplitFile {
  DatasetManifest manifest;
  SplitAssignment split;
};
// Reads a file written by write_split_csv; relative paths resolve against its
// directory. Fractions are recomputed from the counts; the seed is unknown (0).
SplitFile load_split_csv(const std::filesystem::path& path, const ScanOptions& options = {});

struct ResolvedData {
  DatasetManifest manifest;
  SplitAssignment split;
  std::vector<SkippedFile> skipped;
  bool split_from_file = false;
};

// `path` is a dataset directory, a `path,class` manifest, or a
// `path,class,split` file; the first two are split with (fractions, seed).
ResolvedData resolve_dataset(const std::filesystem::path& path, const SplitFractions& fractions, std::uint64_t seed,
                             const ScanOptions& options = {});

enum class NormalizationMode { unit_scale, container_declared };

// 8-bit H x W x 3 -> 3 x H x W tensor.
template <typename T>
Tensor<T> normalize(const Image& image, NormalizationMode mode, const std::optional<Preprocessing>& declared);

struct PreprocessOptions {
  std::size_t target = 224;
  NormalizationMode mode = NormalizationMode::unit_scale;
  std::optional<Preprocessing> declared;
  AugmentConfig augment;
};

// Crop, resize and normalize one image; augmentation only when `augment_sample` is set.
template <typename T>
Tensor<T> preprocess(const Image& image, const PreprocessOptions& options, std::optional<std::uint64_t> augment_sample);

template <typename T>
struct Batch {
  Tensor<T> inputs;
  Tensor<std::int64_t> labels;
  std::vector<std::size_t> records;
  SplitTag split = SplitTag::train;
  std::size_t index = 0;
};

// Record indices of `tag` grouped into batches. With `shuffle`, the order is a
// permutation derived from (shuffle_seed, epoch); the last batch may be short.
// With copies > 1 every record appears that many times, copy k of record r
// as r + k * split.tags.size().
std::vector<std::vector<std::size_t>> batch_order(const SplitAssignment& split, SplitTag tag, std::size_t batch_size,
                                                  std::uint64_t shuffle_seed, std::uint64_t epoch, bool shuffle = true,
                                                  std::size_t copies = 1);

// Produces the batches of one epoch. A background thread preprocesses up to
// `prefetch` batches ahead; batch order is fixed by the seeds alone.
// Train batches are augmented per (epoch, record) when augmentation is on;
// with `materialize` the split instead holds each original plus one fixed
// augmented copy.
template <typename T>
class BatchStream {
 public:
  BatchStream(const DatasetManifest& manifest, const SplitAssignment& split, SplitTag tag, std::size_t batch_size,
              std::uint64_t shuffle_seed, std::uint64_t epoch, PreprocessOptions options, bool shuffle = true,
              std::size_t prefetch = 2);
  ~BatchStream();
  BatchStream(const BatchStream&) = delete;
  BatchStream& operator=(const BatchStream&) = delete;

  std::size_t batch_count() const noexcept { return order_.size(); }
  // Next batch, or nullopt at the end of the epoch. Rethrows producer errors.
  std::optional<Batch<T>> next();

 private:
  Batch<T> make(std::size_t b) const;
  void produce();

  const DatasetManifest& manifest_;
  SplitTag tag_;
  std::uint64_t epoch_;
  PreprocessOptions options_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t prefetch_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Batch<T>> queue_;
  std::exception_ptr error_;
  std::size_t consumed_ = 0;
  bool done_ = false;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace landcls
