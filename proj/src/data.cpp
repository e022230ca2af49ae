#include "landcls/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "landcls/errors.hpp"
#include "landcls/rng.hpp"

namespace landcls {

namespace fs = std::filesystem;

DatasetManifest::DatasetManifest(std::vector<ImageRecord> records) : records_(std::move(records)) {
  std::set<std::string> names;
  for (const auto& r : records_) {
    if (r.class_name.empty()) throw ValidationError("record '" + r.source_path + "' has no class");
    names.insert(r.class_name);
  }
  class_names_.assign(names.begin(), names.end());
  for (std::size_t i = 0; i < class_names_.size(); ++i) {
    class_index_.emplace(class_names_[i], static_cast<std::int64_t>(i));
  }
  labels_.reserve(records_.size());
  for (const auto& r : records_) labels_.push_back(class_index_.at(r.class_name));
}

std::int64_t DatasetManifest::class_code(const std::string& name) const {
  auto it = class_index_.find(name);
  if (it == class_index_.end()) throw ValidationError("unknown class '" + name + "'");
  return it->second;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

// Returns false and appends a skip entry when the file cannot be decoded.
bool inspect(const std::string& path, const std::string& cls, const ScanOptions& options,
             std::vector<ImageRecord>& records, std::vector<SkippedFile>& skipped) {
  try {
    ImageRecord r{path, cls, 0, 0, nullptr};
    if (options.full_decode) {
      const Image img = decode_image(path);
      r.width = img.width;
      r.height = img.height;
    } else {
      const ImageInfo info = probe_image(path);
      r.width = info.width;
      r.height = info.height;
    }
    records.push_back(std::move(r));
    return true;
  } catch (const IoError& e) {
    skipped.push_back({path, e.what()});
    return false;
  }
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError("unterminated quote in CSV line: " + line);
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

}  // namespace

ScanResult scan_dataset(const fs::path& root, const ScanOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError(root.string(), "dataset root is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  if (class_dirs.empty()) throw ValidationError("dataset root '" + root.string() + "' has no class directories");
  std::sort(class_dirs.begin(), class_dirs.end());

  ScanResult result;
  std::vector<ImageRecord> records;
  for (const auto& dir : class_dirs) {
    const std::string cls = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t kept = 0;
    for (const auto& f : files) kept += inspect(f.string(), cls, options, records, result.skipped) ? 1 : 0;
    if (kept == 0) throw ValidationError("class '" + cls + "' has no decodable images");
  }
  result.manifest = DatasetManifest(std::move(records));
  return result;
}

ScanResult load_manifest_csv(const fs::path& csv, const ScanOptions& options) {
  std::ifstream in(csv);
  if (!in) throw IoError(csv.string(), "cannot open manifest");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("manifest '" + csv.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = parse_csv_line(line);
  if (header.size() != 2 || header[0] != "path" || header[1] != "class") {
    throw ValidationError("manifest header must be 'path,class'");
  }
  const fs::path base = csv.parent_path();
  ScanResult result;
  std::vector<ImageRecord> records;
  std::map<std::string, std::size_t> per_class;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = parse_csv_line(line);
    if (fields.size() != 2 || fields[1].empty()) {
      throw ValidationError("manifest line " + std::to_string(line_no) + " is not 'path,class'");
    }
    fs::path p = fields[0];
    if (p.is_relative()) p = base / p;
    per_class[fields[1]] += 0;
    if (inspect(p.string(), fields[1], options, records, result.skipped)) per_class[fields[1]] += 1;
  }
  if (per_class.empty()) throw ValidationError("manifest '" + csv.string() + "' lists no images");
  for (const auto& [cls, n] : per_class) {
    if (n == 0) throw ValidationError("class '" + cls + "' has no decodable images");
  }
  result.manifest = DatasetManifest(std::move(records));
  return result;
}

void write_skip_report(const std::vector<SkippedFile>& skipped, const fs::path& path) {
  auto out = open_for_write(path);
  out << "path,reason\n";
  for (const auto& s : skipped) out << csv_escape(s.path) << ',' << csv_escape(s.reason) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

Image load_pixels(const ImageRecord& record) {
  if (record.pixels) return *record.pixels;
  return decode_image(record.source_path);
}

const char* to_string(SplitTag tag) noexcept {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag parse_split_tag(const std::string& s) {
  if (s == "train") return SplitTag::train;
  if (s == "val" || s == "validation") return SplitTag::val;
  if (s == "test") return SplitTag::test;
  throw ValidationError("unknown split '" + s + "'");
}

std::vector<std::size_t> SplitAssignment::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) out.push_back(i);
  }
  return out;
}

std::size_t SplitAssignment::count(SplitTag tag) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), tag));
}

SplitAssignment stratified_split(const DatasetManifest& manifest, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be non-negative and sum to 1");
  }
  if (manifest.size() == 0) throw ValidationError("cannot split an empty manifest");
  SplitAssignment out;
  out.fractions = f;
  out.seed = seed;
  out.tags.assign(manifest.size(), SplitTag::test);
  std::vector<std::vector<std::size_t>> by_class(manifest.num_classes());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    by_class[static_cast<std::size_t>(manifest.label(i))].push_back(i);
  }
  // Guards against n*0.85 landing a hair under an integer.
  constexpr double kSlack = 1e-9;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    const double n = static_cast<double>(members.size());
    const auto cut_train = static_cast<std::size_t>(std::floor(n * f.train + kSlack));
    const auto cut_val = static_cast<std::size_t>(std::floor(n * (f.train + f.val) + kSlack));
    if (cut_train == 0 || cut_val == cut_train || cut_val >= members.size()) {
      throw ValidationError("class '" + manifest.class_names()[c] + "' has " + std::to_string(members.size()) +
                            " images, too few to populate train, val and test");
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    rng.shuffle(members);
    for (std::size_t k = 0; k < members.size(); ++k) {
      out.tags[members[k]] = k < cut_train ? SplitTag::train : (k < cut_val ? SplitTag::val : SplitTag::test);
    }
  }
  return out;
}

void write_split_csv(const DatasetManifest& manifest, const SplitAssignment& split, const fs::path& path) {
  if (split.tags.size() != manifest.size()) throw ValidationError("split does not match manifest");
  auto out = open_for_write(path);
  out << "path,class,split\n";
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.records()[i];
    out << csv_escape(r.source_path) << ',' << csv_escape(r.class_name) << ',' << to_string(split.tags[i]) << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

SplitFile load_split_csv(const fs::path& path, const ScanOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open split file");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("split file '" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = parse_csv_line(line);
  if (header.size() != 3 || header[0] != "path" || header[1] != "class" || header[2] != "split") {
    throw ValidationError("split file header must be 'path,class,split'");
  }
  const fs::path base = path.parent_path();
  std::vector<ImageRecord> records;
  std::vector<SplitTag> tags;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != 3) throw ValidationError("split file line " + std::to_string(line_no) + " is not 'path,class,split'");
    fs::path p = f[0];
    if (p.is_relative()) p = base / p;
    std::vector<SkippedFile> skipped;
    if (!inspect(p.string(), f[1], options, records, skipped)) {
      throw IoError(p.string(), "listed in split file but unreadable: " + skipped.front().reason);
    }
    tags.push_back(parse_split_tag(f[2]));
  }
  if (records.empty()) throw ValidationError("split file '" + path.string() + "' lists no images");
  SplitFile out{DatasetManifest(std::move(records)), {}};
  out.split.tags = std::move(tags);
  const double n = static_cast<double>(out.split.tags.size());
  out.split.fractions = {out.split.count(SplitTag::train) / n, out.split.count(SplitTag::val) / n,
                         out.split.count(SplitTag::test) / n};
  return out;
}

ResolvedData resolve_dataset(const fs::path& path, const SplitFractions& fractions, std::uint64_t seed,
                             const ScanOptions& options) {
  std::error_code ec;
  ResolvedData out;
  if (fs::is_directory(path, ec)) {
    ScanResult scan = scan_dataset(path, options);
    out.manifest = std::move(scan.manifest);
    out.skipped = std::move(scan.skipped);
  } else {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open dataset");
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header == "path,class,split") {
      SplitFile f = load_split_csv(path, options);
      out.manifest = std::move(f.manifest);
      out.split = std::move(f.split);
      out.split_from_file = true;
      return out;
    }
    ScanResult scan = load_manifest_csv(path, options);
    out.manifest = std::move(scan.manifest);
    out.skipped = std::move(scan.skipped);
  }
  out.split = stratified_split(out.manifest, fractions, seed);
  return out;
}

template <typename T>
Tensor<T> normalize(const Image& image, NormalizationMode mode, const std::optional<Preprocessing>& declared) {
  if (mode == NormalizationMode::container_declared && !declared) {
    throw StateError("container-declared normalization requested but no weights metadata is loaded");
  }
  const bool unit = mode == NormalizationMode::unit_scale || *declared == Preprocessing{};
  const std::size_t h = image.height, w = image.width, plane = h * w;
  Tensor<T> out(Shape{3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    T* dst = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = image.pixels[i * 3 + c];
      dst[i] = unit ? static_cast<T>(v / 255.0)
              : static_cast<T>(v * static_cast<double>(declared->scale) + static_cast<double>(declared->offsets[c]));
    }
  }
  return out;
}

template <typename T>
Tensor<T> preprocess(const Image& image, const PreprocessOptions& options, std::optional<std::uint64_t> augment_sample) {
  Image img = resize_bilinear(square_crop(image), options.target);
  if (augment_sample && options.augment.enabled) img = augment(img, options.augment, *augment_sample);
  return normalize<T>(img, options.mode, options.declared);
}

std::vector<std::vector<std::size_t>> batch_order(const SplitAssignment& split, SplitTag tag, std::size_t batch_size,
                                                  std::uint64_t shuffle_seed, std::uint64_t epoch, bool shuffle,
                                                  std::size_t copies) {
  if (batch_size == 0) throw ValidationError("batch size must be at least 1");
  if (copies == 0) throw ValidationError("copies must be at least 1");
  const std::vector<std::size_t> base = split.indices(tag);
  if (base.empty()) throw ValidationError(std::string("split '") + to_string(tag) + "' is empty");
  std::vector<std::size_t> members;
  members.reserve(base.size() * copies);
  for (std::size_t k = 0; k < copies; ++k) {
    for (std::size_t r : base) members.push_back(r + k * split.tags.size());
  }
  if (shuffle) {
    Rng rng(derive_seed(shuffle_seed, {epoch}));
    rng.shuffle(members);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < members.size(); i += batch_size) {
    const std::size_t end = std::min(members.size(), i + batch_size);
    batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(i), members.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

template <typename T>
BatchStream<T>::BatchStream(const DatasetManifest& manifest, const SplitAssignment& split, SplitTag tag,
                            std::size_t batch_size, std::uint64_t shuffle_seed, std::uint64_t epoch,
                            PreprocessOptions options, bool shuffle, std::size_t prefetch)
    : manifest_(manifest),
      tag_(tag),
      epoch_(epoch),
      options_(std::move(options)),
      order_(batch_order(split, tag, batch_size, shuffle_seed, epoch, shuffle,
                         tag == SplitTag::train && options_.augment.enabled && options_.augment.materialize ? 2 : 1)),
      prefetch_(std::max<std::size_t>(prefetch, 1)) {
  if (split.tags.size() != manifest.size()) throw ValidationError("split does not match manifest");
  worker_ = std::thread([this] { produce(); });
}

template <typename T>
BatchStream<T>::~BatchStream() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

template <typename T>
Batch<T> BatchStream<T>::make(std::size_t b) const {
  const auto& ids = order_[b];
  const std::size_t s = options_.target;
  Batch<T> batch;
  batch.inputs = Tensor<T>(Shape{ids.size(), 3, s, s});
  batch.labels = Tensor<std::int64_t>(Shape{ids.size()});
  batch.split = tag_;
  batch.index = b;
  const std::size_t sample = 3 * s * s;
  const std::size_t n = manifest_.size();
  const bool augmenting = tag_ == SplitTag::train && options_.augment.enabled;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t record = ids[i] % n;
    const std::size_t copy = ids[i] / n;
    std::optional<std::uint64_t> aug;
    if (augmenting && !options_.augment.materialize) {
      aug = derive_seed(epoch_, {record});
    } else if (augmenting && copy > 0) {
      aug = derive_seed(0, {record, copy});
    }
    const Tensor<T> x = preprocess<T>(load_pixels(manifest_.records()[record]), options_, aug);
    std::copy_n(x.data(), sample, batch.inputs.data() + i * sample);
    batch.labels[i] = manifest_.label(record);
    batch.records.push_back(record);
  }
  return batch;
}

template <typename T>
void BatchStream<T>::produce() {
  for (std::size_t b = 0; b < order_.size(); ++b) {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stop_ || queue_.size() < prefetch_; });
      if (stop_) return;
    }
    try {
      Batch<T> batch = make(b);
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(batch));
    } catch (...) {
      std::lock_guard lock(mu_);
      error_ = std::current_exception();
      done_ = true;
      cv_.notify_all();
      return;
    }
    cv_.notify_all();
  }
  std::lock_guard lock(mu_);
  done_ = true;
  cv_.notify_all();
}

template <typename T>
std::optional<Batch<T>> BatchStream<T>::next() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return !queue_.empty() || done_; });
  if (!queue_.empty()) {
    Batch<T> b = std::move(queue_.front());
    queue_.pop_front();
    ++consumed_;
    lock.unlock();
    cv_.notify_all();
    return b;
  }
  if (error_) std::rethrow_exception(error_);
  return std::nullopt;
}

template Tensor<float> normalize<float>(const Image&, NormalizationMode, const std::optional<Preprocessing>&);
template Tensor<double> normalize<double>(const Image&, NormalizationMode, const std::optional<Preprocessing>&);
template Tensor<float> preprocess<float>(const Image&, const PreprocessOptions&, std::optional<std::uint64_t>);
template Tensor<double> preprocess<double>(const Image&, const PreprocessOptions&, std::optional<std::uint64_t>);
template class BatchStream<float>;
template class BatchStream<double>;

}  // namespace landcls
