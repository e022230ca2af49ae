#include "landcls/weights_io.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <regex>
#include <set>

#include "landcls/errors.hpp"

namespace landcls {

namespace fs = std::filesystem;

const Tensor<float>* WeightContainer::find(const std::string& name) const noexcept {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::size_t WeightContainer::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& e : entries) total += e.second.size();
  return total;
}

bool WeightContainer::operator==(const WeightContainer& o) const {
  if (format_version != o.format_version || architecture_id != o.architecture_id ||
      preprocessing != o.preprocessing || entries.size() != o.entries.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != o.entries[i].first || !bit_equal(entries[i].second, o.entries[i].second)) return false;
  }
  return true;
}

bool is_conventional_name(const std::string& name) {
  static const std::regex re(
      "[a-z0-9_]+(/[a-z0-9_]+)*/(conv2d|depthwise_conv2d|dense|batchnorm)_[0-9]+/"
      "(weight|bias|gamma|beta|moving_mean|moving_variance)");
  return std::regex_match(name, re);
}

void validate_container(const WeightContainer& c) {
  std::set<std::string> seen;
  std::vector<std::string> problems;
  for (const auto& [name, t] : c.entries) {
    if (!seen.insert(name).second) problems.push_back("duplicate '" + name + "'");
    if (!is_conventional_name(name)) problems.push_back("unconventional name '" + name + "'");
    if (t.empty()) problems.push_back("'" + name + "' has no shape");
  }
  if (!problems.empty()) {
    std::string msg = "invalid weight container:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ValidationError(msg);
  }
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("string too long for container");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t remaining() const noexcept { return b_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  void set_entry(std::string e) { entry_ = std::move(e); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      std::string msg = std::string("file ends inside ") + what;
      if (!entry_.empty()) msg += " of entry '" + entry_ + "'";
      throw FormatError(FormatErrorKind::truncated, msg, entry_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  std::string entry_;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large files.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

constexpr std::size_t kMaxRank = 8;

}  // namespace

std::vector<std::uint8_t> serialize_weights(const WeightContainer& c) {
  validate_container(c);
  Writer w;
  w.bytes(kWeightsMagic.data(), kWeightsMagic.size());
  w.u32(c.format_version);
  w.str(c.architecture_id);
  w.f32(c.preprocessing.scale);
  for (float o : c.preprocessing.offsets) w.f32(o);
  w.u32(static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& [name, t] : c.entries) {
    w.str(name);
    if (t.rank() > kMaxRank) throw ValidationError("'" + name + "' has rank above " + std::to_string(kMaxRank));
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape().dims()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("'" + name + "' dimension too large");
      w.u32(static_cast<std::uint32_t>(d));
    }
    if constexpr (std::endian::native == std::endian::little) {
      w.bytes(t.data(), t.size() * sizeof(float));
    } else {
      for (float v : t.values()) w.f32(v);
    }
  }
  auto& buf = w.buffer();
  w.u32(crc_of(buf.data() + kWeightsMagic.size(), buf.size() - kWeightsMagic.size()));
  return std::move(buf);
}

WeightContainer parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWeightsMagic.size() || !std::equal(kWeightsMagic.begin(), kWeightsMagic.end(), bytes.begin())) {
    throw FormatError(FormatErrorKind::bad_magic, "file does not start with LWTS");
  }
  Reader r(bytes.subspan(kWeightsMagic.size()));
  WeightContainer c;
  c.format_version = r.u32("format version");
  if (c.format_version != kWeightsFormatVersion) {
    throw FormatError(FormatErrorKind::unsupported_version, "format version " + std::to_string(c.format_version));
  }
  c.architecture_id = r.str("architecture id");
  c.preprocessing.scale = r.f32("preprocessing block");
  for (float& o : c.preprocessing.offsets) o = r.f32("preprocessing block");
  const std::uint32_t count = r.u32("entry count");
  // Each entry takes at least 5 bytes, which bounds a corrupted count.
  if (count > r.remaining() / 5) {
    throw FormatError(FormatErrorKind::truncated, "entry count " + std::to_string(count) + " exceeds file size");
  }
  c.entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    r.set_entry("#" + std::to_string(e));
    std::string name = r.str("entry name");
    r.set_entry(name);
    const std::size_t rank = r.u8("rank");
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError(FormatErrorKind::malformed, "entry '" + name + "' has rank " + std::to_string(rank), name);
    }
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = r.u32("dimensions");
      if (d == 0) throw FormatError(FormatErrorKind::malformed, "entry '" + name + "' has a zero dimension", name);
      if (numel > std::numeric_limits<std::size_t>::max() / 4 / d) {
        throw FormatError(FormatErrorKind::malformed, "entry '" + name + "' is absurdly large", name);
      }
      numel *= d;
    }
    r.need(numel * sizeof(float), "payload");
    std::vector<float> values(numel);
    for (auto& v : values) v = r.f32("payload");
    c.entries.emplace_back(std::move(name), Tensor<float>(Shape(std::move(dims)), std::move(values)));
  }
  r.set_entry({});
  const std::size_t body_end = r.position();
  const std::uint32_t stored = r.u32("checksum");
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::malformed, std::to_string(r.remaining()) + " trailing bytes after checksum");
  }
  const std::uint32_t actual = crc_of(bytes.data() + kWeightsMagic.size(), body_end);
  if (stored != actual) throw FormatError(FormatErrorKind::checksum_mismatch, "stored CRC-32 does not match contents");
  std::set<std::string> seen;
  for (const auto& [name, _] : c.entries) {
    if (!seen.insert(name).second) throw FormatError(FormatErrorKind::malformed, "duplicate entry '" + name + "'", name);
  }
  return c;
}

void save_weights(const WeightContainer& container, const fs::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_weights(container);
  const fs::path tmp = path.string() + ".partial";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError(path.string(), std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      ::close(fd);
      ::unlink(tmp.c_str());
      throw IoError(path.string(), err);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    const std::string err = std::strerror(errno);
    ::unlink(tmp.c_str());
    throw IoError(path.string(), err);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError(path.string(), "rename failed");
  }
}

WeightContainer load_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open weights");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return parse_weights(bytes);
}

template <typename T>
void apply_weights(Model<T>& model, const WeightContainer& container, const ApplyOptions& options) {
  const ModelGraph& g = model.graph();
  const bool base = options.scope == ApplyScope::base;
  const std::string& expected_id = base ? g.base_architecture_id() : g.architecture_id();
  if (base && expected_id.empty()) throw ValidationError("graph " + g.architecture_id() + " has no imported base");
  if (container.architecture_id != expected_id) {
    throw ValidationError("container architecture '" + container.architecture_id + "' does not match graph '" +
                          expected_id + "'");
  }
  if (base && !model.populated()) throw StateError("initialize head parameters before importing a base");

  std::map<std::string, const Tensor<float>*> available;
  for (const auto& [name, t] : container.entries) {
    if (!available.emplace(name, &t).second) throw ValidationError("duplicate entry '" + name + "'");
  }
  std::vector<std::string> missing, mismatched, extra;
  NamedTensors<T> next = base ? model.parameters() : NamedTensors<T>{};
  std::set<std::string> used;
  for (const auto& p : g.parameters()) {
    if (base && p.layer >= g.base_layer_count()) continue;
    auto it = available.find(p.name);
    if (it == available.end()) {
      missing.push_back(p.name);
      continue;
    }
    used.insert(p.name);
    if (it->second->shape() != p.shape) {
      mismatched.push_back(p.name + " " + it->second->shape().to_string() + " vs " + p.shape.to_string());
      continue;
    }
    next.insert_or_assign(p.name, it->second->template cast<T>());
  }
  if (options.strict) {
    for (const auto& [name, _] : available) {
      if (!used.count(name)) extra.push_back(name);
    }
  }
  if (!missing.empty() || !mismatched.empty() || !extra.empty()) {
    std::string msg = "weights do not fit graph " + g.architecture_id() + ":";
    auto list = [&](const char* label, const std::vector<std::string>& v) {
      if (v.empty()) return;
      msg += std::string(" ") + label;
      for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? ", " : " ") + v[i];
      msg += ";";
    };
    list("missing", missing);
    list("shape mismatch", mismatched);
    list("unexpected", extra);
    if (missing.empty() && extra.empty()) throw ShapeError(msg);
    throw ValidationError(msg);
  }
  model.set_parameters(std::move(next));
  model.set_preprocessing(container.preprocessing);
}

template <typename T>
WeightContainer to_container(const Model<T>& model, const Preprocessing& preprocessing) {
  if (!model.populated()) throw StateError("model has no parameters to export");
  WeightContainer c;
  c.architecture_id = model.graph().architecture_id();
  c.preprocessing = preprocessing;
  for (const auto& p : model.graph().parameters()) {
    const Tensor<T>& t = model.parameters().at(p.name);
    if constexpr (std::is_same_v<T, float>) {
      c.entries.emplace_back(p.name, t);
    } else {
      c.entries.emplace_back(p.name, t.template cast<float>());
    }
  }
  return c;
}

template void apply_weights<float>(Model<float>&, const WeightContainer&, const ApplyOptions&);
template void apply_weights<double>(Model<double>&, const WeightContainer&, const ApplyOptions&);
template WeightContainer to_container<float>(const Model<float>&, const Preprocessing&);
template WeightContainer to_container<double>(const Model<double>&, const Preprocessing&);

}  // namespace landcls
