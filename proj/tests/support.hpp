#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "landcls/data.hpp"
#include "landcls/image.hpp"
#include "landcls/model.hpp"
#include "landcls/optim.hpp"
#include "landcls/rng.hpp"
#include "landcls/tensor.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "landcls_test_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline const std::vector<std::string>& land_classes() {
  static const std::vector<std::string> names{"farmland", "forest", "mountain", "transmission_tower"};
  return names;
}

template <typename T>
landcls::Tensor<T> random_tensor(const landcls::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  landcls::Rng rng(seed);
  landcls::Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Class c is a bright square in quadrant c on a dim noisy background, with a
// class-specific tint.
inline landcls::Image blob_image(std::size_t cls, std::size_t size, std::uint64_t seed) {
  landcls::Rng rng(seed);
  landcls::Image img(size, size);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(40));
  const std::size_t half = size / 2;
  const std::size_t x0 = (cls % 2) * half;
  const std::size_t y0 = (cls / 2) * half;
  static const std::uint8_t tint[4][3] = {{250, 200, 60}, {60, 230, 80}, {180, 180, 200}, {230, 70, 200}};
  for (std::size_t y = y0; y < y0 + half; ++y) {
    for (std::size_t x = x0; x < x0 + half; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const int v = tint[cls % 4][c] - static_cast<int>(rng.below(30));
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return img;
}

// In-memory 4-class blob dataset, per_class images of each class.
inline landcls::DatasetManifest blob_manifest(std::size_t per_class, std::size_t size = 8, std::uint64_t seed = 11) {
  std::vector<landcls::ImageRecord> recs;
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      landcls::ImageRecord r;
      r.class_name = land_classes()[c];
      r.source_path = "mem/" + r.class_name + "/" + std::to_string(i) + ".png";
      r.width = size;
      r.height = size;
      r.pixels = std::make_shared<landcls::Image>(blob_image(c, size, landcls::derive_seed(seed, {c, i})));
      recs.push_back(std::move(r));
    }
  }
  return landcls::DatasetManifest(std::move(recs));
}

// Same images written as PNG files under root/<class>/.
inline void write_blob_tree(const fs::path& root, std::size_t per_class, std::size_t size = 8, std::uint64_t seed = 11) {
  for (std::size_t c = 0; c < 4; ++c) {
    fs::create_directories(root / land_classes()[c]);
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%03zu.png", i);
      landcls::write_png(blob_image(c, size, landcls::derive_seed(seed, {c, i})),
                         (root / land_classes()[c] / name).string());
    }
  }
}

// Manifest of placeholder records (no pixels) for split arithmetic.
inline landcls::DatasetManifest counting_manifest(const std::vector<std::string>& classes, std::size_t per_class) {
  std::vector<landcls::ImageRecord> recs;
  for (const auto& cls : classes) {
    for (std::size_t i = 0; i < per_class; ++i) {
      landcls::ImageRecord r;
      r.class_name = cls;
      r.source_path = cls + "/" + std::to_string(i) + ".jpg";
      recs.push_back(std::move(r));
    }
  }
  return landcls::DatasetManifest(std::move(recs));
}

// |a - n| / max(|a|, |n|, 1e-4), the floor keeping near-zero entries from
// dominating.
inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / denom;
}

// Max relative error between `analytic` and central differences of f over
// every element of x. f must read x through the reference.
template <typename F>
double fd_check(landcls::Tensor<double>& x, const landcls::Tensor<double>& analytic, F&& f, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

inline double weighted_sum(const landcls::Tensor<double>& y, const landcls::Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

inline landcls::Tensor<std::int64_t> labels_of(std::initializer_list<std::int64_t> v) {
  return landcls::Tensor<std::int64_t>(landcls::Shape{v.size()}, std::vector<std::int64_t>(v));
}

// Whole-model check: loss = cross-entropy of the train-mode forward with
// fixed dropout masks. Returns the max relative error over all trainable
// parameters.
inline double model_fd_check(landcls::Model<double>& model, const landcls::Tensor<double>& x,
                             const landcls::Tensor<std::int64_t>& labels, std::uint64_t dropout_seed) {
  using namespace landcls;
  const ForwardOptions opts{Mode::train, dropout_seed, 0};
  auto loss_at = [&] {
    const auto fr = model_forward(model, x, opts);
    return cross_entropy_with_softmax(fr.logits, labels).loss;
  };
  const auto fr = model_forward(model, x, opts);
  const auto loss = cross_entropy_with_softmax(fr.logits, labels);
  const NamedTensors<double> grads = model_backward(model, fr.trace, loss.logit_grad);
  double worst = 0.0;
  for (const auto& [name, g] : grads) {
    Tensor<double>& p = model.mutable_parameters().at(name);
    worst = std::max(worst, fd_check(p, g, loss_at));
  }
  return worst;
}

// Tent-kernel formulation: each output pixel is the sum over all source
// pixels of tri(sx - i) * tri(sy - j), with the source coordinate clamped.
inline double tent_sample(const landcls::Image& img, double sx, double sy, std::size_t c) {
  sx = std::min(std::max(sx, 0.0), static_cast<double>(img.width - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(img.height - 1));
  double acc = 0;
  const long x_lo = static_cast<long>(std::floor(sx)) - 1, y_lo = static_cast<long>(std::floor(sy)) - 1;
  for (long j = y_lo; j <= y_lo + 3; ++j) {
    for (long i = x_lo; i <= x_lo + 3; ++i) {
      if (i < 0 || j < 0 || i >= static_cast<long>(img.width) || j >= static_cast<long>(img.height)) continue;
      const double wx = std::max(0.0, 1.0 - std::abs(sx - static_cast<double>(i)));
      const double wy = std::max(0.0, 1.0 - std::abs(sy - static_cast<double>(j)));
      acc += wx * wy * img.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c);
    }
  }
  return acc;
}

// Largest quantization-step gap between resize_bilinear and the tent oracle.
inline int resize_oracle_error(const landcls::Image& src, std::size_t target) {
  const landcls::Image out = landcls::resize_bilinear(src, target);
  if (out.width != target || out.height != target) return 256;
  const double scale = static_cast<double>(src.width) / static_cast<double>(target);
  int worst = 0;
  for (std::size_t y = 0; y < target; ++y)
    for (std::size_t x = 0; x < target; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = tent_sample(src, (x + 0.5) * scale - 0.5, (y + 0.5) * scale - 0.5, c);
        worst = std::max(worst, std::abs(static_cast<int>(out.at(x, y, c)) - static_cast<int>(std::lround(v))));
      }
  return worst;
}

inline landcls::Image coordinate_image(std::size_t w, std::size_t h) {
  landcls::Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(x & 255);
      img.at(x, y, 1) = static_cast<std::uint8_t>(x >> 8);
      img.at(x, y, 2) = static_cast<std::uint8_t>(y & 255);
    }
  return img;
}

inline landcls::Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  landcls::Rng rng(seed);
  landcls::Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

struct PaperRow {
  landcls::LayerKind kind;
  std::size_t elements;
  std::size_t params;
};

// The summary table of the paper CNN, activations folded into their layers.
inline const std::vector<PaperRow> kPaperRows{
    {landcls::LayerKind::conv2d, 112 * 112 * 64, 9472},  {landcls::LayerKind::maxpool, 55 * 55 * 64, 0},
    {landcls::LayerKind::conv2d, 55 * 55 * 128, 73856},  {landcls::LayerKind::maxpool, 27 * 27 * 128, 0},
    {landcls::LayerKind::conv2d, 27 * 27 * 256, 295168}, {landcls::LayerKind::conv2d, 27 * 27 * 256, 590080},
    {landcls::LayerKind::maxpool, 13 * 13 * 256, 0},     {landcls::LayerKind::flatten, 43264, 0},
    {landcls::LayerKind::dense, 512, 22151680},         {landcls::LayerKind::dropout, 512, 0},
    {landcls::LayerKind::dense, 512, 262656},           {landcls::LayerKind::dropout, 512, 0},
    {landcls::LayerKind::dense, 4, 2052},
};

}  // namespace testsupport
