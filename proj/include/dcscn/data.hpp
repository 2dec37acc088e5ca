#pragma once

// Samples, datasets, the three augmentation transforms, preprocessing, the
// synthetic furnace-scene generator, and PNG folder ingestion/export.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcscn/errors.hpp"
#include "dcscn/numerics.hpp"
#include "dcscn/png_io.hpp"

namespace dcscn {

struct LabeledSample {
  Tensor3D image;
  std::size_t label = 0;
  std::optional<Matrix2D> mask;  // {0,1} at image resolution
};

enum class Split { train, val, test, unspecified };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "unspecified";
  }
}

struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<std::string> class_names;
  Split split = Split::unspecified;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t height() const { return samples.at(0).image.height(); }
  std::size_t width() const { return samples.at(0).image.width(); }
  std::size_t channels() const { return samples.at(0).image.channels(); }

  /// Non-empty, uniform image shape, labels in range, masks at image resolution.
  void validate() const {
    if (samples.empty()) throw ArgumentError("dataset is empty");
    const auto& first = samples.front().image;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (s.image.height() != first.height() || s.image.width() != first.width() ||
          s.image.channels() != first.channels()) {
        throw ShapeError("dataset sample " + std::to_string(i) + " has a different image shape");
      }
      if (s.label >= class_names.size()) {
        throw ArgumentError("dataset sample " + std::to_string(i) + " label out of range");
      }
      if (s.mask && (s.mask->rows() != s.image.height() || s.mask->cols() != s.image.width())) {
        throw DimensionError("dataset sample " + std::to_string(i) + " mask size mismatch");
      }
    }
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& s : samples) ++counts.at(s.label);
    return counts;
  }
};

inline Matrix2D one_hot(const Dataset& ds) {
  Matrix2D y(ds.size(), ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) y(i, ds.samples[i].label) = 1.0;
  return y;
}

// ---------------------------------------------------------------------------
// Augmentation (inputs on the [0,1] pixel scale)

inline Matrix2D flip_horizontal(const Matrix2D& m) {
  Matrix2D out(m.rows(), m.cols());
  for (std::size_t y = 0; y < m.rows(); ++y)
    for (std::size_t x = 0; x < m.cols(); ++x) out(y, x) = m(y, m.cols() - x - 1);
  return out;
}

inline Tensor3D flip_horizontal(const Tensor3D& img) {
  Tensor3D out(img.height(), img.width(), img.channels());
  const std::size_t w = img.width();
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < w; ++x) out(y, x, c) = img(y, w - x - 1, c);
  return out;
}

inline constexpr double kContrastGain = 1.5;

inline Tensor3D adjust_contrast(const Tensor3D& img) {
  return map_values(img, [](double v) { return std::clamp(kContrastGain * (v - 0.5) + 0.5, 0.0, 1.0); });
}

/// in + N(0, eta^2), clamped to [0,1].
inline Tensor3D add_gaussian_noise(const Tensor3D& img, double eta, RngStream& rng) {
  if (!(eta >= 0.0)) throw ArgumentError("add_gaussian_noise: eta must be >= 0");
  if (eta == 0.0) return img;
  return map_values(img, [&](double v) { return std::clamp(v + eta * rng.normal(), 0.0, 1.0); });
}

/// Originals, then flipped, contrast-adjusted and noised copies, in four blocks.
/// Only the flip moves masks.
inline Dataset augment_dataset(const Dataset& ds, double eta, RngStream& rng) {
  Dataset out;
  out.class_names = ds.class_names;
  out.split = ds.split;
  out.samples.reserve(ds.size() * 4);
  for (const auto& s : ds.samples) out.samples.push_back(s);
  for (const auto& s : ds.samples) {
    LabeledSample f{flip_horizontal(s.image), s.label, std::nullopt};
    if (s.mask) f.mask = flip_horizontal(*s.mask);
    out.samples.push_back(std::move(f));
  }
  for (const auto& s : ds.samples) out.samples.push_back({adjust_contrast(s.image), s.label, s.mask});
  for (const auto& s : ds.samples) {
    out.samples.push_back({add_gaussian_noise(s.image, eta, rng), s.label, s.mask});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Center crop to crop x crop, bilinear resize to resize x resize, then map
/// [0,1] to [-1,1].
inline Tensor3D preprocess(const Tensor3D& raw, std::size_t crop, std::size_t resize) {
  if (crop == 0 || resize == 0) throw ArgumentError("preprocess: crop and resize must be positive");
  if (crop > raw.height() || crop > raw.width()) {
    throw DimensionError("preprocess: crop " + std::to_string(crop) + " exceeds image " +
                         std::to_string(raw.height()) + "x" + std::to_string(raw.width()));
  }
  const std::size_t y0 = (raw.height() - crop) / 2;
  const std::size_t x0 = (raw.width() - crop) / 2;
  Tensor3D out(resize, resize, raw.channels());
  for (std::size_t c = 0; c < raw.channels(); ++c) {
    Matrix2D cropped(crop, crop);
    for (std::size_t y = 0; y < crop; ++y)
      for (std::size_t x = 0; x < crop; ++x) cropped(y, x) = raw(y0 + y, x0 + x, c);
    Matrix2D resized = bilinear_resize(cropped, resize, resize);
    for (double& v : resized.values()) v = std::clamp(2.0 * v - 1.0, -1.0, 1.0);
    out.set_channel(c, resized);
  }
  return out;
}

/// Same crop/resize geometry applied to a {0,1} mask (bilinear then >= 0.5).
inline Matrix2D preprocess_mask(const Matrix2D& mask, std::size_t crop, std::size_t resize) {
  if (crop > mask.rows() || crop > mask.cols()) throw DimensionError("preprocess_mask: crop exceeds mask");
  const std::size_t y0 = (mask.rows() - crop) / 2;
  const std::size_t x0 = (mask.cols() - crop) / 2;
  Matrix2D cropped(crop, crop);
  for (std::size_t y = 0; y < crop; ++y)
    for (std::size_t x = 0; x < crop; ++x) cropped(y, x) = mask(y0 + y, x0 + x);
  Matrix2D out = bilinear_resize(cropped, resize, resize);
  for (double& v : out.values()) v = v >= 0.5 ? 1.0 : 0.0;
  return out;
}

inline Dataset preprocess_dataset(const Dataset& ds, std::size_t crop, std::size_t resize) {
  Dataset out;
  out.class_names = ds.class_names;
  out.split = ds.split;
  out.samples.reserve(ds.size());
  for (const auto& s : ds.samples) {
    LabeledSample p{preprocess(s.image, crop, resize), s.label, std::nullopt};
    if (s.mask) p.mask = preprocess_mask(*s.mask, crop, resize);
    out.samples.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic furnace scenes

inline const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names{"normal", "underburn", "overheating", "abnormal_exhaust"};
  return names;
}

namespace detail {

struct Region {
  enum class Shape { disk, rect } shape = Shape::disk;
  double cy = 0, cx = 0, radius = 0;      // disk
  double y0 = 0, y1 = 0, x0 = 0, x1 = 0;  // rect, half-open
  double intensity = 0;

  bool contains(double y, double x) const {
    if (shape == Shape::disk) {
      const double dy = y - cy, dx = x - cx;
      return dy * dy + dx * dx <= radius * radius;
    }
    return y >= y0 && y < y1 && x >= x0 && x < x1;
  }
};

inline Region synthetic_region(std::size_t label, double s, RngStream& rng) {
  Region r;
  const double jy = rng.uniform(-0.05, 0.05) * s;
  const double jx = rng.uniform(-0.05, 0.05) * s;
  switch (label) {
    case 0:  // normal: small centered flame
      r.shape = Region::Shape::disk;
      r.cy = 0.5 * s + jy;
      r.cx = 0.5 * s + jx;
      r.radius = 0.09 * s * rng.uniform(0.9, 1.1);
      r.intensity = rng.uniform(0.6, 0.72);
      break;
    case 1: {  // underburn: glowing side wall
      r.shape = Region::Shape::rect;
      const bool right = rng.uniform01() < 0.5;
      const double width = 0.16 * s * rng.uniform(0.9, 1.1);
      const double inset = 0.04 * s + std::abs(jx) * 0.5;
      r.x0 = right ? s - inset - width : inset;
      r.x1 = r.x0 + width;
      r.y0 = 0.3 * s + jy;
      r.y1 = r.y0 + 0.4 * s * rng.uniform(0.9, 1.1);
      r.intensity = rng.uniform(0.62, 0.8);
      break;
    }
    case 2:  // overheating: large, very bright centered blob
      r.shape = Region::Shape::disk;
      r.cy = 0.5 * s + jy;
      r.cx = 0.5 * s + jx;
      r.radius = 0.2 * s * rng.uniform(0.9, 1.1);
      r.intensity = rng.uniform(0.88, 0.98);
      break;
    default: {  // abnormal exhaust: streak below the opening
      r.shape = Region::Shape::rect;
      const double width = 0.08 * s * rng.uniform(0.9, 1.1);
      r.x0 = 0.5 * s + jx - 0.5 * width;
      r.x1 = r.x0 + width;
      r.y0 = 0.55 * s + 0.5 * std::abs(jy);
      r.y1 = std::min(s, r.y0 + 0.38 * s * rng.uniform(0.9, 1.1));
      r.intensity = rng.uniform(0.68, 0.85);
      break;
    }
  }
  return r;
}

}  // namespace detail

inline constexpr double kSyntheticNoise = 0.04;

/// Grayscale scenes on the [0,1] scale: dark noisy background plus one bright
/// class-characteristic region whose pixels form the mask. Samples are
/// emitted class-interleaved (0,1,2,3,0,1,...).
inline Dataset generate_synthetic(std::size_t n_per_class, std::size_t size, RngStream& rng) {
  if (size < 32) throw ArgumentError("generate_synthetic: size must be >= 32");
  Dataset ds;
  ds.class_names = synthetic_class_names();
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t label = 0; label < 4; ++label) {
      const double base = rng.uniform(0.08, 0.16);
      const double tilt = rng.uniform(0.0, 0.06);
      const detail::Region region = detail::synthetic_region(label, s, rng);
      LabeledSample sample{Tensor3D(size, size, 1), label, Matrix2D(size, size)};
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double py = static_cast<double>(y) + 0.5;
          const double px = static_cast<double>(x) + 0.5;
          double v = base + tilt * py / s;
          if (region.contains(py, px)) {
            v = region.intensity;
            (*sample.mask)(y, x) = 1.0;
          }
          sample.image(y, x, 0) = std::clamp(v + kSyntheticNoise * rng.normal(), 0.0, 1.0);
        }
      }
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// PNG folders: root/<class>/*.png with optional root/<class>_mask/<stem>.png

inline constexpr const char* kMaskSuffix = "_mask";

inline Tensor3D to_tensor(const png::Image8& img) {
  Tensor3D t(img.height, img.width, img.channels);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) t(y, x, c) = img.at(y, x, c) / 255.0;
  return t;
}

inline png::Image8 to_image8(const Tensor3D& t) {
  png::Image8 img{t.width(), t.height(), t.channels(), {}};
  img.pixels.resize(t.size());
  for (std::size_t y = 0; y < t.height(); ++y)
    for (std::size_t x = 0; x < t.width(); ++x)
      for (std::size_t c = 0; c < t.channels(); ++c) {
        const double v = std::clamp(t(y, x, c), 0.0, 1.0);
        img.pixels[(y * t.width() + x) * t.channels() + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  return img;
}

inline Dataset load_image_folder(const std::filesystem::path& root, Split split = Split::unspecified) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IngestionError("dataset root is not a directory: " + root.string());

  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 5 && name.ends_with(kMaskSuffix)) continue;
    classes.push_back(name);
  }
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw IngestionError("no class directories under " + root.string());

  Dataset ds;
  ds.class_names = classes;
  ds.split = split;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    const fs::path class_dir = root / classes[label];
    const fs::path mask_dir = root / (classes[label] + kMaskSuffix);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      LabeledSample sample{to_tensor(png::read(file)), label, std::nullopt};
      const fs::path mask_file = mask_dir / file.filename();
      if (fs::exists(mask_file)) {
        const png::Image8 m = png::read(mask_file);
        if (m.width != sample.image.width() || m.height != sample.image.height()) {
          throw IngestionError("mask size mismatch: " + mask_file.string() + " is " + std::to_string(m.width) +
                               "x" + std::to_string(m.height) + ", image is " +
                               std::to_string(sample.image.width()) + "x" +
                               std::to_string(sample.image.height()));
        }
        Matrix2D mask(m.height, m.width);
        for (std::size_t y = 0; y < m.height; ++y)
          for (std::size_t x = 0; x < m.width; ++x) mask(y, x) = m.at(y, x, 0) > 127 ? 1.0 : 0.0;
        sample.mask = std::move(mask);
      }
      ds.samples.push_back(std::move(sample));
    }
  }
  if (ds.samples.empty()) throw IngestionError("no PNG images found under " + root.string());
  for (std::size_t i = 1; i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[0].image;
    const auto& b = ds.samples[i].image;
    if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
      throw IngestionError("image shape differs from the first image: sample " + std::to_string(i) + " under " +
                           root.string());
    }
  }
  return ds;
}

/// Writes a [0,1]-scale dataset in the layout load_image_folder reads.
inline void save_image_folder(const Dataset& ds, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (const auto& name : ds.class_names) {
    fs::create_directories(root / name, ec);
    if (ec) throw IoError("cannot create " + (root / name).string());
  }
  std::vector<std::size_t> next(ds.num_classes(), 0);
  char stem[32];
  for (const auto& s : ds.samples) {
    const std::string& cls = ds.class_names.at(s.label);
    std::snprintf(stem, sizeof stem, "%05zu.png", next[s.label]++);
    png::write(root / cls / stem, to_image8(s.image));
    if (s.mask) {
      const fs::path mask_dir = root / (cls + kMaskSuffix);
      fs::create_directories(mask_dir, ec);
      if (ec) throw IoError("cannot create " + mask_dir.string());
      Tensor3D m(s.mask->rows(), s.mask->cols(), 1);
      m.set_channel(0, *s.mask);
      png::write(mask_dir / stem, to_image8(m));
    }
  }
}

}  // namespace dcscn
