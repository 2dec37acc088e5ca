#pragma once

// Feature-independence class activation maps and the IoU trustworthiness index.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dcscn/errors.hpp"
#include "dcscn/network.hpp"
#include "dcscn/parallel.hpp"
#include "dcscn/png_io.hpp"

namespace dcscn {

inline constexpr double kDefaultTheta = 0.5;

/// Post-activation, post-pool maps of layer l (1-based).
inline Tensor3D layer_feature_stack(const NetworkModel& model, const Tensor3D& img, std::size_t layer) {
  if (layer < 1 || layer > model.layers.size()) {
    throw ArgumentError("layer " + std::to_string(layer) + " is out of range [1, " +
                        std::to_string(model.layers.size()) + "]");
  }
  return forward_stacks(model, img, layer).back();
}

/// Min-max normalization to [0, 1]; a constant map becomes all zeros.
inline Matrix2D minmax_normalize(const Matrix2D& m, bool* degenerate = nullptr) {
  Matrix2D out(m.rows(), m.cols());
  const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
  const bool flat = m.values().empty() || !(*hi > *lo);
  if (degenerate) *degenerate = flat;
  if (flat) return out;
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = (m.values()[i] - *lo) / span;
  return out;
}

struct Overlay {
  Tensor3D image;
  Matrix2D mask;  // the resized, normalized map that was multiplied in
  bool degenerate = false;
};

inline Overlay overlay_channel(const Matrix2D& map, const Tensor3D& img) {
  Overlay o;
  o.mask = minmax_normalize(bilinear_resize(map, img.height(), img.width()), &o.degenerate);
  o.image = img;
  for (std::size_t c = 0; c < img.channels(); ++c) {
    auto p = o.image.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= o.mask.values()[i];
  }
  return o;
}

inline std::vector<double> class_scores(const NetworkModel& model, const Tensor3D& overlaid) {
  return predict(model, overlaid).probabilities;
}

struct IndependenceScores {
  std::vector<double> values;
  bool degenerate = false;  // the stack has zero nuclear norm
};

/// FC_c = (||A||_* - ||A with column c zeroed||_*) / ||A||_*, with A the
/// (H W) x C matrix whose columns are the channels. Zeroing a column of A
/// zeroes the same column of R in A = QR, so the norms are taken on R.
inline IndependenceScores independence_coefficients(const Tensor3D& stack) {
  const std::size_t c = stack.channels();
  if (c == 0) throw ArgumentError("independence_coefficients: stack has no channels");
  const auto hw = static_cast<Eigen::Index>(stack.height() * stack.width());
  Eigen::MatrixXd a(hw, static_cast<Eigen::Index>(c));
  for (std::size_t j = 0; j < c; ++j) {
    const auto p = stack.plane(j);
    a.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(p.data(), hw);
  }
  Eigen::MatrixXd r;
  if (hw > static_cast<Eigen::Index>(c)) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    r = qr.matrixQR().topRows(static_cast<Eigen::Index>(c)).triangularView<Eigen::Upper>();
  } else {
    r = a;
  }
  IndependenceScores s;
  s.values.assign(c, 0.0);
  const double total = singular_values(r).sum();
  if (!(total > 0.0)) {
    s.degenerate = true;
    return s;
  }
  for (std::size_t j = 0; j < c; ++j) {
    Eigen::MatrixXd masked = r;
    masked.col(static_cast<Eigen::Index>(j)).setZero();
    s.values[j] = std::clamp((total - singular_values(masked).sum()) / total, 0.0, 1.0);
  }
  return s;
}

struct CamMap {
  Matrix2D heat;       // [0, 1], max-normalized
  std::size_t cls = 0;
  Matrix2D highlight;  // {0, 1}
  bool empty = false;  // heat was identically zero
};

inline Matrix2D binarize(const Matrix2D& heat, double theta) {
  Matrix2D out(heat.rows(), heat.cols());
  const double peak = heat.values().empty() ? 0.0 : *std::max_element(heat.values().begin(), heat.values().end());
  if (!(peak > 0.0)) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = heat.values()[i] >= theta * peak ? 1.0 : 0.0;
  return out;
}

/// heat = ReLU(sum_c FC_c S_{c,q} M_c), M_c the upsampled normalized map of
/// channel c and S_{c,q} the class-q probability of the image masked by M_c.
inline CamMap cam(const NetworkModel& model, const Tensor3D& img, std::size_t layer, std::size_t cls,
                  double theta = kDefaultTheta) {
  if (cls >= model.num_classes()) {
    throw ArgumentError("cam: class " + std::to_string(cls) + " out of range for " +
                        std::to_string(model.num_classes()) + " classes");
  }
  if (!(theta >= 0.0 && theta <= 1.0)) throw ArgumentError("cam: theta must lie in [0, 1]");
  const Tensor3D stack = layer_feature_stack(model, img, layer);
  const IndependenceScores fc = independence_coefficients(stack);

  CamMap out;
  out.cls = cls;
  out.heat = Matrix2D(img.height(), img.width());
  // The overlay is formed on the [0, 1] display scale, where masked pixels go
  // black, and mapped back to the model's [-1, 1] scale for scoring.
  Tensor3D display = img;
  for (double& v : display.values()) v = (v + 1.0) / 2.0;
  for (std::size_t c = 0; c < stack.channels(); ++c) {
    if (fc.values[c] == 0.0) continue;
    Overlay o = overlay_channel(stack.channel(c), display);
    for (double& v : o.image.values()) v = 2.0 * v - 1.0;
    const double s = class_scores(model, o.image)[cls];
    out.heat.eigen() += (fc.values[c] * s) * o.mask.eigen();
  }
  for (double& v : out.heat.values()) v = relu(v);
  const double peak = *std::max_element(out.heat.values().begin(), out.heat.values().end());
  if (!(peak > 0.0)) {
    out.heat = Matrix2D(img.height(), img.width());
    out.highlight = Matrix2D(img.height(), img.width());
    out.empty = true;
    return out;
  }
  for (double& v : out.heat.values()) v /= peak;
  out.highlight = binarize(out.heat, theta);
  return out;
}

/// |a and b| / |a or b|; two empty masks agree perfectly.
inline double iou(const Matrix2D& a, const Matrix2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("iou: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values()[i] > 0.5, y = b.values()[i] > 0.5;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline void require_masks(const Dataset& ds) {
  std::string missing;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.samples[i].mask) continue;
    if (count++ < 20) missing += (missing.empty() ? "" : ", ") + std::to_string(i);
  }
  if (count > 20) missing += ", ...";
  if (count > 0) {
    throw ArgumentError(std::to_string(count) + " sample(s) have no mask: " + missing);
  }
}

/// Per-sample IoU of the true-class CAM highlight against the mask.
inline std::vector<double> iou_per_sample(const NetworkModel& model, const Dataset& ds, std::size_t layer,
                                          double theta = kDefaultTheta, std::size_t workers = 1) {
  require_masks(ds);
  std::vector<double> out(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    const auto& s = ds.samples[i];
    out[i] = iou(cam(model, s.image, layer, s.label, theta).highlight, *s.mask);
  });
  return out;
}

inline double iou_dataset(const NetworkModel& model, const Dataset& ds, std::size_t layer,
                          double theta = kDefaultTheta, std::size_t workers = 1) {
  if (ds.empty()) throw ArgumentError("iou_dataset: empty dataset");
  const auto v = iou_per_sample(model, ds, layer, theta, workers);
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

/// Grayscale rendering of a model-scale ([-1, 1]) image; channels are averaged.
inline Matrix2D display_gray(const Tensor3D& img) {
  Matrix2D g = img.channel_sum();
  const double n = static_cast<double>(img.channels());
  for (double& v : g.values()) v = std::clamp((v / n + 1.0) / 2.0, 0.0, 1.0);
  return g;
}

/// Red overlay blended at alpha = heat / 2 over the grayscale image, with the
/// highlight boundary drawn in yellow.
inline png::Image8 render_heatmap(const CamMap& map, const Tensor3D& img) {
  if (map.heat.rows() != img.height() || map.heat.cols() != img.width()) {
    throw DimensionError("render_heatmap: heat map and image sizes differ");
  }
  const Matrix2D gray = display_gray(img);
  const std::size_t h = img.height(), w = img.width();
  png::Image8 out{w, h, 3, std::vector<unsigned char>(w * h * 3)};
  auto on = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return false;
    return map.highlight(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) > 0.5;
  };
  auto byte = [](double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      unsigned char* px = &out.pixels[(y * w + x) * 3];
      const auto iy = static_cast<std::ptrdiff_t>(y), ix = static_cast<std::ptrdiff_t>(x);
      const bool edge = on(iy, ix) && !(on(iy - 1, ix) && on(iy + 1, ix) && on(iy, ix - 1) && on(iy, ix + 1));
      if (edge) {
        px[0] = 255, px[1] = 255, px[2] = 0;
        continue;
      }
      const double g = gray(y, x);
      const double alpha = 0.5 * map.heat(y, x);
      px[0] = byte((1.0 - alpha) * g + alpha);
      px[1] = px[2] = byte((1.0 - alpha) * g);
    }
  }
  return out;
}

inline void export_heatmap(const CamMap& map, const Tensor3D& img, const std::filesystem::path& path) {
  png::write(path, render_heatmap(map, img));
}

inline void write_iou_csv(const Dataset& ds, std::span<const double> values, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "sample_id,class,iou\n";
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", values[i]);
    f << i << ',' << ds.class_names.at(ds.samples[i].label) << ',' << buf << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace dcscn
