#pragma once

// Difference-of-Gaussians kernels, the layered network they form, and the
// inference path (forward pass, flattened feature rows, prediction, metrics).

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dcscn/data.hpp"
#include "dcscn/errors.hpp"
#include "dcscn/numerics.hpp"
#include "dcscn/parallel.hpp"

namespace dcscn {

inline constexpr std::size_t kPoolWindow = 2;

/// psi(x, y) = 1/(2 pi) [exp(-(x^2+y^2) / (2 xi^2)) - (1/r) exp(-(x^2+y^2) / (2 r^2 xi^2))]
inline double dog_value(double x, double y, double xi, double r) noexcept {
  const double d2 = x * x + y * y;
  return (std::exp(-d2 / (2.0 * xi * xi)) - std::exp(-d2 / (2.0 * r * r * xi * xi)) / r) /
         (2.0 * std::numbers::pi);
}

/// k x k grid of psi centred at zero: entry (i, j) sits at x = j - (k-1)/2,
/// y = i - (k-1)/2.
inline Matrix2D dog_weights(double xi, double r, std::size_t k) {
  if (k == 0 || k % 2 == 0) throw ArgumentError("dog_weights: kernel side must be odd");
  if (!(xi > 0.0) || !(r > 0.0)) throw ArgumentError("dog_weights: xi and r must be positive");
  Matrix2D w(k, k);
  const double half = static_cast<double>(k - 1) / 2.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      w(i, j) = dog_value(static_cast<double>(j) - half, static_cast<double>(i) - half, xi, r);
  return w;
}

struct DoGKernel {
  double xi = 1.0;
  double r = 1.0;
  std::size_t k = 3;
  double bias = 0.0;
  Matrix2D weights;

  static DoGKernel make(double xi, double r, std::size_t k, double bias) {
    return {xi, r, k, bias, dog_weights(xi, r, k)};
  }
  friend bool operator==(const DoGKernel&, const DoGKernel&) = default;
};

struct LayerSpec {
  std::vector<DoGKernel> kernels;
  bool pool_after = false;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

/// Where one kernel's flattened map lives inside the feature row.
struct LayoutEntry {
  std::size_t layer = 0;  // 0-based
  std::size_t kernel = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

struct MapShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const noexcept { return height * width; }
};

/// Spatial size after a valid k x k correlation and optional 2x2 pooling.
/// Returns a zero shape if the input is too small for the kernel.
inline MapShape layer_output_shape(MapShape in, std::size_t k, bool pool) noexcept {
  if (in.height < k || in.width < k) return {};
  MapShape out{in.height - k + 1, in.width - k + 1};
  if (pool) {
    if (out.height < kPoolWindow || out.width < kPoolWindow) return {};
    out = {out.height / kPoolWindow, out.width / kPoolWindow};
  }
  return out;
}

struct NetworkModel {
  InputSpec input;
  std::vector<std::string> class_names;
  std::vector<LayerSpec> layers;
  Matrix2D readout;  // D x m
  std::vector<LayoutEntry> layout;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t feature_dim() const noexcept {
    return layout.empty() ? 0 : layout.back().offset + layout.back().length;
  }
  std::size_t kernel_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kernels.size();
    return n;
  }

  /// Map shape entering each layer, plus one trailing entry for the last output.
  std::vector<MapShape> map_shapes() const {
    std::vector<MapShape> shapes{{input.height, input.width}};
    for (const auto& l : layers) {
      const std::size_t k = l.kernels.empty() ? 1 : l.kernels.front().k;
      shapes.push_back(layer_output_shape(shapes.back(), k, l.pool_after));
    }
    return shapes;
  }

  /// Recomputes the contiguous feature layout from the layer list.
  void rebuild_layout() {
    layout.clear();
    const auto shapes = map_shapes();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::size_t len = shapes[l + 1].size();
      for (std::size_t c = 0; c < layers[l].kernels.size(); ++c) {
        layout.push_back({l, c, offset, len});
        offset += len;
      }
    }
  }

  void validate() const {
    if (input.height == 0 || input.width == 0 || input.channels == 0) throw ShapeError("model: empty input spec");
    const auto shapes = map_shapes();
    std::size_t offset = 0, idx = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.kernels.empty()) throw ShapeError("model: layer " + std::to_string(l + 1) + " has no kernels");
      if (shapes[l + 1].size() == 0) throw ShapeError("model: layer " + std::to_string(l + 1) + " collapses");
      for (std::size_t c = 0; c < layer.kernels.size(); ++c, ++idx) {
        const auto& kern = layer.kernels[c];
        if (kern.k != layer.kernels.front().k) throw ShapeError("model: mixed kernel sizes in a layer");
        if (kern.weights.rows() != kern.k || kern.weights.cols() != kern.k) {
          throw ShapeError("model: kernel weight grid does not match k");
        }
        if (idx >= layout.size()) throw ShapeError("model: layout shorter than kernel list");
        const auto& e = layout[idx];
        if (e.layer != l || e.kernel != c || e.offset != offset || e.length != shapes[l + 1].size()) {
          throw ShapeError("model: layout entry " + std::to_string(idx) + " is inconsistent");
        }
        offset += e.length;
      }
    }
    if (idx != layout.size()) throw ShapeError("model: layout longer than kernel list");
    if (!layers.empty() && (readout.rows() != offset || readout.cols() != class_names.size())) {
      throw ShapeError("model: readout is " + std::to_string(readout.rows()) + "x" +
                       std::to_string(readout.cols()) + ", expected " + std::to_string(offset) + "x" +
                       std::to_string(class_names.size()));
    }
  }
};

// ---------------------------------------------------------------------------
// Forward pass

/// sigmoid(W * input + b), max-pooled when requested. `input` is the
/// channel-summed layer input: the kernel weights are shared across input
/// channels, so correlating the sum equals summing per-channel correlations.
inline Matrix2D kernel_map(const Matrix2D& input, const DoGKernel& kern, bool pool) {
  Matrix2D m = cross_correlate(input, kern.weights);
  // sigmoid is monotone, so pooling before the activation gives the same map
  if (pool) m = max_pool(m, kPoolWindow);
  Eigen::Map<Eigen::ArrayXd> a(m.values().data(), static_cast<Eigen::Index>(m.size()));
  a = 1.0 / (1.0 + (-(a + kern.bias)).exp());
  return m;
}

/// Output stack of one layer: one post-activation (post-pool) map per kernel.
inline Tensor3D layer_forward(const Tensor3D& input, const LayerSpec& layer) {
  if (input.channels() == 0) throw DimensionError("layer_forward: input has no channels");
  if (layer.kernels.empty()) throw ArgumentError("layer_forward: layer has no kernels");
  const std::size_t k = layer.kernels.front().k;
  if (input.height() < k || input.width() < k) {
    throw BuildError("layer_forward: " + std::to_string(input.height()) + "x" + std::to_string(input.width()) +
                     " input is too small for " + std::to_string(k) + "x" + std::to_string(k) + " kernels");
  }
  const Matrix2D summed = input.channel_sum();
  std::vector<Matrix2D> maps;
  maps.reserve(layer.kernels.size());
  for (const auto& kern : layer.kernels) maps.push_back(kernel_map(summed, kern, layer.pool_after));
  return Tensor3D::from_planes(maps);
}

inline void check_input(const NetworkModel& model, const Tensor3D& img) {
  if (img.height() != model.input.height || img.width() != model.input.width ||
      img.channels() != model.input.channels) {
    throw ShapeError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) + "x" +
                     std::to_string(img.channels()) + " does not match model input " +
                     std::to_string(model.input.height) + "x" + std::to_string(model.input.width) + "x" +
                     std::to_string(model.input.channels));
  }
}

/// Runs layers [0, upto) and returns every layer's output stack.
inline std::vector<Tensor3D> forward_stacks(const NetworkModel& model, const Tensor3D& img,
                                            std::size_t upto) {
  check_input(model, img);
  std::vector<Tensor3D> stacks;
  stacks.reserve(upto);
  const Tensor3D* current = &img;
  for (std::size_t l = 0; l < upto && l < model.layers.size(); ++l) {
    stacks.push_back(layer_forward(*current, model.layers[l]));
    current = &stacks.back();
  }
  return stacks;
}

/// Flattened feature row: every kernel's map in layout order.
inline std::vector<double> feature_row(const NetworkModel& model, const Tensor3D& img) {
  const auto stacks = forward_stacks(model, img, model.layers.size());
  std::vector<double> row;
  row.reserve(model.feature_dim());
  for (const auto& s : stacks) row.insert(row.end(), s.values().begin(), s.values().end());
  return row;
}

inline Matrix2D feature_matrix(const Dataset& ds, const NetworkModel& model, std::size_t workers = 1) {
  if (model.layers.empty()) throw ArgumentError("feature_matrix: model has no kernels");
  Matrix2D phi(ds.size(), model.feature_dim());
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    const auto row = feature_row(model, ds.samples[i].image);
    std::copy(row.begin(), row.end(), phi.row(i).begin());
  });
  return phi;
}

// ---------------------------------------------------------------------------
// Prediction and metrics

struct Prediction {
  std::vector<double> probabilities;
  std::size_t label = 0;
};

inline std::vector<double> output_scores(const NetworkModel& model, std::span<const double> features) {
  std::vector<double> scores(model.num_classes(), 0.0);
  if (model.layers.empty()) return scores;
  for (std::size_t d = 0; d < features.size(); ++d) {
    const double f = features[d];
    const auto w = model.readout.row(d);
    for (std::size_t q = 0; q < scores.size(); ++q) scores[q] += f * w[q];
  }
  return scores;
}

inline Prediction predict(const NetworkModel& model, const Tensor3D& img) {
  check_input(model, img);
  const auto scores = output_scores(model, feature_row(model, img));
  Prediction p{softmax(scores), 0};
  p.label = argmax(p.probabilities);
  return p;
}

inline std::vector<Prediction> predict_batch(const NetworkModel& model, const Dataset& ds, std::size_t workers = 1) {
  std::vector<Prediction> out(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) { out[i] = predict(model, ds.samples[i].image); });
  return out;
}

/// Fraction of samples whose predicted label matches; for single-label
/// multi-class data this is the one-vs-rest (TP + TN) / N aggregate.
inline double accuracy(std::span<const Prediction> preds, const Dataset& ds) {
  if (ds.empty()) throw ArgumentError("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) correct += preds[i].label == ds.samples[i].label;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

inline double accuracy(const NetworkModel& model, const Dataset& ds, std::size_t workers = 1) {
  const auto preds = predict_batch(model, ds, workers);
  return accuracy(preds, ds);
}

struct ParamCount {
  std::size_t raw = 0;
  double mb = 0.0;
};

/// sum_l (k k C_{l-1} + 1) C_l + (D + 1) m, with 4-byte parameters.
inline ParamCount param_count(const NetworkModel& model) {
  std::size_t raw = 0;
  std::size_t prev = model.input.channels;
  for (const auto& layer : model.layers) {
    const std::size_t k = layer.kernels.empty() ? 0 : layer.kernels.front().k;
    raw += (k * k * prev + 1) * layer.kernels.size();
    prev = layer.kernels.size();
  }
  raw += (model.feature_dim() + 1) * model.num_classes();
  return {raw, static_cast<double>(raw) * 4.0 / static_cast<double>(1u << 20)};
}

}  // namespace dcscn
