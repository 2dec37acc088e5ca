#pragma once

// Dense kernels shared by every stage of the pipeline: 2-D cross-correlation,
// pooling, resampling, least squares, nuclear norm, activations and the seeded
// random stream that all stochastic choices draw from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcscn/errors.hpp"

namespace dcscn {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major dense matrix of doubles.
class Matrix2D {
 public:
  Matrix2D() = default;
  Matrix2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix2D: data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }
  Matrix2D(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Matrix2D: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix2D identity(std::size_t n) {
    Matrix2D m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Eigen::Map<RowMajorMatrix> eigen() noexcept {
    return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }
  Eigen::Map<const RowMajorMatrix> eigen() const noexcept {
    return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  static Matrix2D from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Matrix2D out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    out.eigen() = m;
    return out;
  }

  friend bool operator==(const Matrix2D&, const Matrix2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Height x width x channels stack stored channel-planar: plane c is a
/// contiguous row-major H x W block.
class Tensor3D {
 public:
  Tensor3D() = default;
  Tensor3D(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
      : h_(height), w_(width), c_(channels), data_(height * width * channels, fill) {}

  static Tensor3D from_planes(const std::vector<Matrix2D>& planes) {
    if (planes.empty()) return {};
    Tensor3D t(planes[0].rows(), planes[0].cols(), planes.size());
    for (std::size_t c = 0; c < planes.size(); ++c) t.set_channel(c, planes[c]);
    return t;
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t channels() const noexcept { return c_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane_size() const noexcept { return h_ * w_; }

  double& operator()(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return data_[(c * h_ + y) * w_ + x];
  }
  double operator()(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return data_[(c * h_ + y) * w_ + x];
  }

  std::span<double> plane(std::size_t c) noexcept { return {data_.data() + c * h_ * w_, h_ * w_}; }
  std::span<const double> plane(std::size_t c) const noexcept {
    return {data_.data() + c * h_ * w_, h_ * w_};
  }

  Matrix2D channel(std::size_t c) const {
    auto p = plane(c);
    return Matrix2D(h_, w_, std::vector<double>(p.begin(), p.end()));
  }
  void set_channel(std::size_t c, const Matrix2D& m) {
    if (m.rows() != h_ || m.cols() != w_) throw DimensionError("Tensor3D: channel shape mismatch");
    std::copy(m.values().begin(), m.values().end(), plane(c).begin());
  }

  /// Elementwise sum over channels.
  Matrix2D channel_sum() const {
    Matrix2D out(h_, w_);
    for (std::size_t c = 0; c < c_; ++c) {
      auto p = plane(c);
      for (std::size_t i = 0; i < p.size(); ++i) out.values()[i] += p[i];
    }
    return out;
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor3D&, const Tensor3D&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::size_t c_ = 0;
  std::vector<double> data_;
};

/// Seeded 64-bit Mersenne Twister. Uniform and Gaussian draws are derived from
/// raw 64-bit outputs so sequences are identical across standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    if (!(lo < hi)) {
      throw ArgumentError("uniform: empty range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + ")");
    }
    double v = lo + (hi - lo) * uniform01();
    return v < hi ? v : std::nextafter(hi, lo);
  }

  /// Index uniform on [0, n).
  std::size_t index(std::size_t n) {
    if (n == 0) throw ArgumentError("index: n must be positive");
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller; the sine branch is discarded.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent child stream, for handing to another owner.
  RngStream split() { return RngStream(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

inline double uniform(RngStream& rng, double lo, double hi) { return rng.uniform(lo, hi); }

// ---------------------------------------------------------------------------
// Spatial kernels

/// Valid-mode cross-correlation, S(i,j) = sum_p sum_n I(i+p, j+n) K(p,n).
inline Matrix2D cross_correlate(const Matrix2D& input, const Matrix2D& kernel) {
  const std::size_t k = kernel.rows();
  if (k == 0 || kernel.cols() != k || k % 2 == 0) {
    throw ArgumentError("cross_correlate: kernel must be square with odd side, got " +
                        std::to_string(kernel.rows()) + "x" + std::to_string(kernel.cols()));
  }
  if (k > input.rows() || k > input.cols()) {
    throw DimensionError("cross_correlate: kernel " + std::to_string(k) + "x" +
                         std::to_string(k) + " larger than input " +
                         std::to_string(input.rows()) + "x" + std::to_string(input.cols()));
  }
  const std::size_t oh = input.rows() - k + 1;
  const std::size_t ow = input.cols() - k + 1;
  Matrix2D out(oh, ow);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t n = 0; n < k; ++n) {
      const double w = kernel(p, n);
      for (std::size_t i = 0; i < oh; ++i) {
        const double* src = input.data() + (i + p) * input.cols() + n;
        double* dst = out.data() + i * ow;
        for (std::size_t j = 0; j < ow; ++j) dst[j] += w * src[j];
      }
    }
  }
  return out;
}

/// Non-overlapping max pooling (stride = window); partial windows are dropped.
inline Matrix2D max_pool(const Matrix2D& input, std::size_t window) {
  if (window == 0) throw ArgumentError("max_pool: window must be >= 1");
  if (window > input.rows() || window > input.cols()) {
    throw DimensionError("max_pool: window " + std::to_string(window) + " exceeds input " +
                         std::to_string(input.rows()) + "x" + std::to_string(input.cols()));
  }
  const std::size_t oh = input.rows() / window;
  const std::size_t ow = input.cols() / window;
  Matrix2D out(oh, ow, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < oh * window; ++i) {
    const double* src = input.data() + i * input.cols();
    double* dst = out.data() + (i / window) * ow;
    for (std::size_t j = 0; j < ow * window; ++j) {
      double& d = dst[j / window];
      d = std::max(d, src[j]);
    }
  }
  return out;
}

/// Bilinear resampling with the align-corners convention.
inline Matrix2D bilinear_resize(const Matrix2D& input, std::size_t out_h, std::size_t out_w) {
  if (input.empty()) throw DimensionError("bilinear_resize: empty input");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: empty target size");
  const std::size_t ih = input.rows();
  const std::size_t iw = input.cols();
  if (ih == out_h && iw == out_w) return input;

  auto source = [](std::size_t dst, std::size_t dst_len, std::size_t src_len) {
    if (dst_len <= 1) return 0.0;
    return static_cast<double>(dst) * static_cast<double>(src_len - 1) /
           static_cast<double>(dst_len - 1);
  };

  Matrix2D out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = source(y, out_h, ih);
    const auto y0 = std::min(static_cast<std::size_t>(sy), ih - 1);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = source(x, out_w, iw);
      const auto x0 = std::min(static_cast<std::size_t>(sx), iw - 1);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = input(y0, x0) + fx * (input(y0, x1) - input(y0, x0));
      const double bottom = input(y1, x0) + fx * (input(y1, x1) - input(y1, x0));
      out(y, x) = top + fy * (bottom - top);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

inline constexpr double kPinvCutoff = 1e-10;

/// argmin_O ||Y - Phi O||_F^2 + ridge ||O||_F^2.
///
/// ridge == 0 uses an SVD pseudoinverse (singular values below 1e-10 of the
/// largest are discarded), giving the minimum-norm solution for rank-deficient
/// Phi. ridge > 0 solves the regularized normal equations in whichever of the
/// primal (D x D) or dual (N x N) forms is smaller.
inline Matrix2D least_squares(const Matrix2D& features, const Matrix2D& targets, double ridge) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw DimensionError("least_squares: empty feature matrix");
  }
  if (targets.rows() != features.rows()) {
    throw DimensionError("least_squares: " + std::to_string(features.rows()) +
                         " feature rows vs " + std::to_string(targets.rows()) + " target rows");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ArgumentError("least_squares: ridge must be >= 0");
  if (!features.all_finite() || !targets.all_finite()) {
    throw NumericError("least_squares: non-finite input");
  }
  const auto phi = features.eigen();
  const auto y = targets.eigen();

  Eigen::MatrixXd solution;
  if (ridge == 0.0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(phi),
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kPinvCutoff);
    solution = svd.solve(Eigen::MatrixXd(y));
  } else if (features.rows() <= features.cols()) {
    Eigen::MatrixXd gram = phi * phi.transpose();
    gram.diagonal().array() += ridge;
    Eigen::MatrixXd alpha = gram.llt().solve(Eigen::MatrixXd(y));
    solution = phi.transpose() * alpha;
  } else {
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += ridge;
    solution = gram.llt().solve(Eigen::MatrixXd(phi.transpose() * y));
  }
  Matrix2D out = Matrix2D::from_eigen(solution);
  if (!out.all_finite()) throw NumericError("least_squares: solution is not finite");
  return out;
}

/// Singular values in descending order. Tall inputs are reduced by a
/// Householder QR first (R shares the singular values of the input).
inline Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.size() == 0) return {};
  if (m.rows() > 2 * m.cols()) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues();
  }
  if (m.cols() > 2 * m.rows()) return singular_values(m.transpose());
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
}

inline double nuclear_norm(const Matrix2D& m) {
  if (!m.all_finite()) throw NumericError("nuclear_norm: non-finite input");
  if (m.empty()) return 0.0;
  return singular_values(m.eigen()).sum();
}

inline double frobenius_norm(const Matrix2D& m) noexcept {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

inline Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix2D out(a.rows(), b.cols());
  out.eigen().noalias() = a.eigen() * b.eigen();
  return out;
}

inline Matrix2D transpose(const Matrix2D& a) {
  Matrix2D out(a.cols(), a.rows());
  out.eigen() = a.eigen().transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

template <typename F>
inline Tensor3D map_values(Tensor3D t, F&& f) {
  for (double& v : t.values()) v = f(v);
  return t;
}
inline Tensor3D sigmoid(Tensor3D t) { return map_values(std::move(t), [](double v) { return sigmoid(v); }); }
inline Tensor3D relu(Tensor3D t) { return map_values(std::move(t), [](double v) { return relu(v); }); }

inline std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& x : out) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

/// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace dcscn
