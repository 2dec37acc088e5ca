#pragma once

// Incremental construction: candidate DoG kernels are drawn at random, scored
// against the current residual, admitted through the positivity gate, and the
// least-squares readout over all layers is re-solved after every acceptance.

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcscn/data.hpp"
#include "dcscn/network.hpp"
#include "dcscn/numerics.hpp"
#include "dcscn/parallel.hpp"

namespace dcscn {

struct BuildConfig {
  double error_limit = 0.01;  // target rmse
  std::size_t t_max = 100;    // candidates per round
  double xi_lo = 0.5, xi_hi = 5.0;
  double r_lo = 0.8, r_hi = 1.5;
  std::size_t k = 3;
  std::size_t l_max = 10;
  std::size_t c_max = 50;
  std::size_t pool_every = 2;
  std::size_t r_max = 10;   // candidate rounds before giving up on a kernel slot
  double ridge = 0.0;
  // The contraction u_C = 1/C is multiplied by gate_relax^round, round = 0..r_max-1.
  double gate_relax = 0.5;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ArgumentError("build config: " + msg); };
    if (!(error_limit >= 0.0)) fail("error_limit must be >= 0");
    if (t_max == 0) fail("t_max must be >= 1");
    if (!(xi_lo > 0.0) || !(xi_lo < xi_hi)) fail("xi range must satisfy 0 < lo < hi");
    if (!(r_lo > 0.0) || !(r_lo < r_hi)) fail("r range must satisfy 0 < lo < hi");
    if (k == 0 || k % 2 == 0) fail("kernel size k must be odd");
    if (l_max == 0) fail("l_max must be >= 1");
    if (c_max == 0) fail("c_max must be >= 1");
    if (pool_every == 0) fail("pool_every must be >= 1");
    if (r_max == 0) fail("r_max must be >= 1");
    if (!(ridge >= 0.0)) fail("ridge must be >= 0");
    if (!(gate_relax > 0.0 && gate_relax <= 1.0)) fail("gate_relax must be in (0, 1]");
  }
};

/// Layer l (1-based) is followed by pooling when l is a multiple of pool_every.
inline bool pool_after_layer(std::size_t layer_1based, std::size_t pool_every) noexcept {
  return layer_1based % pool_every == 0;
}

inline DoGKernel sample_kernel(const BuildConfig& cfg, RngStream& rng) {
  const double xi = rng.uniform(cfg.xi_lo, cfg.xi_hi);
  const double r = rng.uniform(cfg.r_lo, cfg.r_hi);
  const double bias = rng.uniform(0.0, 1.0);
  return DoGKernel::make(xi, r, cfg.k, bias);
}

// ---------------------------------------------------------------------------
// Readout

struct ReadoutSolution {
  Matrix2D weights;   // D x m
  Matrix2D residual;  // N x m, Y - Phi O
  double rmse = 0.0;  // ||e||_F / sqrt(N m)
};

inline double residual_rmse(const Matrix2D& e) {
  return frobenius_norm(e) / std::sqrt(static_cast<double>(e.rows() * e.cols()));
}

inline ReadoutSolution solve_readout(const Matrix2D& phi, const Matrix2D& y, double ridge) {
  ReadoutSolution s;
  s.weights = least_squares(phi, y, ridge);
  s.residual = y;
  s.residual.eigen().noalias() -= phi.eigen() * s.weights.eigen();
  s.rmse = residual_rmse(s.residual);
  return s;
}

inline Matrix2D hstack(std::span<const Matrix2D> blocks) {
  if (blocks.empty()) return {};
  std::size_t cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Matrix2D out(blocks.front().rows(), cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    out.eigen().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(b.cols())) = b.eigen();
    offset += b.cols();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate scoring

struct CandidateScore {
  std::vector<double> per_class;  // sigma_q
  double total = 0.0;             // sum_q sigma_q
  bool degenerate = false;        // h == 0
  bool qualifies() const noexcept { return !degenerate && total > 0.0; }
};

/// sigma_q = (e_q' h)^2 / (h' h) - (xi + r) u_C (e_q' e_q).
inline CandidateScore candidate_score(const Matrix2D& residual, std::span<const double> h, double xi, double r,
                                      double contraction) {
  if (h.size() != residual.rows()) throw DimensionError("candidate_score: h length differs from residual rows");
  CandidateScore s;
  s.per_class.assign(residual.cols(), 0.0);
  double hh = 0.0;
  for (double v : h) hh += v * v;
  if (hh == 0.0) {
    s.degenerate = true;
    return s;
  }
  for (std::size_t q = 0; q < residual.cols(); ++q) {
    double eh = 0.0, ee = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double e = residual(i, q);
      eh += e * h[i];
      ee += e * e;
    }
    s.per_class[q] = eh * eh / hh - (xi + r) * contraction * ee;
    s.total += s.per_class[q];
  }
  return s;
}

namespace detail {

/// Global mean of sigmoid(W * input + b) after optional pooling, computed
/// without materialising a Matrix2D.
inline double map_mean(const Matrix2D& input, const DoGKernel& kern, bool pool, std::vector<double>& buf) {
  const std::size_t k = kern.k;
  const std::size_t oh = input.rows() - k + 1;
  const std::size_t ow = input.cols() - k + 1;
  buf.assign(oh * ow, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t n = 0; n < k; ++n) {
      const double w = kern.weights(p, n);
      for (std::size_t i = 0; i < oh; ++i) {
        const double* src = input.data() + (i + p) * input.cols() + n;
        double* dst = buf.data() + i * ow;
        for (std::size_t j = 0; j < ow; ++j) dst[j] += w * src[j];
      }
    }
  }
  // sigmoid is monotone, so pooling the pre-activations first is exact
  std::size_t len = buf.size();
  if (pool) {
    const std::size_t ph = oh / kPoolWindow, pw = ow / kPoolWindow;
    for (std::size_t i = 0; i < ph; ++i) {
      for (std::size_t j = 0; j < pw; ++j) {
        double m = buf[(i * kPoolWindow) * ow + j * kPoolWindow];
        for (std::size_t a = 0; a < kPoolWindow; ++a)
          for (std::size_t b = 0; b < kPoolWindow; ++b) m = std::max(m, buf[(i * kPoolWindow + a) * ow + j * kPoolWindow + b]);
        buf[i * pw + j] = m;
      }
    }
    len = ph * pw;
  }
  Eigen::Map<Eigen::ArrayXd> act(buf.data(), static_cast<Eigen::Index>(len));
  return (1.0 / (1.0 + (-(act + kern.bias)).exp())).mean();
}

}  // namespace detail

/// Per-sample summary h of a candidate: the global mean of its post-pool map,
/// centred over the samples. Sigmoid maps share a large common level that
/// carries no class information and would otherwise swamp the alignment term.
inline std::vector<double> candidate_summary(std::span<const Matrix2D> inputs, const DoGKernel& kern, bool pool) {
  std::vector<double> h(inputs.size());
  std::vector<double> buf;
  double mean = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    h[i] = detail::map_mean(inputs[i], kern, pool, buf);
    mean += h[i];
  }
  mean /= static_cast<double>(h.size());
  for (double& v : h) v -= mean;
  return h;
}

// ---------------------------------------------------------------------------
// Kernel configuration

struct LayerContext {
  std::span<const Matrix2D> inputs;  // channel-summed layer input, one per sample
  bool pool = false;
  std::size_t kernel_index = 1;      // 1-based position C of the kernel being configured
};

struct Candidate {
  DoGKernel kernel;
  CandidateScore score;
  double contraction = 0.0;  // u actually used in the gate
  std::size_t round = 0;
  std::size_t draw = 0;      // index within the round
};

enum class ConfigureOutcome { accepted, close_layer, failed };

struct ConfigureResult {
  ConfigureOutcome outcome = ConfigureOutcome::failed;
  std::optional<Candidate> chosen;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t rounds = 0;
  std::size_t evaluated = 0;
};

/// Veto hook consulted for qualifying candidates in descending score order.
using AdmitFn = std::function<bool(const Candidate&)>;

/// Largest eigenvalue of E'E: no single summary vector h can make
/// sum_q (e_q' h)^2 / h'h exceed it.
inline double alignment_ceiling(const Matrix2D& residual) {
  Eigen::MatrixXd ete = residual.eigen().transpose() * residual.eigen();
  if (ete.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(ete, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

/// Draws up to t_max candidates per round for at most r_max rounds and returns
/// the admissible candidate with the largest positive score. Rounds that
/// provably cannot produce a positive score are skipped without drawing.
inline ConfigureResult configure_next_kernel(const LayerContext& ctx, const Matrix2D& residual,
                                             const BuildConfig& cfg, RngStream& rng, std::size_t workers = 1,
                                             const AdmitFn& admit = {}) {
  if (ctx.inputs.size() != residual.rows()) {
    throw DimensionError("configure_next_kernel: " + std::to_string(ctx.inputs.size()) + " inputs vs " +
                         std::to_string(residual.rows()) + " residual rows");
  }
  ConfigureResult result;
  const double base_u = 1.0 / static_cast<double>(ctx.kernel_index);
  const double ceiling = alignment_ceiling(residual);
  const double energy = frobenius_norm(residual) * frobenius_norm(residual);

  double u = base_u;
  for (std::size_t round = 0; round < cfg.r_max; ++round, u *= cfg.gate_relax) {
    ++result.rounds;
    if (ceiling <= (cfg.xi_lo + cfg.r_lo) * u * energy) continue;

    std::vector<Candidate> pool(cfg.t_max);
    for (std::size_t t = 0; t < cfg.t_max; ++t) {
      pool[t].kernel = sample_kernel(cfg, rng);
      pool[t].contraction = u;
      pool[t].round = round;
      pool[t].draw = t;
    }
    parallel_for(pool.size(), workers, [&](std::size_t t) {
      auto h = candidate_summary(ctx.inputs, pool[t].kernel, ctx.pool);
      pool[t].score = candidate_score(residual, h, pool[t].kernel.xi, pool[t].kernel.r, u);
    });
    result.evaluated += pool.size();

    std::vector<std::size_t> order;
    for (std::size_t t = 0; t < pool.size(); ++t) {
      if (!pool[t].score.degenerate) result.best_score = std::max(result.best_score, pool[t].score.total);
      if (pool[t].score.qualifies()) order.push_back(t);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].score.total > pool[b].score.total; });
    for (std::size_t t : order) {
      if (!admit || admit(pool[t])) {
        result.outcome = ConfigureOutcome::accepted;
        result.chosen = std::move(pool[t]);
        return result;
      }
    }
  }
  result.outcome = ctx.kernel_index > 1 ? ConfigureOutcome::close_layer : ConfigureOutcome::failed;
  return result;
}

// ---------------------------------------------------------------------------
// Build

struct TraceRecord {
  std::size_t kernel_index = 0;  // 1-based over the whole network
  std::size_t layer = 0;         // 1-based
  std::size_t index = 0;         // 1-based within the layer
  double xi = 0, r = 0, bias = 0;
  double sigma_sum = 0.0;
  double contraction = 0.0;
  double rmse = 0.0;
  double train_accuracy = 0.0;
  double elapsed_s = 0.0;
};

enum class StopReason { converged, layer_limit, spatial_collapse, candidates_exhausted };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::layer_limit: return "layer_limit";
    case StopReason::spatial_collapse: return "spatial_collapse";
    default: return "candidates_exhausted";
  }
}

struct BuildTrace {
  std::vector<TraceRecord> records;
  double initial_rmse = 0.0;
  StopReason stop = StopReason::layer_limit;
  std::size_t candidates_evaluated = 0;
};

struct BuildResult {
  NetworkModel model;
  BuildTrace trace;
};

namespace detail {

inline double train_accuracy_from_residual(const Matrix2D& y, const Matrix2D& e) {
  std::size_t correct = 0;
  std::vector<double> fit(y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t q = 0; q < y.cols(); ++q) fit[q] = y(i, q) - e(i, q);
    correct += y(i, argmax(fit)) == 1.0;
  }
  return static_cast<double>(correct) / static_cast<double>(y.rows());
}

/// Residual tracking across kernel acceptances. With ridge > 0 an N x N Gram
/// matrix is updated in place; with ridge == 0 the pseudoinverse solve is
/// repeated on the full feature matrix.
class ReadoutTracker {
 public:
  ReadoutTracker(Matrix2D targets, double ridge) : y_(std::move(targets)), ridge_(ridge) {
    if (ridge_ > 0.0) gram_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y_.rows()), static_cast<Eigen::Index>(y_.rows()));
    residual_ = y_;
  }

  struct Trial {
    Matrix2D residual;
    double rmse = 0.0;
    Eigen::MatrixXd gram;
  };

  Trial try_append(const Matrix2D& block) const {
    Trial t;
    if (ridge_ > 0.0) {
      t.gram = gram_;
      t.gram.noalias() += block.eigen() * block.eigen().transpose();
      Eigen::MatrixXd reg = t.gram;
      reg.diagonal().array() += ridge_;
      Eigen::MatrixXd alpha = reg.llt().solve(Eigen::MatrixXd(y_.eigen()));
      t.residual = Matrix2D::from_eigen(ridge_ * alpha);
    } else {
      std::vector<Matrix2D> all = blocks_;
      all.push_back(block);
      t.residual = solve_readout(hstack(all), y_, 0.0).residual;
    }
    t.rmse = residual_rmse(t.residual);
    return t;
  }

  void commit(Matrix2D block, Trial trial) {
    blocks_.push_back(std::move(block));
    residual_ = std::move(trial.residual);
    gram_ = std::move(trial.gram);
  }

  const Matrix2D& targets() const noexcept { return y_; }
  const Matrix2D& residual() const noexcept { return residual_; }
  double rmse() const { return residual_rmse(residual_); }
  const std::vector<Matrix2D>& blocks() const noexcept { return blocks_; }

 private:
  Matrix2D y_;
  double ridge_;
  Eigen::MatrixXd gram_;
  Matrix2D residual_;
  std::vector<Matrix2D> blocks_;
};

}  // namespace detail

struct BuildOptions {
  std::size_t workers = 1;
  std::function<void(const TraceRecord&)> on_accept;  // progress callback
};

inline BuildResult build(const Dataset& train, const BuildConfig& cfg, RngStream& rng, const BuildOptions& opts = {}) {
  cfg.validate();
  if (train.empty()) throw BuildError("build: training set is empty");
  train.validate();
  {
    const auto counts = train.class_counts();
    std::size_t present = 0;
    for (auto c : counts) present += c > 0;
    if (present < 2) throw BuildError("build: training set must contain at least two classes");
    for (std::size_t q = 0; q < counts.size(); ++q) {
      if (counts[q] == 0) throw BuildError("build: class '" + train.class_names[q] + "' has no training samples");
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = train.size();

  BuildResult out;
  NetworkModel& model = out.model;
  model.input = {train.height(), train.width(), train.channels()};
  model.class_names = train.class_names;

  detail::ReadoutTracker tracker(one_hot(train), cfg.ridge);
  out.trace.initial_rmse = tracker.rmse();

  std::vector<Matrix2D> inputs(n);
  for (std::size_t i = 0; i < n; ++i) inputs[i] = train.samples[i].image.channel_sum();
  if (inputs[0].rows() < cfg.k || inputs[0].cols() < cfg.k) {
    throw BuildError("build: " + std::to_string(inputs[0].rows()) + "x" + std::to_string(inputs[0].cols()) +
                     " images are smaller than the " + std::to_string(cfg.k) + "x" + std::to_string(cfg.k) +
                     " kernel");
  }

  out.trace.stop = StopReason::layer_limit;
  bool done = false;
  std::size_t global_index = 0;
  for (std::size_t l = 1; l <= cfg.l_max && !done; ++l) {
    if (tracker.rmse() <= cfg.error_limit) {
      out.trace.stop = StopReason::converged;
      break;
    }
    const bool pool = pool_after_layer(l, cfg.pool_every);
    const MapShape out_shape = layer_output_shape({inputs[0].rows(), inputs[0].cols()}, cfg.k, pool);
    if (out_shape.size() == 0) {
      out.trace.stop = StopReason::spatial_collapse;
      break;
    }

    LayerSpec layer{{}, pool};
    std::vector<Matrix2D> next_inputs(n, Matrix2D(out_shape.height, out_shape.width));
    while (layer.kernels.size() < cfg.c_max) {
      if (tracker.rmse() <= cfg.error_limit) {
        out.trace.stop = StopReason::converged;
        done = true;
        break;
      }
      const double rmse_before = tracker.rmse();
      std::optional<detail::ReadoutTracker::Trial> trial;
      std::vector<Matrix2D> maps;
      Matrix2D block;
      auto admit = [&](const Candidate& c) {
        std::vector<Matrix2D> m(n);
        Matrix2D b(n, out_shape.size());
        parallel_for(n, opts.workers, [&](std::size_t i) {
          m[i] = kernel_map(inputs[i], c.kernel, pool);
          std::copy(m[i].values().begin(), m[i].values().end(), b.row(i).begin());
        });
        auto t = tracker.try_append(b);
        // Ridge solutions are not guaranteed to shrink the residual; such
        // candidates are passed over.
        if (t.rmse > rmse_before * (1.0 + 1e-12)) return false;
        trial = std::move(t);
        maps = std::move(m);
        block = std::move(b);
        return true;
      };

      LayerContext ctx{inputs, pool, layer.kernels.size() + 1};
      ConfigureResult res = configure_next_kernel(ctx, tracker.residual(), cfg, rng, opts.workers, admit);
      out.trace.candidates_evaluated += res.evaluated;
      if (res.outcome == ConfigureOutcome::failed) {
        if (l == 1) {
          throw BuildError("build: no admissible candidate for the first kernel after " + std::to_string(res.rounds) +
                           " rounds (best score " + std::to_string(res.best_score) + ")");
        }
        out.trace.stop = StopReason::candidates_exhausted;
        done = true;
        break;
      }
      if (res.outcome == ConfigureOutcome::close_layer) break;

      const Candidate& chosen = *res.chosen;
      tracker.commit(std::move(block), std::move(*trial));
      for (std::size_t i = 0; i < n; ++i) next_inputs[i].eigen() += maps[i].eigen();
      layer.kernels.push_back(chosen.kernel);

      TraceRecord rec;
      rec.kernel_index = ++global_index;
      rec.layer = l;
      rec.index = layer.kernels.size();
      rec.xi = chosen.kernel.xi;
      rec.r = chosen.kernel.r;
      rec.bias = chosen.kernel.bias;
      rec.sigma_sum = chosen.score.total;
      rec.contraction = chosen.contraction;
      rec.rmse = tracker.rmse();
      rec.train_accuracy = detail::train_accuracy_from_residual(tracker.targets(), tracker.residual());
      rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.trace.records.push_back(rec);
      if (opts.on_accept) opts.on_accept(rec);
    }
    if (layer.kernels.empty()) break;
    model.layers.push_back(std::move(layer));
    inputs = std::move(next_inputs);
  }
  if (!done && tracker.rmse() <= cfg.error_limit) out.trace.stop = StopReason::converged;

  model.rebuild_layout();
  model.readout = least_squares(hstack(tracker.blocks()), tracker.targets(), cfg.ridge);
  model.validate();
  return out;
}

}  // namespace dcscn
