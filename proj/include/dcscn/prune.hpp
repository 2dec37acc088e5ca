#pragma once

// DDPG agent choosing per-layer kernel pruning ratios. Kernels are ranked by
// their mean feature-independence coefficient and the lowest-ranked fraction
// of each layer is removed; the readout is re-solved on the training set.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "dcscn/builder.hpp"
#include "dcscn/errors.hpp"
#include "dcscn/interpret.hpp"
#include "dcscn/network.hpp"

namespace dcscn {

inline constexpr double kMinAction = 0.001;

struct DdpgConfig {
  double gamma = 0.9;
  std::size_t replay_capacity = 2000;
  double step_size = 0.005;
  double tau = 0.01;
  std::size_t batch_size = 32;
  std::size_t episodes = 400;
  std::size_t hidden = 300;
  double noise_start = 0.3;
  double noise_end = 0.05;
  double beta = 0.01;  // reward weight per MB of parameters
  double a_max = 0.8;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ArgumentError("ddpg config: " + msg); };
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must be in [0, 1)");
    if (!(tau > 0.0 && tau < 1.0)) fail("tau must be in (0, 1)");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (replay_capacity < batch_size) fail("replay_capacity must be >= batch_size");
    if (!(step_size >= 0.0)) fail("step_size must be >= 0");
    if (episodes == 0) fail("episodes must be >= 1");
    if (hidden == 0) fail("hidden must be >= 1");
    if (!(noise_start >= 0.0) || !(noise_end >= 0.0)) fail("noise levels must be >= 0");
    if (!(beta >= 0.0)) fail("beta must be >= 0");
    if (!(a_max > kMinAction && a_max < 1.0)) fail("a_max must be in (0.001, 1)");
  }
};

// ---------------------------------------------------------------------------
// State

inline constexpr std::size_t kStateDim = 6;
using PruneState = std::array<double, kStateDim>;  // l, C_l, C_{l-1}, h, w, a_prev, each in [0, 1]

/// Raw per-layer descriptors of the unpruned model and the bounds used to
/// normalize them.
class StateEncoder {
 public:
  StateEncoder(const NetworkModel& model, double a_max) : a_max_(a_max) {
    const auto shapes = model.map_shapes();
    std::size_t prev = model.input.channels;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const std::size_t c = model.layers[l].kernels.size();
      raw_.push_back({static_cast<double>(l + 1), static_cast<double>(c), static_cast<double>(prev),
                      static_cast<double>(shapes[l + 1].height), static_cast<double>(shapes[l + 1].width), 0.0});
      prev = c;
    }
    lo_.fill(std::numeric_limits<double>::infinity());
    hi_.fill(-std::numeric_limits<double>::infinity());
    for (const auto& r : raw_) {
      for (std::size_t f = 0; f < kStateDim; ++f) {
        lo_[f] = std::min(lo_[f], r[f]);
        hi_[f] = std::max(hi_[f], r[f]);
      }
    }
    lo_[5] = 0.0;
    hi_[5] = a_max_;
  }

  std::size_t layers() const noexcept { return raw_.size(); }

  /// State seen before acting on layer l (0-based) given the kept count of the
  /// previous layer and the previous action.
  PruneState encode(std::size_t l, double prev_kept, double a_prev) const {
    PruneState raw = raw_.at(l);
    if (l > 0) raw[2] = prev_kept;
    raw[5] = a_prev;
    PruneState s{};
    for (std::size_t f = 0; f < kStateDim; ++f) {
      const double span = hi_[f] - lo_[f];
      s[f] = span > 0.0 ? std::clamp((raw[f] - lo_[f]) / span, 0.0, 1.0) : 0.0;
    }
    return s;
  }

 private:
  double a_max_;
  std::vector<PruneState> raw_;
  PruneState lo_{}, hi_{};
};

struct Transition {
  PruneState state{};
  double action = 0.0;
  double reward = 0.0;
  PruneState next_state{};
  bool terminal = false;
};

/// Fixed-capacity ring buffer; the oldest transition is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ArgumentError("replay buffer capacity must be >= 1");
    data_.reserve(capacity);
  }
  void push(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_.at((head_ + i) % data_.size()); }

  std::vector<Transition> sample(std::size_t n, RngStream& rng) const {
    if (data_.empty()) throw ArgumentError("replay buffer is empty");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(data_[rng.index(data_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// Two-layer perceptron with tanh hidden units and one linear output.

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t inputs, std::size_t hidden) : in_(inputs), hid_(hidden), p_(hidden * inputs + 2 * hidden + 1, 0.0) {}

  /// Hidden weights ~ U(+-1/sqrt(fan_in)); output weights ~ U(+-out_scale).
  static Mlp random(std::size_t inputs, std::size_t hidden, RngStream& rng, double out_scale = 3e-3) {
    Mlp m(inputs, hidden);
    const double a = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (std::size_t i = 0; i < hidden * inputs + hidden; ++i) m.p_[i] = rng.uniform(-a, a);
    for (std::size_t i = hidden * inputs + hidden; i < m.p_.size(); ++i) m.p_[i] = rng.uniform(-out_scale, out_scale);
    return m;
  }

  std::size_t inputs() const noexcept { return in_; }
  std::size_t hidden() const noexcept { return hid_; }
  std::vector<double>& params() noexcept { return p_; }
  const std::vector<double>& params() const noexcept { return p_; }

  struct Cache {
    std::vector<double> x, a;  // input and hidden activations
    double y = 0.0;
  };

  double forward(std::span<const double> x, Cache* cache = nullptr) const {
    if (x.size() != in_) throw DimensionError("Mlp: input size mismatch");
    std::vector<double> a(hid_);
    double y = p_[b2()];
    for (std::size_t j = 0; j < hid_; ++j) {
      double z = p_[b1() + j];
      for (std::size_t i = 0; i < in_; ++i) z += p_[j * in_ + i] * x[i];
      a[j] = std::tanh(z);
      y += p_[w2() + j] * a[j];
    }
    if (cache) {
      cache->x.assign(x.begin(), x.end());
      cache->a = std::move(a);
      cache->y = y;
    }
    return y;
  }

  /// Adds gy * dy/dparams into grad and returns gy * dy/dx.
  std::vector<double> backward(const Cache& c, double gy, std::vector<double>& grad) const {
    std::vector<double> dx(in_, 0.0);
    grad[b2()] += gy;
    for (std::size_t j = 0; j < hid_; ++j) {
      grad[w2() + j] += gy * c.a[j];
      const double dz = gy * p_[w2() + j] * (1.0 - c.a[j] * c.a[j]);
      grad[b1() + j] += dz;
      for (std::size_t i = 0; i < in_; ++i) {
        grad[j * in_ + i] += dz * c.x[i];
        dx[i] += dz * p_[j * in_ + i];
      }
    }
    return dx;
  }

 private:
  std::size_t b1() const noexcept { return hid_ * in_; }
  std::size_t w2() const noexcept { return hid_ * in_ + hid_; }
  std::size_t b2() const noexcept { return hid_ * in_ + 2 * hid_; }

  std::size_t in_ = 0, hid_ = 0;
  std::vector<double> p_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double step) : step_(step), m_(n, 0.0), v_(n, 0.0) {}

  /// Descends along grad (pass a negated gradient to ascend).
  void apply(std::vector<double>& params, const std::vector<double>& grad) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= step_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  double step_ = 0.0;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// theta' <- tau theta + (1 - tau) theta'
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("soft_update: tau must be in (0, 1]");
  if (target.params().size() != online.params().size()) throw DimensionError("soft_update: network sizes differ");
  auto& t = target.params();
  const auto& o = online.params();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * o[i] + (1.0 - tau) * t[i];
}

// ---------------------------------------------------------------------------
// Actor and critic

inline double actor_output(const Mlp& actor, const PruneState& s, double a_max, Mlp::Cache* cache = nullptr) {
  return a_max * sigmoid(actor.forward(s, cache));
}

inline double actor_act(const Mlp& actor, const PruneState& s, double noise, double a_max, RngStream& rng) {
  if (!(noise >= 0.0)) throw ArgumentError("actor_act: noise must be >= 0");
  double a = actor_output(actor, s, a_max);
  if (noise > 0.0) a += noise * rng.normal();
  return std::clamp(a, kMinAction, a_max);
}

inline std::array<double, kStateDim + 1> critic_input(const PruneState& s, double a) {
  std::array<double, kStateDim + 1> x{};
  std::copy(s.begin(), s.end(), x.begin());
  x[kStateDim] = a;
  return x;
}

inline double critic_value(const Mlp& critic, const PruneState& s, double a, Mlp::Cache* cache = nullptr) {
  return critic.forward(critic_input(s, a), cache);
}

struct Objective {
  double value = 0.0;
  std::vector<double> grad;
};

/// Targets y = R + gamma Q'(s', mu'(s')) (y = R on terminal transitions).
inline std::vector<double> critic_targets(const Mlp& actor_target, const Mlp& critic_target,
                                          std::span<const Transition> batch, double gamma, double a_max) {
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    y[i] = t.reward;
    if (!t.terminal) {
      y[i] += gamma * critic_value(critic_target, t.next_state, actor_output(actor_target, t.next_state, a_max));
    }
  }
  return y;
}

/// Mean squared error (1/N) sum (y - Q(s, a))^2 and its gradient in the critic parameters.
inline Objective critic_loss(const Mlp& critic, std::span<const Transition> batch, std::span<const double> targets) {
  if (batch.empty()) throw ArgumentError("critic_loss: empty batch");
  Objective o;
  o.grad.assign(critic.params().size(), 0.0);
  const double n = static_cast<double>(batch.size());
  Mlp::Cache c;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double q = critic_value(critic, batch[i].state, batch[i].action, &c);
    const double diff = targets[i] - q;
    o.value += diff * diff / n;
    critic.backward(c, -2.0 * diff / n, o.grad);
  }
  return o;
}

/// (1/N) sum Q(s, mu(s)) and its gradient in the actor parameters.
inline Objective actor_objective(const Mlp& actor, const Mlp& critic, std::span<const Transition> batch,
                                 double a_max) {
  if (batch.empty()) throw ArgumentError("actor_objective: empty batch");
  Objective o;
  o.grad.assign(actor.params().size(), 0.0);
  std::vector<double> critic_scratch(critic.params().size());
  const double n = static_cast<double>(batch.size());
  Mlp::Cache ca, cc;
  for (const auto& t : batch) {
    const double a = actor_output(actor, t.state, a_max, &ca);
    o.value += critic_value(critic, t.state, a, &cc) / n;
    const double dq_da = critic.backward(cc, 1.0, critic_scratch)[kStateDim];
    const double sg = a / a_max;
    actor.backward(ca, dq_da * a_max * sg * (1.0 - sg) / n, o.grad);
  }
  return o;
}

inline double critic_update(Mlp& critic, Adam& opt, const Mlp& actor_target, const Mlp& critic_target,
                            std::span<const Transition> batch, double gamma, double a_max) {
  const auto y = critic_targets(actor_target, critic_target, batch, gamma, a_max);
  const Objective o = critic_loss(critic, batch, y);
  opt.apply(critic.params(), o.grad);
  return o.value;
}

inline double actor_update(Mlp& actor, Adam& opt, const Mlp& critic, std::span<const Transition> batch,
                           double a_max) {
  Objective o = actor_objective(actor, critic, batch, a_max);
  for (double& g : o.grad) g = -g;
  opt.apply(actor.params(), o.grad);
  return o.value;
}

// ---------------------------------------------------------------------------
// Kernel ranking and pruning

/// Kernel indices of every layer ordered by ascending batch-mean FC (ties by index).
inline std::vector<std::vector<std::size_t>> rank_all_layers(const NetworkModel& model, const Dataset& batch,
                                                             std::size_t workers = 1) {
  if (batch.empty()) throw ArgumentError("rank_kernels: evaluation batch is empty");
  const std::size_t nl = model.layers.size();
  std::vector<std::vector<std::vector<double>>> per_sample(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    const auto stacks = forward_stacks(model, batch.samples[i].image, nl);
    per_sample[i].resize(nl);
    for (std::size_t l = 0; l < nl; ++l) per_sample[i][l] = independence_coefficients(stacks[l]).values;
  });
  std::vector<std::vector<std::size_t>> order(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t c = model.layers[l].kernels.size();
    std::vector<double> mean(c, 0.0);
    for (const auto& s : per_sample)
      for (std::size_t k = 0; k < c; ++k) mean[k] += s[l][k];
    order[l].resize(c);
    std::iota(order[l].begin(), order[l].end(), 0);
    std::stable_sort(order[l].begin(), order[l].end(), [&](std::size_t a, std::size_t b) { return mean[a] < mean[b]; });
  }
  return order;
}

inline std::vector<std::size_t> rank_kernels(const NetworkModel& model, const Dataset& batch, std::size_t layer,
                                             std::size_t workers = 1) {
  if (layer < 1 || layer > model.layers.size()) throw ArgumentError("rank_kernels: layer out of range");
  return rank_all_layers(model, batch, workers)[layer - 1];
}

/// floor(ratio C), keeping at least one kernel.
inline std::size_t prune_count(double ratio, std::size_t kernels) {
  if (kernels == 0) return 0;
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(kernels)));
  return std::min(n, kernels - 1);
}

struct PruneSetup {
  std::vector<std::vector<std::size_t>> ranking;  // per layer, ascending importance
  double ridge = 0.0;                             // readout re-solve
  double a_max = 0.8;
  std::size_t workers = 1;
};

/// Drops the given number of lowest-ranked kernels per layer and re-solves the readout.
inline NetworkModel prune_by_counts(const NetworkModel& model, std::span<const std::size_t> counts,
                                    const Dataset& train, const PruneSetup& setup) {
  if (counts.size() != model.layers.size()) throw ArgumentError("pruning: one count per layer is required");
  if (setup.ranking.size() != model.layers.size()) throw ArgumentError("pruning: ranking does not match the model");
  NetworkModel out = model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& kernels = model.layers[l].kernels;
    if (counts[l] >= kernels.size()) throw ArgumentError("pruning: layer " + std::to_string(l + 1) + " would be emptied");
    std::vector<std::size_t> keep(setup.ranking[l].begin() + static_cast<std::ptrdiff_t>(counts[l]), setup.ranking[l].end());
    std::sort(keep.begin(), keep.end());
    out.layers[l].kernels.clear();
    for (std::size_t k : keep) out.layers[l].kernels.push_back(kernels.at(k));
  }
  out.rebuild_layout();
  out.readout = least_squares(feature_matrix(train, out, setup.workers), one_hot(train), setup.ridge);
  out.validate();
  return out;
}

inline std::vector<std::size_t> counts_from_ratios(const NetworkModel& model, std::span<const double> ratios,
                                                   double a_max) {
  if (ratios.size() != model.layers.size()) {
    throw ArgumentError("pruning: expected " + std::to_string(model.layers.size()) + " ratios, got " +
                        std::to_string(ratios.size()));
  }
  std::vector<std::size_t> counts(ratios.size());
  for (std::size_t l = 0; l < ratios.size(); ++l) {
    if (!(ratios[l] >= 0.0 && ratios[l] <= a_max)) {
      throw ArgumentError("pruning: ratio " + std::to_string(ratios[l]) + " for layer " + std::to_string(l + 1) +
                          " is outside [0, " + std::to_string(a_max) + "]");
    }
    counts[l] = prune_count(ratios[l], model.layers[l].kernels.size());
  }
  return counts;
}

inline NetworkModel apply_pruning(const NetworkModel& model, std::span<const double> ratios, const Dataset& train,
                                  const PruneSetup& setup) {
  return prune_by_counts(model, counts_from_ratios(model, ratios, setup.a_max), train, setup);
}

struct RewardParts {
  double reward = 0.0;
  double acc = 0.0;
  double iou = 0.0;
  double pa_mb = 0.0;
};

/// R = ACC_val + IoU_val - beta PA, with IoU taken on the final layer.
inline RewardParts reward(const NetworkModel& model, const Dataset& val, double beta, double theta = kDefaultTheta,
                          std::size_t workers = 1) {
  require_masks(val);
  RewardParts r;
  r.acc = accuracy(model, val, workers);
  r.iou = iou_dataset(model, val, model.layers.size(), theta, workers);
  r.pa_mb = param_count(model).mb;
  r.reward = r.acc + r.iou - beta * r.pa_mb;
  return r;
}

/// Memoized evaluation of pruning configurations keyed by per-layer prune counts.
class PruneEnvironment {
 public:
  PruneEnvironment(const NetworkModel& model, const Dataset& train, const Dataset& val, PruneSetup setup, double beta,
                   double theta)
      : model_(model), train_(train), val_(val), setup_(std::move(setup)), beta_(beta), theta_(theta) {
    require_masks(val);
  }

  const NetworkModel& model() const noexcept { return model_; }
  const PruneSetup& setup() const noexcept { return setup_; }

  RewardParts evaluate(const std::vector<std::size_t>& counts) {
    if (auto it = cache_.find(counts); it != cache_.end()) return it->second;
    const NetworkModel pruned = prune_by_counts(model_, counts, train_, setup_);
    const RewardParts r = reward(pruned, val_, beta_, theta_, setup_.workers);
    cache_.emplace(counts, r);
    return r;
  }

  NetworkModel materialize(const std::vector<std::size_t>& counts) const {
    return prune_by_counts(model_, counts, train_, setup_);
  }

  std::size_t evaluations() const noexcept { return cache_.size(); }

 private:
  const NetworkModel& model_;
  const Dataset& train_;
  const Dataset& val_;
  PruneSetup setup_;
  double beta_, theta_;
  std::map<std::vector<std::size_t>, RewardParts> cache_;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::vector<double> ratios;
  std::vector<std::size_t> counts;
  RewardParts parts;
};

struct PruneResult {
  NetworkModel model;
  std::vector<double> ratios;
  std::vector<std::size_t> counts;
  RewardParts best;
  RewardParts baseline;  // nothing pruned, readout re-solved
  std::vector<EpisodeRecord> curve;
};

struct PruneOptions {
  double ridge = 0.0;
  double theta = kDefaultTheta;
  std::size_t workers = 1;
  std::function<void(const EpisodeRecord&)> on_episode;
};

inline PruneResult train_pruner(const NetworkModel& model, const Dataset& train, const Dataset& val,
                                const DdpgConfig& cfg, RngStream& rng, const PruneOptions& opts = {}) {
  cfg.validate();
  if (model.layers.empty()) throw ArgumentError("train_pruner: model has no layers");
  PruneSetup setup{rank_all_layers(model, val, opts.workers), opts.ridge, cfg.a_max, opts.workers};
  PruneEnvironment env(model, train, val, std::move(setup), cfg.beta, opts.theta);
  const StateEncoder enc(model, cfg.a_max);
  const std::size_t nl = model.layers.size();

  Mlp actor = Mlp::random(kStateDim, cfg.hidden, rng);
  Mlp critic = Mlp::random(kStateDim + 1, cfg.hidden, rng);
  Mlp actor_target = actor, critic_target = critic;
  Adam actor_opt(actor.params().size(), cfg.step_size), critic_opt(critic.params().size(), cfg.step_size);
  ReplayBuffer replay(cfg.replay_capacity);

  PruneResult result;
  const std::vector<std::size_t> none(nl, 0);
  result.baseline = env.evaluate(none);
  result.best = result.baseline;
  result.counts = none;
  result.ratios.assign(nl, 0.0);

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double frac = cfg.episodes > 1 ? static_cast<double>(ep) / static_cast<double>(cfg.episodes - 1) : 0.0;
    const double noise = cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac;

    std::vector<PruneState> states;
    std::vector<double> actions;
    std::vector<std::size_t> counts(nl);
    double a_prev = 0.0, prev_kept = static_cast<double>(model.input.channels);
    for (std::size_t l = 0; l < nl; ++l) {
      const PruneState s = enc.encode(l, prev_kept, a_prev);
      const double a = actor_act(actor, s, noise, cfg.a_max, rng);
      states.push_back(s);
      actions.push_back(a);
      counts[l] = prune_count(a, model.layers[l].kernels.size());
      prev_kept = static_cast<double>(model.layers[l].kernels.size() - counts[l]);
      a_prev = a;
    }
    const RewardParts parts = env.evaluate(counts);

    for (std::size_t l = 0; l < nl; ++l) {
      Transition t;
      t.state = states[l];
      t.action = actions[l];
      t.terminal = l + 1 == nl;
      t.reward = t.terminal ? parts.reward : 0.0;
      t.next_state = t.terminal ? states[l] : states[l + 1];
      replay.push(t);
      if (replay.size() >= cfg.batch_size) {
        const auto batch = replay.sample(cfg.batch_size, rng);
        critic_update(critic, critic_opt, actor_target, critic_target, batch, cfg.gamma, cfg.a_max);
        actor_update(actor, actor_opt, critic, batch, cfg.a_max);
        soft_update(actor_target, actor, cfg.tau);
        soft_update(critic_target, critic, cfg.tau);
      }
    }

    EpisodeRecord rec{ep + 1, actions, counts, parts};
    if (parts.reward > result.best.reward) {
      result.best = parts;
      result.counts = counts;
      result.ratios = actions;
    }
    if (opts.on_episode) opts.on_episode(rec);
    result.curve.push_back(std::move(rec));
  }
  result.model = env.materialize(result.counts);
  return result;
}

/// Best reward over every admissible per-layer prune count.
inline std::pair<std::vector<std::size_t>, RewardParts> exhaustive_search(PruneEnvironment& env, double a_max) {
  const auto& model = env.model();
  const std::size_t nl = model.layers.size();
  std::vector<std::size_t> limit(nl);
  for (std::size_t l = 0; l < nl; ++l) limit[l] = prune_count(a_max, model.layers[l].kernels.size());
  std::vector<std::size_t> counts(nl, 0), best_counts = counts;
  std::optional<RewardParts> best;
  while (true) {
    const RewardParts r = env.evaluate(counts);
    if (!best || r.reward > best->reward) {
      best = r;
      best_counts = counts;
    }
    std::size_t l = 0;
    while (l < nl && counts[l] == limit[l]) counts[l++] = 0;
    if (l == nl) break;
    ++counts[l];
  }
  return {best_counts, *best};
}

}  // namespace dcscn
