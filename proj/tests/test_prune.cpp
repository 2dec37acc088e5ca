#include <gtest/gtest.h>

#include <cmath>

#include "dcscn/builder.hpp"
#include "dcscn/prune.hpp"

using namespace dcscn;

namespace {

PruneState random_state(RngStream& rng) {
  PruneState s{};
  for (double& v : s) v = rng.uniform(0.0, 1.0);
  return s;
}

std::vector<Transition> random_batch(std::size_t n, RngStream& rng, bool terminal_only = false) {
  std::vector<Transition> b(n);
  for (auto& t : b) {
    t.state = random_state(rng);
    t.next_state = random_state(rng);
    t.action = rng.uniform(0.0, 0.8);
    t.terminal = terminal_only || rng.uniform(0.0, 1.0) < 0.4;
    t.reward = t.terminal ? rng.uniform(-1.0, 2.0) : 0.0;
  }
  return b;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

/// Central differences of f over every parameter of net.
template <typename F>
std::vector<double> numeric_grad(Mlp& net, F&& f, double h = 1e-6) {
  std::vector<double> g(net.params().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double up = f();
    net.params()[i] = keep - h;
    const double down = f();
    net.params()[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

struct Fixture {
  Dataset train, val;
  NetworkModel model;
  double ridge = 1.0;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    RngStream data(31);
    x.train = preprocess_dataset(generate_synthetic(4, 32, data), 32, 32);
    x.val = preprocess_dataset(generate_synthetic(2, 32, data), 32, 32);
    BuildConfig cfg;
    cfg.ridge = x.ridge;
    cfg.c_max = 3;
    cfg.l_max = 2;
    cfg.t_max = 30;
    RngStream rng(32);
    x.model = build(x.train, cfg, rng).model;
    return x;
  }();
  return f;
}

}  // namespace

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
  RngStream rng(1);
  Mlp net = Mlp::random(7, 5, rng, 0.5);
  for (int p = 0; p < 50; ++p) {
    std::vector<double> x(7);
    for (double& v : x) v = rng.uniform(-1, 1);
    Mlp::Cache c;
    net.forward(x, &c);
    std::vector<double> scratch(net.params().size());
    const auto dx = net.backward(c, 1.0, scratch);
    for (std::size_t i = 0; i < 7; ++i) {
      auto xp = x, xm = x;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      EXPECT_LT(relative_error(dx[i], (net.forward(xp) - net.forward(xm)) / 2e-6), 1e-4);
    }
  }
}

TEST(Ddpg, CriticLossGradientMatchesFiniteDifferences) {
  RngStream rng(2);
  for (int p = 0; p < 50; ++p) {
    Mlp critic = Mlp::random(kStateDim + 1, 5, rng, 0.5);
    const auto batch = random_batch(4, rng);
    std::vector<double> y(batch.size());
    for (double& v : y) v = rng.uniform(-1, 1);
    const Objective o = critic_loss(critic, batch, y);
    const auto g = numeric_grad(critic, [&] { return critic_loss(critic, batch, y).value; });
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(relative_error(o.grad[i], g[i]), 1e-4) << i;
  }
}

TEST(Ddpg, ActorGradientMatchesFiniteDifferences) {
  RngStream rng(3);
  for (int p = 0; p < 50; ++p) {
    Mlp actor = Mlp::random(kStateDim, 5, rng, 0.5);
    const Mlp critic = Mlp::random(kStateDim + 1, 5, rng, 0.5);
    const auto batch = random_batch(4, rng);
    const Objective o = actor_objective(actor, critic, batch, 0.8);
    const auto g = numeric_grad(actor, [&] { return actor_objective(actor, critic, batch, 0.8).value; });
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(relative_error(o.grad[i], g[i]), 1e-4) << i;
  }
}

TEST(Ddpg, TerminalOnlyBatchLossIsMeanSquaredReward) {
  RngStream rng(4);
  const Mlp zero(kStateDim + 1, 5);
  const Mlp actor = Mlp::random(kStateDim, 5, rng);
  const auto batch = random_batch(10, rng, true);
  const auto y = critic_targets(actor, Mlp::random(kStateDim + 1, 5, rng), batch, 0.9, 0.8);
  double expected = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(y[i], batch[i].reward);
    expected += batch[i].reward * batch[i].reward / 10.0;
  }
  EXPECT_NEAR(critic_loss(zero, batch, y).value, expected, 1e-14);
}

TEST(Ddpg, NonTerminalTargetsBootstrap) {
  RngStream rng(5);
  const Mlp actor = Mlp::random(kStateDim, 5, rng, 0.5), critic = Mlp::random(kStateDim + 1, 5, rng, 0.5);
  auto batch = random_batch(3, rng);
  batch[0].terminal = false;
  const auto y = critic_targets(actor, critic, batch, 0.9, 0.8);
  const double q = critic_value(critic, batch[0].next_state, actor_output(actor, batch[0].next_state, 0.8));
  EXPECT_DOUBLE_EQ(y[0], batch[0].reward + 0.9 * q);
}

TEST(Ddpg, ActorStepClimbsTheCritic) {
  RngStream rng(6);
  Mlp actor = Mlp::random(kStateDim, 5, rng, 0.5);
  const Mlp critic = Mlp::random(kStateDim + 1, 5, rng, 0.5);
  const auto batch = random_batch(16, rng);
  const double before = actor_objective(actor, critic, batch, 0.8).value;
  Adam opt(actor.params().size(), 1e-5);
  actor_update(actor, opt, critic, batch, 0.8);
  EXPECT_GT(actor_objective(actor, critic, batch, 0.8).value, before);

  Mlp critic2 = Mlp::random(kStateDim + 1, 5, rng, 0.5);
  const auto y = critic_targets(actor, critic, batch, 0.9, 0.8);
  const double loss = critic_loss(critic2, batch, y).value;
  Adam copt(critic2.params().size(), 1e-5);
  critic_update(critic2, copt, actor, critic, batch, 0.9, 0.8);
  EXPECT_LT(critic_loss(critic2, batch, y).value, loss);
}

TEST(Ddpg, ZeroStepLeavesParametersUnchanged) {
  RngStream rng(7);
  Mlp actor = Mlp::random(kStateDim, 5, rng);
  const auto before = actor.params();
  Adam opt(actor.params().size(), 0.0);
  actor_update(actor, opt, Mlp::random(kStateDim + 1, 5, rng), random_batch(8, rng), 0.8);
  EXPECT_EQ(actor.params(), before);
}

TEST(Ddpg, ActorOutputStaysInRange) {
  RngStream rng(8);
  const Mlp actor = Mlp::random(kStateDim, 5, rng, 20.0);
  for (int i = 0; i < 200; ++i) {
    const PruneState s = random_state(rng);
    const double a = actor_output(actor, s, 0.8);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 0.8);
    const double noisy = actor_act(actor, s, 0.5, 0.8, rng);
    EXPECT_GE(noisy, kMinAction);
    EXPECT_LE(noisy, 0.8);
  }
  EXPECT_THROW(actor_act(actor, PruneState{}, -1.0, 0.8, rng), ArgumentError);
}

TEST(SoftUpdate, ContractsTowardOnline) {
  RngStream rng(9);
  for (double tau : {0.01, 0.3, 0.9}) {
    Mlp target = Mlp::random(4, 6, rng, 1.0);
    const Mlp online = Mlp::random(4, 6, rng, 1.0);
    double before = 0.0;
    for (std::size_t i = 0; i < online.params().size(); ++i)
      before += std::pow(target.params()[i] - online.params()[i], 2);
    soft_update(target, online, tau);
    double after = 0.0;
    for (std::size_t i = 0; i < online.params().size(); ++i)
      after += std::pow(target.params()[i] - online.params()[i], 2);
    EXPECT_NEAR(std::sqrt(after), (1.0 - tau) * std::sqrt(before), 1e-12);
  }
  Mlp target = Mlp::random(4, 6, rng);
  const Mlp online = Mlp::random(4, 6, rng);
  soft_update(target, online, 1.0);
  EXPECT_EQ(target.params(), online.params());

  Mlp t(1, 1), o(1, 1);
  for (double& v : o.params()) v = 1.0;
  soft_update(t, o, 0.3);
  for (double v : t.params()) EXPECT_DOUBLE_EQ(v, 0.3);
  EXPECT_THROW(soft_update(t, o, 0.0), ArgumentError);
  EXPECT_THROW(soft_update(t, o, 1.5), ArgumentError);
  Mlp wrong(2, 1);
  EXPECT_THROW(soft_update(wrong, o, 0.5), DimensionError);
}

TEST(Replay, EvictsOldestFirst) {
  ReplayBuffer r(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    r.push(t);
  }
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].reward, 2.0);
  EXPECT_EQ(r[1].reward, 3.0);
  EXPECT_EQ(r[2].reward, 4.0);
  RngStream rng(10);
  for (const auto& t : r.sample(20, rng)) EXPECT_GE(t.reward, 2.0);
  EXPECT_THROW(ReplayBuffer(0), ArgumentError);
  EXPECT_THROW(ReplayBuffer(2).sample(1, rng), ArgumentError);
}

TEST(Pruning, CountsAndRatios) {
  EXPECT_EQ(prune_count(0.0, 6), 0u);
  EXPECT_EQ(prune_count(0.5, 6), 3u);
  EXPECT_EQ(prune_count(0.49, 6), 2u);
  EXPECT_EQ(prune_count(0.99, 6), 5u);
  EXPECT_EQ(prune_count(1.0, 6), 5u);
  EXPECT_EQ(prune_count(0.8, 1), 0u);
  const NetworkModel& m = fixture().model;
  const std::vector<double> bad(m.layers.size(), 0.9);
  EXPECT_THROW(counts_from_ratios(m, bad, 0.8), ArgumentError);
  EXPECT_THROW(counts_from_ratios(m, std::vector<double>{0.1, 0.1, 0.1, 0.1}, 0.8), ArgumentError);
}

TEST(Pruning, StateEncoderNormalizes) {
  const NetworkModel& m = fixture().model;
  const StateEncoder enc(m, 0.8);
  ASSERT_EQ(enc.layers(), m.layers.size());
  for (std::size_t l = 0; l < enc.layers(); ++l) {
    const PruneState s = enc.encode(l, 1.0, 0.4);
    for (double v : s) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_DOUBLE_EQ(s[5], 0.5);
  }
}

TEST(Pruning, IdentityAndKeepOne) {
  const Fixture& f = fixture();
  const NetworkModel& m = f.model;
  ASSERT_GE(m.layers.size(), 1u);
  PruneSetup setup{rank_all_layers(m, f.val), f.ridge, 0.99, 1};
  const std::vector<double> none(m.layers.size(), 0.0);
  const NetworkModel same = apply_pruning(m, none, f.train, setup);
  EXPECT_EQ(same.layers, m.layers);
  EXPECT_EQ(same.readout, least_squares(feature_matrix(f.train, m), one_hot(f.train), f.ridge));
  EXPECT_LT((same.readout.eigen() - m.readout.eigen()).norm(), 1e-8 * (1.0 + m.readout.eigen().norm()));

  const std::vector<double> most(m.layers.size(), 0.99);
  const NetworkModel one = apply_pruning(m, most, f.train, setup);
  std::size_t d = 0;
  const auto shapes = one.map_shapes();
  for (std::size_t l = 0; l < one.layers.size(); ++l) {
    ASSERT_EQ(one.layers[l].kernels.size(), 1u);
    // the survivor is the top-ranked kernel
    EXPECT_EQ(one.layers[l].kernels[0], m.layers[l].kernels[setup.ranking[l].back()]);
    d += shapes[l + 1].size();
  }
  EXPECT_EQ(one.feature_dim(), d);
  EXPECT_EQ(one.readout.rows(), d);
  EXPECT_LT(param_count(one).raw, param_count(m).raw);
}

TEST(Pruning, RankingIsAPermutation) {
  const Fixture& f = fixture();
  const auto ranks = rank_all_layers(f.model, f.val);
  for (std::size_t l = 0; l < ranks.size(); ++l) {
    auto sorted = ranks[l];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) EXPECT_EQ(sorted[k], k);
  }
  EXPECT_EQ(rank_kernels(f.model, f.val, 1), ranks[0]);
  EXPECT_EQ(rank_all_layers(f.model, f.val, 3), ranks);
  EXPECT_THROW(rank_kernels(f.model, f.val, 0), ArgumentError);
}

TEST(Pruning, RewardBounds) {
  const Fixture& f = fixture();
  const RewardParts r = reward(f.model, f.val, 0.01);
  EXPECT_GE(r.acc, 0.0);
  EXPECT_LE(r.acc, 1.0);
  EXPECT_GE(r.iou, 0.0);
  EXPECT_LE(r.iou, 1.0);
  EXPECT_DOUBLE_EQ(r.pa_mb, param_count(f.model).mb);
  EXPECT_DOUBLE_EQ(r.reward, r.acc + r.iou - 0.01 * r.pa_mb);
  EXPECT_LE(r.reward, 2.0);
}

TEST(Pruning, OneEpisodeAndExhaustiveBound) {
  const Fixture& f = fixture();
  DdpgConfig cfg;
  cfg.episodes = 1;
  cfg.hidden = 8;
  RngStream rng(11);
  PruneOptions opts;
  opts.ridge = f.ridge;
  const PruneResult one = train_pruner(f.model, f.train, f.val, cfg, rng, opts);
  ASSERT_EQ(one.curve.size(), 1u);
  EXPECT_EQ(one.curve[0].ratios.size(), f.model.layers.size());
  EXPECT_EQ(one.curve[0].counts.size(), f.model.layers.size());
  EXPECT_GE(one.best.reward, one.baseline.reward);

  cfg.episodes = 12;
  cfg.batch_size = 4;
  RngStream a(12), b(12);
  const PruneResult ra = train_pruner(f.model, f.train, f.val, cfg, a, opts);
  const PruneResult rb = train_pruner(f.model, f.train, f.val, cfg, b, opts);
  EXPECT_EQ(ra.counts, rb.counts);
  EXPECT_EQ(ra.model.readout, rb.model.readout);

  PruneEnvironment env(f.model, f.train, f.val, PruneSetup{rank_all_layers(f.model, f.val), f.ridge, cfg.a_max, 1},
                       cfg.beta, kDefaultTheta);
  const auto [counts, best] = exhaustive_search(env, cfg.a_max);
  EXPECT_LE(ra.best.reward, best.reward);
  EXPECT_EQ(env.evaluate(ra.counts).reward, ra.best.reward);
}
