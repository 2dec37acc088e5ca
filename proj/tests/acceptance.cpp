// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dcscn/pipeline.hpp"
#include "oracles.hpp"

using namespace dcscn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Matrix2D random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix2D m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

double ls_gradient_ratio(const Matrix2D& phi, const Matrix2D& y, const Matrix2D& o) {
  const Eigen::MatrixXd e = y.eigen() - phi.eigen() * o.eigen();
  return (phi.eigen().transpose() * e).norm() / (phi.eigen().norm() * y.eigen().norm());
}

Dataset small_set(std::uint64_t seed, std::size_t per_class) {
  RngStream rng(seed);
  return preprocess_dataset(generate_synthetic(per_class, 32, rng), 32, 32);
}

// Shared state of the pinned default run.
struct PinnedRun {
  RunConfig cfg;
  fs::path dir;
  TrainReport train;
  double train_seconds = 0.0;
};

Outcome criterion_1(PinnedRun& run) {
  const auto t0 = Clock::now();
  std::ostringstream sink;
  run.train = cmd_train(run.cfg, sink);
  run.train_seconds = seconds_since(t0);
  const auto& tr = run.train.result.trace;
  double prev = tr.initial_rmse, worst = 0.0;
  bool ok = !tr.records.empty();
  for (const auto& r : tr.records) {
    worst = std::max(worst, (r.rmse - prev) / prev);
    ok = ok && r.rmse <= prev * (1.0 + 1e-9);
    prev = r.rmse;
  }
  ok = ok && run.train_seconds <= 300.0;
  return {ok, fmt("%zu kernels, rmse %.4f -> %.4f, worst relative increase %.2e, %.1f s (budget 300 s)",
                  tr.records.size(), tr.initial_rmse, prev, std::max(worst, 0.0), run.train_seconds)};
}

Outcome criterion_2(const PinnedRun& run) {
  std::size_t total = 0, positive = 0;
  auto count = [&](const BuildTrace& t) {
    for (const auto& r : t.records) {
      ++total;
      positive += r.sigma_sum > 0.0;
    }
  };
  count(run.train.result.trace);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    BuildConfig cfg = RunConfig::desk_build();
    cfg.c_max = 3;
    cfg.l_max = 2;
    cfg.t_max = 30;
    RngStream rng(seed);
    count(build(small_set(seed + 100, 5), cfg, rng).trace);
  }
  return {total > 0 && positive == total, fmt("%zu/%zu accepted kernels with sigma_sum > 0 over 4 builds", positive, total)};
}

Outcome criterion_3() {
  double worst = 0.0;
  std::size_t solves = 0;
  RngStream rng(3);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 20 + rng.index(20), d = 1 + rng.index(60);
    const Matrix2D phi = random_matrix(n, d, rng), y = random_matrix(n, 4, rng);
    worst = std::max(worst, ls_gradient_ratio(phi, y, least_squares(phi, y, 0.0)));
    ++solves;
  }
  for (std::uint64_t seed : {11u, 12u}) {
    BuildConfig cfg;  // ridge 0
    cfg.c_max = 2;
    cfg.l_max = 2;
    cfg.t_max = 30;
    cfg.error_limit = 0.0;
    const Dataset ds = small_set(seed, 4);
    RngStream rng(seed);
    const NetworkModel m = build(ds, cfg, rng).model;
    worst = std::max(worst, ls_gradient_ratio(feature_matrix(ds, m), one_hot(ds), m.readout));
    ++solves;
  }
  return {worst <= 1e-6, fmt("max ||Phi'(Y - Phi O)|| / (||Phi|| ||Y||) = %.2e over %zu ridge-0 solves", worst, solves)};
}

Outcome criterion_4() {
  RngStream rng(4);
  std::size_t xc_bad = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + 2 * rng.index(4);
    const std::size_t h = k + rng.index(9 - k), w = k + rng.index(9 - k);
    const Matrix2D in = random_matrix(h, w, rng), ker = random_matrix(k, k, rng);
    const Matrix2D out = cross_correlate(in, ker);
    const auto ref = oracle::xcorr(oracle::to_grid(in), oracle::to_grid(ker));
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) xc_bad += out(i, j) != ref[i][j];
  }
  double nn_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix2D m = random_matrix(1 + rng.index(6), 1 + rng.index(6), rng);
    nn_err = std::max(nn_err, std::abs(nuclear_norm(m) - oracle::nuclear_norm(m)));
  }
  double ls_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 12 + rng.index(10), d = 2 + rng.index(6);
    const Matrix2D phi = random_matrix(n, d, rng), y = random_matrix(n, 3, rng);
    const Matrix2D o = least_squares(phi, y, 0.0);
    const auto ref = oracle::normal_equations(phi, y, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t q = 0; q < 3; ++q) ls_err = std::max(ls_err, std::abs(o(i, q) - ref[i][q]));
  }
  const bool ok = xc_bad == 0 && nn_err <= 1e-8 && ls_err <= 1e-8;
  return {ok, fmt("xcorr mismatches %zu/200 cases, nuclear norm err %.1e, least squares err %.1e", xc_bad, nn_err, ls_err)};
}

Outcome criterion_5() {
  RngStream rng(5);
  double err = 0.0;
  std::size_t asym = 0;
  for (int t = 0; t < 100; ++t) {
    const double xi = rng.uniform(0.5, 5.0), r = rng.uniform(0.8, 1.5);
    err = std::max(err, std::abs(dog_value(0.0, 0.0, xi, r) - (1.0 - 1.0 / r) / (2.0 * std::numbers::pi)));
    const std::size_t k = 3 + 2 * rng.index(3);
    const Matrix2D w = dog_weights(xi, r, k);
    err = std::max(err, std::abs(w(k / 2, k / 2) - (1.0 - 1.0 / r) / (2.0 * std::numbers::pi)));
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        asym += w(a, b) != w(b, a) || w(a, b) != w(k - 1 - a, b) || w(a, b) != w(a, k - 1 - b);
  }
  return {err <= 1e-12 && asym == 0, fmt("centre err %.1e over 100 draws, %zu grid symmetry violations", err, asym)};
}

Outcome criterion_6() {
  RngStream rng(6);
  bool bounded = true;
  for (int t = 0; t < 100; ++t) {
    Tensor3D s(2 + rng.index(6), 2 + rng.index(6), 1 + rng.index(6));
    for (double& v : s.values()) v = rng.uniform(-1, 1);
    for (double v : independence_coefficients(s).values) bounded = bounded && v >= 0.0 && v <= 1.0;
  }
  Tensor3D one(5, 4, 1);
  for (double& v : one.values()) v = rng.uniform(0, 1);
  const double single = independence_coefficients(one).values[0];
  double orth_err = 0.0;
  for (std::size_t c : {2u, 3u, 4u}) {
    Tensor3D t(4, 4, c);
    for (std::size_t k = 0; k < c; ++k) t.plane(k)[k * 3] = 1.5;
    for (double v : independence_coefficients(t).values) orth_err = std::max(orth_err, std::abs(v - 1.0 / c));
  }
  const Matrix2D a{{1, 1, 0}}, b{{0, 1, 1}}, z{{0, 0, 1}};
  const bool iou_ok = iou(a, a) == 1.0 && iou(z, Matrix2D{{1, 1, 0}}) == 0.0 && iou(a, b) == 1.0 / 3.0;
  const bool ok = bounded && std::abs(single - 1.0) <= 1e-12 && orth_err <= 1e-10 && iou_ok;
  return {ok, fmt("FC in [0,1]: %s, single-channel FC %.15f, orthogonal err %.1e, IoU hand cases %s",
                  bounded ? "yes" : "no", single, orth_err, iou_ok ? "exact" : "wrong")};
}

template <typename F>
double worst_fd_error(Mlp& net, const std::vector<double>& grad, F&& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + 1e-6;
    const double up = f();
    net.params()[i] = keep - 1e-6;
    const double down = f();
    net.params()[i] = keep;
    const double fd = (up - down) / 2e-6;
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-4}));
  }
  return worst;
}

std::vector<Transition> random_batch(RngStream& rng) {
  std::vector<Transition> b(4);
  for (auto& t : b) {
    for (double& v : t.state) v = rng.uniform(0, 1);
    for (double& v : t.next_state) v = rng.uniform(0, 1);
    t.action = rng.uniform(0, 0.8);
    t.terminal = rng.uniform(0, 1) < 0.5;
    t.reward = rng.uniform(-1, 2);
  }
  return b;
}

Outcome criterion_7() {
  RngStream rng(7);
  double actor_err = 0.0, critic_err = 0.0;
  for (int p = 0; p < 50; ++p) {
    Mlp actor = Mlp::random(kStateDim, 5, rng, 0.5);
    Mlp critic = Mlp::random(kStateDim + 1, 5, rng, 0.5);
    const auto batch = random_batch(rng);
    const auto ga = actor_objective(actor, critic, batch, 0.8).grad;
    actor_err = std::max(actor_err, worst_fd_error(actor, ga, [&] { return actor_objective(actor, critic, batch, 0.8).value; }));
    std::vector<double> y(batch.size());
    for (double& v : y) v = rng.uniform(-1, 1);
    const auto gc = critic_loss(critic, batch, y).grad;
    critic_err = std::max(critic_err, worst_fd_error(critic, gc, [&] { return critic_loss(critic, batch, y).value; }));
  }
  return {actor_err <= 1e-4 && critic_err <= 1e-4,
          fmt("worst relative error actor %.1e, critic %.1e (50 points each, width 5)", actor_err, critic_err)};
}

Outcome criterion_8() {
  RngStream rng(8);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const double tau = rng.uniform(0.001, 1.0);
    Mlp target = Mlp::random(7, 20, rng, 1.0);
    const Mlp online = Mlp::random(7, 20, rng, 1.0);
    auto dist = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < online.params().size(); ++i) s += std::pow(target.params()[i] - online.params()[i], 2);
      return std::sqrt(s);
    };
    const double before = dist();
    soft_update(target, online, tau);
    worst = std::max(worst, std::abs(dist() - (1.0 - tau) * before));
  }
  return {worst <= 1e-12, fmt("max | ||new - online|| - (1 - tau) ||old - online|| | = %.1e over 50 nets", worst)};
}

struct PruneStage {
  PruneReport report;
  Splits splits;
  double seconds = 0.0;
};

Outcome criterion_9(PinnedRun& run, PruneStage& stage) {
  const auto t0 = Clock::now();
  std::ostringstream sink;
  stage.report = cmd_prune(run.cfg, run.train.result.model, sink);
  RunStreams rs(run.cfg.seed);
  stage.splits = prepared_splits(run.cfg, rs);
  const NetworkModel& pruned = stage.report.result.model;
  const double acc = accuracy(pruned, stage.splits.test);
  const double iou_pruned = iou_dataset(pruned, stage.splits.test, pruned.layers.size());
  stage.seconds = seconds_since(t0);
  const double total = run.train_seconds + stage.seconds;
  const NetworkModel& full = run.train.result.model;
  const double acc_full = accuracy(full, stage.splits.test);
  const double iou_full = iou_dataset(full, stage.splits.test, full.layers.size());
  const bool ok = acc >= 0.90 && iou_pruned >= 0.30 && total <= 600.0;
  return {ok, fmt("train+prune: test accuracy %.4f, test IoU %.4f (unpruned: accuracy %.4f, IoU %.4f), %.1f s (budget 600 s)",
                  acc, iou_pruned, acc_full, iou_full, total)};
}

Outcome criterion_10(const PinnedRun& run, const PruneStage& stage) {
  const NetworkModel& model = run.train.result.model;
  const DdpgConfig& dc = run.cfg.ddpg;
  PruneSetup setup{rank_all_layers(model, stage.splits.val), run.cfg.build.ridge, dc.a_max, 1};
  PruneEnvironment env(model, stage.splits.train, stage.splits.val, setup, dc.beta, run.cfg.cam_theta);
  RngStream rng(10);
  double mean_random = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> ratios(model.layers.size());
    for (double& a : ratios) a = rng.uniform(0.0, dc.a_max);
    mean_random += env.evaluate(counts_from_ratios(model, ratios, dc.a_max)).reward / 20.0;
  }
  const auto& best = stage.report.result.best;
  const double pa_before = param_count(model).mb;
  const bool value_ok = best.reward >= mean_random && best.pa_mb < pa_before;

  // toy: two layers of at most three kernels
  const Dataset train = small_set(41, 4), val = small_set(42, 2);
  BuildConfig cfg = RunConfig::desk_build();
  cfg.c_max = 3;
  cfg.l_max = 2;
  cfg.t_max = 30;
  RngStream brng(43);
  const NetworkModel toy = build(train, cfg, brng).model;
  DdpgConfig tdc = dc;
  tdc.episodes = 60;
  tdc.batch_size = 8;
  tdc.hidden = 32;
  RngStream prng(44);
  PruneOptions opts;
  opts.ridge = cfg.ridge;
  const PruneResult agent = train_pruner(toy, train, val, tdc, prng, opts);
  PruneEnvironment toy_env(toy, train, val, PruneSetup{rank_all_layers(toy, val), cfg.ridge, tdc.a_max, 1}, tdc.beta,
                           kDefaultTheta);
  const auto [counts, optimum] = exhaustive_search(toy_env, tdc.a_max);
  const bool toy_ok = toy.layers.size() == 2 && agent.best.reward <= optimum.reward + 1e-12;
  std::string shape;
  for (const auto& l : toy.layers) shape += (shape.empty() ? "" : "+") + std::to_string(l.kernels.size());
  return {value_ok && toy_ok,
          fmt("agent reward %.4f vs random mean %.4f, PA %.4f -> %.4f MB; toy (%s kernels) agent %.4f <= exhaustive %.4f",
              best.reward, mean_random, pa_before, best.pa_mb, shape.c_str(), agent.best.reward, optimum.reward)};
}

Outcome criterion_11(const PinnedRun& run) {
  RunConfig again = run.cfg;
  again.out = (run.dir / "repeat").string();
  std::ostringstream sink;
  cmd_train(again, sink);
  const bool model_same = slurp(run.dir / "model.json") == slurp(fs::path(again.out) / "model.json");
  const bool trace_same = slurp(run.dir / "trace.csv") == slurp(fs::path(again.out) / "trace.csv");
  return {model_same && trace_same, fmt("model.json %s, trace.csv %s", model_same ? "identical" : "differs",
                                        trace_same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "dcscn_acceptance").string();
  app.add_option("--workdir", workdir, "Scratch directory for the pinned runs");
  CLI11_PARSE(app, argc, argv);

  PinnedRun run;
  run.dir = workdir;
  fs::remove_all(run.dir);
  fs::create_directories(run.dir);
  run.cfg.out = run.dir.string();
  run.cfg.validate();
  PruneStage stage;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"monotone convergence", [&] { return criterion_1(run); }},
      {"supervisory gate", [&] { return criterion_2(run); }},
      {"least-squares optimality", [] { return criterion_3(); }},
      {"oracle equivalence", [] { return criterion_4(); }},
      {"DoG closed forms", [] { return criterion_5(); }},
      {"interpretability math", [] { return criterion_6(); }},
      {"DDPG gradients", [] { return criterion_7(); }},
      {"soft_update exactness", [] { return criterion_8(); }},
      {"end-to-end accuracy and IoU", [&] { return criterion_9(run, stage); }},
      {"pruning value", [&] { return criterion_10(run, stage); }},
      {"determinism", [&] { return criterion_11(run); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
