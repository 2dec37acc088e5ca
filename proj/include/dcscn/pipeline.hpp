#pragma once

// Command implementations shared by the CLI and the acceptance runner.
// Outputs that must be reproducible (models, traces, metrics) are kept apart
// from wall-clock measurements, which go to *_timing.csv files.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "dcscn/builder.hpp"
#include "dcscn/config.hpp"
#include "dcscn/data.hpp"
#include "dcscn/interpret.hpp"
#include "dcscn/model_io.hpp"
#include "dcscn/prune.hpp"

namespace dcscn {

/// Independent random streams derived from the run seed, always split in the same order.
struct RunStreams {
  RngStream data, augment, build, prune;
  explicit RunStreams(std::uint64_t seed) {
    RngStream master(seed);
    data = master.split();
    augment = master.split();
    build = master.split();
    prune = master.split();
  }
};

struct Splits {
  Dataset train, val, test;
};

/// Raw [0,1]-scale splits. Synthetic splits are generated in memory; a folder
/// source must hold train/ and may hold val/ and test/.
inline Splits raw_splits(const RunConfig& cfg, RunStreams& rs) {
  Splits s;
  if (cfg.data_source == "synthetic") {
    s.train = generate_synthetic(cfg.synth_train_per_class, cfg.synth_size, rs.data);
    if (cfg.synth_val_per_class > 0) s.val = generate_synthetic(cfg.synth_val_per_class, cfg.synth_size, rs.data);
    if (cfg.synth_test_per_class > 0) s.test = generate_synthetic(cfg.synth_test_per_class, cfg.synth_size, rs.data);
  } else {
    const std::filesystem::path root(cfg.data_root);
    s.train = load_image_folder(root / "train", Split::train);
    if (std::filesystem::is_directory(root / "val")) s.val = load_image_folder(root / "val", Split::val);
    if (std::filesystem::is_directory(root / "test")) s.test = load_image_folder(root / "test", Split::test);
  }
  s.train.split = Split::train;
  s.val.split = Split::val;
  s.test.split = Split::test;
  return s;
}

/// Crop, resize and map to [-1, 1]; the training split is augmented when enabled.
inline Splits prepared_splits(const RunConfig& cfg, RunStreams& rs) {
  Splits raw = raw_splits(cfg, rs);
  auto prep = [&](const Dataset& d) {
    if (d.empty()) return d;
    const std::size_t crop = cfg.crop ? cfg.crop : std::min(d.height(), d.width());
    return preprocess_dataset(d, crop, cfg.resize);
  };
  Splits s{prep(raw.train), prep(raw.val), prep(raw.test)};
  if (cfg.augment) s.train = augment_dataset(s.train, cfg.eta, rs.augment);
  return s;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

inline std::filesystem::path ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

inline void write_config(const RunConfig& cfg, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << config_to_json(cfg).dump(1) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void cmd_synth(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.data_source != "synthetic") throw ConfigError("synth: data.source must be 'synthetic'");
  RunStreams rs(cfg.seed);
  const Splits s = raw_splits(cfg, rs);
  const std::filesystem::path out = detail::ensure_dir(cfg.out);
  for (const Dataset* d : {&s.train, &s.val, &s.test}) {
    if (d->empty()) continue;
    save_image_folder(*d, out / to_string(d->split));
    const auto counts = d->class_counts();
    log << to_string(d->split) << ':';
    for (std::size_t q = 0; q < counts.size(); ++q) log << ' ' << d->class_names[q] << '=' << counts[q];
    log << '\n';
  }
}

struct TrainReport {
  BuildResult result;
  double train_accuracy = 0.0;
};

inline void write_trace_csv(const BuildTrace& trace, const std::filesystem::path& path) {
  auto f = detail::open_out(path);
  f << "kernel_index,layer,index,xi,r,bias,sigma_sum,contraction,rmse,train_acc\n";
  using detail::fmt;
  for (const auto& r : trace.records) {
    f << r.kernel_index << ',' << r.layer << ',' << r.index << ',' << fmt(r.xi) << ',' << fmt(r.r) << ','
      << fmt(r.bias) << ',' << fmt(r.sigma_sum) << ',' << fmt(r.contraction) << ',' << fmt(r.rmse) << ','
      << fmt(r.train_accuracy) << '\n';
  }
}

inline TrainReport cmd_train(const RunConfig& cfg, std::ostream& log = std::cout) {
  RunStreams rs(cfg.seed);
  const Splits s = prepared_splits(cfg, rs);
  const std::filesystem::path out = detail::ensure_dir(cfg.out);
  BuildOptions opts;
  opts.workers = cfg.workers;
  opts.on_accept = [&](const TraceRecord& r) {
    log << "kernel " << r.kernel_index << " layer " << r.layer << " sigma " << detail::fmt(r.sigma_sum) << " rmse "
        << detail::fmt(r.rmse) << " train_acc " << detail::fmt(r.train_accuracy) << '\n';
  };
  TrainReport rep{build(s.train, cfg.build, rs.build, opts), 0.0};
  rep.train_accuracy = accuracy(rep.result.model, s.train, cfg.workers);

  save_model(rep.result.model, out / "model.json");
  write_trace_csv(rep.result.trace, out / "trace.csv");
  {
    auto f = detail::open_out(out / "trace_timing.csv");
    f << "kernel_index,elapsed_s\n";
    for (const auto& r : rep.result.trace.records) f << r.kernel_index << ',' << detail::fmt(r.elapsed_s) << '\n';
  }
  detail::write_config(cfg, out / "config.json");
  log << "stop: " << to_string(rep.result.trace.stop) << ", kernels " << rep.result.model.kernel_count()
      << ", layers " << rep.result.model.layers.size() << ", train accuracy " << detail::fmt(rep.train_accuracy)
      << ", pa_mb " << detail::fmt(param_count(rep.result.model).mb) << '\n';
  return rep;
}

struct EvalRow {
  std::string split;
  double accuracy = 0.0;
  double pa_mb = 0.0;
  double inference_s = 0.0;  // per sample
};

inline std::vector<EvalRow> cmd_eval(const RunConfig& cfg, const NetworkModel& model, std::ostream& log = std::cout) {
  RunStreams rs(cfg.seed);
  const Splits s = prepared_splits(cfg, rs);
  const std::filesystem::path out = detail::ensure_dir(cfg.out);
  std::vector<EvalRow> rows;
  const double pa = param_count(model).mb;
  for (const Dataset* d : {&s.train, &s.val, &s.test}) {
    if (d->empty()) continue;
    if (d->class_names != model.class_names) throw ShapeError("eval: dataset classes differ from the model's");
    const auto t0 = std::chrono::steady_clock::now();
    const double acc = accuracy(model, *d, cfg.workers);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({to_string(d->split), acc, pa, secs / static_cast<double>(d->size())});
  }
  auto f = detail::open_out(out / "eval.csv");
  auto ft = detail::open_out(out / "eval_timing.csv");
  f << "split,accuracy,pa_mb\n";
  ft << "split,inference_s_per_sample\n";
  for (const auto& r : rows) {
    f << r.split << ',' << detail::fmt(r.accuracy) << ',' << detail::fmt(r.pa_mb) << '\n';
    ft << r.split << ',' << detail::fmt(r.inference_s) << '\n';
    log << r.split << ": accuracy " << detail::fmt(r.accuracy) << ", pa_mb " << detail::fmt(r.pa_mb)
        << ", inference_s_per_sample " << detail::fmt(r.inference_s) << '\n';
  }
  return rows;
}

inline std::size_t resolve_layer(const RunConfig& cfg, const NetworkModel& model) {
  const std::size_t layer = cfg.cam_layer == 0 ? model.layers.size() : cfg.cam_layer;
  if (layer < 1 || layer > model.layers.size()) {
    throw ConfigError("cam.layer " + std::to_string(layer) + " is out of range [1, " +
                      std::to_string(model.layers.size()) + "]");
  }
  return layer;
}

struct ExplainReport {
  std::size_t layer = 0;
  std::size_t masked = 0;
  double iou = 0.0;  // mean over masked test samples
};

/// Heatmaps for the first explain.images test samples, per-sample IoU for every masked one.
inline ExplainReport cmd_explain(const RunConfig& cfg, const NetworkModel& model, std::ostream& log = std::cout) {
  RunStreams rs(cfg.seed);
  const Splits s = prepared_splits(cfg, rs);
  const Dataset& ds = s.test.empty() ? s.val : s.test;
  if (ds.empty()) throw ArgumentError("explain: no test or validation split available");
  ExplainReport rep;
  rep.layer = resolve_layer(cfg, model);
  const std::filesystem::path out = detail::ensure_dir(cfg.out);
  const std::filesystem::path heat_dir = detail::ensure_dir(out / "heatmaps");

  std::vector<CamMap> maps(ds.size());
  std::vector<bool> needed(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) needed[i] = i < cfg.explain_images || ds.samples[i].mask.has_value();
  parallel_for(ds.size(), cfg.workers, [&](std::size_t i) {
    if (needed[i]) maps[i] = cam(model, ds.samples[i].image, rep.layer, ds.samples[i].label, cfg.cam_theta);
  });
  char name[64];
  for (std::size_t i = 0; i < std::min(cfg.explain_images, ds.size()); ++i) {
    std::snprintf(name, sizeof name, "%05zu_%s.png", i, ds.class_names[ds.samples[i].label].c_str());
    export_heatmap(maps[i], ds.samples[i].image, heat_dir / name);
  }
  auto f = detail::open_out(out / "iou.csv");
  f << "sample_id,class,iou\n";
  double sum = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.samples[i].mask) continue;
    const double v = iou(maps[i].highlight, *ds.samples[i].mask);
    f << i << ',' << ds.class_names[ds.samples[i].label] << ',' << detail::fmt(v) << '\n';
    sum += v;
    ++rep.masked;
  }
  rep.iou = rep.masked ? sum / static_cast<double>(rep.masked) : 0.0;
  log << "heatmaps: " << std::min(cfg.explain_images, ds.size()) << " written to " << heat_dir.string() << '\n';
  if (rep.masked) {
    log << "layer " << rep.layer << " IoU (" << to_string(ds.split) << ", " << rep.masked
        << " masked samples): " << detail::fmt(rep.iou) << '\n';
  } else {
    log << "no masks available; IoU not computed\n";
  }
  return rep;
}

struct PruneReport {
  RewardParts before;  // the model as given
  PruneResult result;
};

inline PruneReport cmd_prune(const RunConfig& cfg, const NetworkModel& model, std::ostream& log = std::cout) {
  RunStreams rs(cfg.seed);
  const Splits s = prepared_splits(cfg, rs);
  if (s.val.empty()) throw ArgumentError("prune: a validation split is required");
  const std::filesystem::path out = detail::ensure_dir(cfg.out);
  PruneOptions opts;
  opts.ridge = cfg.build.ridge;
  opts.theta = cfg.cam_theta;
  opts.workers = cfg.workers;
  opts.on_episode = [&](const EpisodeRecord& r) {
    if (r.episode % 50 == 0) log << "episode " << r.episode << " reward " << detail::fmt(r.parts.reward) << '\n';
  };
  PruneReport rep;
  rep.before = reward(model, s.val, cfg.ddpg.beta, cfg.cam_theta, cfg.workers);
  rep.result = train_pruner(model, s.train, s.val, cfg.ddpg, rs.prune, opts);

  save_model(rep.result.model, out / "pruned_model.json");
  auto f = detail::open_out(out / "reward.csv");
  f << "episode,reward,acc,iou,pa_mb\n";
  using detail::fmt;
  for (const auto& r : rep.result.curve) {
    f << r.episode << ',' << fmt(r.parts.reward) << ',' << fmt(r.parts.acc) << ',' << fmt(r.parts.iou) << ','
      << fmt(r.parts.pa_mb) << '\n';
  }
  const auto& a = rep.before;
  const auto& b = rep.result.best;
  log << "before: acc " << fmt(a.acc) << ", iou " << fmt(a.iou) << ", pa_mb " << fmt(a.pa_mb) << ", reward "
      << fmt(a.reward) << '\n';
  log << "after:  acc " << fmt(b.acc) << ", iou " << fmt(b.iou) << ", pa_mb " << fmt(b.pa_mb) << ", reward "
      << fmt(b.reward) << '\n';
  log << "kernels per layer:";
  for (const auto& l : rep.result.model.layers) log << ' ' << l.kernels.size();
  log << '\n';
  return rep;
}

}  // namespace dcscn
