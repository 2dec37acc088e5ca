// dcscn: synth | train | eval | explain | prune

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dcscn/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

struct ModelFlags {
  std::string model;
  std::optional<std::size_t> layer;
  std::optional<double> theta;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON configuration with flat dotted keys");
  cmd->add_option("--seed", f.seed, "Run seed (overrides the config)");
  cmd->add_option("--out", f.out, "Output directory (overrides the config)");
  cmd->add_option("--workers", f.workers, "Worker threads (overrides the config)");
}

dcscn::RunConfig resolve(const CommonFlags& f, const ModelFlags* m = nullptr) {
  dcscn::RunConfig cfg = f.config.empty() ? dcscn::RunConfig{} : dcscn::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.workers) cfg.workers = *f.workers;
  if (m && m->layer) cfg.cam_layer = *m->layer;
  if (m && m->theta) cfg.cam_theta = *m->theta;
  cfg.validate();
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep convolutional stochastic configuration networks"};
  app.require_subcommand(1);

  CommonFlags common;
  ModelFlags mflags;

  auto* synth = app.add_subcommand("synth", "Write the synthetic dataset as PNG folders with masks");
  add_common(synth, common);
  auto* train = app.add_subcommand("train", "Build a network and write model.json and trace.csv");
  add_common(train, common);

  auto with_model = [&](const char* name, const char* desc) {
    auto* cmd = app.add_subcommand(name, desc);
    add_common(cmd, common);
    cmd->add_option("--model", mflags.model, "Model JSON")->required();
    return cmd;
  };
  auto* eval = with_model("eval", "Accuracy and parameter amount per split");
  auto* explain = with_model("explain", "CAM heatmaps and the IoU trustworthiness index");
  explain->add_option("--layer", mflags.layer, "Layer to interpret (1-based, default last)");
  explain->add_option("--theta", mflags.theta, "Highlight threshold as a fraction of peak heat");
  auto* prune = with_model("prune", "DDPG kernel pruning");
  prune->add_option("--theta", mflags.theta, "Highlight threshold as a fraction of peak heat");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (synth->parsed()) {
      dcscn::cmd_synth(resolve(common));
    } else if (train->parsed()) {
      dcscn::cmd_train(resolve(common));
    } else {
      const auto cfg = resolve(common, &mflags);
      const auto model = dcscn::load_model(mflags.model);
      if (eval->parsed()) dcscn::cmd_eval(cfg, model);
      if (explain->parsed()) dcscn::cmd_explain(cfg, model);
      if (prune->parsed()) dcscn::cmd_prune(cfg, model);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
