// qprune: train quantized channel-sparse networks and summarize runs.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qprune/checkpoint.hpp"
#include "qprune/config.hpp"
#include "qprune/errors.hpp"
#include "qprune/run.hpp"

namespace fs = std::filesystem;
using namespace qprune;

namespace {

constexpr const char* kRunRootEnv = "QPRUNE_RUN_ROOT";

fs::path run_root() {
  const char* env = std::getenv(kRunRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

struct TrainOptions {
  std::string config_path;
  std::string preset_name;
  std::string algo;
  std::vector<std::uint64_t> seeds;
  int epochs = 0;
  int bits = 0;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

RunConfig resolve_config(const TrainOptions& o) {
  RunConfig config = preset(o.preset_name.empty() ? "desk" : o.preset_name);
  if (!o.config_path.empty()) {
    config = run_config_from(ConfigFile::load(o.config_path), o.preset_name.empty() ? RunConfig{} : config);
  }
  if (!o.overrides.empty()) {
    ConfigFile extra;
    for (const auto& kv : o.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
      extra.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    config = run_config_from(extra, config);
  }
  if (!o.algo.empty()) config.train.algorithm = parse_algorithm(o.algo);
  if (o.epochs > 0 && o.epochs != config.train.epochs) {
    // Keep milestones at the same relative position in the new budget.
    const int old_epochs = config.train.epochs;
    auto rescale = [&](int e) { return std::max(2, static_cast<int>((2L * e * o.epochs + old_epochs) / (2L * old_epochs))); };
    for (auto& m : config.train.lr_milestones) m.epoch = rescale(m.epoch);
    for (auto& m : config.train.penalty_milestones) m.epoch = rescale(m.epoch);
    config.train.epochs = o.epochs;
  }
  if (o.bits > 0) config.train.bits = o.bits;
  return config;
}

int cmd_train(const TrainOptions& o) {
  RunConfig base = resolve_config(o);
  std::vector<std::uint64_t> seeds = o.seeds;
  if (seeds.empty()) seeds.push_back(base.train.seed);
  const fs::path out = o.out.empty() ? run_root() / (base.preset + "-" + to_string(base.train.algorithm)) : fs::path(o.out);

  auto run_one = [&](std::uint64_t seed, fs::path dir, bool verbose) {
    RunConfig c = base;
    c.train.seed = seed;
    auto progress = [&](const MetricsRecord& r) {
      if (!verbose) return;
      std::fprintf(stderr, "epoch %3d  loss %.4f  acc %.4f  wt.sp %.4f  ch.sp %.4f  float.sp %.4f\n", r.epoch,
                   r.train_loss, r.eval_accuracy, r.weight_sparsity, r.channel_sparsity, r.float_weight_sparsity);
    };
    return execute_run(c, dir, progress);
  };

  int exit_code = kExitCompleted;
  if (seeds.size() == 1) {
    const RunOutcome r = run_one(seeds[0], out, !o.quiet);
    std::cout << out.string() << ": " << r.manifest.outcome;
    if (r.manifest.collapse) std::cout << " (" << r.manifest.collapse->describe() << ")";
    std::cout << '\n';
    return r.exit_code;
  }
  std::vector<std::future<RunOutcome>> jobs;
  for (auto seed : seeds) {
    jobs.push_back(std::async(std::launch::async, run_one, seed, out / ("seed-" + std::to_string(seed)), false));
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const RunOutcome r = jobs[i].get();
    std::cout << "seed " << seeds[i] << ": " << r.manifest.outcome << '\n';
    if (r.exit_code == kExitCollapsed) exit_code = kExitCollapsed;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantization-aware training with channel pruning"};
  app.require_subcommand(1);

  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train one run (or a seed list) into a run directory");
  train->add_option("--config", train_opts.config_path, "Config file (key = value with [sections])");
  train->add_option("--preset", train_opts.preset_name, "Named preset")->default_str("desk");
  train->add_option("--algo", train_opts.algo, "baseline-qat | apgdsm | apgdssm | apgdssm-ctl1");
  train->add_option("--seed", train_opts.seeds, "Seed, or comma-separated seed list run in parallel")->delimiter(',');
  train->add_option("--epochs", train_opts.epochs, "Epoch budget (milestones rescale)");
  train->add_option("--bits", train_opts.bits, "Quantization bit width m");
  train->add_option("--out", train_opts.out, std::string("Run directory (default $") + kRunRootEnv + "/<preset>-<algo>)");
  train->add_option("--set", train_opts.overrides, "Override section.key=value");
  train->add_flag("--quiet", train_opts.quiet, "No per-epoch progress");

  std::vector<std::string> compare_dirs;
  std::string compare_csv_path;
  auto* compare = app.add_subcommand("compare", "Summarize final metrics of runs");
  compare->add_option("runs", compare_dirs, "Run directories")->required();
  compare->add_option("--csv", compare_csv_path, "Also write the summary as CSV");

  std::string plot_dir, plot_out;
  auto* plot = app.add_subcommand("plotdata", "Emit sparsity_vs_epoch.csv and channels_per_layer.csv");
  plot->add_option("run", plot_dir, "Run directory")->required();
  plot->add_option("--out", plot_out, "Output directory (default: the run directory)");

  std::string eval_dir, eval_ckpt, eval_config;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its run's eval split");
  eval->add_option("run", eval_dir, "Run directory");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval->add_option("--config", eval_config, "Config describing the data (default: run manifest)");

  std::string show_name;
  auto* show = app.add_subcommand("preset", "Print a preset as a config file");
  show->add_option("name", show_name, "Preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_opts);
    if (*compare) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      const auto rows = collect_runs(dirs);
      std::cout << compare_table(rows);
      if (!compare_csv_path.empty()) write_text(compare_csv_path, compare_csv(rows));
      return kExitCompleted;
    }
    if (*plot) {
      write_plotdata(plot_dir, plot_out.empty() ? fs::path(plot_dir) : fs::path(plot_out));
      return kExitCompleted;
    }
    if (*eval) {
      if (eval_dir.empty() && (eval_ckpt.empty() || eval_config.empty())) {
        std::cerr << "eval needs a run directory, or --checkpoint with --config\n";
        return kExitUsage;
      }
      const fs::path ckpt = eval_ckpt.empty() ? fs::path(eval_dir) / kCheckpointFile : fs::path(eval_ckpt);
      const RunConfig config = eval_config.empty() ? RunManifest::load(fs::path(eval_dir) / kManifestFile).config
                                                   : run_config_from(ConfigFile::load(eval_config));
      const TrainingData data = load_training_data(config);
      const QuantizedCheckpoint ck = read_checkpoint(ckpt.string());
      std::printf("accuracy %.6f\n", eval_accuracy(ck, data.eval));
      return kExitCompleted;
    }
    if (*show) {
      std::cout << to_config_file(preset(show_name)).render();
      return kExitCompleted;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
