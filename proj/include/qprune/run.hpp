#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qprune/config.hpp"
#include "qprune/data.hpp"
#include "qprune/trainer.hpp"

namespace qprune {

// Exit-code contract of the command-line front end.
inline constexpr int kExitCompleted = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitCollapsed = 2;

inline constexpr const char* kManifestFile = "manifest";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kChannelsFile = "channels.csv";
inline constexpr const char* kCheckpointFile = "model.qckpt";

struct TrainingData {
  Dataset train;
  Dataset eval;  // normalized with the training-split statistics
};

// Builds or loads both splits; throws ConfigError if they do not fit the model.
TrainingData load_training_data(const RunConfig& config);

struct RunManifest {
  RunConfig config;
  std::string build_id;
  std::string started;
  std::string finished;
  std::string outcome;  // completed | collapsed
  std::optional<CollapseEvent> collapse;
  std::string metrics_path, channels_path, checkpoint_path;

  std::string render() const;
  static RunManifest parse(const std::string& text);
  static RunManifest load(const std::filesystem::path& path);
};

std::string build_identifier();

struct RunOutcome {
  RunResult result;
  RunManifest manifest;
  int exit_code = kExitCompleted;
};

// Trains and writes manifest, metrics.csv, channels.csv and model.qckpt into `dir`.
RunOutcome execute_run(const RunConfig& config, const std::filesystem::path& dir,
                       const std::function<void(const MetricsRecord&)>& progress = {});

struct CompareRow {
  std::string run;
  std::string model;
  std::string pruning;
  std::string channel_sparsity;  // verbatim from metrics.csv
  std::string weight_sparsity;
  std::string accuracy;
};

inline constexpr const char* kCompareHeader = "run,model,pruning,channel_sparsity,weight_sparsity,accuracy";

// Final record of each run. Throws FormatError naming a run without metrics.
std::vector<CompareRow> collect_runs(const std::vector<std::filesystem::path>& dirs);
std::string compare_table(const std::vector<CompareRow>& rows);
std::string compare_csv(const std::vector<CompareRow>& rows);

// Writes sparsity_vs_epoch.csv and channels_per_layer.csv into `out_dir`.
void write_plotdata(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace qprune
