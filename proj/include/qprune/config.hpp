#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qprune/model.hpp"
#include "qprune/penalties.hpp"

namespace qprune {

enum class Algorithm { baseline_qat, apgdsm, apgdssm, apgdssm_ctl1 };
enum class ScheduleVariant { table1, lr_coupled };
// Shrinkage threshold under the table1 schedule: lambda1^t as written, or
// scaled by the learning rate. The lr-coupled schedule always scales.
enum class ShrinkScaling { bare, lr };

std::string to_string(Algorithm a);
std::string to_string(ScheduleVariant v);
std::string to_string(ShrinkScaling s);
std::string to_string(ScaleSearch s);
Algorithm parse_algorithm(const std::string& s);
ScheduleVariant parse_schedule(const std::string& s);
ShrinkScaling parse_shrink_scaling(const std::string& s);
ScaleSearch parse_scale_search(const std::string& s);

struct LrMilestone {
  int epoch = 0;
  double factor = 1.0;
  bool operator==(const LrMilestone&) const = default;
};

struct PenaltyMilestone {
  int epoch = 0;
  double lambda_factor = 1.0;  // applied to lambda1 and lambda2
  double beta_factor = 1.0;
  bool operator==(const PenaltyMilestone&) const = default;
};

std::vector<LrMilestone> default_lr_milestones();
std::vector<PenaltyMilestone> table1_milestones();
// Milestone epochs rescaled from a 200-epoch budget to `epochs`.
std::vector<LrMilestone> scale_milestones(const std::vector<LrMilestone>& m, int epochs);
std::vector<PenaltyMilestone> scale_milestones(const std::vector<PenaltyMilestone>& m, int epochs);

struct TrainConfig {
  Algorithm algorithm = Algorithm::apgdssm;
  int epochs = 200;
  double lr = 0.1;
  std::vector<LrMilestone> lr_milestones = default_lr_milestones();
  std::vector<PenaltyMilestone> penalty_milestones = table1_milestones();
  PenaltyConfig penalty;
  ScheduleVariant schedule = ScheduleVariant::table1;
  ShrinkScaling shrink_scaling = ShrinkScaling::bare;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  int bits = 4;
  ScaleSearch scale_search = ScaleSearch::exact;

  bool uses_group_lasso() const { return algorithm != Algorithm::baseline_qat; }
  bool uses_shrinkage() const { return algorithm != Algorithm::baseline_qat; }
  bool uses_splitting() const { return algorithm == Algorithm::apgdssm || algorithm == Algorithm::apgdssm_ctl1; }
  bool uses_ctl1() const { return algorithm == Algorithm::apgdssm_ctl1; }

  // Throws ConfigError.
  void validate() const;
};

struct DataConfig {
  std::string source = "synth";  // synth | idx | cifar
  std::size_t classes = 4;
  std::size_t train_per_class = 500;
  std::size_t eval_per_class = 100;
  std::size_t image_size = 8;
  double snr = 1.0;
  std::uint64_t seed = 1234;
  std::string train_images, train_labels, eval_images, eval_labels;  // idx
  std::string train_file, eval_file;                                 // cifar
  std::size_t train_count = 0;  // 0 = all
  std::size_t eval_count = 0;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  std::string preset = "custom";
  TrainConfig train;
  DataConfig data;
  Architecture model;

  void validate() const;
};

// Flat `key = value` text with [sections]. Keys are stored as "section.key".
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigFile load(const std::string& path);

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  std::string render() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Strict: every key must be recognized, otherwise ConfigError listing all unknown
// keys. Keys in the [run] section are manifest metadata and are ignored.
RunConfig run_config_from(const ConfigFile& file, RunConfig base = {});
ConfigFile to_config_file(const RunConfig& config);

std::vector<std::string> preset_names();
// Throws ConfigError for unknown names.
RunConfig preset(const std::string& name);

}  // namespace qprune
