#include <filesystem>

#include "doctest.h"
#include "qprune/errors.hpp"
#include "qprune/run.hpp"

using namespace qprune;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qprune_test_run_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny(Algorithm algo) {
  RunConfig c = preset("desk");
  c.preset = "tiny";
  c.train.algorithm = algo;
  c.train.epochs = 3;
  c.train.lr_milestones.clear();
  c.train.penalty_milestones.clear();
  c.data.train_per_class = 20;
  c.data.eval_per_class = 10;
  c.model.conv_channels = {4, 6};
  return c;
}

}  // namespace

TEST_CASE("a run writes manifest, metrics, channels and checkpoint") {
  const auto dir = scratch("basic");
  const auto out = execute_run(tiny(Algorithm::apgdssm), dir);
  CHECK(out.exit_code == kExitCompleted);
  for (const char* f : {kManifestFile, kMetricsFile, kChannelsFile, kCheckpointFile}) CHECK(fs::exists(dir / f));

  const auto m = RunManifest::load(dir / kManifestFile);
  CHECK(m.outcome == "completed");
  CHECK(m.config.train.epochs == 3);
  CHECK(m.config.model.conv_channels == std::vector<std::size_t>{4, 6});
  CHECK(m.build_id == build_identifier());
  CHECK_FALSE(m.collapse.has_value());

  const auto records = parse_metrics_csv(read_text(dir / kMetricsFile));
  REQUIRE(records.size() == 3);
  const auto ck = read_checkpoint((dir / kCheckpointFile).string());
  const auto data = load_training_data(m.config);
  CHECK(eval_accuracy(ck, data.eval) == doctest::Approx(records.back().eval_accuracy).epsilon(1e-6));
  CHECK(parse_channels_csv(read_text(dir / kChannelsFile)) == out.result.records.back().channels);
}

TEST_CASE("rerunning from a manifest reproduces metrics byte for byte") {
  const auto first = scratch("first");
  const auto second = scratch("second");
  execute_run(tiny(Algorithm::apgdsm), first);
  const auto m = RunManifest::load(first / kManifestFile);
  execute_run(m.config, second);
  CHECK(read_text(first / kMetricsFile) == read_text(second / kMetricsFile));
  CHECK(read_text(first / kCheckpointFile) == read_text(second / kCheckpointFile));
}

TEST_CASE("collapsed runs exit with the collapse code and record the event") {
  const auto dir = scratch("collapse");
  auto c = tiny(Algorithm::apgdsm);
  c.train.penalty.lambda1 = 10.0;
  const auto out = execute_run(c, dir);
  CHECK(out.exit_code == kExitCollapsed);
  const auto m = RunManifest::load(dir / kManifestFile);
  CHECK(m.outcome == "collapsed");
  REQUIRE(m.collapse.has_value());
  CHECK(m.collapse->reason == "all-zero-layer");
  CHECK(m.collapse->epoch == 1);
}

TEST_CASE("compare and plot data read the final metrics row") {
  const auto a = scratch("cmp_a"), b = scratch("cmp_b");
  execute_run(tiny(Algorithm::baseline_qat), a);
  execute_run(tiny(Algorithm::apgdssm), b);
  const auto rows = collect_runs({a, b});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].pruning == "baseline-qat");
  CHECK(rows[1].pruning == "apgdssm");
  CHECK(rows[0].model == "convnet-4-6-fc4");
  const auto last = parse_metrics_csv(read_text(b / kMetricsFile)).back();
  CHECK(std::stod(rows[1].weight_sparsity) == last.weight_sparsity);

  const auto csv = compare_csv(rows);
  CHECK(csv.rfind(std::string(kCompareHeader) + "\n", 0) == 0);
  const auto table = compare_table(rows);
  CHECK(table.find("Ch. sp") != std::string::npos);
  CHECK(table.find("%") != std::string::npos);

  const auto plots = scratch("plots");
  write_plotdata(b, plots);
  const auto ts = read_text(plots / "sparsity_vs_epoch.csv");
  CHECK(ts.rfind(std::string(kSparsityHeader) + "\n", 0) == 0);
  CHECK(read_text(plots / "channels_per_layer.csv") == read_text(b / kChannelsFile));

  CHECK_THROWS_AS(collect_runs({scratch("nothing")}), FormatError);
}

TEST_CASE("data that does not fit the model is a configuration error") {
  auto c = tiny(Algorithm::apgdsm);
  c.data.image_size = 6;
  CHECK_THROWS_AS(load_training_data(c), ConfigError);
}
