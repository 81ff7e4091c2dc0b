#include "qprune/run.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "qprune/checkpoint.hpp"
#include "qprune/errors.hpp"
#include "qprune/metrics.hpp"

#ifndef QPRUNE_BUILD_ID
#define QPRUNE_BUILD_ID "unknown"
#endif

namespace qprune {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

std::string build_identifier() { return QPRUNE_BUILD_ID; }

TrainingData load_training_data(const RunConfig& config) {
  const auto& d = config.data;
  TrainingData td;
  if (d.source == "synth") {
    td.train = synth_blobs(d.classes, d.train_per_class, d.image_size, d.seed, d.snr, "train");
    td.eval = synth_blobs(d.classes, d.eval_per_class, d.image_size, d.seed, d.snr, "eval");
  } else if (d.source == "idx") {
    td.train = load_idx(d.train_images, d.train_labels, d.train_count, "train");
    td.eval = load_idx(d.eval_images, d.eval_labels, d.eval_count, "eval");
  } else if (d.source == "cifar") {
    td.train = load_cifar_binary(d.train_file, d.train_count, "train", config.model.classes);
    td.eval = load_cifar_binary(d.eval_file, d.eval_count, "eval", config.model.classes);
  } else {
    throw ConfigError("unknown data source '" + d.source + "'");
  }
  const Shape& s = td.train.images.shape();
  const auto& m = config.model;
  if (s[1] != m.in_channels || s[2] != m.height || s[3] != m.width) {
    throw ConfigError("data images " + shape_to_string(s) + " do not fit model input [" +
                      std::to_string(m.in_channels) + "," + std::to_string(m.height) + "," + std::to_string(m.width) +
                      "]");
  }
  for (int l : td.train.labels) {
    if (static_cast<std::size_t>(l) >= m.classes) throw ConfigError("data label exceeds model.classes");
  }
  td.train.classes = td.eval.classes = m.classes;
  const NormStats stats = compute_norm_stats(td.train);
  apply_normalization(td.train, stats);
  apply_normalization(td.eval, stats);
  return td;
}

namespace {

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string RunManifest::render() const {
  ConfigFile f = to_config_file(config);
  f.set("run.build", build_id);
  f.set("run.seed", std::to_string(config.train.seed));
  f.set("run.started", started);
  f.set("run.finished", finished);
  f.set("run.outcome", outcome);
  f.set("run.metrics", metrics_path);
  f.set("run.channels", channels_path);
  f.set("run.checkpoint", checkpoint_path);
  if (collapse) {
    f.set("run.collapse_epoch", std::to_string(collapse->epoch));
    f.set("run.collapse_layer", collapse->layer);
    f.set("run.collapse_reason", collapse->reason);
    f.set("run.collapse_detail", collapse->describe());
  }
  return f.render();
}

RunManifest RunManifest::parse(const std::string& text) {
  const ConfigFile f = ConfigFile::parse(text, "manifest");
  RunManifest m;
  m.config = run_config_from(f);
  auto get = [&](const std::string& k) {
    auto it = f.entries().find("run." + k);
    return it == f.entries().end() ? std::string{} : it->second;
  };
  m.build_id = get("build");
  m.started = get("started");
  m.finished = get("finished");
  m.outcome = get("outcome");
  m.metrics_path = get("metrics");
  m.channels_path = get("channels");
  m.checkpoint_path = get("checkpoint");
  if (!get("collapse_epoch").empty()) {
    CollapseEvent e;
    e.epoch = std::stoi(get("collapse_epoch"));
    e.layer = get("collapse_layer");
    e.reason = get("collapse_reason");
    m.collapse = e;
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& path) { return parse(read_text(path)); }

RunOutcome execute_run(const RunConfig& config, const fs::path& dir,
                       const std::function<void(const MetricsRecord&)>& progress) {
  config.validate();
  fs::create_directories(dir);
  RunOutcome out;
  out.manifest.config = config;
  out.manifest.build_id = build_identifier();
  out.manifest.started = timestamp();

  const TrainingData data = load_training_data(config);
  Trainer trainer(config.train, Model::initialize(config.model, config.train.seed));
  out.result = trainer.run(data.train, data.eval, progress);

  out.manifest.metrics_path = (dir / kMetricsFile).string();
  out.manifest.channels_path = (dir / kChannelsFile).string();
  out.manifest.checkpoint_path = (dir / kCheckpointFile).string();
  write_text(out.manifest.metrics_path, metrics_csv(out.result.records));
  const std::vector<ChannelCount> last =
      out.result.records.empty() ? std::vector<ChannelCount>{} : out.result.records.back().channels;
  write_text(out.manifest.channels_path, channels_csv(last));
  write_checkpoint(out.manifest.checkpoint_path, trainer.finalize(out.result.records));

  out.manifest.collapse = out.result.collapse;
  out.manifest.outcome = out.result.completed() ? "completed" : "collapsed";
  out.manifest.finished = timestamp();
  write_text(dir / kManifestFile, out.manifest.render());
  out.exit_code = out.result.completed() ? kExitCompleted : kExitCollapsed;
  return out;
}

std::vector<CompareRow> collect_runs(const std::vector<fs::path>& dirs) {
  std::vector<CompareRow> rows;
  for (const auto& dir : dirs) {
    const fs::path metrics = dir / kMetricsFile;
    if (!fs::exists(metrics)) throw FormatError("run '" + dir.string() + "' has no " + kMetricsFile);
    const RunManifest m = RunManifest::load(dir / kManifestFile);
    const std::string text = read_text(metrics);
    std::istringstream is(text);
    std::string line, last;
    std::getline(is, line);
    if (line != kMetricsHeader) throw FormatError("run '" + dir.string() + "': malformed " + kMetricsFile);
    while (std::getline(is, line))
      if (!line.empty()) last = line;
    if (last.empty()) throw FormatError("run '" + dir.string() + "' has no completed epochs");
    std::vector<std::string> cells;
    std::istringstream ls(last);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw FormatError("run '" + dir.string() + "': malformed metrics row");
    rows.push_back({dir.filename().string(), m.config.model.describe(), to_string(m.config.train.algorithm), cells[2],
                    cells[1], cells[4]});
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string out = std::string(kCompareHeader) + "\n";
  for (const auto& r : rows) {
    out += r.run + "," + r.model + "," + r.pruning + "," + r.channel_sparsity + "," + r.weight_sparsity + "," +
           r.accuracy + "\n";
  }
  return out;
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  auto pct = [](const std::string& v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", std::stod(v) * 100.0);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> cells{{"Run", "Model", "Pruning", "Ch. sp", "Wt. sp", "Accuracy"}};
  for (const auto& r : rows) {
    cells.push_back({r.run, r.model, r.pruning, pct(r.channel_sparsity), pct(r.weight_sparsity), pct(r.accuracy)});
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      out += (c ? " | " : "") + cells[r][c] + std::string(width[c] - cells[r][c].size(), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) out += (c ? "-+-" : "") + std::string(width[c], '-');
      out += '\n';
    }
  }
  return out;
}

void write_plotdata(const fs::path& run_dir, const fs::path& out_dir) {
  const fs::path metrics = run_dir / kMetricsFile;
  const fs::path channels = run_dir / kChannelsFile;
  if (!fs::exists(metrics)) throw FormatError("run '" + run_dir.string() + "' has no " + kMetricsFile);
  if (!fs::exists(channels)) throw FormatError("run '" + run_dir.string() + "' has no " + kChannelsFile);
  auto records = parse_metrics_csv(read_text(metrics));
  if (records.empty()) throw FormatError("run '" + run_dir.string() + "' has no completed epochs");
  records.back().channels = parse_channels_csv(read_text(channels));
  const SparsityTimeseries ts = sparsity_timeseries(records);
  fs::create_directories(out_dir);
  write_text(out_dir / "sparsity_vs_epoch.csv", ts.sparsity_vs_epoch);
  write_text(out_dir / "channels_per_layer.csv", ts.channels_per_layer);
}

}  // namespace qprune
