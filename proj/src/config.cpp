#include "qprune/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "qprune/errors.hpp"

namespace qprune {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::baseline_qat: return "baseline-qat";
    case Algorithm::apgdsm: return "apgdsm";
    case Algorithm::apgdssm: return "apgdssm";
    case Algorithm::apgdssm_ctl1: return "apgdssm-ctl1";
  }
  return "?";
}

std::string to_string(ScheduleVariant v) { return v == ScheduleVariant::table1 ? "table1" : "lr-coupled"; }
std::string to_string(ShrinkScaling s) { return s == ShrinkScaling::bare ? "bare" : "lr"; }
std::string to_string(ScaleSearch s) { return s == ScaleSearch::exact ? "exact" : "alternating"; }

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

}  // namespace

Algorithm parse_algorithm(const std::string& s) {
  const auto l = lower(s);
  if (l == "baseline-qat" || l == "baseline" || l == "none" || l == "qat") return Algorithm::baseline_qat;
  if (l == "apgdsm") return Algorithm::apgdsm;
  if (l == "apgdssm") return Algorithm::apgdssm;
  if (l == "apgdssm-ctl1" || l == "ctl1") return Algorithm::apgdssm_ctl1;
  throw ConfigError("unknown algorithm '" + s + "' (expected baseline-qat, apgdsm, apgdssm, apgdssm-ctl1)");
}

ScheduleVariant parse_schedule(const std::string& s) {
  const auto l = lower(s);
  if (l == "table1") return ScheduleVariant::table1;
  if (l == "lr-coupled") return ScheduleVariant::lr_coupled;
  throw ConfigError("unknown schedule '" + s + "' (expected table1 or lr-coupled)");
}

ShrinkScaling parse_shrink_scaling(const std::string& s) {
  const auto l = lower(s);
  if (l == "bare") return ShrinkScaling::bare;
  if (l == "lr") return ShrinkScaling::lr;
  throw ConfigError("unknown shrink_scaling '" + s + "' (expected bare or lr)");
}

ScaleSearch parse_scale_search(const std::string& s) {
  const auto l = lower(s);
  if (l == "exact") return ScaleSearch::exact;
  if (l == "alternating") return ScaleSearch::alternating;
  throw ConfigError("unknown scale_search '" + s + "' (expected exact or alternating)");
}

std::vector<LrMilestone> default_lr_milestones() { return {{80, 0.1}, {120, 0.1}, {160, 0.1}}; }

std::vector<PenaltyMilestone> table1_milestones() {
  return {{35, 0.5, 0.5}, {70, 0.2, 0.2}, {110, 0.5, 0.1}, {150, 0.5, 0.1}};
}

namespace {

int rescale_epoch(int epoch, int epochs) {
  // Round half up; keep at least epoch 2 so epoch 1 always runs unscaled.
  const long scaled = (static_cast<long>(epoch) * epochs * 2 + 200) / 400;
  return std::max(2, static_cast<int>(scaled));
}

}  // namespace

std::vector<LrMilestone> scale_milestones(const std::vector<LrMilestone>& m, int epochs) {
  auto out = m;
  for (auto& x : out) x.epoch = rescale_epoch(x.epoch, epochs);
  return out;
}

std::vector<PenaltyMilestone> scale_milestones(const std::vector<PenaltyMilestone>& m, int epochs) {
  auto out = m;
  for (auto& x : out) x.epoch = rescale_epoch(x.epoch, epochs);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (bits < 2 || bits > 8) throw ConfigError("bits must be in [2, 8]");
  int prev = 0;
  for (const auto& m : lr_milestones) {
    if (m.epoch <= prev || m.epoch >= epochs) {
      throw ConfigError("lr milestones must be strictly increasing and < epochs (" + std::to_string(epochs) + ")");
    }
    if (!(m.factor > 0.0 && m.factor <= 1.0)) throw ConfigError("lr milestone factors must lie in (0, 1]");
    prev = m.epoch;
  }
  prev = 0;
  for (const auto& m : penalty_milestones) {
    if (m.epoch <= prev || m.epoch >= epochs) {
      throw ConfigError("penalty milestones must be strictly increasing and < epochs (" + std::to_string(epochs) +
                        ")");
    }
    if (!(m.lambda_factor > 0.0 && m.lambda_factor <= 1.0 && m.beta_factor > 0.0 && m.beta_factor <= 1.0)) {
      throw ConfigError("penalty milestone factors must lie in (0, 1]");
    }
    prev = m.epoch;
  }
  try {
    penalty.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  // Both schedules are non-increasing, so epoch 1 carries the largest product.
  const double split = lr * penalty.beta;
  if (uses_splitting() && split > 1.0) {
    throw ConfigError("splitting coefficient gamma*beta = " + fmt_double(split) + " exceeds 1");
  }
}

void RunConfig::validate() const {
  train.validate();
  model.validate();
  if (data.source != "synth" && data.source != "idx" && data.source != "cifar") {
    throw ConfigError("unknown data source '" + data.source + "' (expected synth, idx, cifar)");
  }
  if (data.source == "synth" && data.classes != model.classes) {
    throw ConfigError("data.classes and model.classes disagree");
  }
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.entries_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string ConfigFile::render() const {
  std::ostringstream os;
  std::string current;
  bool first = true;
  // Keys without a section must precede the first header.
  std::vector<std::pair<std::string, std::string>> ordered;
  for (const auto& kv : entries_)
    if (kv.first.find('.') == std::string::npos) ordered.push_back(kv);
  for (const auto& kv : entries_)
    if (kv.first.find('.') != std::string::npos) ordered.push_back(kv);
  for (const auto& [key, value] : ordered) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (first || section != current) {
      if (!first) os << '\n';
      if (!section.empty()) os << '[' << section << "]\n";
      current = section;
      first = false;
    }
    os << name << " = " << value << '\n';
  }
  return os.str();
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

RunConfig run_config_from(const ConfigFile& file, RunConfig base) {
  RunConfig c = std::move(base);
  std::vector<std::string> unknown;
  for (const auto& [key, v] : file.entries()) {
    if (key.rfind("run.", 0) == 0) continue;
    if (key == "preset") c.preset = v;
    else if (key == "train.algorithm") c.train.algorithm = parse_algorithm(v);
    else if (key == "train.epochs") c.train.epochs = parse_int<int>(key, v);
    else if (key == "train.lr") c.train.lr = parse_double(key, v);
    else if (key == "train.lr_milestones") {
      c.train.lr_milestones.clear();
      for (const auto& item : split(v, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 2) throw ConfigError("key '" + key + "': expected epoch:factor, got '" + item + "'");
        c.train.lr_milestones.push_back({parse_int<int>(key, parts[0]), parse_double(key, parts[1])});
      }
    } else if (key == "train.penalty_milestones") {
      c.train.penalty_milestones.clear();
      for (const auto& item : split(v, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 3) {
          throw ConfigError("key '" + key + "': expected epoch:lambda_factor:beta_factor, got '" + item + "'");
        }
        c.train.penalty_milestones.push_back(
            {parse_int<int>(key, parts[0]), parse_double(key, parts[1]), parse_double(key, parts[2])});
      }
    } else if (key == "train.schedule") c.train.schedule = parse_schedule(v);
    else if (key == "train.shrink_scaling") c.train.shrink_scaling = parse_shrink_scaling(v);
    else if (key == "train.seed") c.train.seed = parse_int<std::uint64_t>(key, v);
    else if (key == "train.batch_size") c.train.batch_size = parse_int<std::size_t>(key, v);
    else if (key == "train.bits") c.train.bits = parse_int<int>(key, v);
    else if (key == "train.scale_search") c.train.scale_search = parse_scale_search(v);
    else if (key == "penalty.lambda1") c.train.penalty.lambda1 = parse_double(key, v);
    else if (key == "penalty.lambda2") c.train.penalty.lambda2 = parse_double(key, v);
    else if (key == "penalty.lambda3") c.train.penalty.lambda3 = parse_double(key, v);
    else if (key == "penalty.beta") c.train.penalty.beta = parse_double(key, v);
    else if (key == "penalty.a") c.train.penalty.a = parse_double(key, v);
    else if (key == "model.in_channels") c.model.in_channels = parse_int<std::size_t>(key, v);
    else if (key == "model.height") c.model.height = parse_int<std::size_t>(key, v);
    else if (key == "model.width") c.model.width = parse_int<std::size_t>(key, v);
    else if (key == "model.classes") c.model.classes = parse_int<std::size_t>(key, v);
    else if (key == "model.conv_channels") {
      c.model.conv_channels.clear();
      for (const auto& item : split(v, ',')) c.model.conv_channels.push_back(parse_int<std::size_t>(key, item));
    } else if (key == "data.source") c.data.source = v;
    else if (key == "data.classes") c.data.classes = parse_int<std::size_t>(key, v);
    else if (key == "data.train_per_class") c.data.train_per_class = parse_int<std::size_t>(key, v);
    else if (key == "data.eval_per_class") c.data.eval_per_class = parse_int<std::size_t>(key, v);
    else if (key == "data.image_size") c.data.image_size = parse_int<std::size_t>(key, v);
    else if (key == "data.snr") c.data.snr = parse_double(key, v);
    else if (key == "data.seed") c.data.seed = parse_int<std::uint64_t>(key, v);
    else if (key == "data.train_images") c.data.train_images = v;
    else if (key == "data.train_labels") c.data.train_labels = v;
    else if (key == "data.eval_images") c.data.eval_images = v;
    else if (key == "data.eval_labels") c.data.eval_labels = v;
    else if (key == "data.train_file") c.data.train_file = v;
    else if (key == "data.eval_file") c.data.eval_file = v;
    else if (key == "data.train_count") c.data.train_count = parse_int<std::size_t>(key, v);
    else if (key == "data.eval_count") c.data.eval_count = parse_int<std::size_t>(key, v);
    else unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return c;
}

ConfigFile to_config_file(const RunConfig& c) {
  ConfigFile f;
  f.set("preset", c.preset);
  f.set("train.algorithm", to_string(c.train.algorithm));
  f.set("train.epochs", std::to_string(c.train.epochs));
  f.set("train.lr", fmt_double(c.train.lr));
  std::string lm, pm;
  for (const auto& m : c.train.lr_milestones) lm += (lm.empty() ? "" : ", ") + std::to_string(m.epoch) + ":" + fmt_double(m.factor);
  for (const auto& m : c.train.penalty_milestones) {
    pm += (pm.empty() ? "" : ", ") + std::to_string(m.epoch) + ":" + fmt_double(m.lambda_factor) + ":" +
          fmt_double(m.beta_factor);
  }
  f.set("train.lr_milestones", lm);
  f.set("train.penalty_milestones", pm);
  f.set("train.schedule", to_string(c.train.schedule));
  f.set("train.shrink_scaling", to_string(c.train.shrink_scaling));
  f.set("train.seed", std::to_string(c.train.seed));
  f.set("train.batch_size", std::to_string(c.train.batch_size));
  f.set("train.bits", std::to_string(c.train.bits));
  f.set("train.scale_search", to_string(c.train.scale_search));
  f.set("penalty.lambda1", fmt_double(c.train.penalty.lambda1));
  f.set("penalty.lambda2", fmt_double(c.train.penalty.lambda2));
  f.set("penalty.lambda3", fmt_double(c.train.penalty.lambda3));
  f.set("penalty.beta", fmt_double(c.train.penalty.beta));
  f.set("penalty.a", fmt_double(c.train.penalty.a));
  f.set("model.in_channels", std::to_string(c.model.in_channels));
  f.set("model.height", std::to_string(c.model.height));
  f.set("model.width", std::to_string(c.model.width));
  f.set("model.classes", std::to_string(c.model.classes));
  f.set("model.conv_channels", join_sizes(c.model.conv_channels));
  f.set("data.source", c.data.source);
  f.set("data.classes", std::to_string(c.data.classes));
  f.set("data.train_per_class", std::to_string(c.data.train_per_class));
  f.set("data.eval_per_class", std::to_string(c.data.eval_per_class));
  f.set("data.image_size", std::to_string(c.data.image_size));
  f.set("data.snr", fmt_double(c.data.snr));
  f.set("data.seed", std::to_string(c.data.seed));
  f.set("data.train_images", c.data.train_images);
  f.set("data.train_labels", c.data.train_labels);
  f.set("data.eval_images", c.data.eval_images);
  f.set("data.eval_labels", c.data.eval_labels);
  f.set("data.train_file", c.data.train_file);
  f.set("data.eval_file", c.data.eval_file);
  f.set("data.train_count", std::to_string(c.data.train_count));
  f.set("data.eval_count", std::to_string(c.data.eval_count));
  return f;
}

namespace {

// Desk-scale reference task; values tuned for the 8x8 synthetic blobs, not
// taken from any full-scale experiment.
RunConfig desk_base() {
  RunConfig c;
  c.preset = "desk";
  c.train.algorithm = Algorithm::apgdssm;
  c.train.epochs = 60;
  c.train.lr = 0.1;
  c.train.lr_milestones = scale_milestones(default_lr_milestones(), c.train.epochs);
  c.train.penalty_milestones = scale_milestones(table1_milestones(), c.train.epochs);
  c.train.penalty = PenaltyConfig{1e-2, 5e-3, 0.0, 0.1, 1.0};
  c.train.shrink_scaling = ShrinkScaling::lr;
  c.train.batch_size = 32;
  c.train.bits = 4;
  c.data.snr = 0.4;
  return c;
}

// Full-scale presets document the published starting values; the desk task
// cannot reproduce those runs.
RunConfig full_scale(const std::string& name, PenaltyConfig p, Algorithm algo, ScheduleVariant schedule,
                     std::size_t classes, std::size_t in_channels, std::size_t size) {
  RunConfig c;
  c.preset = name;
  c.train.algorithm = algo;
  c.train.schedule = schedule;
  c.train.penalty = p;
  c.train.batch_size = 128;
  c.model.in_channels = in_channels;
  c.model.height = c.model.width = size;
  c.model.classes = classes;
  c.data.source = "cifar";
  c.data.classes = classes;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"desk", "desk-aggressive", "desk-aggressive-ctl1", "cifar10-table2", "cifar100-table3", "aggressive-ctl1",
          "imagenet-table5"};
}

RunConfig preset(const std::string& name) {
  if (name == "desk") return desk_base();
  if (name == "desk-aggressive") {
    RunConfig c = desk_base();
    c.preset = name;
    c.train.penalty.lambda1 *= 10.0;
    return c;
  }
  if (name == "desk-aggressive-ctl1") {
    RunConfig c = desk_base();
    c.preset = name;
    c.train.algorithm = Algorithm::apgdssm_ctl1;
    c.train.schedule = ScheduleVariant::lr_coupled;
    c.train.penalty.lambda1 *= 10.0;
    c.train.penalty.lambda3 = 1.0;
    return c;
  }
  if (name == "cifar10-table2") {
    return full_scale(name, {0.04, 5e-6, 0.0, 1e-3, 1.0}, Algorithm::apgdssm, ScheduleVariant::table1, 10, 3, 32);
  }
  if (name == "cifar100-table3") {
    return full_scale(name, {0.02, 5e-6, 0.0, 1e-3, 1.0}, Algorithm::apgdssm, ScheduleVariant::table1, 100, 3, 32);
  }
  if (name == "aggressive-ctl1") {
    return full_scale(name, {0.2, 1.5e-3, 1.0, 0.01, 1.0}, Algorithm::apgdssm_ctl1, ScheduleVariant::lr_coupled, 10,
                      3, 32);
  }
  if (name == "imagenet-table5") {
    RunConfig c = full_scale(name, {1e-2, 2e-4, 1.0, 1e-3, 1.0}, Algorithm::apgdssm_ctl1,
                             ScheduleVariant::lr_coupled, 1000, 3, 32);
    return c;
  }
  std::string known;
  for (const auto& n : preset_names()) known += " " + n;
  throw ConfigError("unknown preset '" + name + "' (known:" + known + ")");
}

}  // namespace qprune
