#pragma once

#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qprune/checkpoint.hpp"
#include "qprune/config.hpp"
#include "qprune/data.hpp"
#include "qprune/metrics.hpp"
#include "qprune/model.hpp"
#include "qprune/penalties.hpp"
#include "qprune/quantizer.hpp"
#include "qprune/schedule.hpp"

namespace qprune {

struct CollapseEvent {
  int epoch = 0;
  std::string layer;   // offending parameter, or the node that produced a non-finite value
  std::string reason;  // "all-zero-layer" | "non-finite-loss"
  ScheduleState schedule;

  std::string describe() const;
};

class TrainingCollapsed : public std::runtime_error {
 public:
  explicit TrainingCollapsed(CollapseEvent event);
  const CollapseEvent& event() const noexcept { return event_; }

 private:
  CollapseEvent event_;
};

// Flags the first penalized layer whose quantized weights are all zero.
// Uses the scales in `spec` without modifying it.
std::optional<CollapseEvent> collapse_guard(const Model& model, const QuantSpec& spec, const ScheduleState& state);

struct RunResult {
  std::vector<MetricsRecord> records;
  std::optional<CollapseEvent> collapse;
  bool completed() const noexcept { return !collapse.has_value(); }
};

class Trainer {
 public:
  Trainer(TrainConfig config, Model model);

  // One pass over `train` in minibatches. Per minibatch: project u = Proj_Q(w);
  // gradient of loss(u) + GL [+ CTl1] at u applied to w; optional splitting
  // toward u; shrinkage of w. Throws TrainingCollapsed.
  MetricsRecord train_epoch(const Dataset& train, const Dataset& eval, const ScheduleState& state);

  RunResult run(const Dataset& train, const Dataset& eval,
                const std::function<void(const MetricsRecord&)>& on_epoch = {});

  // Final projection of w into a checkpoint carrying `history`.
  QuantizedCheckpoint finalize(const std::vector<MetricsRecord>& history = {}) const;

  const Model& model() const noexcept { return model_; }
  Model& model() noexcept { return model_; }
  const QuantSpec& quant() const noexcept { return quant_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  TrainConfig config_;
  Model model_;
  QuantSpec quant_;
  ChannelPartition partition_;
  std::mt19937_64 shuffle_rng_;
};

}  // namespace qprune
