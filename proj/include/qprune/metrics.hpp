#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qprune/quantizer.hpp"

namespace qprune {

struct ChannelCount {
  std::size_t total = 0;
  std::size_t surviving = 0;
  bool operator==(const ChannelCount&) const = default;
};

struct MetricsRecord {
  int epoch = 0;
  double weight_sparsity = 0.0;   // zero codes / codes, penalized layers
  double channel_sparsity = 0.0;  // all-zero output channels / channels
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double float_weight_sparsity = 0.0;  // zeros in w after shrinkage (debug only)
  std::vector<ChannelCount> channels;
};

double weight_sparsity(std::span<const QuantizedLayer> layers);
double channel_sparsity(std::span<const QuantizedLayer> layers);
std::vector<ChannelCount> channel_counts(std::span<const QuantizedLayer> layers);
double float_sparsity(std::span<const Tensor> layers);

inline constexpr const char* kMetricsHeader = "epoch,weight_sparsity,channel_sparsity,train_loss,eval_accuracy";
inline constexpr const char* kChannelsHeader = "layer_index,total_channels,surviving_channels";

// Fixed six-decimal CSV; one row per record.
std::string metrics_csv(std::span<const MetricsRecord> records);
std::string channels_csv(std::span<const ChannelCount> counts);

// Plot data: sparsity against epochs and per-layer channel bars.
struct SparsityTimeseries {
  std::string sparsity_vs_epoch;  // epoch,weight_sparsity,channel_sparsity
  std::string channels_per_layer;
};
inline constexpr const char* kSparsityHeader = "epoch,weight_sparsity,channel_sparsity";
SparsityTimeseries sparsity_timeseries(std::span<const MetricsRecord> records);

// Inverse of metrics_csv. Channel counts and the debug column are not stored.
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);
std::vector<ChannelCount> parse_channels_csv(const std::string& text);

}  // namespace qprune

#include "qprune/data.hpp"
#include "qprune/model.hpp"

namespace qprune {

// Top-1 accuracy of the given parameters (pass quantized u, not float w).
double eval_accuracy(const Architecture& arch, std::span<const Tensor> params, const Dataset& data);

}  // namespace qprune
