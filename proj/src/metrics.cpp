#include "qprune/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "qprune/errors.hpp"

namespace qprune {

double weight_sparsity(std::span<const QuantizedLayer> layers) {
  std::size_t zeros = 0, total = 0;
  for (const auto& l : layers) {
    zeros += static_cast<std::size_t>(std::count(l.codes.begin(), l.codes.end(), std::int8_t{0}));
    total += l.codes.size();
  }
  return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
}

std::vector<ChannelCount> channel_counts(std::span<const QuantizedLayer> layers) {
  std::vector<ChannelCount> out;
  for (const auto& l : layers) {
    const std::size_t channels = l.shape.at(0);
    const std::size_t group = l.codes.size() / channels;
    ChannelCount c{channels, 0};
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const auto begin = l.codes.begin() + static_cast<std::ptrdiff_t>(ch * group);
      if (std::any_of(begin, begin + static_cast<std::ptrdiff_t>(group), [](std::int8_t v) { return v != 0; })) {
        ++c.surviving;
      }
    }
    out.push_back(c);
  }
  return out;
}

double channel_sparsity(std::span<const QuantizedLayer> layers) {
  std::size_t dead = 0, total = 0;
  for (const auto& c : channel_counts(layers)) {
    dead += c.total - c.surviving;
    total += c.total;
  }
  return total ? static_cast<double>(dead) / static_cast<double>(total) : 0.0;
}

double float_sparsity(std::span<const Tensor> layers) {
  std::size_t zeros = 0, total = 0;
  for (const auto& t : layers) {
    zeros += static_cast<std::size_t>(std::count(t.values().begin(), t.values().end(), 0.0));
    total += t.size();
  }
  return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::vector<std::string>> read_rows(const std::string& text, const char* header, std::size_t columns) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw FormatError(std::string("CSV header mismatch, expected '") + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) throw FormatError("CSV row has wrong column count: '" + line + "'");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string metrics_csv(std::span<const MetricsRecord> records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + fixed6(r.weight_sparsity) + "," + fixed6(r.channel_sparsity) + "," +
           fixed6(r.train_loss) + "," + fixed6(r.eval_accuracy) + "\n";
  }
  return out;
}

std::string channels_csv(std::span<const ChannelCount> counts) {
  std::string out = std::string(kChannelsHeader) + "\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(counts[i].total) + "," + std::to_string(counts[i].surviving) + "\n";
  }
  return out;
}

SparsityTimeseries sparsity_timeseries(std::span<const MetricsRecord> records) {
  if (records.empty()) throw ArgumentError("sparsity_timeseries needs at least one record");
  SparsityTimeseries ts;
  ts.sparsity_vs_epoch = std::string(kSparsityHeader) + "\n";
  for (const auto& r : records) {
    ts.sparsity_vs_epoch +=
        std::to_string(r.epoch) + "," + fixed6(r.weight_sparsity) + "," + fixed6(r.channel_sparsity) + "\n";
  }
  ts.channels_per_layer = channels_csv(records.back().channels);
  return ts;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::vector<MetricsRecord> out;
  for (const auto& row : read_rows(text, kMetricsHeader, 5)) {
    MetricsRecord r;
    try {
      r.epoch = std::stoi(row[0]);
      r.weight_sparsity = std::stod(row[1]);
      r.channel_sparsity = std::stod(row[2]);
      r.train_loss = std::stod(row[3]);
      r.eval_accuracy = std::stod(row[4]);
    } catch (const std::exception&) {
      throw FormatError("unparseable metrics row starting with '" + row[0] + "'");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<ChannelCount> parse_channels_csv(const std::string& text) {
  std::vector<ChannelCount> out;
  for (const auto& row : read_rows(text, kChannelsHeader, 3)) {
    try {
      out.push_back({std::stoul(row[1]), std::stoul(row[2])});
    } catch (const std::exception&) {
      throw FormatError("unparseable channels row starting with '" + row[0] + "'");
    }
  }
  return out;
}

}  // namespace qprune

namespace qprune {

double eval_accuracy(const Architecture& arch, std::span<const Tensor> params, const Dataset& data) {
  if (data.size() == 0) throw ArgumentError("eval_accuracy on an empty dataset");
  constexpr std::size_t chunk = 256;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(begin + chunk, data.size()); ++i) idx.push_back(i);
    const Dataset batch = data.gather(idx);
    const auto pred = predict(arch, params, batch.images);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace qprune
