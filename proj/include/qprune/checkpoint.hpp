#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qprune/data.hpp"
#include "qprune/model.hpp"

namespace qprune {

// One parameter. Quantized entries store scale + int8 codes; the rest
// (biases) store raw doubles.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  bool quantized = false;
  double scale = 1.0;
  std::vector<std::int8_t> codes;
  std::vector<double> values;

  Tensor tensor() const;
  bool operator==(const CheckpointEntry&) const = default;
};

struct QuantizedCheckpoint {
  Architecture architecture;
  int bits = 4;
  std::vector<CheckpointEntry> entries;
  std::string metrics_csv;

  std::vector<Tensor> params() const;
  std::vector<QuantizedLayer> quantized_layers() const;
  bool operator==(const QuantizedCheckpoint&) const = default;
};

inline constexpr char kCheckpointMagic[8] = {'Q', 'P', 'R', 'U', 'N', 'E', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian): magic[8], u32 version, u64 payload length, payload,
// u32 CRC-32 of the payload.
std::vector<unsigned char> encode_checkpoint(const QuantizedCheckpoint& ck);
// Throws FormatError on bad magic, version mismatch, truncation or checksum failure.
QuantizedCheckpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void write_checkpoint(const std::string& path, const QuantizedCheckpoint& ck);
QuantizedCheckpoint read_checkpoint(const std::string& path);

double eval_accuracy(const QuantizedCheckpoint& ck, const Dataset& data);

}  // namespace qprune
