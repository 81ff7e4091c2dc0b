#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qprune/tensor.hpp"

namespace qprune {

struct Dataset {
  Tensor images;  // [N, C, H, W]
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  // Rows `indices` gathered into a new batch.
  Dataset gather(const std::vector<std::size_t>& indices) const;
  void validate() const;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Per-channel statistics; compute on the training split only.
NormStats compute_norm_stats(const Dataset& train);
void apply_normalization(Dataset& data, const NormStats& stats);

// Class-conditional Gaussian-blob images: sample = snr * prototype_k + N(0,1)
// noise, with unit-RMS prototypes drawn from `seed`. Balanced labels
// (sample i has label i % classes). Train and eval splits share prototypes
// and use independent noise streams. Single channel, not normalized.
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t image_size, std::uint64_t seed,
                    double snr, const std::string& split = "train");

// MNIST-style IDX pair (magic 0x00000803 images, 0x00000801 labels). Pixels
// scaled to [0, 1]. `limit` = 0 loads everything.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit = 0,
                 const std::string& split = "train");

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarClasses = 10;

// CIFAR-10 binary: 3073-byte records of label then R, G, B 32x32 planes.
Dataset load_cifar_binary(const std::string& path, std::size_t limit = 0, const std::string& split = "train",
                          std::size_t classes = kCifarClasses);
// Writes images in [0,1] (rounded to bytes) as CIFAR records; images must be [N,3,32,32].
void write_cifar_binary(const std::string& path, const Dataset& data);

}  // namespace qprune
