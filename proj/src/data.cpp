#include "qprune/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "qprune/errors.hpp"

namespace qprune {

Dataset Dataset::gather(const std::vector<std::size_t>& indices) const {
  Shape shape = images.shape();
  const std::size_t per = images.size() / shape[0];
  shape[0] = indices.size();
  Dataset out;
  out.images = Tensor(shape);
  out.classes = classes;
  out.split = split;
  out.labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * per), per,
                out.images.data().begin() + static_cast<std::ptrdiff_t>(j * per));
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw ShapeError("dataset images must be [N,C,H,W], got " + shape_to_string(images.shape()));
  if (images.dim(0) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw FormatError("label " + std::to_string(l) + " out of range for " + std::to_string(classes) + " classes");
    }
  }
}

NormStats compute_norm_stats(const Dataset& train) {
  const std::size_t n = train.images.dim(0), c = train.images.dim(1);
  const std::size_t plane = train.images.dim(2) * train.images.dim(3);
  NormStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t p = 0; p < plane; ++p) sum += train.images[(b * c + ch) * plane + p];
    const double mean = sum / static_cast<double>(n * plane);
    double sq = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = train.images[(b * c + ch) * plane + p] - mean;
        sq += d * d;
      }
    const double sd = std::sqrt(sq / static_cast<double>(n * plane));
    s.mean[ch] = mean;
    s.stddev[ch] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

void apply_normalization(Dataset& data, const NormStats& stats) {
  const std::size_t n = data.images.dim(0), c = data.images.dim(1);
  if (stats.mean.size() != c) throw ShapeError("normalization statistics do not match channel count");
  const std::size_t plane = data.images.dim(2) * data.images.dim(3);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) {
        double& v = data.images[(b * c + ch) * plane + p];
        v = (v - stats.mean[ch]) / stats.stddev[ch];
      }
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t image_size, std::uint64_t seed,
                    double snr, const std::string& split) {
  if (classes < 2) throw ArgumentError("synth_blobs needs at least 2 classes");
  if (per_class == 0 || image_size == 0) throw ArgumentError("synth_blobs needs per_class and image_size >= 1");
  const std::size_t s = image_size, plane = s * s;

  // Each prototype is a sum of three signed Gaussian bumps, scaled to unit RMS.
  std::mt19937_64 proto_rng(seed);
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(s - 1));
  std::uniform_real_distribution<double> width(0.8, 2.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<double>> protos(classes, std::vector<double>(plane, 0.0));
  for (auto& proto : protos) {
    for (int bump = 0; bump < 3; ++bump) {
      const double cy = pos(proto_rng), cx = pos(proto_rng), w = width(proto_rng);
      const double sign = coin(proto_rng) ? 1.0 : -1.0;
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          proto[y * s + x] += sign * std::exp(-(dy * dy + dx * dx) / (2.0 * w * w));
        }
    }
    double sq = 0.0;
    for (double v : proto) sq += v * v;
    const double rms = std::sqrt(sq / static_cast<double>(plane));
    for (double& v : proto) v /= rms;
  }

  std::uint64_t split_key = 0x9e3779b97f4a7c15ULL;
  for (char ch : split) split_key = (split_key ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
  std::mt19937_64 noise_rng(seed ^ split_key);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = classes * per_class;
  Dataset d;
  d.images = Tensor(Shape{n, 1, s, s});
  d.classes = classes;
  d.split = split;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    d.labels[i] = static_cast<int>(label);
    for (std::size_t p = 0; p < plane; ++p) d.images[i * plane + p] = snr * protos[label][p] + noise(noise_rng);
  }
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset, const std::string& path) {
  if (b.size() < offset + 4) {
    throw FormatError(path + ": truncated header at byte offset " + std::to_string(offset) + ": expected " +
                      std::to_string(offset + 4) + " bytes, got " + std::to_string(b.size()));
  }
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit,
                 const std::string& split) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (auto magic = read_be32(img, 0, images_path); magic != 0x00000803) {
    throw FormatError(images_path + ": bad IDX magic at byte offset 0: expected 0x00000803, got " + hex32(magic));
  }
  if (auto magic = read_be32(lab, 0, labels_path); magic != 0x00000801) {
    throw FormatError(labels_path + ": bad IDX magic at byte offset 0: expected 0x00000801, got " + hex32(magic));
  }
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t nl = read_be32(lab, 4, labels_path);
  if (n != nl) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");
  }
  const std::size_t plane = rows * cols;
  if (img.size() != 16 + n * plane) {
    throw FormatError(images_path + ": size mismatch at byte offset 16: expected " + std::to_string(16 + n * plane) +
                      " bytes, got " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + n) {
    throw FormatError(labels_path + ": size mismatch at byte offset 8: expected " + std::to_string(8 + n) +
                      " bytes, got " + std::to_string(lab.size()));
  }
  if (n == 0 || plane == 0) throw FormatError(images_path + ": empty IDX file");
  const std::size_t count = limit ? std::min(limit, n) : n;
  Dataset d;
  d.images = Tensor(Shape{count, 1, rows, cols});
  d.split = split;
  d.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
    for (std::size_t p = 0; p < plane; ++p) d.images[i * plane + p] = img[16 + i * plane + p] / 255.0;
  }
  d.classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return d;
}

Dataset load_cifar_binary(const std::string& path, std::size_t limit, const std::string& split, std::size_t classes) {
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t whole = bytes.size() / kCifarRecordBytes;
    const std::size_t expected = (whole + 1) * kCifarRecordBytes;
    throw FormatError(path + ": truncated CIFAR record at byte offset " + std::to_string(whole * kCifarRecordBytes) +
                      ": expected length " + std::to_string(expected) + ", got " + std::to_string(bytes.size()));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  const std::size_t count = limit ? std::min(limit, n) : n;
  constexpr std::size_t plane = 32 * 32;
  Dataset d;
  d.images = Tensor(Shape{count, 3, 32, 32});
  d.classes = classes;
  d.split = split;
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t base = i * kCifarRecordBytes;
    d.labels[i] = bytes[base];
    if (static_cast<std::size_t>(d.labels[i]) >= classes) {
      throw FormatError(path + ": label " + std::to_string(d.labels[i]) + " at byte offset " + std::to_string(base) +
                        " exceeds " + std::to_string(classes) + " classes");
    }
    for (std::size_t p = 0; p < 3 * plane; ++p) d.images[i * 3 * plane + p] = bytes[base + 1 + p] / 255.0;
  }
  return d;
}

void write_cifar_binary(const std::string& path, const Dataset& data) {
  const Shape expected{data.size(), 3, 32, 32};
  if (data.images.shape() != expected) {
    throw ShapeError("CIFAR layout needs images " + shape_to_string(expected) + ", got " +
                     shape_to_string(data.images.shape()));
  }
  std::vector<unsigned char> out;
  out.reserve(data.size() * kCifarRecordBytes);
  constexpr std::size_t per = 3 * 32 * 32;
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(static_cast<unsigned char>(data.labels[i]));
    for (std::size_t p = 0; p < per; ++p) {
      const double v = std::clamp(data.images[i * per + p], 0.0, 1.0);
      out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace qprune
