#include "qprune/penalties.hpp"

#include <cmath>

#include "qprune/errors.hpp"

namespace qprune {

ChannelPartition ChannelPartition::by_output_channel(std::span<const Tensor> layers) {
  ChannelPartition p;
  for (const auto& t : layers) p.layers_.push_back({t.dim(0), t.size() / t.dim(0)});
  return p;
}

std::size_t ChannelPartition::total_channels() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.channels;
  return n;
}

void ChannelPartition::require_covers(std::span<const Tensor> layers) const {
  if (layers.size() != layers_.size()) {
    throw ShapeError("channel partition has " + std::to_string(layers_.size()) + " layers, weights have " +
                     std::to_string(layers.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers_[l].channels * layers_[l].group_size != layers[l].size()) {
      throw ShapeError("channel partition does not cover layer " + std::to_string(l) + " of shape " +
                       shape_to_string(layers[l].shape()));
    }
  }
}

void PenaltyConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || beta < 0) {
    throw ArgumentError("penalty coefficients must be non-negative");
  }
  if (!(a > 0)) throw ArgumentError("CTl1 shape parameter a must be positive");
}

void shrink_inplace(Tensor& x, double threshold) {
  if (!(threshold >= 0.0)) throw ArgumentError("shrinkage threshold must be >= 0");
  if (threshold == 0.0) return;
  for (auto& v : x.values()) {
    const double m = std::abs(v) - threshold;
    v = m > 0.0 ? std::copysign(m, v) : 0.0;
  }
}

Tensor shrink(const Tensor& x, double threshold) {
  Tensor out = x;
  shrink_inplace(out, threshold);
  return out;
}

namespace {

template <class Fn>
void for_each_channel(std::span<const Tensor> layers, const ChannelPartition& partition, Fn&& fn) {
  partition.require_covers(layers);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& pl = partition.layers()[l];
    for (std::size_t c = 0; c < pl.channels; ++c) {
      const std::size_t begin = c * pl.group_size;
      double sq = 0.0;
      for (std::size_t i = begin; i < begin + pl.group_size; ++i) sq += layers[l][i] * layers[l][i];
      fn(l, begin, pl.group_size, std::sqrt(sq));
    }
  }
}

std::vector<Tensor> zeros_like(std::span<const Tensor> layers) {
  std::vector<Tensor> out;
  out.reserve(layers.size());
  for (const auto& t : layers) out.emplace_back(t.shape(), 0.0);
  return out;
}

}  // namespace

double group_lasso_value(std::span<const Tensor> layers, const ChannelPartition& partition) {
  double total = 0.0;
  for_each_channel(layers, partition, [&](std::size_t, std::size_t, std::size_t, double norm) { total += norm; });
  return total;
}

std::vector<Tensor> group_lasso_subgrad(std::span<const Tensor> layers, const ChannelPartition& partition,
                                        double epsilon) {
  auto out = zeros_like(layers);
  for_each_channel(layers, partition, [&](std::size_t l, std::size_t begin, std::size_t n, double norm) {
    if (norm <= epsilon) return;
    for (std::size_t i = begin; i < begin + n; ++i) out[l][i] = layers[l][i] / norm;
  });
  return out;
}

std::vector<Tensor> group_lasso_prox(std::span<const Tensor> layers, double threshold,
                                     const ChannelPartition& partition) {
  if (!(threshold >= 0.0)) throw ArgumentError("group lasso threshold must be >= 0");
  auto out = zeros_like(layers);
  for_each_channel(layers, partition, [&](std::size_t l, std::size_t begin, std::size_t n, double norm) {
    if (norm <= threshold || norm == 0.0) return;
    const double factor = 1.0 - threshold / norm;
    for (std::size_t i = begin; i < begin + n; ++i) out[l][i] = layers[l][i] * factor;
  });
  return out;
}

namespace {

double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += std::abs(v);
  return s;
}

void require_positive_shape(double a) {
  if (!(a > 0.0)) throw ArgumentError("CTl1 shape parameter a must be > 0");
}

}  // namespace

double ctl1_term(const Tensor& layer, double a) {
  require_positive_shape(a);
  const double s = l1_norm(layer);
  // 1 - s/(a+s) == a/(a+s), which keeps precision for large s.
  return a / (a + s);
}

double ctl1_value(std::span<const Tensor> layers, double a) {
  require_positive_shape(a);
  double total = 0.0;
  for (const auto& t : layers) total += ctl1_term(t, a);
  return total;
}

std::vector<Tensor> ctl1_grad(std::span<const Tensor> layers, double a) {
  require_positive_shape(a);
  auto out = zeros_like(layers);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double s = l1_norm(layers[l]);
    const double mag = a / ((a + s) * (a + s));
    for (std::size_t i = 0; i < layers[l].size(); ++i) {
      const double v = layers[l][i];
      if (v > 0.0) out[l][i] = -mag;
      else if (v < 0.0) out[l][i] = mag;
    }
  }
  return out;
}

void splitting_step_inplace(Tensor& w, const Tensor& u, double coeff) {
  require_same_shape(w, u, "splitting_step");
  if (!(coeff >= 0.0)) throw ArgumentError("splitting coefficient gamma*beta must be >= 0");
  if (coeff > 1.0) {
    throw ConfigError("splitting coefficient gamma*beta = " + std::to_string(coeff) +
                      " exceeds 1 and would overshoot the quantized weights");
  }
  if (coeff == 1.0) {
    w = u;
    return;
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= coeff * (w[i] - u[i]);
}

Tensor splitting_step(const Tensor& w, const Tensor& u, double gamma, double beta) {
  Tensor out = w;
  splitting_step_inplace(out, u, gamma * beta);
  return out;
}

}  // namespace qprune
