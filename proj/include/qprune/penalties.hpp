#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qprune/tensor.hpp"

namespace qprune {

// One group per output channel: the contiguous slice of all weights that feed
// one output map (dimension 0 of the layer).
class ChannelPartition {
 public:
  struct Layer {
    std::size_t channels = 0;
    std::size_t group_size = 0;
  };

  static ChannelPartition by_output_channel(std::span<const Tensor> layers);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t total_channels() const noexcept;
  // Throws ShapeError when the partition does not exactly cover `layers`.
  void require_covers(std::span<const Tensor> layers) const;

 private:
  std::vector<Layer> layers_;
};

// Current penalty coefficients; see schedule.hpp for how they evolve.
struct PenaltyConfig {
  double lambda1 = 0.0;  // l1, applied by shrinkage
  double lambda2 = 0.0;  // group lasso, applied by gradient
  double lambda3 = 0.0;  // CTl1, applied by gradient
  double beta = 0.0;     // splitting
  double a = 1.0;        // CTl1 shape

  void validate() const;
};

// sgn(x) * max(|x| - threshold, 0), elementwise.
Tensor shrink(const Tensor& x, double threshold);
void shrink_inplace(Tensor& x, double threshold);

double group_lasso_value(std::span<const Tensor> layers, const ChannelPartition& partition);

inline constexpr double kZeroChannelEpsilon = 1e-12;

// w_c / ||w_c|| per channel; zero slice where ||w_c|| <= epsilon.
std::vector<Tensor> group_lasso_subgrad(std::span<const Tensor> layers, const ChannelPartition& partition,
                                        double epsilon = kZeroChannelEpsilon);

// Block soft-thresholding: w_c * max(1 - threshold/||w_c||, 0).
std::vector<Tensor> group_lasso_prox(std::span<const Tensor> layers, double threshold,
                                     const ChannelPartition& partition);

// Per-layer 1 - ||w_l||_1 / (a + ||w_l||_1), summed over layers.
double ctl1_term(const Tensor& layer, double a);
double ctl1_value(std::span<const Tensor> layers, double a);

// d/dw_i = -a sign(w_i) / (a + ||w_l||_1)^2, zero where w_i == 0.
std::vector<Tensor> ctl1_grad(std::span<const Tensor> layers, double a);

// w - coeff*(w - u) with coeff = gamma*beta in [0, 1].
Tensor splitting_step(const Tensor& w, const Tensor& u, double gamma, double beta);
void splitting_step_inplace(Tensor& w, const Tensor& u, double coeff);

}  // namespace qprune
