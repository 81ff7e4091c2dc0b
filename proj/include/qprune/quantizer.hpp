#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qprune/tensor.hpp"

namespace qprune {

enum class ScaleSearch {
  // Global least-squares optimum over (scale, codes) by scanning rounding breakpoints.
  exact,
  // Alternating minimization: scale by least squares, codes by nearest level.
  alternating,
};

// m-bit symmetric level set {0, +-1, ..., +-2^(m-1)} with one positive scale per layer.
struct QuantSpec {
  int bits = 4;
  ScaleSearch search = ScaleSearch::exact;
  int max_rounds = 3;            // alternating search only
  double scale_tolerance = 1e-6;  // alternating search only, relative
  std::map<std::string, double> per_layer_scale;

  explicit QuantSpec(int m = 4, ScaleSearch s = ScaleSearch::exact);
  int max_level() const noexcept { return 1 << (bits - 1); }
  std::size_t level_count() const noexcept { return (std::size_t{1} << bits) + 1; }
};

struct QuantizedLayer {
  Shape shape;
  double scale = 1.0;
  std::vector<std::int8_t> codes;

  Tensor dequantize() const;
  bool operator==(const QuantizedLayer&) const = default;
};

// Nearest level to w/scale; exact midpoints round toward zero.
std::int8_t nearest_code(double w, double scale, int max_level);

QuantizedLayer project_fixed_scale(const Tensor& w, double scale, int max_level);

// Residual ||w - scale*codes||^2.
double quantization_residual(const Tensor& w, const QuantizedLayer& q);

// Projects w onto the quantized subspace. `previous_scale` is used verbatim for
// an all-zero w (falls back to 1 when absent).
QuantizedLayer project_layer(const Tensor& w, const QuantSpec& spec, std::optional<double> previous_scale = {});

// Alternating minimization with per-round residual trace, for inspection.
struct AlternatingTrace {
  QuantizedLayer result;
  std::vector<double> residuals;  // residual after each round
};
AlternatingTrace project_alternating(const Tensor& w, int max_level, int max_rounds, double tolerance);

}  // namespace qprune
