#include "qprune/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "qprune/errors.hpp"

namespace qprune {

QuantSpec::QuantSpec(int m, ScaleSearch s) : bits(m), search(s) {
  if (m < 2 || m > 8) throw ArgumentError("quantization bits must be in [2, 8], got " + std::to_string(m));
}

Tensor QuantizedLayer::dequantize() const {
  Tensor out(shape);
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = scale * static_cast<double>(codes[i]);
  return out;
}

std::int8_t nearest_code(double w, double scale, int max_level) {
  const double x = std::abs(w) / scale;
  // ceil(|x| - 0.5) rounds half toward zero.
  double mag = std::ceil(x - 0.5);
  mag = std::clamp(mag, 0.0, static_cast<double>(max_level));
  const auto code = static_cast<std::int8_t>(mag);
  return w < 0.0 ? static_cast<std::int8_t>(-code) : code;
}

QuantizedLayer project_fixed_scale(const Tensor& w, double scale, int max_level) {
  if (!(scale > 0.0)) throw ArgumentError("quantization scale must be positive");
  QuantizedLayer q{w.shape(), scale, std::vector<std::int8_t>(w.size())};
  for (std::size_t i = 0; i < w.size(); ++i) q.codes[i] = nearest_code(w[i], scale, max_level);
  return q;
}

double quantization_residual(const Tensor& w, const QuantizedLayer& q) {
  double r = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - q.scale * q.codes[i];
    r += d * d;
  }
  return r;
}

namespace {

void require_finite(const Tensor& w) {
  for (double v : w.values())
    if (!std::isfinite(v)) throw ArgumentError("cannot quantize non-finite weights");
}

bool all_zero(const Tensor& w) {
  return std::all_of(w.values().begin(), w.values().end(), [](double v) { return v == 0.0; });
}

// Least-squares scale for fixed codes; nullopt when codes are all zero.
std::optional<double> ls_scale(const Tensor& w, const std::vector<std::int8_t>& codes) {
  double wc = 0.0, cc = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    wc += w[i] * codes[i];
    cc += static_cast<double>(codes[i]) * codes[i];
  }
  if (cc == 0.0 || !(wc > 0.0)) return std::nullopt;
  return wc / cc;
}

// As the scale decreases from +inf every |code_i| steps up by one each time
// |w_i|/scale crosses k + 1/2. Between crossings the codes are fixed, and the
// best scale for fixed codes has residual ||w||^2 - <w,c>^2/<c,c>. The global
// optimum is therefore the best prefix of the sorted crossing list.
QuantizedLayer project_exact(const Tensor& w, int max_level) {
  struct Crossing {
    double scale;
    std::size_t index;
  };
  std::vector<Crossing> crossings;
  crossings.reserve(w.size() * static_cast<std::size_t>(max_level));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double a = std::abs(w[i]);
    if (a == 0.0) continue;
    for (int k = 0; k < max_level; ++k) crossings.push_back({a / (k + 0.5), i});
  }
  // Descending scale; ties broken by index so the order is deterministic.
  std::sort(crossings.begin(), crossings.end(), [](const Crossing& x, const Crossing& y) {
    return x.scale != y.scale ? x.scale > y.scale : x.index < y.index;
  });

  std::vector<int> mag(w.size(), 0);
  double wc = 0.0, cc = 0.0;
  double best_ratio = -1.0;
  std::size_t best_prefix = 0;
  for (std::size_t j = 0; j < crossings.size(); ++j) {
    const std::size_t i = crossings[j].index;
    wc += std::abs(w[i]);
    cc += 2.0 * mag[i] + 1.0;
    ++mag[i];
    const double ratio = wc * wc / cc;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_prefix = j + 1;
    }
  }

  std::fill(mag.begin(), mag.end(), 0);
  for (std::size_t j = 0; j < best_prefix; ++j) ++mag[crossings[j].index];
  double bwc = 0.0, bcc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    bwc += std::abs(w[i]) * mag[i];
    bcc += static_cast<double>(mag[i]) * mag[i];
  }
  // Final nearest-level pass: can only tie or improve, and makes the codes
  // nearest-level for the returned scale.
  QuantizedLayer best = project_fixed_scale(w, bwc / bcc, max_level);
  // The scale read back from the largest code reproduces representable
  // inputs bit for bit; keep it when it fits at least as well.
  std::size_t top = 0;
  for (std::size_t i = 1; i < w.size(); ++i)
    if (std::abs(best.codes[i]) > std::abs(best.codes[top])) top = i;
  if (best.codes[top] == 0) return best;
  const double snapped = std::abs(w[top]) / std::abs(best.codes[top]);
  if (snapped > 0.0 && snapped != best.scale) {
    QuantizedLayer alt = project_fixed_scale(w, snapped, max_level);
    if (quantization_residual(w, alt) <= quantization_residual(w, best)) return alt;
  }
  return best;
}

}  // namespace

AlternatingTrace project_alternating(const Tensor& w, int max_level, int max_rounds, double tolerance) {
  require_finite(w);
  AlternatingTrace trace;
  double mean_abs = 0.0;
  for (double v : w.values()) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(w.size());
  // Mean magnitude of the nonzero levels 1..K is (K+1)/2.
  double scale = mean_abs / ((max_level + 1) / 2.0);
  trace.result = project_fixed_scale(w, scale, max_level);
  trace.residuals.push_back(quantization_residual(w, trace.result));
  for (int round = 0; round < max_rounds; ++round) {
    const auto next = ls_scale(w, trace.result.codes);
    if (!next) break;
    const double change = std::abs(*next - scale) / scale;
    scale = *next;
    trace.result = project_fixed_scale(w, scale, max_level);
    trace.residuals.push_back(quantization_residual(w, trace.result));
    if (change < tolerance) break;
  }
  return trace;
}

QuantizedLayer project_layer(const Tensor& w, const QuantSpec& spec, std::optional<double> previous_scale) {
  require_finite(w);
  if (all_zero(w)) {
    const double s = previous_scale.value_or(1.0);
    return QuantizedLayer{w.shape(), s > 0.0 ? s : 1.0, std::vector<std::int8_t>(w.size(), 0)};
  }
  if (spec.search == ScaleSearch::exact) return project_exact(w, spec.max_level());
  return project_alternating(w, spec.max_level(), spec.max_rounds, spec.scale_tolerance).result;
}

}  // namespace qprune
