#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qprune/errors.hpp"
#include "qprune/model.hpp"
#include "qprune/quantizer.hpp"

using namespace qprune;

TEST_CASE("level set has 2^m + 1 symmetric levels") {
  for (int m = 2; m <= 8; ++m) {
    QuantSpec spec(m);
    CHECK(spec.level_count() == static_cast<std::size_t>((1 << m) + 1));
    CHECK(spec.max_level() == (1 << (m - 1)));
  }
  CHECK_THROWS_AS(QuantSpec(1), ArgumentError);
}

TEST_CASE("fixed-scale projection rounds to nearest level, ties toward zero") {
  const Tensor w(Shape{3}, {0.9, -2.1, 0.0});
  const auto q = project_fixed_scale(w, 1.0, 2);
  CHECK(q.codes == std::vector<std::int8_t>{1, -2, 0});

  const Tensor ties(Shape{4}, {0.5, -1.5, 2.5, 7.0});
  const auto t = project_fixed_scale(ties, 1.0, 4);
  CHECK(t.codes == std::vector<std::int8_t>{0, -1, 2, 4});
}

TEST_CASE("representable inputs are recovered exactly") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> c_dist(0.01, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double c = c_dist(rng);
    // Contains the extreme level and a +-1, so the representation is unique.
    const std::vector<int> q{8, -1, 0, 3, -5, 0, 2, -8};
    Tensor w(Shape{q.size()});
    for (std::size_t i = 0; i < q.size(); ++i) w[i] = c * q[i];
    const auto out = project_layer(w, QuantSpec(4));
    CHECK(out.scale == doctest::Approx(c).epsilon(1e-12));
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(out.codes[i] == q[i]);
    CHECK(quantization_residual(w, out) <= 1e-20 * c * c);
  }
}

TEST_CASE("exact scale search matches exhaustive enumeration on 8-vectors") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor w = oracle::random_tensor({8}, rng);
    const auto q = project_layer(w, QuantSpec(2));
    const double got = quantization_residual(w, q);
    const double best = oracle::brute_force_quant_residual(w.values(), 2);
    CHECK(got <= best * (1.0 + 1e-9) + 1e-15);
    CHECK(got >= best * (1.0 - 1e-9) - 1e-15);
  }
}

TEST_CASE("code optimality: no single-code change lowers the residual") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor w = oracle::random_tensor({12}, rng);
    for (auto search : {ScaleSearch::exact, ScaleSearch::alternating}) {
      QuantSpec spec(3, search);
      const auto q = project_layer(w, spec);
      const double base = quantization_residual(w, q);
      for (std::size_t i = 0; i < q.codes.size(); ++i) {
        for (int c = -spec.max_level(); c <= spec.max_level(); ++c) {
          auto alt = q;
          alt.codes[i] = static_cast<std::int8_t>(c);
          CHECK(quantization_residual(w, alt) >= base - 1e-12);
        }
      }
    }
  }
}

TEST_CASE("alternating minimization never increases the residual") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor w = oracle::random_tensor({30}, rng);
    const auto trace = project_alternating(w, 8, 10, 0.0);
    REQUIRE(trace.residuals.size() >= 2);
    for (std::size_t r = 1; r < trace.residuals.size(); ++r) {
      CHECK(trace.residuals[r] <= trace.residuals[r - 1] * (1 + 1e-12));
    }
  }
  // Default budget: at most 3 refinement rounds.
  const Tensor w = oracle::random_tensor({30}, rng);
  CHECK(project_alternating(w, 8, 3, 1e-6).residuals.size() <= 4);
}

TEST_CASE("exact search is never worse than alternating") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor w = oracle::random_tensor({40}, rng);
    const auto exact = project_layer(w, QuantSpec(4, ScaleSearch::exact));
    const auto alt = project_layer(w, QuantSpec(4, ScaleSearch::alternating));
    CHECK(quantization_residual(w, exact) <= quantization_residual(w, alt) + 1e-12);
  }
}

TEST_CASE("zeros are preserved and all-zero layers keep their scale") {
  std::mt19937_64 rng(7);
  Tensor w = oracle::random_tensor({50}, rng);
  for (std::size_t i = 0; i < w.size(); i += 3) w[i] = 0.0;
  const auto q = project_layer(w, QuantSpec(4));
  for (std::size_t i = 0; i < w.size(); i += 3) CHECK(q.codes[i] == 0);

  const Tensor zero(Shape{2, 3}, 0.0);
  const auto first = project_layer(zero, QuantSpec(4));
  CHECK(first.scale == 1.0);
  CHECK(std::all_of(first.codes.begin(), first.codes.end(), [](auto c) { return c == 0; }));
  const auto carried = project_layer(zero, QuantSpec(4), 0.37);
  CHECK(carried.scale == 0.37);
  CHECK_THROWS_AS(project_layer(Tensor(Shape{1}, NAN), QuantSpec(4)), ArgumentError);
}

TEST_CASE("dequantized layer is reconstructed exactly from codes and scale") {
  std::mt19937_64 rng(12);
  const Tensor w = oracle::random_tensor({3, 4}, rng);
  const auto q = project_layer(w, QuantSpec(4));
  const Tensor u = q.dequantize();
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == q.scale * q.codes[i]);
  CHECK(u.shape() == w.shape());
}

TEST_CASE("project_all: fixed point, idempotence, biases untouched, sparsity never drops") {
  Architecture arch;
  arch.conv_channels = {4, 6};
  Model model = Model::initialize(arch, 3);
  QuantSpec spec(4);
  const QuantizedModel q = project_all(model, spec);
  REQUIRE(q.layers.size() == 3);
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    if (!model.parameters()[p].penalized) CHECK(q.params[p] == model.parameters()[p].value);
  }

  // Feeding u back in is a fixed point of the frozen-scale projection.
  Model projected = model;
  for (std::size_t p = 0; p < projected.parameters().size(); ++p) projected.parameters()[p].value = q.params[p];
  const QuantizedModel again = project_all_fixed(projected, spec);
  CHECK(again.params == q.params);
  // And of the full projection: representable layers come back unchanged.
  QuantSpec spec2(4);
  CHECK(project_all(projected, spec2).params == q.params);

  std::mt19937_64 rng(1);
  std::bernoulli_distribution zero(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor w = oracle::random_tensor({64}, rng);
    std::size_t zeros_w = 0;
    for (auto& v : w.values()) {
      if (zero(rng)) v = 0.0;
      zeros_w += v == 0.0;
    }
    const auto layer = project_layer(w, QuantSpec(2 + trial % 4));
    const auto zeros_u = static_cast<std::size_t>(std::count(layer.codes.begin(), layer.codes.end(), 0));
    CHECK(zeros_u >= zeros_w);
  }
}
