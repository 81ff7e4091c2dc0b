#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qprune/errors.hpp"
#include "qprune/penalties.hpp"

using namespace qprune;

namespace {

std::vector<Tensor> one_layer(Shape shape, std::vector<double> v) { return {Tensor(std::move(shape), std::move(v))}; }

}  // namespace

TEST_CASE("shrink closed form") {
  CHECK(shrink(Tensor(Shape{1}, 1.2), 0.5)[0] == doctest::Approx(0.7));
  CHECK(shrink(Tensor(Shape{1}, -0.3), 0.5)[0] == 0.0);
  CHECK(shrink(Tensor(Shape{1}, -1.0), 0.25)[0] == -0.75);
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({20}, rng);
  CHECK(shrink(x, 0.0) == x);
  CHECK_THROWS_AS(shrink(x, -0.1), ArgumentError);
}

TEST_CASE("shrink matches the grid-search proximal oracle") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> xs(-3.0, 3.0), ls(0.0, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = xs(rng), lam = ls(rng);
    const double span = std::max(2.0 * std::abs(x), 1e-3);
    const double ref = oracle::grid_prox_scalar(x, [&](double u) { return lam * std::abs(u); }, -span, span, 1e-4);
    CHECK(std::abs(shrink(Tensor(Shape{1}, x), lam)[0] - ref) < 1e-3);
  }
}

TEST_CASE("shrink zeros exactly the sub-threshold entries and never grows magnitudes") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = oracle::random_tensor({40}, rng);
    const double lam = 0.02 * trial;
    const Tensor y = shrink(x, lam);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK((y[i] == 0.0) == (std::abs(x[i]) <= lam));
      CHECK(std::abs(y[i]) <= std::abs(x[i]));
    }
  }
}

TEST_CASE("group lasso value") {
  auto layers = one_layer({2, 2}, {3, 4, 0, 0});
  auto part = ChannelPartition::by_output_channel(layers);
  CHECK(group_lasso_value(layers, part) == 5.0);
  auto zeros = one_layer({3, 5}, std::vector<double>(15, 0.0));
  CHECK(group_lasso_value(zeros, ChannelPartition::by_output_channel(zeros)) == 0.0);

  std::mt19937_64 rng(4);
  std::vector<Tensor> net{oracle::random_tensor({4, 2, 3, 3}, rng), oracle::random_tensor({5, 4, 3, 3}, rng),
                          oracle::random_tensor({3, 20}, rng)};
  double ref = 0.0;
  for (const auto& t : net) {
    const std::size_t g = t.size() / t.dim(0);
    for (std::size_t c = 0; c < t.dim(0); ++c) {
      long double sq = 0;
      for (std::size_t i = 0; i < g; ++i) sq += static_cast<long double>(t[c * g + i]) * t[c * g + i];
      ref += static_cast<double>(std::sqrt(sq));
    }
  }
  CHECK(group_lasso_value(net, ChannelPartition::by_output_channel(net)) == doctest::Approx(ref).epsilon(1e-13));
}

TEST_CASE("partition must cover the weights") {
  auto a = one_layer({2, 2}, {1, 2, 3, 4});
  auto b = one_layer({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(group_lasso_value(b, ChannelPartition::by_output_channel(a)), ShapeError);
}

TEST_CASE("group lasso subgradient") {
  auto layers = one_layer({2, 2}, {3, 4, 0, 0});
  auto g = group_lasso_subgrad(layers, ChannelPartition::by_output_channel(layers));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[0][1] == doctest::Approx(0.8));
  CHECK(g[0][2] == 0.0);
  CHECK(g[0][3] == 0.0);
}

TEST_CASE("group lasso subgradient and CTl1 gradient match central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> a_dist(0.1, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> net{oracle::random_tensor({3, 2, 3, 3}, rng), oracle::random_tensor({4, 6}, rng)};
    // Keep every entry away from zero so |.| is differentiable.
    for (auto& t : net)
      for (auto& v : t.values())
        if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    const auto part = ChannelPartition::by_output_channel(net);
    const double a = a_dist(rng);
    const auto gl = group_lasso_subgrad(net, part);
    const auto ct = ctl1_grad(net, a);
    for (std::size_t l = 0; l < net.size(); ++l) {
      for (std::size_t i = 0; i < net[l].size(); ++i) {
        auto perturbed = [&](auto value_fn) {
          return [&, value_fn](double v) {
            auto copy = net;
            copy[l][i] = v;
            return value_fn(copy);
          };
        };
        const double num_gl = oracle::central_difference(
            perturbed([&](const std::vector<Tensor>& w) { return group_lasso_value(w, part); }), net[l][i], 1e-6);
        const double num_ct = oracle::central_difference(
            perturbed([&](const std::vector<Tensor>& w) { return ctl1_value(w, a); }), net[l][i], 1e-6);
        CHECK(oracle::rel_err(gl[l][i], num_gl) < 1e-5);
        CHECK(oracle::rel_err(ct[l][i], num_ct, 1e-6) < 1e-5);
      }
    }
  }
}

TEST_CASE("group lasso prox") {
  auto layers = one_layer({1, 2}, {3, 4});
  auto part = ChannelPartition::by_output_channel(layers);
  auto p = group_lasso_prox(layers, 1.0, part);
  CHECK(p[0][0] == doctest::Approx(2.4));
  CHECK(p[0][1] == doctest::Approx(3.2));
  auto killed = group_lasso_prox(layers, 5.0, part);
  CHECK(killed[0][0] == 0.0);
  CHECK(killed[0][1] == 0.0);
  CHECK_THROWS_AS(group_lasso_prox(layers, -1.0, part), ArgumentError);
}

TEST_CASE("group lasso prox matches a 2-D grid-search oracle") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> xs(-1.5, 1.5), ls(0.0, 1.2);
  for (int trial = 0; trial < 200; ++trial) {
    const double x0 = xs(rng), x1 = xs(rng), lam = ls(rng);
    auto layers = one_layer({1, 2}, {x0, x1});
    const auto p = group_lasso_prox(layers, lam, ChannelPartition::by_output_channel(layers));
    const auto ref = oracle::grid_prox_group2(x0, x1, lam, 2.0);
    CHECK(std::abs(p[0][0] - ref[0]) < 1e-3);
    CHECK(std::abs(p[0][1] - ref[1]) < 1e-3);
  }
}

TEST_CASE("group lasso prox keeps the direction of surviving channels") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> net{oracle::random_tensor({6, 10}, rng)};
    const auto part = ChannelPartition::by_output_channel(net);
    const auto p = group_lasso_prox(net, 2.0, part);
    for (std::size_t c = 0; c < 6; ++c) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t i = c * 10; i < c * 10 + 10; ++i) {
        dot += net[0][i] * p[0][i];
        na += net[0][i] * net[0][i];
        nb += p[0][i] * p[0][i];
      }
      if (nb == 0) continue;
      CHECK(dot / std::sqrt(na * nb) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("CTl1 value analytic points") {
  const Tensor zero(Shape{4}, 0.0);
  for (double a : {1e-3, 1.0, 7.5}) CHECK(ctl1_term(zero, a) == 1.0);
  CHECK(ctl1_term(Tensor(Shape{2}, {0.5, -0.5}), 1.0) == 0.5);
  const double a = 0.3;
  CHECK(ctl1_term(Tensor(Shape{1}, 1e6 * a), a) < 1.1e-6);
  CHECK_THROWS_AS(ctl1_value(std::vector<Tensor>{zero}, 0.0), ArgumentError);
  CHECK_THROWS_AS(ctl1_grad(std::vector<Tensor>{zero}, -1.0), ArgumentError);
}

TEST_CASE("CTl1 gradient closed form") {
  std::vector<Tensor> single{Tensor(Shape{1}, 2.0)};
  CHECK(ctl1_grad(single, 1.0)[0][0] == doctest::Approx(-1.0 / 9.0));
  std::vector<Tensor> with_zero{Tensor(Shape{3}, {0.0, 1.0, -1.0})};
  const auto g = ctl1_grad(with_zero, 1.0);
  CHECK(g[0][0] == 0.0);
  CHECK(g[0][1] == doctest::Approx(-1.0 / 9.0));
  CHECK(g[0][2] == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("CTl1 strictly decreases as any magnitude grows") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tensor> net{oracle::random_tensor({10}, rng)};
    const double before = ctl1_value(net, 0.5);
    const std::size_t i = static_cast<std::size_t>(trial) % 10;
    net[0][i] += net[0][i] >= 0 ? 0.1 : -0.1;
    CHECK(ctl1_value(net, 0.5) < before);
  }
}

TEST_CASE("splitting step") {
  std::mt19937_64 rng(9);
  const Tensor w = oracle::random_tensor({30}, rng);
  const Tensor u = oracle::random_tensor({30}, rng);
  CHECK(splitting_step(w, w, 0.1, 3.0) == w);
  CHECK(splitting_step(w, u, 0.5, 2.0) == u);
  CHECK_THROWS_AS(splitting_step(w, u, 0.5, 2.5), ConfigError);
  CHECK_THROWS_AS(splitting_step(w, Tensor(Shape{29}), 0.1, 1.0), ShapeError);

  auto dist = [](const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  std::uniform_real_distribution<double> coeff(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor a = oracle::random_tensor({16}, rng), b = oracle::random_tensor({16}, rng);
    const double c = coeff(rng);
    const Tensor r = splitting_step(a, b, c, 1.0);
    CHECK(dist(r, b) == doctest::Approx((1.0 - c) * dist(a, b)).epsilon(1e-12));
    CHECK(dist(r, b) < dist(a, b));
  }
}

TEST_CASE("penalty values are finite and non-negative") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> net{oracle::random_tensor({4, 9}, rng, 100.0), oracle::random_tensor({2, 3}, rng, 1e-8)};
    const auto part = ChannelPartition::by_output_channel(net);
    const double gl = group_lasso_value(net, part), ct = ctl1_value(net, 0.1);
    CHECK(std::isfinite(gl));
    CHECK(gl >= 0.0);
    CHECK(std::isfinite(ct));
    CHECK(ct >= 0.0);
  }
}

TEST_CASE("penalty config validation") {
  PenaltyConfig p;
  CHECK_NOTHROW(p.validate());
  p.lambda1 = -1;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = PenaltyConfig{};
  p.a = 0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
}
