#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "doctest.h"
#include "qprune/errors.hpp"
#include "qprune/trainer.hpp"

using namespace qprune;

namespace {

Architecture small_arch() {
  Architecture a;
  a.conv_channels = {4, 6};
  return a;
}

TrainConfig small_config(Algorithm algo, int epochs = 3) {
  TrainConfig c;
  c.algorithm = algo;
  c.epochs = epochs;
  c.lr_milestones.clear();
  c.penalty_milestones.clear();
  c.batch_size = 16;
  c.seed = 17;
  return c;
}

struct Data {
  Dataset train = synth_blobs(4, 20, 8, 3, 1.0);
  Dataset eval = synth_blobs(4, 10, 8, 3, 1.0, "eval");
};

bool bit_identical(const Model& a, const Model& b) {
  for (std::size_t p = 0; p < a.parameters().size(); ++p) {
    const auto& x = a.parameters()[p].value.values();
    const auto& y = b.parameters()[p].value.values();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

enum class Order { spec, shrink_first };

// One full-batch step written out directly, for checking the trainer's order of operations.
Model reference_step(const TrainConfig& c, Model model, const Dataset& train, Order order) {
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(c.seed ^ 0x5851f42d4c957f2dULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  const Dataset batch = train.gather(idx);
  const auto s = schedule_for(c, 1);

  QuantSpec spec(c.bits);
  const QuantizedModel q = project_all(model, spec);
  Graph g;
  std::vector<Var> vars;
  const Var logits = build_forward(g, model.architecture(), q.params, batch.images, &vars);
  g.backward(g.softmax_cross_entropy(logits, batch.labels));
  std::vector<Tensor> u;
  for (auto i : model.penalized_indices()) u.push_back(q.params[i]);
  const auto gl = group_lasso_subgrad(u, ChannelPartition::by_output_channel(u));
  std::size_t layer = 0;
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    Tensor& w = model.parameters()[p].value;
    const Tensor& grad = g.grad(vars[p]);
    if (!model.parameters()[p].penalized) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= s.lr * grad[i];
      continue;
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= s.lr * (grad[i] + s.gl_weight * gl[layer][i]);
    if (order == Order::spec) {
      w = shrink(splitting_step(w, u[layer], s.split_coeff, 1.0), s.shrink_threshold);
    } else {
      w = splitting_step(shrink(w, s.shrink_threshold), u[layer], s.split_coeff, 1.0);
    }
    ++layer;
  }
  return model;
}

}  // namespace

TEST_CASE("zero penalties reduce APGDSSM to baseline QAT bit for bit") {
  Data d;
  const Model init = Model::initialize(small_arch(), 5);
  auto base_cfg = small_config(Algorithm::baseline_qat);
  auto split_cfg = small_config(Algorithm::apgdssm);
  Trainer base(base_cfg, init), split(split_cfg, init);
  const auto rb = base.run(d.train, d.eval);
  const auto rs = split.run(d.train, d.eval);
  REQUIRE(rb.completed());
  REQUIRE(rs.completed());
  CHECK(bit_identical(base.model(), split.model()));
  CHECK(metrics_csv(rb.records) == metrics_csv(rs.records));
}

TEST_CASE("training step applies projection, gradient, splitting, shrinkage in that order") {
  Data d;
  auto c = small_config(Algorithm::apgdssm, 1);
  c.batch_size = d.train.size();
  c.penalty = PenaltyConfig{0.02, 0.01, 0.0, 2.0, 1.0};
  const Model init = Model::initialize(small_arch(), 6);
  Trainer t(c, init);
  t.train_epoch(d.train, d.eval, schedule_for(c, 1));

  const Model ref = reference_step(c, init, d.train, Order::spec);
  CHECK(bit_identical(t.model(), ref));

  const Model permuted = reference_step(c, init, d.train, Order::shrink_first);
  CHECK(float_sparsity(permuted.penalized_weights()) != float_sparsity(t.model().penalized_weights()));
}

TEST_CASE("runs are deterministic for a seed") {
  Data d;
  auto c = small_config(Algorithm::apgdssm);
  c.penalty = PenaltyConfig{1e-3, 1e-3, 0.0, 0.1, 1.0};
  const Model init = Model::initialize(small_arch(), 7);
  Trainer a(c, init), b(c, init);
  CHECK(metrics_csv(a.run(d.train, d.eval).records) == metrics_csv(b.run(d.train, d.eval).records));
  CHECK(bit_identical(a.model(), b.model()));
  c.seed = 18;
  Trainer other(c, init);
  other.run(d.train, d.eval);
  CHECK_FALSE(bit_identical(a.model(), other.model()));
}

TEST_CASE("metrics records describe the quantized model") {
  Data d;
  auto c = small_config(Algorithm::apgdsm, 2);
  c.penalty = PenaltyConfig{5e-3, 1e-2, 0.0, 0.0, 1.0};
  Trainer t(c, Model::initialize(small_arch(), 8));
  const auto r = t.run(d.train, d.eval);
  REQUIRE(r.records.size() == 2);
  const auto& rec = r.records.back();
  CHECK(rec.epoch == 2);
  QuantSpec spec = t.quant();
  const auto q = project_all(t.model(), spec);
  CHECK(rec.weight_sparsity == weight_sparsity(q.layers));
  CHECK(rec.channel_sparsity == channel_sparsity(q.layers));
  CHECK(rec.channels == channel_counts(q.layers));
  CHECK(rec.eval_accuracy == eval_accuracy(t.model().architecture(), q.params, d.eval));
  CHECK(std::isfinite(rec.train_loss));

  const auto ck = t.finalize(r.records);
  CHECK(ck.quantized_layers() == q.layers);
  CHECK(ck.metrics_csv == metrics_csv(r.records));
}

TEST_CASE("collapse guard flags an all-zero layer") {
  Model m = Model::initialize(small_arch(), 9);
  ScheduleState s;
  s.epoch = 4;
  CHECK_FALSE(collapse_guard(m, QuantSpec(4), s).has_value());
  for (auto& p : m.parameters())
    if (p.name == "conv2.weight") std::fill(p.value.values().begin(), p.value.values().end(), 0.0);
  const auto ev = collapse_guard(m, QuantSpec(4), s);
  REQUIRE(ev.has_value());
  CHECK(ev->layer == "conv2.weight");
  CHECK(ev->reason == "all-zero-layer");
  CHECK(ev->epoch == 4);
  CHECK(ev->describe().find("conv2.weight") != std::string::npos);
}

TEST_CASE("overwhelming shrinkage collapses and stops the run") {
  Data d;
  auto c = small_config(Algorithm::apgdsm, 5);
  c.penalty = PenaltyConfig{10.0, 0.0, 0.0, 0.0, 1.0};
  Trainer t(c, Model::initialize(small_arch(), 10));
  const auto r = t.run(d.train, d.eval);
  REQUIRE(r.collapse.has_value());
  CHECK(r.collapse->epoch == 1);
  CHECK(r.collapse->reason == "all-zero-layer");
  CHECK(r.collapse->schedule.shrink_threshold == 10.0);
  CHECK(r.records.empty());
  CHECK_THROWS_AS(t.train_epoch(d.train, d.eval, schedule_for(c, 1)), TrainingCollapsed);
}

TEST_CASE("non-finite loss is reported with provenance") {
  Data d;
  auto c = small_config(Algorithm::baseline_qat, 1);
  Model m = Model::initialize(small_arch(), 11);
  for (auto& p : m.parameters())
    if (p.name == "fc.bias") p.value[0] = std::numeric_limits<double>::infinity();
  Trainer t(c, m);
  const auto r = t.run(d.train, d.eval);
  REQUIRE(r.collapse.has_value());
  CHECK(r.collapse->reason == "non-finite-loss");
  CHECK_FALSE(r.collapse->layer.empty());
}

TEST_CASE("empty training set is rejected") {
  Data d;
  auto c = small_config(Algorithm::baseline_qat, 1);
  Trainer t(c, Model::initialize(small_arch(), 12));
  Dataset empty = d.train;
  empty.labels.clear();
  CHECK_THROWS_AS(t.train_epoch(empty, d.eval, schedule_for(c, 1)), ArgumentError);
}
