#include "qprune/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qprune/errors.hpp"

namespace qprune {

std::string CollapseEvent::describe() const {
  return "collapse at epoch " + std::to_string(epoch) + ": " + reason + " in '" + layer + "' (lr " +
         std::to_string(schedule.lr) + ", shrink " + std::to_string(schedule.shrink_threshold) + ", gl " +
         std::to_string(schedule.gl_weight) + ", split " + std::to_string(schedule.split_coeff) + ")";
}

TrainingCollapsed::TrainingCollapsed(CollapseEvent event)
    : std::runtime_error(event.describe()), event_(std::move(event)) {}

std::optional<CollapseEvent> collapse_guard(const Model& model, const QuantSpec& spec, const ScheduleState& state) {
  QuantSpec scratch = spec;
  const QuantizedModel q = project_all(model, scratch);
  const auto names = model.penalized_names();
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    const auto& codes = q.layers[l].codes;
    if (std::all_of(codes.begin(), codes.end(), [](std::int8_t c) { return c == 0; })) {
      return CollapseEvent{state.epoch, names[l], "all-zero-layer", state};
    }
  }
  return std::nullopt;
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5851f42d4c957f2dULL;

}  // namespace

Trainer::Trainer(TrainConfig config, Model model)
    : config_(std::move(config)),
      model_(std::move(model)),
      quant_(config_.bits, config_.scale_search),
      partition_(ChannelPartition::by_output_channel(model_.penalized_weights())),
      shuffle_rng_(config_.seed ^ kShuffleStream) {
  config_.validate();
}

MetricsRecord Trainer::train_epoch(const Dataset& train, const Dataset& eval, const ScheduleState& state) {
  if (train.size() == 0) throw ArgumentError("training set is empty");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  auto& params = model_.parameters();
  const auto& penalized = model_.penalized_indices();
  const bool use_gl = config_.uses_group_lasso() && state.gl_weight > 0.0;
  const bool use_ctl1 = config_.uses_ctl1() && state.ctl1_weight > 0.0;
  const bool use_split = config_.uses_splitting() && state.split_coeff > 0.0;
  const bool use_shrink = config_.uses_shrinkage() && state.shrink_threshold > 0.0;

  double loss_sum = 0.0;
  std::vector<std::size_t> batch_idx;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(begin + config_.batch_size, order.size());
    batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
    const Dataset batch = train.gather(batch_idx);

    // (1) u = Proj_Q(w)
    const QuantizedModel q = project_all(model_, quant_);

    // (2) loss at u
    Graph graph;
    std::vector<Var> vars;
    Var loss;
    try {
      const Var logits = build_forward(graph, model_.architecture(), q.params, batch.images, &vars);
      loss = graph.softmax_cross_entropy(logits, batch.labels, "loss");
    } catch (const NonFiniteError& e) {
      throw TrainingCollapsed(CollapseEvent{state.epoch, e.provenance(), "non-finite-loss", state});
    }
    const double loss_value = graph.value(loss)[0];
    if (!std::isfinite(loss_value)) {
      throw TrainingCollapsed(CollapseEvent{state.epoch, "loss", "non-finite-loss", state});
    }
    loss_sum += loss_value * static_cast<double>(batch.size());
    graph.backward(loss);

    std::vector<Tensor> u_layers;
    u_layers.reserve(penalized.size());
    for (auto i : penalized) u_layers.push_back(q.params[i]);
    std::vector<Tensor> gl_grad, ctl1_grad_v;
    if (use_gl) gl_grad = group_lasso_subgrad(u_layers, partition_);
    if (use_ctl1) ctl1_grad_v = ctl1_grad(u_layers, state.ctl1_shape);

    // (3) straight-through step: gradient taken at u, applied to w
    std::size_t layer = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor& w = params[p].value;
      const Tensor& g = graph.grad(vars[p]);
      if (!params[p].penalized) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= state.lr * g[i];
        continue;
      }
      if (use_gl || use_ctl1) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          double gi = g[i];
          if (use_gl) gi += state.gl_weight * gl_grad[layer][i];
          if (use_ctl1) gi += state.ctl1_weight * ctl1_grad_v[layer][i];
          w[i] -= state.lr * gi;
        }
      } else {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= state.lr * g[i];
      }
      // (4) splitting toward u, (5) shrinkage
      if (use_split) splitting_step_inplace(w, u_layers[layer], state.split_coeff);
      if (use_shrink) shrink_inplace(w, state.shrink_threshold);
      ++layer;
    }
  }

  if (auto event = collapse_guard(model_, quant_, state)) throw TrainingCollapsed(*event);

  const QuantizedModel q = project_all(model_, quant_);
  MetricsRecord rec;
  rec.epoch = state.epoch;
  rec.weight_sparsity = weight_sparsity(q.layers);
  rec.channel_sparsity = channel_sparsity(q.layers);
  rec.channels = channel_counts(q.layers);
  rec.train_loss = loss_sum / static_cast<double>(train.size());
  rec.eval_accuracy = eval_accuracy(model_.architecture(), q.params, eval);
  rec.float_weight_sparsity = float_sparsity(model_.penalized_weights());
  return rec;
}

RunResult Trainer::run(const Dataset& train, const Dataset& eval,
                       const std::function<void(const MetricsRecord&)>& on_epoch) {
  RunResult result;
  for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
    const ScheduleState state = schedule_for(config_, epoch);
    try {
      result.records.push_back(train_epoch(train, eval, state));
    } catch (const TrainingCollapsed& e) {
      result.collapse = e.event();
      break;
    }
    if (on_epoch) on_epoch(result.records.back());
  }
  return result;
}

QuantizedCheckpoint Trainer::finalize(const std::vector<MetricsRecord>& history) const {
  QuantSpec spec = quant_;
  const QuantizedModel q = project_all(model_, spec);
  QuantizedCheckpoint ck;
  ck.architecture = model_.architecture();
  ck.bits = config_.bits;
  std::size_t layer = 0;
  for (std::size_t p = 0; p < model_.parameters().size(); ++p) {
    const auto& param = model_.parameters()[p];
    CheckpointEntry e;
    e.name = param.name;
    e.shape = param.value.shape();
    if (param.penalized) {
      e.quantized = true;
      e.scale = q.layers[layer].scale;
      e.codes = q.layers[layer].codes;
      ++layer;
    } else {
      e.values = param.value.values();
    }
    ck.entries.push_back(std::move(e));
  }
  ck.metrics_csv = metrics_csv(history);
  return ck;
}

}  // namespace qprune
