#include "qprune/schedule.hpp"

#include "qprune/errors.hpp"

namespace qprune {

namespace {

void require_epoch(const TrainConfig& config, int epoch) {
  if (epoch < 1 || epoch > config.epochs) {
    throw ArgumentError("epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(config.epochs) + "]");
  }
}

}  // namespace

double learning_rate_at(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (const auto& m : config.lr_milestones)
    if (epoch >= m.epoch) lr *= m.factor;
  return lr;
}

ScheduleState schedule_table1(const TrainConfig& config, int epoch) {
  require_epoch(config, epoch);
  double lambda_factor = 1.0, beta_factor = 1.0;
  for (const auto& m : config.penalty_milestones) {
    if (epoch >= m.epoch) {
      lambda_factor *= m.lambda_factor;
      beta_factor *= m.beta_factor;
    }
  }
  ScheduleState s;
  s.epoch = epoch;
  s.lr = learning_rate_at(config, epoch);
  s.lambda1 = config.penalty.lambda1 * lambda_factor;
  s.lambda2 = config.penalty.lambda2 * lambda_factor;
  s.lambda3 = config.penalty.lambda3;
  s.beta = config.penalty.beta * beta_factor;
  s.a = config.penalty.a;
  s.shrink_threshold = config.shrink_scaling == ShrinkScaling::bare ? s.lambda1 : s.lr * s.lambda1;
  s.gl_weight = s.lambda2;
  s.ctl1_weight = s.lambda3;
  s.ctl1_shape = s.a;
  s.split_coeff = s.lr * s.beta;
  return s;
}

ScheduleState schedule_lr_coupled(const TrainConfig& config, int epoch) {
  require_epoch(config, epoch);
  ScheduleState s;
  s.epoch = epoch;
  s.lr = learning_rate_at(config, epoch);
  s.lambda1 = s.lr * config.penalty.lambda1;
  s.lambda2 = s.lr * config.penalty.lambda2;
  s.lambda3 = config.penalty.lambda3;
  s.beta = s.lr * config.penalty.beta;
  s.a = s.lr * config.penalty.a;
  s.shrink_threshold = s.lambda1;
  s.gl_weight = s.lambda2;
  s.ctl1_weight = s.lambda3;
  s.ctl1_shape = s.a;
  s.split_coeff = s.beta;
  return s;
}

ScheduleState schedule_for(const TrainConfig& config, int epoch) {
  return config.schedule == ScheduleVariant::table1 ? schedule_table1(config, epoch)
                                                    : schedule_lr_coupled(config, epoch);
}

}  // namespace qprune
