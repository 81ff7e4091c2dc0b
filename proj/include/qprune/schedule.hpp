#pragma once

#include "qprune/config.hpp"

namespace qprune {

// Parameter values for one epoch, plus the effective coefficients the
// training step consumes.
struct ScheduleState {
  int epoch = 1;
  double lr = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double beta = 0.0;
  double a = 1.0;

  double shrink_threshold = 0.0;
  double gl_weight = 0.0;
  double ctl1_weight = 0.0;
  double ctl1_shape = 1.0;
  double split_coeff = 0.0;  // the gamma*beta product in w - gamma*beta*(w - u)

  bool operator==(const ScheduleState&) const = default;
};

// Cumulative milestone factors: lambda1/lambda2 and beta per the penalty
// milestones, lr per the lr milestones. Milestones apply from their epoch on.
ScheduleState schedule_table1(const TrainConfig& config, int epoch);
// Base penalty values are constant; lambda1, lambda2, beta and a are multiplied
// by the current learning rate.
ScheduleState schedule_lr_coupled(const TrainConfig& config, int epoch);
// Dispatches on config.schedule.
ScheduleState schedule_for(const TrainConfig& config, int epoch);

double learning_rate_at(const TrainConfig& config, int epoch);

}  // namespace qprune
