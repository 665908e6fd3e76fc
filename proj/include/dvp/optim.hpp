#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dvp/autodiff.hpp"

namespace dvp {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Parameters sharing one learning rate, with their Adam moments.
struct ParamGroup {
  std::string name;
  double learning_rate = 1e-3;
  std::vector<ad::Tensor> params;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  ParamGroup() = default;
  ParamGroup(std::string group_name, double lr, std::vector<ad::Tensor> tensors);

  /// Allocates zeroed moments matching `params`.
  void reset_state();
  std::size_t parameter_count() const;
};

/// One bias-corrected Adam update. `grads[k]` must match `group.params[k]`.
/// `lr_multiplier` scales the group's base learning rate (schedules).
void adam_step(ParamGroup& group, std::span<const std::vector<double>> grads,
               double lr_multiplier = 1.0, const AdamSettings& settings = {});

/// Step decay: 1 before `decay_iteration`, `factor` from it on.
double lr_schedule(std::int64_t iteration, std::int64_t decay_iteration = 20000,
                   double factor = 0.1);

}  // namespace dvp
