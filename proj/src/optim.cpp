#include "dvp/optim.hpp"

#include <cmath>

namespace dvp {

ParamGroup::ParamGroup(std::string group_name, double lr, std::vector<ad::Tensor> tensors)
    : name(std::move(group_name)), learning_rate(lr), params(std::move(tensors)) {
  reset_state();
}

void ParamGroup::reset_state() {
  first_moment.clear();
  second_moment.clear();
  for (const auto& p : params) {
    first_moment.emplace_back(p.data.size(), 0.0);
    second_moment.emplace_back(p.data.size(), 0.0);
  }
  step = 0;
}

std::size_t ParamGroup::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.data.size();
  return n;
}

void adam_step(ParamGroup& group, std::span<const std::vector<double>> grads,
               double lr_multiplier, const AdamSettings& s) {
  if (grads.size() != group.params.size())
    throw ad::ShapeError("adam_step: group " + group.name + " expects " +
                         std::to_string(group.params.size()) + " gradient tensors");
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (grads[k].size() != group.params[k].data.size())
      throw ad::ShapeError("adam_step: gradient shape mismatch for " + group.params[k].name);
  if (group.first_moment.size() != group.params.size()) group.reset_state();

  ++group.step;
  const double t = static_cast<double>(group.step);
  const double bc1 = 1.0 - std::pow(s.beta1, t);
  const double bc2 = 1.0 - std::pow(s.beta2, t);
  const double lr = group.learning_rate * lr_multiplier;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto& theta = group.params[k].data;
    auto& m = group.first_moment[k];
    auto& v = group.second_moment[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

double lr_schedule(std::int64_t iteration, std::int64_t decay_iteration, double factor) {
  return iteration < decay_iteration ? 1.0 : factor;
}

}  // namespace dvp
