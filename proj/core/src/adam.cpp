#include "spade/adam.hpp"

#include <cmath>

#include "spade/errors.hpp"

namespace spade {

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("adam learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  // zero epsilon turns a zero gradient into 0/0
  if (!(config_.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (Parameter* p : params_) {
    if (!p) throw ConfigError("adam received a null parameter");
    first_moment_.emplace_back(p->tensor.values.size(), 0.0);
    second_moment_.emplace_back(p->tensor.values.size(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void AdamOptimizer::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.tensor.grad) continue;
    const std::vector<double>& g = *p.tensor.grad;
    std::vector<double>& m = first_moment_[k];
    std::vector<double>& v = second_moment_[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.tensor.values[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace spade
