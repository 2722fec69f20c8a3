#pragma once

#include <cstdint>
#include <vector>

#include "spade/graph.hpp"

namespace spade {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are zero at step 0 and the step
// counter advances by exactly one per update.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter*> params, AdamConfig config);

  void zero_grad();
  void step();

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::int64_t step_ = 0;
};

}  // namespace spade
