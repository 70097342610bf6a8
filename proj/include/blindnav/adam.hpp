#pragma once

#include <cstdint>
#include <vector>

#include "blindnav/tensor.hpp"

namespace blindnav::grad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds one first/second moment buffer per
/// parameter; step() reads the accumulated grads and leaves them in place.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  void step();
  void zero_grad();

  std::int64_t steps() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::int64_t step_count_ = 0;
};

}  // namespace blindnav::grad
