#pragma once

#include <vector>

#include "memrel/autodiff.h"
#include "memrel/config.h"

namespace memrel {

class Optimizer {
 public:
  struct Settings {
    OptimizerKind kind = OptimizerKind::kAdam;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Optimizer(ad::ParamRegistry& params, Settings settings);

  // Applies one update from the accumulated gradients, then zeroes them.
  void step();
  long steps() const { return t_; }

 private:
  ad::ParamRegistry& params_;
  Settings settings_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  long t_ = 0;
};

}  // namespace memrel
