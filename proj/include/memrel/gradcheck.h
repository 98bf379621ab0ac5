#pragma once

#include <functional>
#include <string>

#include "memrel/autodiff.h"

namespace memrel::ad {

// Builds a fresh graph and returns a 1 x 1 node. Must be deterministic given
// the current parameter values.
using ScalarFn = std::function<Var(Graph&)>;

struct GradientCheckResult {
  double max_relative_error = 0;
  std::string worst_param;
  Index worst_index = -1;
  double analytic = 0;
  double numeric = 0;
  Index coordinates = 0;
};

// Compares backward() against central differences (f(p+e) - f(p-e)) / 2e for
// every coordinate of every registered parameter. The relative error of a
// coordinate is |a - n| / max(|a|, |n|, 1e-8).
//
// Throws NumericError naming the parameter coordinate when f is non-finite,
// and std::invalid_argument when epsilon is outside (0, 1e-3].
GradientCheckResult check_gradients(const ScalarFn& fn, ParamRegistry& params, double epsilon);

}  // namespace memrel::ad
