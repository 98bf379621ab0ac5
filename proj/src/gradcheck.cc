#include "memrel/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "memrel/errors.h"

namespace memrel::ad {
namespace {

double evaluate(const ScalarFn& fn, const std::string& name, Index coord) {
  Graph g;
  Var root = fn(g);
  if (root->shape() != Shape{1, 1}) {
    throw std::invalid_argument("check_gradients: function must return a scalar");
  }
  const double v = root->scalar();
  if (!std::isfinite(v)) {
    throw NumericError("check_gradients: non-finite value at " + name + "[" +
                       std::to_string(coord) + "]");
  }
  return v;
}

}  // namespace

GradientCheckResult check_gradients(const ScalarFn& fn, ParamRegistry& params, double epsilon) {
  if (!(epsilon > 0 && epsilon <= 1e-3)) {
    throw std::invalid_argument("check_gradients: epsilon must be in (0, 1e-3]");
  }
  params.zero_grad();
  std::vector<Matrix> analytic;
  {
    Graph g;
    Var root = fn(g);
    if (!std::isfinite(root->scalar())) {
      throw NumericError("check_gradients: non-finite value at the unperturbed point");
    }
    g.backward(root);
    for (const auto& e : params) analytic.push_back(e.node->grad());
  }
  params.zero_grad();

  GradientCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& entry = params.at(p);
    Matrix& value = entry.node->mutable_value();
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + epsilon;
      const double up = evaluate(fn, entry.name, i);
      value.data()[i] = saved - epsilon;
      const double down = evaluate(fn, entry.name, i);
      value.data()[i] = saved;

      const double numeric = (up - down) / (2 * epsilon);
      const double a = analytic[p].data()[i];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.coordinates;
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(err, result.max_relative_error);
        if (err >= result.max_relative_error) {
          result.worst_param = entry.name;
          result.worst_index = i;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace memrel::ad
