#include "memrel/optimizer.h"

#include <cmath>

namespace memrel {

Optimizer::Optimizer(ad::ParamRegistry& params, Settings settings)
    : params_(params), settings_(settings) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto shape = params_.at(i).node->shape();
    m_.push_back(ad::Matrix::Zero(shape.rows, shape.cols));
    v_.push_back(ad::Matrix::Zero(shape.rows, shape.cols));
  }
}

void Optimizer::step() {
  ++t_;
  const double lr = settings_.learning_rate;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Var p = params_.at(i).node.get();
    if (!p->has_grad()) continue;
    const ad::Matrix& g = p->grad();
    if (settings_.kind == OptimizerKind::kSgd) {
      p->mutable_value() -= lr * g;
    } else {
      m_[i] = b1 * m_[i] + (1.0 - b1) * g;
      v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
      p->mutable_value().array() -=
          lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + settings_.epsilon);
    }
  }
  params_.zero_grad();
}

}  // namespace memrel
