#pragma once

#include <cmath>
#include <string_view>

#include "memrel/autodiff.h"
#include "memrel/random.h"

namespace memrel {

inline ad::Matrix uniform_matrix(ad::Index rows, ad::Index cols, double limit, Rng& rng) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
  return m;
}

// Glorot/Xavier uniform scaling.
inline ad::Matrix glorot_matrix(ad::Index rows, ad::Index cols, ad::Index fan_in, ad::Index fan_out,
                                Rng& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

// Registers a parameter initialised from its own named stream.
inline ad::Var add_glorot(ad::ParamRegistry& params, std::uint64_t seed, const std::string& name,
                          ad::Index rows, ad::Index cols, ad::Index fan_in, ad::Index fan_out) {
  Rng rng = make_stream(seed, "init/" + name);
  return params.add(name, glorot_matrix(rows, cols, fan_in, fan_out, rng));
}

inline ad::Var add_zeros(ad::ParamRegistry& params, const std::string& name, ad::Index rows,
                         ad::Index cols) {
  return params.add(name, ad::Matrix::Zero(rows, cols));
}

// Fully connected layer x * W + b.
struct Linear {
  ad::Var weight = nullptr;
  ad::Var bias = nullptr;

  static Linear create(ad::ParamRegistry& params, std::uint64_t seed, const std::string& name,
                       ad::Index in, ad::Index out, bool with_bias = true) {
    Linear l;
    l.weight = add_glorot(params, seed, name + "/w", in, out, in, out);
    if (with_bias) l.bias = add_zeros(params, name + "/b", 1, out);
    return l;
  }

  ad::Var operator()(ad::Graph& g, ad::Var x) const {
    ad::Var y = ad::ops::matmul(g, x, weight);
    return bias ? ad::ops::add(g, y, bias) : y;
  }

  ad::Index in_dim() const { return weight->shape().rows; }
  ad::Index out_dim() const { return weight->shape().cols; }
};

}  // namespace memrel
