#include "memrel/encoder.h"

#include <stdexcept>

#include "memrel/init.h"

namespace memrel {

namespace ops = ad::ops;

EncoderStack::EncoderStack(ad::ParamRegistry& params, std::uint64_t seed, const std::string& prefix,
                           int layers, int dim, int kernel_width)
    : dim_(dim), width_(kernel_width) {
  if (layers < 1 || dim < 1 || kernel_width < 1) {
    throw std::invalid_argument("encoder: layers, dim and kernel width must be >= 1");
  }
  for (int l = 0; l < layers; ++l) {
    const std::string name = prefix + "/layer" + std::to_string(l);
    Layer layer;
    layer.weight = add_glorot(params, seed, name + "/w", kernel_width * dim, 2 * dim,
                              kernel_width * dim, 2 * dim);
    layer.bias = add_zeros(params, name + "/b", 1, 2 * dim);
    layers_.push_back(layer);
  }
}

ad::Var EncoderStack::glu_block(ad::Graph& g, ad::Var x, int layer,
                                const ad::Segments& segments) const {
  const Layer& p = layers_.at(static_cast<std::size_t>(layer));
  ad::Var conv = ops::conv1d(g, x, p.weight, p.bias, width_, segments);
  ad::Var a = ops::slice_cols(g, conv, 0, dim_);
  ad::Var b = ops::slice_cols(g, conv, dim_, dim_);
  return ops::add(g, ops::mul(g, a, ops::sigmoid(g, b)), x);
}

std::vector<ad::Var> EncoderStack::encode(ad::Graph& g, ad::Var x,
                                          const ad::Segments& segments) const {
  std::vector<ad::Var> out;
  for (int l = 0; l < num_layers(); ++l) {
    x = glu_block(g, x, l, segments);
    out.push_back(x);
  }
  return out;
}

}  // namespace memrel
