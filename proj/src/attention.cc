#include "memrel/attention.h"

#include <stdexcept>

#include "memrel/errors.h"

namespace memrel {

namespace ops = ad::ops;

PairAttention::PairAttention(ad::ParamRegistry& params, std::uint64_t seed, int layers, int dim,
                             bool ffn_relu)
    : dim_(dim), ffn_relu_(ffn_relu) {
  for (int l = 0; l < layers; ++l) {
    ffn_.push_back(Linear::create(params, seed, "attention/ffn" + std::to_string(l), dim, dim));
  }
}

std::pair<ad::Var, ad::Var> PairAttention::bi_attention(ad::Graph& g, ad::Var u1, ad::Var u2,
                                                        int layer, ad::Index batch, ad::Var mask_m,
                                                        ad::Var mask_mt) const {
  if (u1->shape() != u2->shape()) {
    throw ShapeError("bi_attention: argument encodings differ " + u1->shape().str() + " vs " +
                     u2->shape().str());
  }
  ad::Var f = ffn_.at(static_cast<std::size_t>(layer))(g, u1);
  if (ffn_relu_) f = ops::relu(g, f);
  ad::Var m = ops::block_matmul(g, f, u2, batch, false, true);
  ad::Var mt = ops::block_transpose(g, m, batch);
  if (mask_m) m = ops::add(g, m, mask_m);
  if (mask_mt) mt = ops::add(g, mt, mask_mt);
  ad::Var o2 = ops::block_matmul(g, ops::softmax_rows(g, m), u2, batch);
  ad::Var o1 = ops::block_matmul(g, ops::softmax_rows(g, mt), u1, batch);
  return {o1, o2};
}

ad::Var PairAttention::top2_pool(ad::Graph& g, ad::Var o, const ad::Segments& segments) {
  return ops::segment_top2(g, o, segments);
}

ad::Var PairAttention::pair_representation(ad::Graph& g, const std::vector<ad::Var>& arg1_layers,
                                           const std::vector<ad::Var>& arg2_layers,
                                           ad::Index batch, ad::Index length, ad::Var mask_m,
                                           ad::Var mask_mt) const {
  if (arg1_layers.size() != ffn_.size() || arg2_layers.size() != ffn_.size()) {
    throw std::invalid_argument("pair_representation: expected one encoding per layer");
  }
  const auto segs = ad::Segments::uniform(batch, length);
  std::vector<ad::Var> parts;
  for (int l = 0; l < num_layers(); ++l) {
    auto [o1, o2] = bi_attention(g, arg1_layers[static_cast<std::size_t>(l)],
                                 arg2_layers[static_cast<std::size_t>(l)], l, batch, mask_m, mask_mt);
    parts.push_back(top2_pool(g, o1, segs));
    parts.push_back(top2_pool(g, o2, segs));
  }
  return ops::concat_cols(g, parts);
}

}  // namespace memrel
