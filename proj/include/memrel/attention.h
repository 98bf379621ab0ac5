#pragma once

// Layer-wise bi-attention between the two encoded arguments and the pooled
// pair representation r = [r_1; ...; r_L], r_l = [top2(o1); top2(o2)].

#include <optional>
#include <utility>
#include <vector>

#include "memrel/autodiff.h"
#include "memrel/init.h"

namespace memrel {

class PairAttention {
 public:
  PairAttention(ad::ParamRegistry& params, std::uint64_t seed, int layers, int dim, bool ffn_relu);

  int dim() const { return dim_; }
  int num_layers() const { return static_cast<int>(ffn_.size()); }
  // 4 * dim * layers.
  int output_dim() const { return 4 * dim_ * num_layers(); }
  const Linear& ffn(int layer) const { return ffn_.at(static_cast<std::size_t>(layer)); }

  // u1, u2: batch * n rows of width dim (batch sequences of length n each).
  // M = FFN(u1) u2^T per sequence; o2 = softmax(M) u2, o1 = softmax(M^T) u1.
  // Optional masks (batch * n x n, entries 0 or -inf) are added to M and M^T
  // before the softmax.
  std::pair<ad::Var, ad::Var> bi_attention(ad::Graph& g, ad::Var u1, ad::Var u2, int layer,
                                           ad::Index batch, ad::Var mask_m = nullptr,
                                           ad::Var mask_mt = nullptr) const;

  // Per sequence (max, second max) of each feature: batch x 2 dim.
  static ad::Var top2_pool(ad::Graph& g, ad::Var o, const ad::Segments& segments);

  // batch x output_dim().
  ad::Var pair_representation(ad::Graph& g, const std::vector<ad::Var>& arg1_layers,
                              const std::vector<ad::Var>& arg2_layers, ad::Index batch,
                              ad::Index length, ad::Var mask_m = nullptr,
                              ad::Var mask_mt = nullptr) const;

 private:
  int dim_;
  bool ffn_relu_;
  std::vector<Linear> ffn_;
};

}  // namespace memrel
