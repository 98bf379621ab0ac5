#pragma once

// Stacked convolutional GLU blocks with residual connections.

#include <string>
#include <vector>

#include "memrel/autodiff.h"

namespace memrel {

class EncoderStack {
 public:
  struct Layer {
    ad::Var weight = nullptr;  // (width * d) x 2d
    ad::Var bias = nullptr;    // 1 x 2d
  };

  EncoderStack(ad::ParamRegistry& params, std::uint64_t seed, const std::string& prefix, int layers,
               int dim, int kernel_width);

  int num_layers() const { return static_cast<int>(layers_.size()); }
  int dim() const { return dim_; }
  int kernel_width() const { return width_; }
  const Layer& layer(int l) const { return layers_.at(static_cast<std::size_t>(l)); }

  // conv(x) = [A | B]; returns A * sigmoid(B) + x. Row count and width are
  // preserved.
  ad::Var glu_block(ad::Graph& g, ad::Var x, int layer, const ad::Segments& segments) const;
  // Output of every layer; layer l consumes layer l - 1.
  std::vector<ad::Var> encode(ad::Graph& g, ad::Var x, const ad::Segments& segments) const;

 private:
  int dim_;
  int width_;
  std::vector<Layer> layers_;
};

}  // namespace memrel
