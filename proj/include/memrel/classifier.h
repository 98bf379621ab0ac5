#pragma once

// Relation and connective heads, the λ-mixed relation output and the joint
// loss.

#include <span>
#include <string>
#include <vector>

#include "memrel/autodiff.h"
#include "memrel/init.h"
#include "memrel/memory.h"

namespace memrel {

// depth hidden ReLU layers of width `hidden`, then a linear output layer.
// Dropout is applied to every hidden activation when `rng` is non-null.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ad::ParamRegistry& params, std::uint64_t seed, const std::string& name, int in, int hidden,
      int depth, int out);

  ad::Var operator()(ad::Graph& g, ad::Var x, double dropout = 0.0, Rng* rng = nullptr) const;

  int in_dim() const { return static_cast<int>(layers_.front().in_dim()); }
  int out_dim() const { return static_cast<int>(layers_.back().out_dim()); }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

struct HeadsConfig {
  int rep_dim = 0;
  int num_relations = 0;
  int num_connectives = 0;
  int hidden = 64;
  int depth = 2;
  ResponseKind response = ResponseKind::kValue;
  double lambda = 0.3;
};

class ClassifierHeads {
 public:
  ClassifierHeads(ad::ParamRegistry& params, std::uint64_t seed, const HeadsConfig& config);

  const HeadsConfig& config() const { return config_; }
  const Mlp& relation_mlp() const { return mlp_r_; }
  const Mlp& connective_mlp() const { return mlp_c_; }
  // Present only in value-response mode.
  const Mlp* memory_mlp() const { return has_mlp_m_ ? &mlp_m_ : nullptr; }
  bool has_connective_head() const { return config_.num_connectives > 0; }

  // Pre-softmax relation scores. Baseline: MLP_r(r). Value:
  // (1 - λ) MLP_r(r) + λ MLP_m(v). Key: (1 - λ) MLP_r(r) + λ MLP_r(v').
  // `response` must be null in baseline mode and of the mode's width
  // otherwise.
  ad::Var relation_logits(ad::Graph& g, ad::Var r, ad::Var response, double dropout,
                          Rng* rng_r, Rng* rng_m) const;
  ad::Var connective_logits(ad::Graph& g, ad::Var r, double dropout, Rng* rng) const;

 private:
  HeadsConfig config_;
  Mlp mlp_r_;
  Mlp mlp_c_;
  Mlp mlp_m_;
  bool has_mlp_m_ = false;
};

// Mean over the batch of CE(relation) + CE(connective); connective targets
// of -1 contribute nothing. `connective_logits` may be null.
ad::Var joint_loss(ad::Graph& g, ad::Var relation_logits, std::span<const int> relations,
                   ad::Var connective_logits, std::span<const int> connectives);

}  // namespace memrel
