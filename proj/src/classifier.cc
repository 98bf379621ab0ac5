#include "memrel/classifier.h"

#include <stdexcept>

#include "memrel/errors.h"

namespace memrel {

namespace ops = ad::ops;
using ad::Var;

Mlp::Mlp(ad::ParamRegistry& params, std::uint64_t seed, const std::string& name, int in, int hidden,
         int depth, int out) {
  int width = in;
  for (int l = 0; l < depth; ++l) {
    layers_.push_back(Linear::create(params, seed, name + "/layer" + std::to_string(l), width, hidden));
    width = hidden;
  }
  layers_.push_back(Linear::create(params, seed, name + "/out", width, out));
}

Var Mlp::operator()(ad::Graph& g, Var x, double dropout, Rng* rng) const {
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    x = ops::relu(g, layers_[l](g, x));
    if (rng && dropout > 0) x = ops::dropout(g, x, dropout, *rng);
  }
  return layers_.back()(g, x);
}

ClassifierHeads::ClassifierHeads(ad::ParamRegistry& params, std::uint64_t seed,
                                 const HeadsConfig& config)
    : config_(config) {
  if (config.rep_dim < 1 || config.num_relations < 1) {
    throw std::invalid_argument("classifier: representation width and relation count must be >= 1");
  }
  mlp_r_ = Mlp(params, seed, "classifier/relation", config.rep_dim, config.hidden, config.depth,
               config.num_relations);
  if (config.num_connectives > 0) {
    mlp_c_ = Mlp(params, seed, "classifier/connective", config.rep_dim, config.hidden, config.depth,
                 config.num_connectives);
  }
  if (config.response == ResponseKind::kValue) {
    mlp_m_ = Mlp(params, seed, "classifier/memory", config.num_relations, 4 * config.num_relations, 1,
                 config.num_relations);
    has_mlp_m_ = true;
  }
}

Var ClassifierHeads::relation_logits(ad::Graph& g, Var r, Var response, double dropout, Rng* rng_r,
                                     Rng* rng_m) const {
  Var base = mlp_r_(g, r, dropout, rng_r);
  if (config_.response == ResponseKind::kBaseline) {
    if (response) throw std::invalid_argument("relation_logits: baseline mode takes no response");
    return base;
  }
  if (!response) throw std::invalid_argument("relation_logits: memory modes need a response");
  Var mem = nullptr;
  if (config_.response == ResponseKind::kValue) {
    if (response->shape().cols != config_.num_relations) {
      throw ShapeError("relation_logits: value response must have width " +
                       std::to_string(config_.num_relations) + ", got " + response->shape().str());
    }
    mem = mlp_m_(g, response, dropout, rng_m);
  } else {
    if (response->shape().cols != config_.rep_dim) {
      throw ShapeError("relation_logits: key response must have width " +
                       std::to_string(config_.rep_dim) + ", got " + response->shape().str());
    }
    mem = mlp_r_(g, response, dropout, rng_m);
  }
  return ops::add(g, ops::scale(g, base, 1.0 - config_.lambda), ops::scale(g, mem, config_.lambda));
}

Var ClassifierHeads::connective_logits(ad::Graph& g, Var r, double dropout, Rng* rng) const {
  if (!has_connective_head()) throw std::logic_error("classifier: no connective head");
  return mlp_c_(g, r, dropout, rng);
}

Var joint_loss(ad::Graph& g, Var relation_logits, std::span<const int> relations,
               Var connective_logits, std::span<const int> connectives) {
  const double batch = static_cast<double>(relation_logits->shape().rows);
  Var loss = ops::softmax_cross_entropy(g, relation_logits, relations, batch);
  if (connective_logits) {
    loss = ops::add(g, loss, ops::softmax_cross_entropy(g, connective_logits, connectives, batch));
  }
  return loss;
}

}  // namespace memrel
