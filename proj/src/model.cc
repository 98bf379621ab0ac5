#include "memrel/model.h"

#include <algorithm>
#include <stdexcept>

#include "memrel/errors.h"

namespace memrel {

using ad::Index;
using ad::Matrix;
using ad::Var;
namespace ops = ad::ops;

namespace {

Rng dropout_stream(std::uint64_t seed, const char* site, std::uint64_t step) {
  return make_stream(seed, std::string("dropout/") + site + "/" + std::to_string(step));
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<Instance>& train) { return Vocabulary::build(train); }

BpeModel build_bpe(const std::vector<Instance>& train, int merges) {
  std::vector<std::string> tokens;
  for (const auto& inst : train) {
    tokens.insert(tokens.end(), inst.arg1.begin(), inst.arg1.end());
    tokens.insert(tokens.end(), inst.arg2.begin(), inst.arg2.end());
  }
  return learn_bpe(tokens, merges);
}

Model::Model(const TrainConfig& config, const LabelSpace& labels, Vocabulary vocab, BpeModel bpe,
             const WordVectors* pretrained, const ContextualStore* contextual)
    : config_(config), labels_(labels), contextual_(contextual) {
  config_.validate();
  if (labels_.num_relations() < 1) throw DataError("label space has no relations");
  const std::uint64_t seed = config_.seed;
  const int d = config_.embed_dim();
  embedder_ = std::make_unique<Embedder>(config_.embedding, std::move(vocab), std::move(bpe), params_,
                                         seed, pretrained);
  embedder_->set_contextual(contextual);
  encoders_.emplace_back(params_, seed, "encoder", config_.layers, d, config_.kernel_width);
  if (!config_.shared_encoder) {
    encoders_.emplace_back(params_, seed, "encoder_arg2", config_.layers, d, config_.kernel_width);
  }
  attention_ = std::make_unique<PairAttention>(params_, seed, config_.layers, d, config_.ffn_relu);

  HeadsConfig hc;
  hc.rep_dim = attention_->output_dim();
  hc.num_relations = labels_.num_relations();
  hc.num_connectives = config_.connective_loss ? labels_.num_connectives() : 0;
  hc.hidden = config_.hidden;
  hc.depth = config_.mlp_depth;
  hc.response = config_.response;
  hc.lambda = config_.lambda;
  heads_ = std::make_unique<ClassifierHeads>(params_, seed, hc);

  if (config_.keys == KeyMode::kFixed) {
    const int word = config_.embedding.word_dim;
    const int ctx = config_.embedding.contextual_dim > 0 ? config_.embedding.contextual_input_dim : 0;
    if (word + ctx == 0) throw UsageError("keys=fixed needs word or contextual vectors");
    fixed_table_ = word > 0 ? embedder_->word_table() : Matrix(embedder_->vocabulary().size(), 0);
  }
  if (uses_memory() && config_.attention == AttentionKind::kBiaffine) {
    biaffine_ = BiaffineParams::create(params_, seed, key_dim());
  }
}

const EncoderStack& Model::encoder(int arg) const {
  return encoders_.size() == 1 ? encoders_[0] : encoders_.at(static_cast<std::size_t>(arg));
}

int Model::key_dim() const {
  if (config_.keys == KeyMode::kDynamic) return rep_dim();
  const int ctx = config_.embedding.contextual_dim > 0 ? config_.embedding.contextual_input_dim : 0;
  return 2 * (config_.embedding.word_dim + ctx);
}

void Model::set_contextual(const ContextualStore* store) {
  contextual_ = store;
  embedder_->set_contextual(store);
}

EncodedInstance Model::encode(const Instance& inst) {
  const auto n = static_cast<std::size_t>(config_.max_length);
  const bool ctx = config_.embedding.contextual_dim > 0;
  if (ctx && !contextual_) throw DataError("contextual_dim > 0 but no contextual vectors were loaded");
  if (ctx && contextual_->dim() != config_.embedding.contextual_input_dim) {
    throw DataError("contextual vectors have width " + std::to_string(contextual_->dim()) +
                    ", expected " + std::to_string(config_.embedding.contextual_input_dim));
  }
  EncodedInstance e;
  e.id = inst.id;
  e.gold = inst.relations;
  e.relation = inst.relations.empty() ? -1 : inst.relations.front();
  e.connective = inst.connective.value_or(-1);
  e.words.assign(2 * n, -1);
  e.lexemes.assign(2 * n, -1);
  if (ctx) e.contextual.assign(2 * n, -1);
  const bool fixed = config_.keys == KeyMode::kFixed;
  const int ctx_in = ctx ? contextual_->dim() : 0;
  const Index static_dim = fixed_table_.cols() + ctx_in;
  Matrix arg_rows[2];
  for (int arg = 0; arg < 2; ++arg) {
    const auto& tokens = arg == 0 ? inst.arg1 : inst.arg2;
    const std::size_t len = std::min(n, tokens.size());
    if (fixed) arg_rows[arg] = Matrix::Zero(static_cast<Index>(std::max<std::size_t>(len, 1)), static_dim);
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t pos = static_cast<std::size_t>(arg) * n + k;
      const int word = embedder_->vocabulary().lookup(tokens[k]);
      e.words[pos] = word;
      e.lexemes[pos] = embedder_->lexicon().intern(tokens[k], embedder_->bpe());
      std::optional<Index> row;
      if (ctx) {
        row = contextual_->find(inst.source_id, arg + 1, static_cast<int>(k));
        if (!row) {
          throw DataError("no contextual vector for instance " + inst.source_id + " arg " +
                          std::to_string(arg + 1) + " position " + std::to_string(k));
        }
        e.contextual[pos] = *row;
      }
      if (fixed) {
        const auto r = static_cast<Index>(k);
        if (fixed_table_.cols() > 0) arg_rows[arg].block(r, 0, 1, fixed_table_.cols()) = fixed_table_.row(word);
        if (ctx) arg_rows[arg].block(r, fixed_table_.cols(), 1, ctx_in) = contextual_->row(*row);
      }
    }
  }
  if (fixed) e.fixed_query = fixed_key(arg_rows[0], arg_rows[1]);
  return e;
}

std::vector<EncodedInstance> Model::encode_all(const std::vector<Instance>& instances) {
  std::vector<EncodedInstance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(encode(inst));
  return out;
}

void Model::build_memory(std::vector<EncodedInstance>& train) {
  if (!uses_memory()) return;
  std::vector<std::size_t> chosen(train.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (config_.memory_fraction < 1.0) {
    Rng rng = make_stream(config_.seed, "memory/subsample");
    shuffle(chosen.begin(), chosen.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(config_.memory_fraction * static_cast<double>(chosen.size())));
    chosen.resize(keep);
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<std::string> ids;
  std::vector<int> relations;
  for (std::size_t i : chosen) {
    ids.push_back(train[i].id);
    relations.push_back(train[i].relation);
  }
  Rng rng = make_stream(config_.seed, "memory/keys");
  memory_.emplace(std::move(ids), std::move(relations), key_dim(), labels_.num_relations(), rng);
  for (auto& e : train) e.slot = -1;
  for (std::size_t s = 0; s < chosen.size(); ++s) train[chosen[s]].slot = static_cast<Index>(s);
  if (config_.keys == KeyMode::kFixed) {
    Matrix keys(static_cast<Index>(chosen.size()), key_dim());
    for (std::size_t s = 0; s < chosen.size(); ++s) keys.row(static_cast<Index>(s)) = train[chosen[s]].fixed_query;
    memory_->freeze_keys(std::move(keys));
  }
}

ForwardOutput Model::forward(ad::Graph& g, std::span<const EncodedInstance* const> batch,
                             const ForwardOptions& options) const {
  const auto b = static_cast<Index>(batch.size());
  if (b == 0) throw std::invalid_argument("forward: empty batch");
  const Index n = config_.max_length;
  const std::uint64_t seed = config_.seed;
  TokenBatch tokens;
  const auto rows = static_cast<std::size_t>(2 * b * n);
  tokens.words.reserve(rows);
  tokens.lexemes.reserve(rows);
  const bool ctx = config_.embedding.contextual_dim > 0;
  for (int arg = 0; arg < 2; ++arg) {
    for (const EncodedInstance* e : batch) {
      const auto begin = static_cast<std::ptrdiff_t>(arg * n);
      tokens.words.insert(tokens.words.end(), e->words.begin() + begin, e->words.begin() + begin + n);
      tokens.lexemes.insert(tokens.lexemes.end(), e->lexemes.begin() + begin,
                            e->lexemes.begin() + begin + n);
      if (ctx) {
        tokens.contextual.insert(tokens.contextual.end(), e->contextual.begin() + begin,
                                 e->contextual.begin() + begin + n);
      }
    }
  }
  Var x = embedder_->embed(g, tokens);
  if (options.train && config_.embed_dropout > 0) {
    Rng rng = dropout_stream(seed, "embed", options.step);
    x = ops::dropout(g, x, config_.embed_dropout, rng);
  }
  std::vector<Var> a1;
  std::vector<Var> a2;
  if (encoders_.size() == 1) {
    for (Var layer : encoders_[0].encode(g, x, ad::Segments::uniform(2 * b, n))) {
      a1.push_back(ops::slice_rows(g, layer, 0, b * n));
      a2.push_back(ops::slice_rows(g, layer, b * n, b * n));
    }
  } else {
    const auto segs = ad::Segments::uniform(b, n);
    a1 = encoders_[0].encode(g, ops::slice_rows(g, x, 0, b * n), segs);
    a2 = encoders_[1].encode(g, ops::slice_rows(g, x, b * n, b * n), segs);
  }
  ForwardOutput out;
  out.r = attention_->pair_representation(g, a1, a2, b, n);

  const double mlp_dropout = options.train ? config_.mlp_dropout : 0.0;
  Rng rng_r = dropout_stream(seed, "relation", options.step);
  Rng rng_m = dropout_stream(seed, "memory_head", options.step);
  Rng* pr = options.train ? &rng_r : nullptr;
  Rng* pm = options.train ? &rng_m : nullptr;
  Var response = nullptr;
  if (uses_memory() && !options.baseline_only) {
    if (!memory_) throw std::logic_error("forward: memory has not been built");
    Var query = out.r;
    if (config_.keys == KeyMode::kFixed) {
      Matrix q(b, key_dim());
      for (Index i = 0; i < b; ++i) q.row(i) = batch[static_cast<std::size_t>(i)]->fixed_query;
      query = g.constant(std::move(q));
    }
    std::vector<Index> excluded;
    RetrievalSpec spec;
    spec.attention = config_.attention;
    spec.response = config_.response;
    spec.biaffine = biaffine();
    if (config_.exclude_self) {
      for (const EncodedInstance* e : batch) excluded.push_back(e->slot);
      spec.excluded_slots = excluded;
    }
    out.retrieval = respond(g, query, *memory_, spec);
    response = out.retrieval.response;
    if (options.train && config_.memory_dropout > 0) {
      Rng rng = dropout_stream(seed, "memory", options.step);
      response = ops::dropout(g, response, config_.memory_dropout, rng);
    }
  }
  if (options.baseline_only) {
    out.relation_logits = heads_->relation_mlp()(g, out.r, mlp_dropout, pr);
  } else {
    out.relation_logits = heads_->relation_logits(g, out.r, response, mlp_dropout, pr, pm);
  }
  if (options.train && heads_->has_connective_head()) {
    Rng rng_c = dropout_stream(seed, "connective", options.step);
    out.connective_logits = heads_->connective_logits(g, out.r, mlp_dropout, &rng_c);
  }
  return out;
}

}  // namespace memrel
