#include "memrel/embedding.h"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "memrel/errors.h"

namespace memrel {

using ad::Index;
using ad::Matrix;
using ad::Var;
namespace ops = ad::ops;

void EmbeddingConfig::validate() const {
  if (word_dim < 0 || subword_dim < 0 || contextual_dim < 0) {
    throw UsageError("embedding dims must be non-negative");
  }
  if (embed_dim() < 1) throw UsageError("at least one embedding source must be enabled");
  if (subword_dim > 0) {
    if (subword_kernels.empty()) throw UsageError("subword_kernels must not be empty");
    if (static_cast<int>(subword_kernels.size()) > subword_dim) {
      throw UsageError("subword_dim must be >= number of subword kernels");
    }
    for (int k : subword_kernels) {
      if (k < 1) throw UsageError("subword kernel widths must be >= 1");
    }
    if (subword_embed_dim < 1) throw UsageError("subword_embed_dim must be >= 1");
  }
  if (contextual_dim > 0 && contextual_input_dim < 1) {
    throw UsageError("contextual_dim > 0 requires contextual_input_dim >= 1");
  }
}

// ---------------------------------------------------------------------------

WordVectors WordVectors::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vector file: " + path);
  long count = 0;
  long dim = 0;
  if (!(in >> count >> dim) || count < 0 || dim < 1) {
    throw DataError(path + ":1: expected header \"count dim\"");
  }
  WordVectors wv;
  wv.vectors.resize(count, dim);
  for (long i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token)) throw DataError(path + ":" + std::to_string(i + 2) + ": missing token");
    for (long j = 0; j < dim; ++j) {
      if (!(in >> wv.vectors(i, j))) {
        throw DataError(path + ":" + std::to_string(i + 2) + ": expected " + std::to_string(dim) +
                        " values for '" + token + "'");
      }
    }
    wv.tokens.push_back(std::move(token));
  }
  return wv;
}

void WordVectors::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write word vector file: " + path);
  out << tokens.size() << ' ' << vectors.cols() << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i];
    for (Index j = 0; j < vectors.cols(); ++j) out << ' ' << vectors(static_cast<Index>(i), j);
    out << '\n';
  }
}

std::string ContextualStore::key(const std::string& id, int arg, int position) {
  return id + '\x1f' + std::to_string(arg) + '\x1f' + std::to_string(position);
}

void ContextualStore::add(const std::string& instance_id, int arg, int position,
                          std::span<const double> v) {
  if (static_cast<int>(v.size()) != dim_) throw DataError("contextual vector has wrong width");
  if (rows_ == data_.rows()) data_.conservativeResize(std::max<Index>(16, 2 * rows_), dim_);
  for (int j = 0; j < dim_; ++j) data_(rows_, j) = v[static_cast<std::size_t>(j)];
  index_[key(instance_id, arg, position)] = rows_;
  ++rows_;
}

std::optional<Index> ContextualStore::find(const std::string& instance_id, int arg,
                                           int position) const {
  auto it = index_.find(key(instance_id, arg, position));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ContextualStore ContextualStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open contextual vector file: " + path);
  long count = 0;
  int dim = 0;
  if (!(in >> count >> dim) || count < 0 || dim < 1) {
    throw DataError(path + ":1: expected header \"count dim\"");
  }
  ContextualStore store(dim);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (long i = 0; i < count; ++i) {
    std::string id;
    int arg = 0;
    int pos = 0;
    if (!(in >> id >> arg >> pos) || (arg != 1 && arg != 2) || pos < 0) {
      throw DataError(path + ":" + std::to_string(i + 2) + ": expected \"id arg position\"");
    }
    for (auto& x : v) {
      if (!(in >> x)) throw DataError(path + ":" + std::to_string(i + 2) + ": too few values");
    }
    store.add(id, arg, pos, v);
  }
  return store;
}

void ContextualStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write contextual vector file: " + path);
  std::vector<std::pair<Index, std::string>> rows;
  for (const auto& [k, r] : index_) rows.emplace_back(r, k);
  std::sort(rows.begin(), rows.end());
  out << rows_ << ' ' << dim_ << '\n' << std::setprecision(17);
  for (const auto& [r, k] : rows) {
    std::string fields = k;
    std::replace(fields.begin(), fields.end(), '\x1f', ' ');
    out << fields;
    for (int j = 0; j < dim_; ++j) out << ' ' << data_(r, j);
    out << '\n';
  }
}

int SubwordLexicon::intern(const std::string& word, const BpeModel& bpe) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const int id = size();
  index_.emplace(word, id);
  auto ids = bpe.segment_ids(word);
  if (ids.empty()) ids.push_back(1);
  ids_.push_back(std::move(ids));
  return id;
}

std::optional<int> SubwordLexicon::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

Embedder::Embedder(const EmbeddingConfig& config, Vocabulary vocab, BpeModel bpe,
                   ad::ParamRegistry& params, std::uint64_t seed, const WordVectors* pretrained)
    : config_(config), vocab_(std::move(vocab)), bpe_(std::move(bpe)) {
  config_.validate();
  if (config_.word_dim > 0) {
    Matrix table;
    if (pretrained) {
      if (pretrained->vectors.cols() != config_.word_dim) {
        throw UsageError("word_dim " + std::to_string(config_.word_dim) +
                         " does not match word vector file width " +
                         std::to_string(pretrained->vectors.cols()));
      }
      vocab_ = Vocabulary();
      for (const auto& t : pretrained->tokens) vocab_.add(t);
      table = Matrix::Zero(vocab_.size(), config_.word_dim);
      Rng rng = make_stream(seed, "init/embed/word/unk");
      table.row(kUnkId) = uniform_matrix(1, config_.word_dim, 0.1, rng);
      for (std::size_t i = 0; i < pretrained->tokens.size(); ++i) {
        table.row(vocab_.lookup(pretrained->tokens[i])) = pretrained->vectors.row(static_cast<Index>(i));
      }
    } else {
      Rng rng = make_stream(seed, "init/embed/word");
      table = uniform_matrix(vocab_.size(), config_.word_dim, 0.1, rng);
      table.row(kPadId).setZero();
    }
    const bool trainable = config_.word_trainable.value_or(pretrained == nullptr);
    if (trainable) {
      word_param_ = params.add("embed/word", std::move(table));
    } else {
      frozen_words_ = std::move(table);
    }
  }
  if (config_.subword_dim > 0) {
    const int e = config_.subword_embed_dim;
    Rng rng = make_stream(seed, "init/embed/subword");
    Matrix sub = uniform_matrix(bpe_.num_symbols(), e, 0.1, rng);
    sub.row(0).setZero();
    subword_table_ = params.add("embed/subword", std::move(sub));
    const int k = static_cast<int>(config_.subword_kernels.size());
    for (int i = 0; i < k; ++i) {
      const int width = config_.subword_kernels[static_cast<std::size_t>(i)];
      const int filters = config_.subword_dim / k + (i < config_.subword_dim % k ? 1 : 0);
      const std::string name = "embed/subword_conv" + std::to_string(i);
      Var w = add_glorot(params, seed, name + "/w", width * e, filters, width * e, filters);
      Var b = add_zeros(params, name + "/b", 1, filters);
      convs_.push_back({width, {w, b}});
    }
    for (int l = 0; l < config_.highway_layers; ++l) {
      const std::string name = "embed/highway" + std::to_string(l);
      Highway h;
      h.transform = Linear::create(params, seed, name + "/transform", config_.subword_dim,
                                   config_.subword_dim);
      h.transform.bias->mutable_value().setConstant(-1.0);
      h.hidden = Linear::create(params, seed, name + "/hidden", config_.subword_dim,
                                config_.subword_dim);
      highway_.push_back(h);
    }
  }
  if (config_.contextual_dim > 0) {
    contextual_proj_ = Linear::create(params, seed, "embed/contextual_proj",
                                      config_.contextual_input_dim, config_.contextual_dim, false);
  }
}

const Matrix& Embedder::word_table() const {
  return word_param_ ? word_param_->value() : frozen_words_;
}

ad::RowVector Embedder::embed_word(std::string_view token) const {
  if (config_.word_dim == 0) return ad::RowVector(0);
  if (token == kPadToken) return ad::RowVector::Zero(config_.word_dim);
  return word_table().row(vocab_.lookup(token));
}

Var Embedder::highway_forward(ad::Graph& g, Var x) const {
  for (const auto& h : highway_) {
    Var t = ops::sigmoid(g, h.transform(g, x));
    Var cand = ops::relu(g, h.hidden(g, x));
    // t * h + (1 - t) * x == x + t * (h - x)
    x = ops::add(g, x, ops::mul(g, t, ops::sub(g, cand, x)));
  }
  return x;
}

Var Embedder::subword_vectors(ad::Graph& g, std::span<const int> lexemes) const {
  std::vector<Index> ids;
  std::vector<Index> lengths;
  for (int lx : lexemes) {
    const auto& sub = lexicon_.subwords(lx);
    for (int s : sub) ids.push_back(s);
    lengths.push_back(static_cast<Index>(sub.size()));
  }
  const ad::Segments segs(std::move(lengths));
  Var emb = ops::gather_rows(g, subword_table_, ids);
  std::vector<Var> parts;
  for (const auto& [width, wb] : convs_) {
    Var c = ops::conv1d(g, emb, wb.first, wb.second, width, segs);
    parts.push_back(ops::segment_max(g, c, segs));
  }
  Var x = parts.size() == 1 ? parts[0] : ops::concat_cols(g, parts);
  return highway_forward(g, x);
}

ad::RowVector Embedder::embed_subword(const std::string& word) const {
  if (config_.subword_dim == 0) return ad::RowVector(0);
  if (word == kPadToken) return ad::RowVector::Zero(config_.subword_dim);
  // Segment on the fly so unseen words need no lexicon entry.
  SubwordLexicon local;
  const int lx = local.intern(word, bpe_);
  ad::Graph g;
  std::vector<Index> ids;
  for (int s : local.subwords(lx)) ids.push_back(s);
  const ad::Segments segs({static_cast<Index>(ids.size())});
  Var emb = ops::gather_rows(g, subword_table_, ids);
  std::vector<Var> parts;
  for (const auto& [width, wb] : convs_) {
    parts.push_back(ops::segment_max(g, ops::conv1d(g, emb, wb.first, wb.second, width, segs), segs));
  }
  Var x = parts.size() == 1 ? parts[0] : ops::concat_cols(g, parts);
  return highway_forward(g, x)->value().row(0);
}

ad::RowVector Embedder::embed_contextual(const std::string& instance_id, int arg,
                                         int position) const {
  if (config_.contextual_dim == 0) return ad::RowVector(0);
  if (!contextual_) throw DataError("contextual source enabled but no contextual file loaded");
  auto row = contextual_->find(instance_id, arg, position);
  if (!row) {
    throw DataError("no contextual vector for instance " + instance_id + " arg " +
                    std::to_string(arg) + " position " + std::to_string(position));
  }
  return contextual_->row(*row) * contextual_proj_->weight->value();
}

ad::Matrix Embedder::embed_sequence(const std::vector<std::string>& tokens,
                                    const std::string& instance_id, int arg) const {
  Matrix out = Matrix::Zero(static_cast<Index>(tokens.size()), config_.embed_dim());
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k] == kPadToken) continue;
    const auto r = static_cast<Index>(k);
    out.block(r, 0, 1, config_.word_dim) = embed_word(tokens[k]);
    out.block(r, config_.word_dim, 1, config_.subword_dim) = embed_subword(tokens[k]);
    out.block(r, config_.word_dim + config_.subword_dim, 1, config_.contextual_dim) =
        embed_contextual(instance_id, arg, static_cast<int>(k));
  }
  return out;
}

Var Embedder::embed(ad::Graph& g, const TokenBatch& batch) const {
  const auto rows = static_cast<Index>(batch.words.size());
  std::vector<Var> parts;
  if (config_.word_dim > 0) {
    if (word_param_) {
      parts.push_back(ops::gather_rows(g, word_param_, batch.words));
    } else {
      Matrix m(rows, config_.word_dim);
      for (Index i = 0; i < rows; ++i) {
        const Index w = batch.words[static_cast<std::size_t>(i)];
        if (w < 0) {
          m.row(i).setZero();
        } else {
          m.row(i) = frozen_words_.row(w);
        }
      }
      parts.push_back(g.constant(std::move(m)));
    }
  }
  if (config_.subword_dim > 0) {
    std::unordered_map<int, Index> local;
    std::vector<int> distinct;
    std::vector<Index> gather(batch.lexemes.size(), -1);
    for (std::size_t i = 0; i < batch.lexemes.size(); ++i) {
      const int lx = batch.lexemes[i];
      if (lx < 0) continue;
      auto [it, inserted] = local.emplace(lx, static_cast<Index>(distinct.size()));
      if (inserted) distinct.push_back(lx);
      gather[i] = it->second;
    }
    if (distinct.empty()) {
      parts.push_back(g.constant(Matrix::Zero(rows, config_.subword_dim)));
    } else {
      parts.push_back(ops::gather_rows(g, subword_vectors(g, distinct), gather));
    }
  }
  if (config_.contextual_dim > 0) {
    Matrix raw = Matrix::Zero(rows, config_.contextual_input_dim);
    for (Index i = 0; i < rows; ++i) {
      const Index r = batch.contextual[static_cast<std::size_t>(i)];
      if (r >= 0) raw.row(i) = contextual_->row(r);
    }
    parts.push_back((*contextual_proj_)(g, g.constant(std::move(raw))));
  }
  return parts.size() == 1 ? parts[0] : ops::concat_cols(g, parts);
}

}  // namespace memrel
