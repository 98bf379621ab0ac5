#pragma once

// Per-token vectors e_k = [word; subword; contextual].

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "memrel/autodiff.h"
#include "memrel/bpe.h"
#include "memrel/corpus.h"
#include "memrel/init.h"

namespace memrel {

struct EmbeddingConfig {
  int word_dim = 50;
  int subword_dim = 50;
  int contextual_dim = 0;
  // Width of the vectors stored in the contextual file.
  int contextual_input_dim = 0;
  int subword_embed_dim = 16;
  std::vector<int> subword_kernels{1, 2, 3};
  int highway_layers = 1;
  // Unset: trainable when randomly initialised, frozen when file-loaded.
  std::optional<bool> word_trainable;

  int embed_dim() const { return word_dim + subword_dim + contextual_dim; }
  // Throws UsageError when inconsistent.
  void validate() const;
};

// Word vectors file: first line "count dim", then "token v1 ... vdim".
struct WordVectors {
  std::vector<std::string> tokens;
  ad::Matrix vectors;

  static WordVectors load(const std::string& path);
  void save(const std::string& path) const;
};

// Contextual vectors file: first line "count dim", then one record per token
// position: "<instance id> <arg 1|2> <position> v1 ... vdim".
class ContextualStore {
 public:
  ContextualStore() = default;
  explicit ContextualStore(int dim) : dim_(dim) {}
  static ContextualStore load(const std::string& path);
  void save(const std::string& path) const;

  void add(const std::string& instance_id, int arg, int position, std::span<const double> v);
  // Row index of the stored vector, or nullopt.
  std::optional<ad::Index> find(const std::string& instance_id, int arg, int position) const;
  ad::Matrix::ConstRowXpr row(ad::Index r) const { return data_.row(r); }
  int dim() const { return dim_; }
  ad::Index size() const { return rows_; }

 private:
  static std::string key(const std::string& id, int arg, int position);
  int dim_ = 0;
  ad::Index rows_ = 0;
  ad::Matrix data_;
  std::unordered_map<std::string, ad::Index> index_;
};

// Distinct word strings seen by the model with their subword segmentation.
class SubwordLexicon {
 public:
  int intern(const std::string& word, const BpeModel& bpe);
  const std::vector<int>& subwords(int lexeme) const { return ids_.at(static_cast<std::size_t>(lexeme)); }
  std::optional<int> find(const std::string& word) const;
  int size() const { return static_cast<int>(ids_.size()); }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::vector<int>> ids_;
};

// Flattened token positions of a batch; one entry per output row. A negative
// entry means "padding" (word, lexeme) or "no vector" (contextual).
struct TokenBatch {
  std::vector<ad::Index> words;
  std::vector<int> lexemes;
  std::vector<ad::Index> contextual;
};

class Embedder {
 public:
  // `pretrained` (optional) fixes the vocabulary and word rows; otherwise
  // `vocab` is used with uniform [-0.1, 0.1] rows.
  Embedder(const EmbeddingConfig& config, Vocabulary vocab, BpeModel bpe, ad::ParamRegistry& params,
           std::uint64_t seed, const WordVectors* pretrained = nullptr);

  const EmbeddingConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const BpeModel& bpe() const { return bpe_; }
  SubwordLexicon& lexicon() { return lexicon_; }
  const SubwordLexicon& lexicon() const { return lexicon_; }
  bool word_trainable() const { return word_param_ != nullptr; }
  // Current word table (parameter value or frozen buffer).
  const ad::Matrix& word_table() const;
  ad::Matrix& frozen_word_table() { return frozen_words_; }

  void set_contextual(const ContextualStore* store) { contextual_ = store; }
  const ContextualStore* contextual() const { return contextual_; }

  ad::RowVector embed_word(std::string_view token) const;
  ad::RowVector embed_subword(const std::string& word) const;
  ad::RowVector embed_contextual(const std::string& instance_id, int arg, int position) const;
  // Rows are word, subword, contextual in that order; PAD rows are zero.
  ad::Matrix embed_sequence(const std::vector<std::string>& tokens, const std::string& instance_id,
                            int arg) const;

  // Graph version over a flattened batch: rows x embed_dim.
  ad::Var embed(ad::Graph& g, const TokenBatch& batch) const;
  ad::Var subword_vectors(ad::Graph& g, std::span<const int> lexemes) const;

  struct Highway {
    Linear transform;  // gate t
    Linear hidden;     // candidate h
  };
  const std::vector<Highway>& highway() const { return highway_; }

 private:
  ad::Var highway_forward(ad::Graph& g, ad::Var x) const;

  EmbeddingConfig config_;
  Vocabulary vocab_;
  BpeModel bpe_;
  SubwordLexicon lexicon_;
  ad::Var word_param_ = nullptr;
  ad::Matrix frozen_words_;
  ad::Var subword_table_ = nullptr;
  std::vector<std::pair<int, std::pair<ad::Var, ad::Var>>> convs_;  // width, (weight, bias)
  std::vector<Highway> highway_;
  std::optional<Linear> contextual_proj_;
  const ContextualStore* contextual_ = nullptr;
};

}  // namespace memrel
