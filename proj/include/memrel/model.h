#pragma once

// The full classifier: embedding, shared convolutional encoder, pair
// attention, instance memory and heads.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "memrel/attention.h"
#include "memrel/classifier.h"
#include "memrel/config.h"
#include "memrel/corpus.h"
#include "memrel/embedding.h"
#include "memrel/encoder.h"
#include "memrel/memory.h"

namespace memrel {

// An instance mapped to model inputs. Token arrays hold arg1's N positions
// followed by arg2's; negative entries are padding.
struct EncodedInstance {
  std::string id;
  std::vector<ad::Index> words;
  std::vector<int> lexemes;
  std::vector<ad::Index> contextual;
  ad::RowVector fixed_query;
  std::vector<int> gold;
  int relation = -1;
  int connective = -1;
  ad::Index slot = -1;
};

struct ForwardOptions {
  bool train = false;
  // Step counter for dropout streams.
  std::uint64_t step = 0;
  // Use MLP_r(r) alone even when a memory is configured.
  bool baseline_only = false;
};

struct ForwardOutput {
  ad::Var r = nullptr;
  ad::Var relation_logits = nullptr;
  ad::Var connective_logits = nullptr;
  Retrieval retrieval;
};

class Model {
 public:
  // `pretrained` and `contextual` may be null. The contextual store must
  // outlive the model.
  Model(const TrainConfig& config, const LabelSpace& labels, Vocabulary vocab, BpeModel bpe,
        const WordVectors* pretrained, const ContextualStore* contextual);

  const TrainConfig& config() const { return config_; }
  const LabelSpace& labels() const { return labels_; }
  ad::ParamRegistry& params() { return params_; }
  const ad::ParamRegistry& params() const { return params_; }
  Embedder& embedder() { return *embedder_; }
  const Embedder& embedder() const { return *embedder_; }
  const ClassifierHeads& heads() const { return *heads_; }
  const PairAttention& attention() const { return *attention_; }
  const EncoderStack& encoder(int arg = 0) const;
  const BiaffineParams* biaffine() const { return biaffine_ ? &*biaffine_ : nullptr; }
  int rep_dim() const { return attention_->output_dim(); }
  int key_dim() const;
  bool uses_memory() const { return config_.response != ResponseKind::kBaseline; }

  void set_contextual(const ContextualStore* store);

  // Throws DataError when contextual vectors are enabled but missing.
  EncodedInstance encode(const Instance& instance);
  std::vector<EncodedInstance> encode_all(const std::vector<Instance>& instances);

  // One slot per encoded training instance (or a seeded uniform subsample
  // when memory_fraction < 1); sets each instance's slot. Fixed-key mode
  // writes and freezes the keys.
  void build_memory(std::vector<EncodedInstance>& train);
  MemoryStore* memory() { return memory_ ? &*memory_ : nullptr; }
  const MemoryStore* memory() const { return memory_ ? &*memory_ : nullptr; }
  void set_memory(MemoryStore memory) { memory_ = std::move(memory); }

  ForwardOutput forward(ad::Graph& g, std::span<const EncodedInstance* const> batch,
                        const ForwardOptions& options) const;

  // Static vectors behind fixed keys: word table at construction time plus
  // raw contextual vectors.
  const ad::Matrix& fixed_table() const { return fixed_table_; }
  void set_fixed_table(ad::Matrix table) { fixed_table_ = std::move(table); }

 private:
  ad::RowVector fixed_query(const EncodedInstance& e) const;

  TrainConfig config_;
  LabelSpace labels_;
  ad::ParamRegistry params_;
  std::unique_ptr<Embedder> embedder_;
  std::vector<EncoderStack> encoders_;
  std::unique_ptr<PairAttention> attention_;
  std::unique_ptr<ClassifierHeads> heads_;
  std::optional<BiaffineParams> biaffine_;
  std::optional<MemoryStore> memory_;
  const ContextualStore* contextual_ = nullptr;
  ad::Matrix fixed_table_;
};

// Vocabulary and BPE model learned from the training instances.
Vocabulary build_vocabulary(const std::vector<Instance>& train);
BpeModel build_bpe(const std::vector<Instance>& train, int merges);

}  // namespace memrel
