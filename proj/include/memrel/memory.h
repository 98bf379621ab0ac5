#pragma once

// Instance memory: one slot per stored training instance holding
//   key         the instance's pair representation (refreshed once per epoch),
//   value       the one-hot encoding of its relation (never changes),
//   coefficient 0 for instances the model got wrong on the last pass over the
//               training set, 1 / m_j for a correct instance of relation j,
//               where m_j counts the correct instances of relation j.
//
// Queries score every slot, normalise the scores with a softmax over all m
// slots and return sum_i softmax(w)_i * c_i * value_i (value response) or
// sum_i softmax(w)_i * c_i * key_i (key response). The weighted sum is not
// renormalised after applying c.
//
// Keys enter the graph as constants: gradients reach the encoder through the
// query only.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memrel/autodiff.h"
#include "memrel/random.h"

namespace memrel {

enum class AttentionKind { kDot, kBiaffine };
enum class ResponseKind { kBaseline, kValue, kKey };
enum class CoefficientMode { kDynamic, kBalance };

// f(q, k) = q^T U k + w1^T q + w2^T k + b.
struct BiaffineParams {
  ad::Var u = nullptr;   // d x d
  ad::Var w1 = nullptr;  // 1 x d
  ad::Var w2 = nullptr;  // 1 x d
  ad::Var b = nullptr;   // 1 x 1

  static BiaffineParams create(ad::ParamRegistry& params, std::uint64_t seed, int dim,
                               const std::string& prefix = "memory/biaffine");
  int dim() const { return static_cast<int>(u->shape().rows); }
};

double score_dot(std::span<const double> query, std::span<const double> key);
double score_biaffine(std::span<const double> query, std::span<const double> key,
                      const BiaffineParams& params);

class MemoryStore {
 public:
  MemoryStore() = default;

  // Keys uniform in [-0.1, 0.1], one-hot values, zero coefficients. Throws
  // std::invalid_argument for an empty store, a relation outside
  // [0, num_relations) or a duplicate id.
  MemoryStore(std::vector<std::string> instance_ids, std::vector<int> relations, int key_dim,
              int num_relations, Rng& rng);

  ad::Index size() const { return keys_.rows(); }
  int key_dim() const { return static_cast<int>(keys_.cols()); }
  int num_relations() const { return num_relations_; }

  const ad::Matrix& keys() const { return keys_; }
  const ad::Matrix& values() const { return values_; }
  // 1 x m.
  const ad::Matrix& coefficients() const { return coefficients_; }
  int relation(ad::Index slot) const { return relations_.at(static_cast<std::size_t>(slot)); }
  const std::string& instance_id(ad::Index slot) const {
    return ids_.at(static_cast<std::size_t>(slot));
  }
  std::optional<ad::Index> slot_of(const std::string& instance_id) const;
  bool correct(ad::Index slot) const { return correct_.at(static_cast<std::size_t>(slot)) != 0; }

  // Copies r into slot i. Throws std::out_of_range for a bad slot and
  // std::logic_error once keys are frozen.
  void update_key(ad::Index slot, std::span<const double> r);
  // Replaces all keys and stops further updates.
  void freeze_keys(ad::Matrix keys);
  bool keys_frozen() const { return frozen_; }

  // predictions[i] is the predicted relation for the instance in slot i.
  void assign_coefficients(std::span<const int> predictions, CoefficientMode mode);
  void set_coefficients(ad::Matrix c);

  // Write bookkeeping: begin_epoch resets per-epoch write counters.
  void begin_epoch();
  int writes_this_epoch(ad::Index slot) const { return writes_.at(static_cast<std::size_t>(slot)); }
  std::uint64_t key_hash(ad::Index slot) const { return hashes_.at(static_cast<std::size_t>(slot)); }
  // Recomputes every key hash and compares with the write-time record.
  bool verify_integrity() const;
  static std::uint64_t hash_row(std::span<const double> r);

  void save(std::ostream& out) const;
  static MemoryStore load(std::istream& in);

 private:
  ad::Matrix keys_;
  ad::Matrix values_;
  ad::Matrix coefficients_;
  std::vector<int> relations_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, ad::Index> slot_index_;
  std::vector<char> correct_;
  std::vector<std::uint64_t> hashes_;
  std::vector<int> writes_;
  int num_relations_ = 0;
  bool frozen_ = false;
};

struct RetrievalSpec {
  AttentionKind attention = AttentionKind::kDot;
  ResponseKind response = ResponseKind::kValue;
  const BiaffineParams* biaffine = nullptr;
  // Per query: slot to leave out of the softmax, or -1.
  std::span<const ad::Index> excluded_slots;
};

struct Retrieval {
  ad::Var scores = nullptr;    // B x m
  ad::Var weights = nullptr;   // softmax over slots, B x m
  ad::Var response = nullptr;  // B x n_r (value) or B x key_dim (key)
};

// queries: B x key_dim.
Retrieval respond(ad::Graph& g, ad::Var queries, const MemoryStore& memory, const RetrievalSpec& spec);

// Fixed-key ablation: key of an instance is [mean(arg1 rows); mean(arg2 rows)]
// over its (unpadded) static token vectors.
ad::RowVector fixed_key(const ad::Matrix& arg1_vectors, const ad::Matrix& arg2_vectors);

}  // namespace memrel
