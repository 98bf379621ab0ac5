#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace memrel {

// Splits UTF-8 text into code points (invalid bytes become one symbol each).
std::vector<std::string> utf8_chars(std::string_view word);

// Byte-pair-encoding subword model.
//
// Symbol ids: 0 is reserved for padding, 1 for symbols never seen during
// learning, then every learned symbol in first-seen order.
class BpeModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeModel();
  BpeModel(std::vector<Merge> merges, const std::vector<std::string>& symbols);

  const std::vector<Merge>& merges() const { return merges_; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  int num_symbols() const { return static_cast<int>(symbols_.size()); }

  // Applies merges in learned order; concatenating the result gives back the
  // word. Symbols may be outside the vocabulary only when the word holds
  // characters never seen during learning.
  std::vector<std::string> segment(std::string_view word) const;
  // Segment mapped to symbol ids; out-of-vocabulary symbols map to 1.
  std::vector<int> segment_ids(std::string_view word) const;
  int symbol_id(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;

 private:
  friend BpeModel learn_bpe(const std::vector<std::string>&, int);
  int add_symbol(const std::string& s);

  std::vector<Merge> merges_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

// Greedy learning: each step merges the most frequent adjacent symbol pair
// (counted over token occurrences; ties go to the lexicographically smallest
// pair). Stops early once no pair remains.
BpeModel learn_bpe(const std::vector<std::string>& tokens, int num_merges);

}  // namespace memrel
