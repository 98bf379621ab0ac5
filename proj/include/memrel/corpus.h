#pragma once

// Instance data model and ingestion.
//
// Instance files are JSON Lines. An optional first record
//   {"label_space": {"relations": [...], "connectives": [...]}}
// fixes label order; every other record is
//   {"id": "...", "arg1": "...", "arg2": "...", "connective": "..." | null,
//    "relations": ["...", ...]}
// with "id" optional (defaults to the 0-based record index). See
// docs/FORMATS.md.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memrel {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::size_t kDefaultMaxLength = 100;

class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::vector<std::string> relations, std::vector<std::string> connectives);

  int num_relations() const { return static_cast<int>(relations_.size()); }
  int num_connectives() const { return static_cast<int>(connectives_.size()); }
  const std::vector<std::string>& relations() const { return relations_; }
  const std::vector<std::string>& connectives() const { return connectives_; }
  const std::string& relation(int id) const { return relations_.at(static_cast<std::size_t>(id)); }
  const std::string& connective(int id) const {
    return connectives_.at(static_cast<std::size_t>(id));
  }

  std::optional<int> find_relation(std::string_view name) const;
  std::optional<int> find_connective(std::string_view name) const;

  // Returns the id, appending the name when the space is not fixed. Throws
  // DataError for unknown names once fixed.
  int intern_relation(const std::string& name);
  int intern_connective(const std::string& name);

  bool fixed() const { return fixed_; }
  void fix() { fixed_ = true; }

  friend bool operator==(const LabelSpace& a, const LabelSpace& b) {
    return a.relations_ == b.relations_ && a.connectives_ == b.connectives_;
  }

 private:
  std::vector<std::string> relations_;
  std::vector<std::string> connectives_;
  std::unordered_map<std::string, int> relation_index_;
  std::unordered_map<std::string, int> connective_index_;
  bool fixed_ = false;
};

struct Instance {
  std::string id;
  // Identifier of the record the instance came from; multi-label expansion
  // gives copies distinct ids but keeps this one (contextual vectors are keyed
  // by it).
  std::string source_id;
  std::vector<std::string> arg1;
  std::vector<std::string> arg2;
  std::optional<int> connective;
  std::vector<int> relations;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Corpus {
  std::vector<Instance> instances;
  LabelSpace labels;
};

// Lowercases (ASCII) and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Label precedence: `preset` when given, else the file's header record, else
// labels discovered in file order. Throws DataError (with line number) on
// malformed records or labels unknown to a fixed space.
Corpus load_instances(const std::string& path, const LabelSpace* preset = nullptr);
Corpus parse_instances(std::istream& in, const LabelSpace* preset = nullptr,
                       std::string_view source_name = "<stream>");

void write_instances(const std::string& path, const std::vector<Instance>& instances,
                     const LabelSpace& labels);
void write_instances(std::ostream& out, const std::vector<Instance>& instances,
                     const LabelSpace& labels);

// An instance with k relations becomes k single-relation instances sharing
// arguments and connective; copies after the first get id "<id>#<j>".
std::vector<Instance> expand_multilabel(const std::vector<Instance>& instances);

// Keeps the first n tokens or right-pads with kPadToken.
std::vector<std::string> pad_truncate(const std::vector<std::string>& tokens,
                                      std::size_t n = kDefaultMaxLength);

// Word vocabulary with reserved ids 0 (PAD) and 1 (UNK).
class Vocabulary {
 public:
  Vocabulary();

  int add(const std::string& token);
  // kUnkId for unknown tokens; kPadId for the pad token.
  int lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocabulary build(const std::vector<Instance>& instances);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace memrel
