#include "memrel/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "memrel/errors.h"

namespace memrel {

using nlohmann::json;

LabelSpace::LabelSpace(std::vector<std::string> relations, std::vector<std::string> connectives) {
  for (auto& r : relations) intern_relation(r);
  for (auto& c : connectives) intern_connective(c);
  fixed_ = true;
}

std::optional<int> LabelSpace::find_relation(std::string_view name) const {
  auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> LabelSpace::find_connective(std::string_view name) const {
  auto it = connective_index_.find(std::string(name));
  if (it == connective_index_.end()) return std::nullopt;
  return it->second;
}

int LabelSpace::intern_relation(const std::string& name) {
  if (auto id = find_relation(name)) return *id;
  if (fixed_) throw DataError("unknown relation label: " + name);
  relation_index_.emplace(name, num_relations());
  relations_.push_back(name);
  return num_relations() - 1;
}

int LabelSpace::intern_connective(const std::string& name) {
  if (auto id = find_connective(name)) return *id;
  if (fixed_) throw DataError("unknown connective label: " + name);
  connective_index_.emplace(name, num_connectives());
  connectives_.push_back(name);
  return num_connectives() - 1;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

namespace {

[[noreturn]] void record_error(std::string_view source, std::size_t line, const std::string& why) {
  throw DataError(std::string(source) + ":" + std::to_string(line) + ": " + why);
}

std::vector<std::string> string_array(const json& j, const char* key, std::string_view source,
                                      std::size_t line) {
  if (!j.contains(key) || !j[key].is_array()) record_error(source, line, std::string("missing array '") + key + "'");
  std::vector<std::string> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) record_error(source, line, std::string("non-string entry in '") + key + "'");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

Corpus parse_instances(std::istream& in, const LabelSpace* preset, std::string_view source) {
  Corpus corpus;
  if (preset) {
    corpus.labels = *preset;
    corpus.labels.fix();
  }
  std::string line;
  std::size_t line_no = 0;
  std::size_t record_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(source, line_no, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) record_error(source, line_no, "record must be an object");
    if (j.contains("label_space")) {
      if (record_no != 0) record_error(source, line_no, "label_space header must come first");
      if (!preset) {
        const auto& ls = j["label_space"];
        corpus.labels = LabelSpace(string_array(ls, "relations", source, line_no),
                                   ls.contains("connectives")
                                       ? string_array(ls, "connectives", source, line_no)
                                       : std::vector<std::string>{});
      }
      continue;
    }
    Instance inst;
    if (j.contains("id")) {
      inst.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    } else {
      inst.id = std::to_string(record_no);
    }
    inst.source_id = inst.id;
    for (const char* key : {"arg1", "arg2"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        record_error(source, line_no, std::string("missing string '") + key + "'");
      }
    }
    inst.arg1 = tokenize(j["arg1"].get<std::string>());
    inst.arg2 = tokenize(j["arg2"].get<std::string>());
    if (inst.arg1.empty() || inst.arg2.empty()) record_error(source, line_no, "empty argument");
    if (j.contains("connective") && !j["connective"].is_null()) {
      if (!j["connective"].is_string()) record_error(source, line_no, "connective must be a string or null");
      try {
        inst.connective = corpus.labels.intern_connective(j["connective"].get<std::string>());
      } catch (const DataError& e) {
        record_error(source, line_no, e.what());
      }
    }
    const auto rels = string_array(j, "relations", source, line_no);
    if (rels.empty()) record_error(source, line_no, "relations must be non-empty");
    for (const auto& r : rels) {
      try {
        const int id = corpus.labels.intern_relation(r);
        if (std::find(inst.relations.begin(), inst.relations.end(), id) == inst.relations.end()) {
          inst.relations.push_back(id);
        }
      } catch (const DataError& e) {
        record_error(source, line_no, e.what());
      }
    }
    corpus.instances.push_back(std::move(inst));
    ++record_no;
  }
  return corpus;
}

Corpus load_instances(const std::string& path, const LabelSpace* preset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open instance file: " + path);
  return parse_instances(in, preset, path);
}

void write_instances(std::ostream& out, const std::vector<Instance>& instances,
                     const LabelSpace& labels) {
  json header;
  header["label_space"] = {{"relations", labels.relations()},
                           {"connectives", labels.connectives()}};
  out << header.dump() << '\n';
  for (const auto& inst : instances) {
    json j;
    j["id"] = inst.id;
    j["arg1"] = join_tokens(inst.arg1);
    j["arg2"] = join_tokens(inst.arg2);
    j["connective"] = inst.connective ? json(labels.connective(*inst.connective)) : json(nullptr);
    json rels = json::array();
    for (int r : inst.relations) rels.push_back(labels.relation(r));
    j["relations"] = rels;
    out << j.dump() << '\n';
  }
}

void write_instances(const std::string& path, const std::vector<Instance>& instances,
                     const LabelSpace& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write instance file: " + path);
  write_instances(out, instances, labels);
}

std::vector<Instance> expand_multilabel(const std::vector<Instance>& instances) {
  std::vector<Instance> out;
  for (const auto& inst : instances) {
    for (std::size_t j = 0; j < inst.relations.size(); ++j) {
      Instance copy = inst;
      copy.relations = {inst.relations[j]};
      if (j > 0) copy.id = inst.id + "#" + std::to_string(j);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::vector<std::string> pad_truncate(const std::vector<std::string>& tokens, std::size_t n) {
  std::vector<std::string> out(tokens.begin(),
                               tokens.begin() + static_cast<std::ptrdiff_t>(std::min(n, tokens.size())));
  out.resize(n, std::string(kPadToken));
  return out;
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  index_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

Vocabulary Vocabulary::build(const std::vector<Instance>& instances) {
  Vocabulary v;
  for (const auto& inst : instances) {
    for (const auto& t : inst.arg1) v.add(t);
    for (const auto& t : inst.arg2) v.add(t);
  }
  return v;
}

}  // namespace memrel
