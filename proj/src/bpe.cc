#include "memrel/bpe.h"

#include <map>
#include <stdexcept>

#include "memrel/corpus.h"

namespace memrel {

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

BpeModel::BpeModel() {
  add_symbol(std::string(kPadToken));
  add_symbol(std::string(kUnkToken));
}

BpeModel::BpeModel(std::vector<Merge> merges, const std::vector<std::string>& symbols)
    : BpeModel() {
  merges_ = std::move(merges);
  for (const auto& s : symbols) add_symbol(s);
}

int BpeModel::add_symbol(const std::string& s) {
  auto it = index_.find(s);
  if (it != index_.end()) return it->second;
  index_.emplace(s, num_symbols());
  symbols_.push_back(s);
  return num_symbols() - 1;
}

int BpeModel::symbol_id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  return it == index_.end() ? 1 : it->second;
}

bool BpeModel::contains(std::string_view symbol) const {
  return index_.count(std::string(symbol)) > 0;
}

namespace {

void apply_merge(std::vector<std::string>& syms, const BpeModel::Merge& m) {
  if (syms.size() < 2) return;
  std::vector<std::string> out;
  out.reserve(syms.size());
  std::size_t i = 0;
  while (i < syms.size()) {
    if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
      out.push_back(m.first + m.second);
      i += 2;
    } else {
      out.push_back(std::move(syms[i]));
      ++i;
    }
  }
  syms = std::move(out);
}

}  // namespace

std::vector<std::string> BpeModel::segment(std::string_view word) const {
  auto syms = utf8_chars(word);
  for (const auto& m : merges_) {
    if (syms.size() < 2) break;
    apply_merge(syms, m);
  }
  return syms;
}

std::vector<int> BpeModel::segment_ids(std::string_view word) const {
  std::vector<int> ids;
  for (const auto& s : segment(word)) ids.push_back(symbol_id(s));
  return ids;
}

BpeModel learn_bpe(const std::vector<std::string>& tokens, int num_merges) {
  if (num_merges < 0) throw std::invalid_argument("learn_bpe: num_merges must be >= 0");
  std::map<std::string, long> freq;
  for (const auto& t : tokens) {
    if (t == kPadToken || t.empty()) continue;
    ++freq[t];
  }
  BpeModel model;
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, n] : freq) {
    auto chars = utf8_chars(w);
    for (const auto& c : chars) model.add_symbol(c);
    words.emplace_back(std::move(chars), n);
  }
  for (int step = 0; step < num_merges; ++step) {
    std::map<BpeModel::Merge, long> counts;
    for (const auto& [syms, n] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += n;
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const BpeModel::Merge merge = best->first;
    for (auto& w : words) apply_merge(w.first, merge);
    model.merges_.push_back(merge);
    model.add_symbol(merge.first + merge.second);
  }
  return model;
}

}  // namespace memrel
