#include "memrel/synthetic.h"

#include <array>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "memrel/random.h"

namespace memrel {
namespace {

constexpr std::array<const char*, 12> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"};
constexpr std::array<const char*, 5> kVowels{"a", "e", "i", "o", "u"};

std::string syllable(std::uint64_t k) {
  return std::string(kOnsets[k % kOnsets.size()]) + kVowels[(k / kOnsets.size()) % kVowels.size()];
}

std::vector<std::string> filler_words(int count, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  const std::uint64_t n_syl = kOnsets.size() * kVowels.size();
  while (static_cast<int>(out.size()) < count) {
    const auto len = 2 + uniform_index(rng, 2);
    std::string w;
    for (std::uint64_t i = 0; i < len; ++i) w += syllable(uniform_index(rng, n_syl));
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

std::vector<std::string> connective_names(int num_relations) {
  if (num_relations == 4) {
    return {"but", "however", "because", "so", "and", "also", "then", "before"};
  }
  std::vector<std::string> out;
  for (int j = 0; j < num_relations; ++j) {
    out.push_back("conn" + std::to_string(j) + "a");
    out.push_back("conn" + std::to_string(j) + "b");
  }
  return out;
}

std::vector<Instance> make_split(const std::string& prefix, int count, int num_relations,
                                 const SyntheticConfig& cfg, const std::vector<std::string>& fillers,
                                 Rng rng) {
  std::vector<int> labels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = i % num_relations;
  shuffle(labels.begin(), labels.end(), rng);

  auto sample_arg = [&](Rng& r) {
    const auto span = static_cast<std::uint64_t>(cfg.max_length - cfg.min_length + 1);
    const auto len = static_cast<std::size_t>(cfg.min_length) + uniform_index(r, span);
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < len; ++i) toks.push_back(fillers[uniform_index(r, fillers.size())]);
    return toks;
  };
  auto plant = [&](std::vector<std::string>& toks, int rel, Rng& r) {
    const auto pos = uniform_index(r, toks.size() + 1);
    toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(pos), synthetic_marker(rel));
  };

  std::vector<Instance> out;
  for (int i = 0; i < count; ++i) {
    Instance inst;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06d", prefix.c_str(), i);
    inst.id = inst.source_id = buf;
    const int rel = labels[static_cast<std::size_t>(i)];
    inst.relations = {rel};
    inst.arg1 = sample_arg(rng);
    inst.arg2 = sample_arg(rng);
    plant(inst.arg2, rel, rng);
    if (uniform01(rng) < cfg.multi_label_fraction) {
      int other = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_relations - 1)));
      if (other >= rel) ++other;
      inst.relations.push_back(other);
      plant(inst.arg2, other, rng);
    }
    if (uniform01(rng) < cfg.connective_rate) {
      inst.connective = 2 * rel + static_cast<int>(uniform_index(rng, 2));
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

std::string synthetic_marker(int relation) {
  return "zz" + syllable(static_cast<std::uint64_t>(relation)) + "x";
}

std::vector<std::string> synthetic_relation_names(int num_relations) {
  if (num_relations == 4) return {"Comparison", "Contingency", "Expansion", "Temporal"};
  if (num_relations == 11) {
    return {"Temporal.Asynchronous",   "Temporal.Synchrony",      "Contingency.Cause",
            "Contingency.Pragmatic cause", "Comparison.Contrast", "Comparison.Concession",
            "Expansion.Conjunction",   "Expansion.Instantiation", "Expansion.Restatement",
            "Expansion.Alternative",   "Expansion.List"};
  }
  std::vector<std::string> out;
  for (int j = 0; j < num_relations; ++j) out.push_back("rel" + std::to_string(j));
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_relations < 2) throw std::invalid_argument("synthetic corpus needs >= 2 relations");
  if (cfg.min_length < 1 || cfg.max_length < cfg.min_length) {
    throw std::invalid_argument("synthetic corpus: bad argument length range");
  }
  if (cfg.num_relations > 60) throw std::invalid_argument("synthetic corpus: at most 60 relations");
  SyntheticCorpus out;
  out.labels = LabelSpace(synthetic_relation_names(cfg.num_relations),
                          connective_names(cfg.num_relations));
  Rng vocab_rng = make_stream(cfg.seed, "synthetic/vocab");
  const auto fillers = filler_words(cfg.filler_vocab, vocab_rng);
  out.train = make_split("train", cfg.num_train, cfg.num_relations, cfg, fillers,
                         make_stream(cfg.seed, "synthetic/train"));
  out.dev = make_split("dev", cfg.num_dev, cfg.num_relations, cfg, fillers,
                       make_stream(cfg.seed, "synthetic/dev"));
  out.test = make_split("test", cfg.num_test, cfg.num_relations, cfg, fillers,
                        make_stream(cfg.seed, "synthetic/test"));
  return out;
}

}  // namespace memrel
