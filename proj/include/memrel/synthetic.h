#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memrel/corpus.h"

namespace memrel {

// Planted-marker corpus: the relation of an instance is carried only by a
// marker token placed somewhere in arg2; everything else is label-independent
// filler.
struct SyntheticConfig {
  int num_train = 2000;
  int num_dev = 200;
  int num_test = 200;
  int num_relations = 4;
  std::uint64_t seed = 1;
  int filler_vocab = 400;
  int min_length = 3;
  int max_length = 9;
  // Probability that an instance carries a connective label.
  double connective_rate = 0.9;
  // Fraction of instances given a second relation (and its marker).
  double multi_label_fraction = 0.0;
};

struct SyntheticCorpus {
  LabelSpace labels;
  std::vector<Instance> train;
  std::vector<Instance> dev;
  std::vector<Instance> test;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

// Marker token planted for relation j.
std::string synthetic_marker(int relation);
std::vector<std::string> synthetic_relation_names(int num_relations);

}  // namespace memrel
