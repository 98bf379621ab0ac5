#include "memrel/metrics.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace memrel {

EvalReport evaluate_predictions(std::span<const int> predictions,
                                const std::vector<std::vector<int>>& gold, int num_relations) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument("evaluate_predictions: one gold set per prediction is required");
  }
  const auto n = static_cast<std::size_t>(num_relations);
  EvalReport rep;
  rep.count = static_cast<long>(predictions.size());
  rep.confusion.assign(n, std::vector<long>(n, 0));
  std::vector<long> tp(n, 0);
  std::vector<long> fp(n, 0);
  std::vector<long> fn(n, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const auto& g = gold[i];
    if (g.empty()) throw std::invalid_argument("evaluate_predictions: empty gold set");
    if (p < 0 || p >= num_relations) {
      throw std::invalid_argument("evaluate_predictions: prediction " + std::to_string(p) + " out of range");
    }
    for (int l : g) {
      if (l < 0 || l >= num_relations) throw std::invalid_argument("evaluate_predictions: gold label out of range");
    }
    const auto up = static_cast<std::size_t>(p);
    if (std::find(g.begin(), g.end(), p) != g.end()) {
      ++rep.correct;
      ++tp[up];
      ++rep.confusion[up][up];
    } else {
      ++fp[up];
      for (int l : g) ++fn[static_cast<std::size_t>(l)];
      ++rep.confusion[static_cast<std::size_t>(g.front())][up];
    }
  }
  rep.accuracy = rep.count ? static_cast<double>(rep.correct) / static_cast<double>(rep.count) : 0.0;
  rep.precision.assign(n, 0.0);
  rep.recall.assign(n, 0.0);
  rep.f1.assign(n, 0.0);
  rep.active.assign(n, false);
  double sum = 0.0;
  int active = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double t = static_cast<double>(tp[j]);
    if (tp[j] + fp[j] > 0) rep.precision[j] = t / static_cast<double>(tp[j] + fp[j]);
    if (tp[j] + fn[j] > 0) rep.recall[j] = t / static_cast<double>(tp[j] + fn[j]);
    const double pr = rep.precision[j] + rep.recall[j];
    if (pr > 0) rep.f1[j] = 2.0 * rep.precision[j] * rep.recall[j] / pr;
    rep.active[j] = tp[j] + fp[j] + fn[j] > 0;
    if (rep.active[j]) {
      sum += rep.f1[j];
      ++active;
    }
  }
  rep.macro_f1 = active ? sum / active : 0.0;
  return rep;
}

}  // namespace memrel
