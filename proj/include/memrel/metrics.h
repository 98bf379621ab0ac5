#pragma once

// Accuracy, per-class precision/recall/F1, macro-F1 and confusion matrix.
//
// A prediction is correct when it matches any gold label. Per-class counts:
// a correct prediction is a true positive for the predicted label; a wrong
// one is a false positive for the prediction and a false negative for every
// gold label. Confusion rows are indexed by the reference label (the
// matched gold label when correct, else the first gold label) and columns by
// the prediction. Macro-F1 averages over classes that occur as gold or as a
// prediction.

#include <span>
#include <vector>

namespace memrel {

struct EvalReport {
  long count = 0;
  long correct = 0;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  // Classes counted in the macro average.
  std::vector<bool> active;
  double macro_f1 = 0.0;
  std::vector<std::vector<long>> confusion;
};

EvalReport evaluate_predictions(std::span<const int> predictions,
                                const std::vector<std::vector<int>>& gold, int num_relations);

}  // namespace memrel
