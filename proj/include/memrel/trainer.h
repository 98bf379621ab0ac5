#pragma once

// Training loop, evaluation and prediction.
//
// Each epoch: (1) seeded shuffle and mini-batch optimisation, writing every
// stored instance's r into its slot as it passes; (2) evaluation-mode pass
// over the stored instances followed by assign_coefficients; (3) dev
// evaluation. Early stopping watches dev accuracy; the best-dev state is
// restored at the end.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "memrel/metrics.h"
#include "memrel/model.h"

namespace memrel {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  long batches = 0;
  long keys_written = 0;
  // Coefficient pass (memory modes only).
  std::optional<double> train_accuracy;
  long correct_slots = 0;
  std::optional<EvalReport> dev;
};

struct TrainHooks {
  // Called for every key write with the stored vector.
  std::function<void(int epoch, ad::Index slot, std::span<const double> key)> on_key_write;
  // Called after the coefficient pass and dev evaluation of every epoch.
  std::function<void(const EpochRecord&, const Model&)> on_epoch_end;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool stopped_early = false;
  // Training instances after multi-label expansion, in slot order lookup
  // via EncodedInstance::slot.
  std::vector<Instance> expanded;
  std::vector<EncodedInstance> encoded;
};

// `dev` may be null: the last epoch is then kept.
TrainResult train_model(Model& model, const std::vector<Instance>& train,
                        const std::vector<Instance>* dev, const TrainHooks& hooks = {});

// Relation distributions (rows) in input order, evaluation mode.
ad::Matrix predict_probabilities(const Model& model, std::span<const EncodedInstance> instances,
                                 int batch_size, bool baseline_only = false);
std::vector<int> argmax_rows(const ad::Matrix& probabilities);

EvalReport evaluate(Model& model, const std::vector<Instance>& instances);

struct RetrievedSlot {
  ad::Index slot = -1;
  // softmax(w_i) * c_i
  double weight = 0.0;
};

struct PredictionDetail {
  std::vector<double> distribution;
  int predicted = -1;
  std::vector<RetrievedSlot> retrieved;
};

// top_k is clamped to the memory size; no retrieval without a memory.
std::vector<PredictionDetail> predict_detailed(const Model& model,
                                               std::span<const EncodedInstance> instances,
                                               int top_k, int batch_size);

}  // namespace memrel
