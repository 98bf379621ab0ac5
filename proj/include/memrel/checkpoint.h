#pragma once

// Binary model checkpoint: hyperparameters, label space, vocabularies,
// parameters by name, frozen tables, memory snapshot and the text of every
// stored instance. Layout in docs/FORMATS.md.

#include <memory>
#include <string>
#include <vector>

#include "memrel/model.h"

namespace memrel {

// Text of the training instance behind a memory slot.
struct SlotRecord {
  std::string id;
  std::string arg1;
  std::string arg2;
  int relation = -1;
};

struct Checkpoint {
  std::unique_ptr<Model> model;
  std::vector<SlotRecord> slots;
  int best_epoch = 0;
};

// Slot records from the expanded training set (indexed by slot).
std::vector<SlotRecord> slot_records(const std::vector<Instance>& expanded,
                                     const std::vector<EncodedInstance>& encoded, ad::Index slots);

void save_checkpoint(const std::string& path, const Model& model, const std::vector<SlotRecord>& slots,
                     int best_epoch);
// `contextual` may be null when the model does not use contextual vectors.
// Throws DataError for unreadable, truncated or inconsistent files.
Checkpoint load_checkpoint(const std::string& path, const ContextualStore* contextual);

}  // namespace memrel
