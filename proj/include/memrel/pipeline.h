#pragma once

// Command pipelines shared by the command-line tool and the acceptance
// harness: data loading, training with reports and checkpoints, evaluation,
// retrieval listings, the attention x response grid and synthetic data.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memrel/checkpoint.h"
#include "memrel/config.h"
#include "memrel/corpus.h"
#include "memrel/metrics.h"
#include "memrel/synthetic.h"
#include "memrel/trainer.h"
#include "json.hpp"

namespace memrel {

struct Dataset {
  LabelSpace labels;
  std::vector<Instance> train;
  std::vector<Instance> dev;
  std::vector<Instance> test;
  std::optional<WordVectors> word_vectors;
  std::optional<ContextualStore> contextual;
};

// Validates every configured path, then loads. The train path is required;
// dev and test files must use the train file's label space.
Dataset load_dataset(const RunConfig& config);

struct TrainRun {
  std::unique_ptr<Model> model;
  TrainResult result;
  std::vector<SlotRecord> slots;
  // Best-state model on the training file, dev and test files.
  EvalReport train_eval;
  std::optional<EvalReport> dev_eval;
  std::optional<EvalReport> test_eval;
};

TrainRun train_run(const TrainConfig& config, const Dataset& data, const TrainHooks& hooks = {});

// One JSON object per epoch followed by a summary object.
std::vector<nlohmann::ordered_json> report_records(const TrainRun& run, const LabelSpace& labels);
void write_report(const std::string& path, const std::vector<nlohmann::ordered_json>& records);
nlohmann::ordered_json report_json(const EvalReport& report, const LabelSpace& labels);

// Loads, trains, writes checkpoint and report when their paths are set.
TrainRun run_train(const RunConfig& config, std::ostream& log);

// Instances of `path` under the checkpoint's label space. Rejects empty
// files and foreign labels (DataError naming the label).
std::vector<Instance> load_for_model(const std::string& path, const Model& model);

void print_report(std::ostream& out, const EvalReport& report, const LabelSpace& labels);

// Per-instance retrieval listing; `k` is clamped to the memory size with a
// warning on `warn`.
nlohmann::ordered_json inspect_records(const Checkpoint& ck, const std::vector<Instance>& instances, int k,
                                       std::ostream& warn);

struct GridCell {
  std::string name;
  ResponseKind response = ResponseKind::kBaseline;
  AttentionKind attention = AttentionKind::kDot;
};

// Rows "baseline", "D+K", "D+V", "B+K", "B+V".
const std::vector<GridCell>& grid_cells();
// Names map to cells; throws UsageError for unknown names.
std::vector<GridCell> parse_grid_spec(const std::string& spec);

struct GridRow {
  GridCell cell;
  TrainRun run;
};

// Runs every cell with the shared seed; when `report_prefix` is non-empty,
// each cell's report goes to "<prefix>.<name>.jsonl".
std::vector<GridRow> run_grid(const TrainConfig& config, const Dataset& data,
                              const std::vector<GridCell>& cells, const std::string& report_prefix,
                              std::ostream& log);
nlohmann::ordered_json grid_row_json(const GridRow& row);

// Writes train/dev/test files and a matching configuration into `dir`.
void write_synthetic(const std::string& dir, const SyntheticConfig& config);

// Training configuration fitted to the synthetic corpus.
TrainConfig synthetic_train_config();

}  // namespace memrel
