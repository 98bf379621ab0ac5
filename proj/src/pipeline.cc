#include "memrel/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "memrel/errors.h"

namespace memrel {

using json = nlohmann::ordered_json;

namespace {

void require_file(const std::string& key, const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError(key + " file not found: " + path);
}

void require_writable_dir(const std::string& key, const std::string& path) {
  const auto parent = std::filesystem::absolute(path).parent_path();
  if (!std::filesystem::is_directory(parent)) {
    throw UsageError(key + " directory does not exist: " + parent.string());
  }
}

// Maps a freely parsed file onto `labels`. Foreign relations are rejected by
// name; foreign connectives are dropped.
std::vector<Instance> load_split(const std::string& path, const LabelSpace& labels) {
  Corpus c = load_instances(path);
  std::vector<int> rel_map;
  for (const auto& r : c.labels.relations()) {
    const auto id = labels.find_relation(r);
    if (!id) throw DataError(path + ": relation label '" + r + "' is not in the model's label space");
    rel_map.push_back(*id);
  }
  std::vector<std::optional<int>> conn_map;
  for (const auto& name : c.labels.connectives()) conn_map.push_back(labels.find_connective(name));
  for (auto& inst : c.instances) {
    for (int& r : inst.relations) r = rel_map[static_cast<std::size_t>(r)];
    if (inst.connective) inst.connective = conn_map[static_cast<std::size_t>(*inst.connective)];
  }
  return std::move(c.instances);
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  if (config.train_path.empty()) throw UsageError("train path is not set");
  require_file("train", config.train_path);
  if (!config.dev_path.empty()) require_file("dev", config.dev_path);
  if (!config.test_path.empty()) require_file("test", config.test_path);
  if (!config.word_vectors_path.empty()) require_file("word_vectors", config.word_vectors_path);
  if (!config.contextual_path.empty()) require_file("contextual", config.contextual_path);
  if (!config.checkpoint_path.empty()) require_writable_dir("checkpoint", config.checkpoint_path);
  if (!config.report_path.empty()) require_writable_dir("report", config.report_path);
  if (config.train.embedding.contextual_dim > 0 && config.contextual_path.empty()) {
    throw UsageError("contextual_dim > 0 needs a contextual file");
  }
  config.train.validate();

  Dataset d;
  Corpus train = load_instances(config.train_path);
  if (train.instances.empty()) throw DataError(config.train_path + " holds no instances");
  d.labels = train.labels;
  d.labels.fix();
  d.train = std::move(train.instances);
  if (!config.dev_path.empty()) d.dev = load_split(config.dev_path, d.labels);
  if (!config.test_path.empty()) d.test = load_split(config.test_path, d.labels);
  if (!config.word_vectors_path.empty()) d.word_vectors = WordVectors::load(config.word_vectors_path);
  if (!config.contextual_path.empty()) d.contextual = ContextualStore::load(config.contextual_path);
  return d;
}

TrainRun train_run(const TrainConfig& config, const Dataset& data, const TrainHooks& hooks) {
  TrainRun run;
  const WordVectors* wv = data.word_vectors ? &*data.word_vectors : nullptr;
  const ContextualStore* ctx = data.contextual ? &*data.contextual : nullptr;
  run.model = std::make_unique<Model>(config, data.labels, build_vocabulary(data.train),
                                      build_bpe(data.train, config.bpe_merges), wv, ctx);
  run.result = train_model(*run.model, data.train, data.dev.empty() ? nullptr : &data.dev, hooks);
  if (const MemoryStore* mem = run.model->memory()) {
    run.slots = slot_records(run.result.expanded, run.result.encoded, mem->size());
  }
  run.train_eval = evaluate(*run.model, data.train);
  if (!data.dev.empty()) run.dev_eval = evaluate(*run.model, data.dev);
  if (!data.test.empty()) run.test_eval = evaluate(*run.model, data.test);
  return run;
}

json report_json(const EvalReport& report, const LabelSpace& labels) {
  json j;
  j["count"] = report.count;
  j["correct"] = report.correct;
  j["accuracy"] = report.accuracy;
  j["macro_f1"] = report.macro_f1;
  json f1 = json::object();
  for (int r = 0; r < labels.num_relations(); ++r) f1[labels.relation(r)] = report.f1[static_cast<std::size_t>(r)];
  j["f1"] = std::move(f1);
  j["confusion"] = report.confusion;
  return j;
}

std::vector<json> report_records(const TrainRun& run, const LabelSpace& labels) {
  std::vector<json> out;
  for (const auto& e : run.result.epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["batches"] = e.batches;
    j["keys_written"] = e.keys_written;
    if (e.train_accuracy) {
      j["train_accuracy"] = *e.train_accuracy;
      j["correct_slots"] = e.correct_slots;
    }
    if (e.dev) {
      j["dev_accuracy"] = e.dev->accuracy;
      j["dev_macro_f1"] = e.dev->macro_f1;
    }
    out.push_back(std::move(j));
  }
  json s;
  s["summary"] = true;
  s["best_epoch"] = run.result.best_epoch;
  s["epochs_run"] = run.result.epochs.size();
  s["stopped_early"] = run.result.stopped_early;
  s["train"] = report_json(run.train_eval, labels);
  if (run.dev_eval) s["dev"] = report_json(*run.dev_eval, labels);
  if (run.test_eval) s["test"] = report_json(*run.test_eval, labels);
  out.push_back(std::move(s));
  return out;
}

void write_report(const std::string& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report " + path);
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw DataError("error writing report " + path);
}

TrainRun run_train(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  log << "train " << data.train.size() << " dev " << data.dev.size() << " test " << data.test.size()
      << " relations " << data.labels.num_relations() << '\n';
  TrainHooks hooks;
  hooks.on_epoch_end = [&log](const EpochRecord& r, const Model&) {
    log << "epoch " << r.epoch << " loss " << std::fixed << std::setprecision(4) << r.train_loss;
    if (r.train_accuracy) log << " train " << *r.train_accuracy;
    if (r.dev) log << " dev " << r.dev->accuracy;
    log << std::defaultfloat << '\n';
  };
  TrainRun run = train_run(config.train, data, hooks);
  log << "best epoch " << run.result.best_epoch << '\n';
  if (!config.checkpoint_path.empty()) {
    save_checkpoint(config.checkpoint_path, *run.model, run.slots, run.result.best_epoch);
  }
  if (!config.report_path.empty()) write_report(config.report_path, report_records(run, data.labels));
  return run;
}

std::vector<Instance> load_for_model(const std::string& path, const Model& model) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("instance file not found: " + path);
  auto instances = load_split(path, model.labels());
  if (instances.empty()) throw DataError(path + " holds no instances");
  return instances;
}

void print_report(std::ostream& out, const EvalReport& report, const LabelSpace& labels) {
  std::size_t width = 8;
  for (const auto& r : labels.relations()) width = std::max(width, r.size());
  out << std::fixed << std::setprecision(4);
  out << "instances " << report.count << '\n';
  out << "accuracy " << report.accuracy << '\n';
  out << "macro_f1 " << report.macro_f1 << '\n';
  out << std::left << std::setw(static_cast<int>(width)) << "relation" << "  precision  recall     f1\n";
  for (int r = 0; r < labels.num_relations(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    out << std::setw(static_cast<int>(width)) << labels.relation(r) << std::right << "  " << std::setw(9)
        << report.precision[i] << "  " << std::setw(6) << report.recall[i] << "  " << std::setw(6)
        << report.f1[i] << std::left << '\n';
  }
  out << "confusion (rows gold, columns predicted)\n";
  for (int r = 0; r < labels.num_relations(); ++r) {
    out << std::setw(static_cast<int>(width)) << labels.relation(r) << std::right;
    for (long v : report.confusion[static_cast<std::size_t>(r)]) out << ' ' << std::setw(6) << v;
    out << std::left << '\n';
  }
  out << std::right << std::defaultfloat;
}

json inspect_records(const Checkpoint& ck, const std::vector<Instance>& instances, int k, std::ostream& warn) {
  const Model& model = *ck.model;
  const MemoryStore* mem = model.memory();
  if (!mem) throw UsageError("checkpoint holds no memory");
  if (k < 0) throw UsageError("k must be non-negative");
  if (k > mem->size()) {
    warn << "warning: k=" << k << " exceeds the memory size " << mem->size() << "; using " << mem->size()
         << '\n';
    k = static_cast<int>(mem->size());
  }
  Model& mutable_model = *ck.model;
  const auto enc = mutable_model.encode_all(instances);
  const auto details = predict_detailed(model, enc, k, model.config().batch_size);
  const LabelSpace& labels = model.labels();
  json out = json::array();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& d = details[i];
    json j;
    j["id"] = instances[i].id;
    j["arg1"] = join_tokens(instances[i].arg1);
    j["arg2"] = join_tokens(instances[i].arg2);
    json gold = json::array();
    for (int g : instances[i].relations) gold.push_back(labels.relation(g));
    j["gold"] = std::move(gold);
    j["predicted"] = labels.relation(d.predicted);
    json dist = json::object();
    for (int r = 0; r < labels.num_relations(); ++r) dist[labels.relation(r)] = d.distribution[static_cast<std::size_t>(r)];
    j["distribution"] = std::move(dist);
    json ret = json::array();
    for (const auto& s : d.retrieved) {
      json e;
      e["slot"] = s.slot;
      e["weight"] = s.weight;
      if (static_cast<std::size_t>(s.slot) < ck.slots.size()) {
        const SlotRecord& rec = ck.slots[static_cast<std::size_t>(s.slot)];
        e["id"] = rec.id;
        e["relation"] = labels.relation(rec.relation);
        e["arg1"] = rec.arg1;
        e["arg2"] = rec.arg2;
      }
      ret.push_back(std::move(e));
    }
    j["retrieved"] = std::move(ret);
    out.push_back(std::move(j));
  }
  return out;
}

const std::vector<GridCell>& grid_cells() {
  static const std::vector<GridCell> cells{
      {"baseline", ResponseKind::kBaseline, AttentionKind::kDot},
      {"D+K", ResponseKind::kKey, AttentionKind::kDot},
      {"D+V", ResponseKind::kValue, AttentionKind::kDot},
      {"B+K", ResponseKind::kKey, AttentionKind::kBiaffine},
      {"B+V", ResponseKind::kValue, AttentionKind::kBiaffine},
  };
  return cells;
}

std::vector<GridCell> parse_grid_spec(const std::string& spec) {
  if (spec.empty() || spec == "all") return grid_cells();
  std::vector<GridCell> out;
  std::stringstream in(spec);
  std::string name;
  while (std::getline(in, name, ',')) {
    auto it = std::find_if(grid_cells().begin(), grid_cells().end(),
                           [&](const GridCell& c) { return c.name == name; });
    if (it == grid_cells().end()) {
      throw UsageError("unknown grid cell '" + name + "' (expected baseline, D+K, D+V, B+K, B+V)");
    }
    out.push_back(*it);
  }
  return out;
}

std::vector<GridRow> run_grid(const TrainConfig& config, const Dataset& data, const std::vector<GridCell>& cells,
                              const std::string& report_prefix, std::ostream& log) {
  std::vector<GridRow> rows;
  for (const auto& cell : cells) {
    TrainConfig c = config;
    c.response = cell.response;
    c.attention = cell.attention;
    if (cell.response == ResponseKind::kKey) c.keys = KeyMode::kDynamic;
    log << "grid cell " << cell.name << '\n';
    GridRow row{cell, train_run(c, data)};
    if (!report_prefix.empty()) {
      write_report(report_prefix + "." + cell.name + ".jsonl", report_records(row.run, data.labels));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json grid_row_json(const GridRow& row) {
  json j;
  j["row"] = row.cell.name;
  j["attention"] = row.cell.response == ResponseKind::kBaseline ? "none" : to_string(row.cell.attention);
  j["response"] = to_string(row.cell.response);
  j["lambda"] = row.cell.response == ResponseKind::kBaseline ? 0.0 : row.run.model->config().lambda;
  j["best_epoch"] = row.run.result.best_epoch;
  if (row.run.dev_eval) j["dev_accuracy"] = row.run.dev_eval->accuracy;
  if (row.run.test_eval) {
    j["test_accuracy"] = row.run.test_eval->accuracy;
    j["test_macro_f1"] = row.run.test_eval->macro_f1;
  }
  return j;
}

TrainConfig synthetic_train_config() {
  TrainConfig c;
  c.max_length = 12;
  c.embedding.word_dim = 50;
  c.embedding.subword_dim = 50;
  c.layers = 2;
  c.hidden = 64;
  c.epochs = 15;
  return c;
}

void write_synthetic(const std::string& dir, const SyntheticConfig& config) {
  const SyntheticCorpus corpus = generate_synthetic(config);
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_instances((base / "train.jsonl").string(), corpus.train, corpus.labels);
  write_instances((base / "dev.jsonl").string(), corpus.dev, corpus.labels);
  write_instances((base / "test.jsonl").string(), corpus.test, corpus.labels);
  RunConfig rc;
  rc.train = synthetic_train_config();
  rc.train.seed = config.seed;
  rc.train_path = "train.jsonl";
  rc.dev_path = "dev.jsonl";
  rc.test_path = "test.jsonl";
  std::ofstream out(base / "synthetic.conf");
  out << "# Synthetic planted-marker corpus\n" << render_settings(rc, true);
  if (!out) throw DataError("cannot write " + (base / "synthetic.conf").string());
}

}  // namespace memrel
