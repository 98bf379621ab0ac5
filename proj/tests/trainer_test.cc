#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "doctest.h"
#include "memrel/checkpoint.h"
#include "memrel/errors.h"
#include "memrel/pipeline.h"
#include "memrel/synthetic.h"
#include "memrel/trainer.h"

using namespace memrel;
using ad::Index;
using ad::Matrix;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.max_length = 12;
  c.embedding.word_dim = 8;
  c.embedding.subword_dim = 8;
  c.embedding.subword_embed_dim = 4;
  c.embedding.subword_kernels = {1, 2};
  c.bpe_merges = 50;
  c.layers = 1;
  c.hidden = 8;
  c.batch_size = 8;
  c.epochs = 2;
  c.learning_rate = 0.01;
  return c;
}

SyntheticCorpus tiny_corpus(int train = 40) {
  SyntheticConfig sc;
  sc.num_train = train;
  sc.num_dev = 20;
  sc.num_test = 20;
  sc.filler_vocab = 60;
  return generate_synthetic(sc);
}

Dataset dataset_of(const SyntheticCorpus& s) {
  Dataset d;
  d.labels = s.labels;
  d.train = s.train;
  d.dev = s.dev;
  d.test = s.test;
  return d;
}

std::unique_ptr<Model> make_model(const TrainConfig& c, const SyntheticCorpus& s) {
  return std::make_unique<Model>(c, s.labels, build_vocabulary(s.train), build_bpe(s.train, c.bpe_merges),
                                 nullptr, nullptr);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("one epoch writes every key exactly once and hashes match the emitted r") {
  const auto s = tiny_corpus(10);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  auto model = make_model(c, s);
  std::map<Index, std::uint64_t> seen;
  TrainHooks hooks;
  hooks.on_key_write = [&](int, Index slot, std::span<const double> key) {
    CHECK(seen.count(slot) == 0);
    seen[slot] = MemoryStore::hash_row(key);
  };
  const auto result = train_model(*model, s.train, nullptr, hooks);
  const MemoryStore& mem = *model->memory();
  REQUIRE(mem.size() == 10);
  CHECK(result.epochs[0].keys_written == 10);
  for (Index i = 0; i < mem.size(); ++i) {
    CHECK(mem.writes_this_epoch(i) == 1);
    CHECK(seen.at(i) == mem.key_hash(i));
  }
  CHECK(mem.verify_integrity());
}

TEST_CASE("coefficients follow the last coefficient pass") {
  const auto s = tiny_corpus();
  auto model = make_model(tiny_config(), s);
  const auto result = train_model(*model, s.train, nullptr);
  const MemoryStore& mem = *model->memory();
  const auto pred = argmax_rows(predict_probabilities(*model, result.encoded, 8));
  std::vector<double> sums(4, 0.0);
  for (std::size_t i = 0; i < result.encoded.size(); ++i) {
    const Index slot = result.encoded[i].slot;
    const double c = mem.coefficients()(0, slot);
    if (pred[i] != result.encoded[i].relation) {
      CHECK(c == 0.0);
    } else {
      sums[static_cast<std::size_t>(mem.relation(slot))] += c;
    }
  }
  for (double v : sums) CHECK((v == 0.0 || std::abs(v - 1.0) < 1e-12));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto s = tiny_corpus();
  auto a = make_model(tiny_config(), s);
  auto b = make_model(tiny_config(), s);
  const auto ra = train_model(*a, s.train, &s.dev);
  const auto rb = train_model(*b, s.train, &s.dev);
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    CHECK(ra.epochs[e].train_loss == rb.epochs[e].train_loss);
    CHECK(ra.epochs[e].dev->accuracy == rb.epochs[e].dev->accuracy);
  }
  for (std::size_t i = 0; i < a->params().size(); ++i) {
    CHECK(a->params().at(i).node->value() == b->params().at(i).node->value());
  }
}

TEST_CASE("lambda zero trains exactly like the baseline") {
  const auto s = tiny_corpus();
  TrainConfig base = tiny_config();
  base.response = ResponseKind::kBaseline;
  TrainConfig mixed = tiny_config();
  mixed.lambda = 0.0;
  auto a = make_model(base, s);
  auto b = make_model(mixed, s);
  const auto ra = train_model(*a, s.train, &s.dev);
  const auto rb = train_model(*b, s.train, &s.dev);
  CHECK(a->memory() == nullptr);
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) CHECK(ra.epochs[e].train_loss == rb.epochs[e].train_loss);
  for (const auto& entry : a->params()) CHECK(entry.node->value() == b->params().get(entry.name)->value());
  CHECK(predict_probabilities(*a, rb.encoded, 8) == predict_probabilities(*b, rb.encoded, 8));
}

TEST_CASE("a non-finite loss aborts with its coordinates") {
  const auto s = tiny_corpus();
  auto model = make_model(tiny_config(), s);
  model->params().get("classifier/relation/out/b")->mutable_value()(0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  try {
    train_model(*model, s.train, nullptr);
    FAIL("no error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1 batch 1") != std::string::npos);
  }
}

TEST_CASE("memory_fraction subsamples the stored instances") {
  const auto s = tiny_corpus();
  TrainConfig c = tiny_config();
  c.memory_fraction = 0.5;
  c.epochs = 1;
  auto model = make_model(c, s);
  const auto result = train_model(*model, s.train, nullptr);
  CHECK(model->memory()->size() == 20);
  CHECK(result.epochs[0].keys_written == 20);
}

TEST_CASE("fixed keys are never rewritten") {
  const auto s = tiny_corpus();
  TrainConfig c = tiny_config();
  c.keys = KeyMode::kFixed;
  auto model = make_model(c, s);
  const auto result = train_model(*model, s.train, nullptr);
  CHECK(model->memory()->keys_frozen());
  CHECK(result.epochs[0].keys_written == 0);
  CHECK(model->memory()->keys().cols() == 2 * c.embedding.word_dim);
}

TEST_CASE("prediction details") {
  const auto s = tiny_corpus();
  auto model = make_model(tiny_config(), s);
  train_model(*model, s.train, nullptr);
  const auto enc = model->encode_all(s.test);
  const auto none = predict_detailed(*model, enc, 0, 8);
  for (const auto& d : none) CHECK(d.retrieved.empty());
  const auto many = predict_detailed(*model, enc, 1000, 8);
  for (const auto& d : many) {
    CHECK(static_cast<Index>(d.retrieved.size()) == model->memory()->size());
    for (std::size_t j = 0; j < d.retrieved.size(); ++j) {
      CHECK(d.retrieved[j].weight >= 0.0);
      CHECK(d.retrieved[j].weight <= 1.0);
      if (j > 0) CHECK(d.retrieved[j].weight <= d.retrieved[j - 1].weight);
    }
  }
}

TEST_CASE("checkpoints reproduce predictions exactly") {
  const auto s = tiny_corpus();
  const auto dir = temp_dir("memrel_checkpoint_test");
  for (auto attention : {AttentionKind::kDot, AttentionKind::kBiaffine}) {
    TrainConfig c = tiny_config();
    c.attention = attention;
    const TrainRun run = train_run(c, dataset_of(s));
    const std::string path = (dir / "model.bin").string();
    save_checkpoint(path, *run.model, run.slots, run.result.best_epoch);
    const Checkpoint ck = load_checkpoint(path, nullptr);
    CHECK(ck.best_epoch == run.result.best_epoch);
    CHECK(ck.slots.size() == 40);
    CHECK(ck.model->labels() == s.labels);
    const auto enc_a = run.model->encode_all(s.dev);
    const auto enc_b = ck.model->encode_all(s.dev);
    CHECK(predict_probabilities(*run.model, enc_a, 8) == predict_probabilities(*ck.model, enc_b, 8));
    CHECK(evaluate(*ck.model, s.dev).accuracy == run.dev_eval->accuracy);
  }
  const std::string path = (dir / "model.bin").string();
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(dir / "short.bin", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "short.bin").string(), nullptr), DataError);
  {
    std::ofstream out(dir / "junk.bin", std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "junk.bin").string(), nullptr), DataError);
  CHECK_THROWS_AS(load_checkpoint((dir / "absent.bin").string(), nullptr), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("instance files for a trained model") {
  const auto s = tiny_corpus();
  const auto dir = temp_dir("memrel_pipeline_test");
  const TrainRun run = train_run(tiny_config(), dataset_of(s));
  {
    std::ofstream out(dir / "foreign.jsonl");
    out << R"({"arg1": "a", "arg2": "b", "relations": ["Comparison"]})" "\n"
        << R"({"arg1": "a", "arg2": "b", "connective": "whereas", "relations": ["Bogus"]})" "\n";
  }
  try {
    load_for_model((dir / "foreign.jsonl").string(), *run.model);
    FAIL("foreign label accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("Bogus") != std::string::npos);
  }
  { std::ofstream out(dir / "empty.jsonl"); }
  CHECK_THROWS_AS(load_for_model((dir / "empty.jsonl").string(), *run.model), DataError);
  {
    std::ofstream out(dir / "ok.jsonl");
    out << R"({"arg1": "a", "arg2": "b zzbax", "connective": "whereas", "relations": ["Temporal"]})" "\n";
  }
  const auto ok = load_for_model((dir / "ok.jsonl").string(), *run.model);
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].relations[0] == *s.labels.find_relation("Temporal"));
  CHECK_FALSE(ok[0].connective.has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("inspection clamps k with a warning") {
  const auto s = tiny_corpus();
  const auto dir = temp_dir("memrel_inspect_test");
  const TrainRun run = train_run(tiny_config(), dataset_of(s));
  const std::string path = (dir / "model.bin").string();
  save_checkpoint(path, *run.model, run.slots, run.result.best_epoch);
  const Checkpoint ck = load_checkpoint(path, nullptr);
  std::ostringstream warn;
  const auto rows = inspect_records(ck, s.test, 500, warn);
  CHECK(warn.str().find("warning") != std::string::npos);
  CHECK(rows.size() == s.test.size());
  CHECK(rows[0]["retrieved"].size() == 40);
  std::ostringstream quiet;
  const auto one = inspect_records(ck, s.test, 1, quiet);
  CHECK(quiet.str().empty());
  CHECK(one[0]["retrieved"].size() == 1);
  CHECK(one[0]["retrieved"][0].contains("arg2"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid emits five rows and its baseline equals a lambda-zero run") {
  const auto s = tiny_corpus();
  const Dataset data = dataset_of(s);
  std::ostringstream log;
  const auto rows = run_grid(tiny_config(), data, parse_grid_spec("all"), "", log);
  REQUIRE(rows.size() == 5);
  CHECK(grid_row_json(rows[0])["row"] == "baseline");
  CHECK(grid_row_json(rows[4])["row"] == "B+V");
  TrainConfig zero = tiny_config();
  zero.lambda = 0.0;
  const TrainRun z = train_run(zero, data);
  CHECK(z.test_eval->accuracy == rows[0].run.test_eval->accuracy);
  CHECK(z.dev_eval->accuracy == rows[0].run.dev_eval->accuracy);
  CHECK_THROWS_AS(parse_grid_spec("D+X"), UsageError);
  CHECK(parse_grid_spec("D+K,B+V").size() == 2);
}

TEST_CASE("reports hold one record per epoch and a summary") {
  const auto s = tiny_corpus();
  const TrainRun run = train_run(tiny_config(), dataset_of(s));
  const auto records = report_records(run, s.labels);
  REQUIRE(records.size() == run.result.epochs.size() + 1);
  CHECK(records[0]["epoch"] == 1);
  CHECK(records.back()["summary"] == true);
  CHECK(records.back()["best_epoch"] == run.result.best_epoch);
  const int best = run.result.best_epoch;
  CHECK(records[static_cast<std::size_t>(best - 1)]["dev_accuracy"].get<double>() == run.dev_eval->accuracy);
}

TEST_CASE("missing train path is refused before any compute") {
  RunConfig rc;
  CHECK_THROWS_AS(load_dataset(rc), UsageError);
  rc.train_path = "/nonexistent/train.jsonl";
  CHECK_THROWS_AS(load_dataset(rc), UsageError);
}

TEST_CASE("synthetic files round trip with a matching configuration") {
  const auto dir = temp_dir("memrel_synth_test");
  SyntheticConfig sc;
  sc.num_train = 30;
  sc.num_dev = 10;
  sc.num_test = 10;
  write_synthetic(dir.string(), sc);
  const RunConfig rc = load_config((dir / "synthetic.conf").string());
  const Dataset d = load_dataset(rc);
  CHECK(d.train.size() == 30);
  CHECK(d.dev.size() == 10);
  CHECK(d.labels.num_relations() == 4);
  CHECK(rc.train.max_length == 12);
  std::filesystem::remove_all(dir);
}
