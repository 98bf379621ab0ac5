// memrel command-line tool: synth-data, train, eval, predict,
// inspect-memory and grid.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "memrel/errors.h"
#include "memrel/pipeline.h"

using namespace memrel;
using json = nlohmann::ordered_json;

namespace {

// Config file plus one --<key> flag per configuration key; flags win.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "key=value configuration file");
    for (const auto& key : config_keys()) {
      cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { overrides[key] = v; },
          "override configuration key " + key);
    }
  }

  RunConfig resolve() const {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_settings(rc, overrides);
    return rc;
  }
};

std::unique_ptr<ContextualStore> load_contextual(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_unique<ContextualStore>(ContextualStore::load(path));
}

void write_json_lines(const std::string& path, const json& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : rows) out << r.dump() << '\n';
}

void print_listing(std::ostream& out, const json& rows) {
  for (const auto& r : rows) {
    out << "query " << r["id"].get<std::string>() << '\n';
    out << "  arg1: " << r["arg1"].get<std::string>() << '\n';
    out << "  arg2: " << r["arg2"].get<std::string>() << '\n';
    out << "  gold:";
    for (const auto& g : r["gold"]) out << ' ' << g.get<std::string>();
    out << "\n  predicted: " << r["predicted"].get<std::string>() << '\n';
    int rank = 1;
    for (const auto& s : r["retrieved"]) {
      out << "  top " << rank++ << "  weight " << std::fixed << std::setprecision(6) << s["weight"].get<double>()
          << std::defaultfloat << "  slot " << s["slot"].get<long>();
      if (s.contains("id")) {
        out << "  " << s["id"].get<std::string>() << " [" << s["relation"].get<std::string>() << "]\n";
        out << "      arg1: " << s["arg1"].get<std::string>() << '\n';
        out << "      arg2: " << s["arg2"].get<std::string>() << '\n';
      } else {
        out << '\n';
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit discourse relation classification with an instance memory"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "write a synthetic planted-marker corpus");
  SyntheticConfig sc;
  std::string synth_dir;
  synth->add_option("-o,--out", synth_dir, "output directory")->required();
  synth->add_option("--train", sc.num_train, "training instances")->check(CLI::NonNegativeNumber);
  synth->add_option("--dev", sc.num_dev, "dev instances")->check(CLI::NonNegativeNumber);
  synth->add_option("--test", sc.num_test, "test instances")->check(CLI::NonNegativeNumber);
  synth->add_option("--relations", sc.num_relations, "relation count")->check(CLI::Range(2, 64));
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--multi-label", sc.multi_label_fraction, "fraction with a second relation")
      ->check(CLI::Range(0.0, 1.0));

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint and report");
  ConfigOptions train_opts;
  train_opts.attach(train);

  std::string checkpoint;
  std::string data_path;
  std::string contextual_path;
  std::string output;
  int top_k = 1;

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on an instance file");
  for (auto* cmd : {eval}) {
    cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    cmd->add_option("--data", data_path, "instance file")->required();
    cmd->add_option("--contextual", contextual_path, "contextual vectors file");
    cmd->add_option("-o,--output", output, "write the report as JSON");
  }
  auto* predict = app.add_subcommand("predict", "relation distributions and top-k retrieved slots (JSONL)");
  auto* inspect = app.add_subcommand("inspect-memory", "per-instance retrieval listing");
  for (auto* cmd : {predict, inspect}) {
    cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    cmd->add_option("--data", data_path, "instance file")->required();
    cmd->add_option("--contextual", contextual_path, "contextual vectors file");
    cmd->add_option("-k,--top-k", top_k, "retrieved slots per query");
    cmd->add_option("-o,--output", output, "output file (default stdout)");
  }

  auto* grid = app.add_subcommand("grid", "attention x response grid");
  ConfigOptions grid_opts;
  grid_opts.attach(grid);
  std::string cells = "all";
  std::string report_prefix;
  grid->add_option("--cells", cells, "comma-separated rows: baseline,D+K,D+V,B+K,B+V");
  grid->add_option("-o,--output", output, "result table (JSONL, default stdout)");
  grid->add_option("--report-prefix", report_prefix, "per-cell reports go to <prefix>.<row>.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      write_synthetic(synth_dir, sc);
      std::cout << "wrote " << synth_dir << "/{train,dev,test}.jsonl and synthetic.conf\n";
    } else if (train->parsed()) {
      const RunConfig rc = train_opts.resolve();
      const TrainRun run = run_train(rc, std::cerr);
      std::cout << std::fixed << std::setprecision(4);
      if (run.dev_eval) std::cout << "dev accuracy " << run.dev_eval->accuracy << '\n';
      if (run.test_eval) std::cout << "test accuracy " << run.test_eval->accuracy << '\n';
    } else if (eval->parsed()) {
      const auto ctx = load_contextual(contextual_path);
      const Checkpoint ck = load_checkpoint(checkpoint, ctx.get());
      const auto instances = load_for_model(data_path, *ck.model);
      const EvalReport rep = evaluate(*ck.model, instances);
      print_report(std::cout, rep, ck.model->labels());
      if (!output.empty()) {
        std::ofstream out(output, std::ios::binary);
        if (!out) throw DataError("cannot write " + output);
        out << report_json(rep, ck.model->labels()).dump() << '\n';
      }
    } else if (predict->parsed() || inspect->parsed()) {
      const auto ctx = load_contextual(contextual_path);
      const Checkpoint ck = load_checkpoint(checkpoint, ctx.get());
      const auto instances = load_for_model(data_path, *ck.model);
      if (inspect->parsed() && !ck.model->memory()) throw UsageError("checkpoint holds no memory");
      const int k = ck.model->memory() ? top_k : 0;
      const json rows = inspect_records(ck, instances, k, std::cerr);
      if (predict->parsed()) {
        if (output.empty()) {
          for (const auto& r : rows) std::cout << r.dump() << '\n';
        } else {
          write_json_lines(output, rows);
        }
      } else if (output.empty()) {
        print_listing(std::cout, rows);
      } else {
        std::ofstream out(output);
        if (!out) throw DataError("cannot write " + output);
        print_listing(out, rows);
      }
    } else if (grid->parsed()) {
      const RunConfig rc = grid_opts.resolve();
      const auto chosen = parse_grid_spec(cells);
      const Dataset data = load_dataset(rc);
      const auto rows = run_grid(rc.train, data, chosen, report_prefix, std::cerr);
      json table = json::array();
      for (const auto& r : rows) table.push_back(grid_row_json(r));
      if (output.empty()) {
        for (const auto& r : table) std::cout << r.dump() << '\n';
      } else {
        write_json_lines(output, table);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
