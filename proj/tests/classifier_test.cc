#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "memrel/classifier.h"
#include "memrel/config.h"
#include "memrel/errors.h"
#include "memrel/gradcheck.h"
#include "memrel/metrics.h"
#include "memrel/optimizer.h"

using namespace memrel;
using namespace memrel::ad;

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols) { return uniform_matrix(rows, cols, 1.0, rng); }

void zero_all(ParamRegistry& params) {
  for (const auto& e : params) e.node->mutable_value().setZero();
}

HeadsConfig heads_config(ResponseKind response, double lambda) {
  HeadsConfig hc;
  hc.rep_dim = 6;
  hc.num_relations = 4;
  hc.num_connectives = 2;
  hc.hidden = 5;
  hc.depth = 2;
  hc.response = response;
  hc.lambda = lambda;
  return hc;
}

Var response_for(Graph& g, ResponseKind mode, Rng& rng, Index rows) {
  if (mode == ResponseKind::kBaseline) return nullptr;
  return g.constant(random_matrix(rng, rows, mode == ResponseKind::kValue ? 4 : 6));
}

}  // namespace

TEST_CASE("zero-weight heads give uniform distributions") {
  ParamRegistry params;
  ClassifierHeads heads(params, 1, heads_config(ResponseKind::kValue, 0.3));
  zero_all(params);
  Rng rng(2);
  Graph g;
  Var r = g.constant(random_matrix(rng, 3, 6));
  const Matrix pc = ops::softmax_rows(g, heads.connective_logits(g, r, 0.0, nullptr))->value();
  CHECK(pc.isConstant(0.5, 0));
  const Matrix pr =
      ops::softmax_rows(g, heads.relation_logits(g, r, g.constant(Matrix::Zero(3, 4)), 0.0, nullptr, nullptr))
          ->value();
  CHECK(pr.isConstant(0.25, 0));
}

TEST_CASE("lambda one with a zero memory head and zero response is uniform") {
  ParamRegistry params;
  ClassifierHeads heads(params, 1, heads_config(ResponseKind::kValue, 1.0));
  for (const auto& e : params) {
    if (e.name.rfind("classifier/memory", 0) == 0) e.node->mutable_value().setZero();
  }
  Rng rng(3);
  Graph g;
  Var r = g.constant(random_matrix(rng, 2, 6));
  const Matrix p =
      ops::softmax_rows(g, heads.relation_logits(g, r, g.constant(Matrix::Zero(2, 4)), 0.0, nullptr, nullptr))
          ->value();
  CHECK(p.isConstant(0.25, 0));
}

TEST_CASE("relation output is a distribution in every mode") {
  for (auto mode : {ResponseKind::kBaseline, ResponseKind::kValue, ResponseKind::kKey}) {
    ParamRegistry params;
    ClassifierHeads heads(params, 4, heads_config(mode, 0.3));
    Rng rng(5);
    Graph g;
    Var r = g.constant(random_matrix(rng, 7, 6));
    const Matrix p =
        ops::softmax_rows(g, heads.relation_logits(g, r, response_for(g, mode, rng, 7), 0.0, nullptr, nullptr))
            ->value();
    CHECK(p.minCoeff() >= 0.0);
    for (Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("lambda zero is bit-identical to the baseline head") {
  for (auto mode : {ResponseKind::kValue, ResponseKind::kKey}) {
    ParamRegistry mixed_params;
    ClassifierHeads mixed(mixed_params, 9, heads_config(mode, 0.0));
    ParamRegistry base_params;
    ClassifierHeads base(base_params, 9, heads_config(ResponseKind::kBaseline, 0.0));
    Rng rng(6);
    Graph g;
    Var r = g.constant(random_matrix(rng, 5, 6));
    const Matrix a = mixed.relation_logits(g, r, response_for(g, mode, rng, 5), 0.0, nullptr, nullptr)->value();
    const Matrix b = base.relation_logits(g, r, nullptr, 0.0, nullptr, nullptr)->value();
    CHECK(a == b);
  }
}

TEST_CASE("response width must match the mode") {
  ParamRegistry params;
  ClassifierHeads value_heads(params, 1, heads_config(ResponseKind::kValue, 0.3));
  Rng rng(7);
  Graph g;
  Var r = g.constant(random_matrix(rng, 2, 6));
  CHECK_THROWS(value_heads.relation_logits(g, r, g.constant(Matrix::Zero(2, 6)), 0.0, nullptr, nullptr));
  CHECK_THROWS(value_heads.relation_logits(g, r, nullptr, 0.0, nullptr, nullptr));
  ParamRegistry p2;
  ClassifierHeads base(p2, 1, heads_config(ResponseKind::kBaseline, 0.3));
  CHECK_THROWS(base.relation_logits(g, r, g.constant(Matrix::Zero(2, 4)), 0.0, nullptr, nullptr));
  CHECK(base.memory_mlp() == nullptr);
  CHECK(value_heads.memory_mlp() != nullptr);
  CHECK(value_heads.memory_mlp()->in_dim() == 4);
  CHECK(value_heads.memory_mlp()->out_dim() == 4);
}

TEST_CASE("joint loss examples") {
  Graph g;
  Matrix rel(1, 2);
  rel << 0.0, 0.0;
  Matrix conn(1, 2);
  conn << 0.0, -1000.0;
  const std::vector<int> r0{0};
  const std::vector<int> c0{0};
  Var loss = joint_loss(g, g.constant(rel), r0, g.constant(conn), c0);
  CHECK(loss->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix sure(1, 2);
  sure << 0.0, -1000.0;
  CHECK(joint_loss(g, g.constant(sure), r0, g.constant(conn), c0)->scalar() == 0.0);

  // A missing connective contributes nothing.
  const std::vector<int> none{-1};
  CHECK(joint_loss(g, g.constant(rel), r0, g.constant(conn), none)->scalar() ==
        doctest::Approx(std::log(2.0)));
  CHECK(joint_loss(g, g.constant(rel), r0, nullptr, none)->scalar() == doctest::Approx(std::log(2.0)));

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const std::vector<int> rr{static_cast<int>(uniform_index(rng, 2))};
    CHECK(joint_loss(g, g.constant(random_matrix(rng, 1, 2)), rr, nullptr, none)->scalar() >= 0.0);
  }
}

TEST_CASE("argmax is invariant to a constant logit shift") {
  Rng rng(10);
  Graph g;
  const Matrix logits = random_matrix(rng, 6, 5);
  const Matrix shifted = (logits.array() + 3.7).matrix();
  const Matrix a = ops::softmax_rows(g, g.constant(logits))->value();
  const Matrix b = ops::softmax_rows(g, g.constant(shifted))->value();
  for (Index i = 0; i < a.rows(); ++i) {
    Index ia = 0;
    Index ib = 0;
    a.row(i).maxCoeff(&ia);
    b.row(i).maxCoeff(&ib);
    CHECK(ia == ib);
  }
}

TEST_CASE("joint loss gradients match finite differences") {
  for (auto mode : {ResponseKind::kValue, ResponseKind::kKey}) {
    ParamRegistry params;
    ClassifierHeads heads(params, 11, heads_config(mode, 0.3));
    Rng rng(12);
    const Matrix r = random_matrix(rng, 4, 6);
    const Matrix v = random_matrix(rng, 4, mode == ResponseKind::kValue ? 4 : 6);
    const std::vector<int> rel{0, 3, 1, 2};
    const std::vector<int> conn{1, -1, 0, 1};
    auto fn = [&](Graph& g) {
      Var logits = heads.relation_logits(g, g.constant(r), g.constant(v), 0.0, nullptr, nullptr);
      return joint_loss(g, logits, rel, heads.connective_logits(g, g.constant(r), 0.0, nullptr), conn);
    };
    const auto result = check_gradients(fn, params, 1e-6);
    INFO(result.worst_param);
    CHECK(result.max_relative_error < 1e-4);
  }
}

TEST_CASE("optimizer updates") {
  ParamRegistry params;
  Var a = params.add("a", Matrix::Constant(1, 2, 1.0));
  Var b = params.add("b", Matrix::Constant(1, 1, 5.0));
  Graph g;
  Matrix w(1, 2);
  w << 2.0, -0.5;
  g.backward(ops::sum(g, ops::mul(g, a, g.constant(w))));
  Optimizer adam(params, {OptimizerKind::kAdam, 0.1});
  adam.step();
  // First bias-corrected Adam step moves by lr in the direction of -sign(g).
  CHECK(a->value()(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(a->value()(0, 1) == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(b->value()(0, 0) == 5.0);
  CHECK_FALSE(a->has_grad());

  ParamRegistry p2;
  Var c = p2.add("c", Matrix::Constant(1, 2, 1.0));
  Graph g2;
  g2.backward(ops::sum(g2, ops::mul(g2, c, g2.constant(w))));
  Optimizer sgd(p2, {OptimizerKind::kSgd, 0.1});
  sgd.step();
  CHECK(c->value()(0, 0) == doctest::Approx(0.8));
  CHECK(c->value()(0, 1) == doctest::Approx(1.05));
}

TEST_CASE("metrics use any-gold matching") {
  const std::vector<int> pred{1, 1};
  const std::vector<std::vector<int>> gold{{0, 1}, {0}};
  const auto rep = evaluate_predictions(pred, gold, 2);
  CHECK(rep.correct == 1);
  CHECK(rep.accuracy == 0.5);
  CHECK(rep.confusion[1][1] == 1);
  CHECK(rep.confusion[0][1] == 1);

  const std::vector<int> perfect{0, 1, 2};
  const auto p = evaluate_predictions(perfect, {{0}, {1}, {2}}, 3);
  CHECK(p.accuracy == 1.0);
  CHECK(p.macro_f1 == 1.0);
  CHECK_THROWS(evaluate_predictions(perfect, {{0}, {1}}, 3));
}

TEST_CASE("metrics agree with recomputation from stored predictions") {
  Rng rng(13);
  const int n_r = 5;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> pred;
    std::vector<std::vector<int>> gold;
    for (int i = 0; i < 300; ++i) {
      pred.push_back(static_cast<int>(uniform_index(rng, n_r)));
      gold.push_back({static_cast<int>(uniform_index(rng, n_r))});
    }
    const auto rep = evaluate_predictions(pred, gold, n_r);
    long correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gold[i][0] ? 1 : 0;
    CHECK(rep.accuracy == static_cast<double>(correct) / 300.0);

    double sum = 0.0;
    int active = 0;
    for (int j = 0; j < n_r; ++j) {
      long row = 0;
      long col = 0;
      for (int k = 0; k < n_r; ++k) {
        row += rep.confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
        col += rep.confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      }
      const double tp = static_cast<double>(rep.confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(j)]);
      if (row + col == 0) continue;
      ++active;
      const double prec = col ? tp / static_cast<double>(col) : 0.0;
      const double rec = row ? tp / static_cast<double>(row) : 0.0;
      sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    }
    CHECK(rep.macro_f1 == doctest::Approx(sum / active).epsilon(1e-12));
  }
}

TEST_CASE("config parsing, overrides and validation") {
  std::istringstream in("# comment\n\nlambda = 0.5\nattention=biaffine\nsubword_kernels=1,3\n");
  RunConfig rc;
  apply_settings(rc, parse_settings(in, "x.conf"));
  CHECK(rc.train.lambda == 0.5);
  CHECK(rc.train.attention == AttentionKind::kBiaffine);
  CHECK(rc.train.embedding.subword_kernels == std::vector<int>{1, 3});

  std::istringstream unknown("lamda=0.5\n");
  try {
    apply_settings(rc, parse_settings(unknown, "x.conf"));
    FAIL("unknown key accepted");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("lamda") != std::string::npos);
  }
  std::istringstream bad("\nlambda\n");
  try {
    parse_settings(bad, "x.conf");
    FAIL("malformed line accepted");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("x.conf:2") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(rc, "epochs", "many"), UsageError);

  TrainConfig t;
  t.lambda = 1.5;
  CHECK_THROWS_AS(t.validate(), UsageError);
  t.lambda = 0.3;
  t.keys = KeyMode::kFixed;
  t.response = ResponseKind::kKey;
  CHECK_THROWS_AS(t.validate(), UsageError);
  CHECK(full_scale_config().hidden == 2048);
  CHECK(full_scale_config().learning_rate == 0.0012);
}

TEST_CASE("rendered settings parse back to the same configuration") {
  RunConfig rc;
  rc.train.lambda = 0.1 + 0.2;
  rc.train.memory_dropout = 1.0 / 3.0;
  rc.train.embedding.word_trainable = false;
  rc.train_path = "a.jsonl";
  std::istringstream in(render_settings(rc, true));
  RunConfig back;
  apply_settings(back, parse_settings(in, "rendered"));
  CHECK(render_settings(back, true) == render_settings(rc, true));
  CHECK(back.train.lambda == rc.train.lambda);
  CHECK(back.train.embedding.word_trainable == std::optional<bool>(false));
}

TEST_CASE("config file paths resolve against the file's directory") {
  const auto dir = std::filesystem::temp_directory_path() / "memrel_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run.conf");
    out << "train=train.jsonl\ndev=/abs/dev.jsonl\n";
  }
  const RunConfig rc = load_config((dir / "run.conf").string());
  CHECK(rc.train_path == (dir / "train.jsonl").string());
  CHECK(rc.dev_path == "/abs/dev.jsonl");
  CHECK_THROWS_AS(load_config((dir / "missing.conf").string()), UsageError);
  std::filesystem::remove_all(dir);
}
