#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "memrel/errors.h"
#include "memrel/gradcheck.h"
#include "memrel/memory.h"

using namespace memrel;
using namespace memrel::ad;

namespace {

std::vector<std::string> ids(int m) {
  std::vector<std::string> out;
  for (int i = 0; i < m; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1, 1);
  return m;
}

}  // namespace

TEST_CASE("init: one-hot values, zero coefficients, slot map") {
  Rng rng(1);
  MemoryStore mem(ids(5), {0, 2, 1, 3, 2}, 6, 4, rng);
  CHECK(mem.size() == 5);
  CHECK(mem.keys().rows() == 5);
  CHECK(mem.keys().cols() == 6);
  CHECK(mem.values().cols() == 4);
  Matrix row(1, 4);
  row << 0, 0, 1, 0;
  CHECK(mem.values().row(1) == row);
  for (Index i = 0; i < 5; ++i) CHECK(mem.values().row(i).sum() == 1.0);
  CHECK(mem.coefficients().isZero(0));
  CHECK(*mem.slot_of("s3") == 3);
  CHECK_FALSE(mem.slot_of("nope"));

  CHECK_THROWS_AS(MemoryStore({}, {}, 6, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(MemoryStore({"a", "a"}, {0, 1}, 6, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(MemoryStore({"a"}, {4}, 6, 4, rng), std::invalid_argument);
}

TEST_CASE("update_key copies, isolates and is range-checked") {
  Rng rng(2);
  MemoryStore mem(ids(3), {0, 1, 0}, 2, 2, rng);
  const Matrix before = mem.keys();
  std::vector<double> r{0.25, -4.0};
  mem.update_key(1, r);
  r[0] = 99;
  CHECK(mem.keys()(1, 0) == 0.25);
  CHECK(mem.keys().row(0) == before.row(0));
  CHECK(mem.keys().row(2) == before.row(2));
  CHECK(mem.writes_this_epoch(1) == 1);
  CHECK(mem.verify_integrity());
  CHECK_THROWS_AS(mem.update_key(3, r), std::out_of_range);
  CHECK_THROWS_AS(mem.update_key(-1, r), std::out_of_range);
  mem.begin_epoch();
  CHECK(mem.writes_this_epoch(1) == 0);
}

TEST_CASE("coefficients follow the correctness filter") {
  Rng rng(3);
  // classes A A B B B; correct T F T T F
  MemoryStore mem(ids(5), {0, 0, 1, 1, 1}, 2, 2, rng);
  mem.assign_coefficients(std::vector<int>{0, 1, 1, 1, 0}, CoefficientMode::kDynamic);
  Matrix expected(1, 5);
  expected << 1, 0, 0.5, 0.5, 0;
  CHECK(mem.coefficients() == expected);
  CHECK(mem.correct(0));
  CHECK_FALSE(mem.correct(1));

  mem.assign_coefficients(std::vector<int>{1, 1, 0, 0, 0}, CoefficientMode::kDynamic);
  CHECK(mem.coefficients().isZero(0));

  MemoryStore small(ids(3), {0, 0, 1}, 2, 2, rng);
  small.assign_coefficients(std::vector<int>{1, 1, 0}, CoefficientMode::kBalance);
  Matrix balanced(1, 3);
  balanced << 0.5, 0.5, 1;
  CHECK(small.coefficients() == balanced);
}

TEST_CASE("scoring functions") {
  CHECK(score_dot(std::vector<double>{1, 0}, std::vector<double>{0.5, 2}) == 0.5);
  CHECK(score_dot(std::vector<double>{1, 0}, std::vector<double>{0, 3}) == 0.0);
  ParamRegistry params;
  auto bi = BiaffineParams::create(params, 1, 2);
  bi.u->mutable_value() = Matrix::Identity(2, 2);
  bi.b->mutable_value()(0, 0) = 1;
  CHECK(score_biaffine(std::vector<double>{1, 2}, std::vector<double>{3, 4}, bi) == 12.0);
  bi.b->mutable_value()(0, 0) = 0;
  CHECK(score_biaffine(std::vector<double>{1, 2}, std::vector<double>{3, 4}, bi) ==
        score_dot(std::vector<double>{1, 2}, std::vector<double>{3, 4}));
}

TEST_CASE("value response arithmetic") {
  Rng rng(4);
  MemoryStore mem(ids(3), {0, 1, 0}, 1, 2, rng);
  // Scores q * k: keys (ln 2, 0, 0) with q = 1.
  mem.update_key(0, std::vector<double>{std::log(2.0)});
  mem.update_key(1, std::vector<double>{0.0});
  mem.update_key(2, std::vector<double>{0.0});
  Matrix c(1, 3);
  c << 1, 1, 0;
  mem.set_coefficients(c);
  Graph g;
  auto out = respond(g, g.constant(Matrix::Constant(1, 1, 1.0)), mem, {});
  CHECK(out.weights->value()(0, 0) == doctest::Approx(0.5));
  CHECK(out.response->value()(0, 0) == doctest::Approx(0.5));
  CHECK(out.response->value()(0, 1) == doctest::Approx(0.25));

  mem.set_coefficients(Matrix::Zero(1, 3));
  Graph g2;
  CHECK(respond(g2, g2.constant(Matrix::Constant(1, 1, 1.0)), mem, {}).response->value().isZero(0));
}

TEST_CASE("key response with a one-hot coefficient") {
  Rng rng(5);
  MemoryStore mem(ids(4), {0, 1, 0, 1}, 3, 2, rng);
  Matrix c = Matrix::Zero(1, 4);
  c(0, 2) = 1;
  mem.set_coefficients(c);
  Graph g;
  RetrievalSpec spec;
  spec.response = ResponseKind::kKey;
  auto out = respond(g, g.constant(random_matrix(rng, 1, 3)), mem, spec);
  const double w2 = out.weights->value()(0, 2);
  CHECK((out.response->value() - w2 * mem.keys().row(2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("self exclusion removes the slot from the softmax") {
  Rng rng(6);
  MemoryStore mem(ids(3), {0, 1, 0}, 2, 2, rng);
  mem.set_coefficients(Matrix::Ones(1, 3));
  std::vector<Index> excluded{1, -1};
  RetrievalSpec spec;
  spec.excluded_slots = excluded;
  Graph g;
  auto out = respond(g, g.constant(random_matrix(rng, 2, 2)), mem, spec);
  CHECK(out.weights->value()(0, 1) == 0.0);
  CHECK(out.weights->value().row(0).sum() == doctest::Approx(1.0));
  CHECK(out.weights->value()(1, 1) > 0.0);
}

TEST_CASE("value response is non-negative and bounded by the largest coefficient") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + static_cast<int>(uniform_index(rng, 30));
    std::vector<int> rel;
    for (int i = 0; i < m; ++i) rel.push_back(static_cast<int>(uniform_index(rng, 3)));
    MemoryStore mem(ids(m), rel, 4, 3, rng);
    std::vector<int> pred;
    for (int i = 0; i < m; ++i) pred.push_back(static_cast<int>(uniform_index(rng, 3)));
    mem.assign_coefficients(pred, CoefficientMode::kDynamic);
    Graph g;
    auto out = respond(g, g.constant(random_matrix(rng, 5, 4)), mem, {});
    CHECK(out.response->value().minCoeff() >= 0.0);
    CHECK(out.response->value().maxCoeff() <= mem.coefficients().maxCoeff() + 1e-15);
    for (Index b = 0; b < 5; ++b) {
      CHECK(std::abs(out.weights->value().row(b).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("gradients reach the query and biaffine parameters but not the store") {
  ParamRegistry params;
  auto bi = BiaffineParams::create(params, 3, 4);
  Rng rng(8);
  params.add("query", random_matrix(rng, 3, 4));
  bi.w1->mutable_value() = random_matrix(rng, 1, 4);
  bi.w2->mutable_value() = random_matrix(rng, 1, 4);
  MemoryStore mem(ids(6), {0, 1, 2, 0, 1, 2}, 4, 3, rng);
  mem.assign_coefficients(std::vector<int>{0, 1, 1, 0, 1, 2}, CoefficientMode::kDynamic);
  const Matrix keys = mem.keys();
  const Matrix values = mem.values();
  const Matrix w = random_matrix(rng, 3, 3);
  RetrievalSpec spec;
  spec.attention = AttentionKind::kBiaffine;
  spec.biaffine = &bi;
  // w1 and b shift every score of a query equally, so their exact gradient is
  // zero; a wider step keeps the difference quotient clear of rounding noise.
  auto fn = [&](Graph& g) {
    auto out = respond(g, params.get("query"), mem, spec);
    return ops::sum(g, ops::mul(g, out.response, g.constant(w)));
  };
  const auto result = check_gradients(fn, params, 1e-4);
  INFO(result.worst_param, " ", result.analytic, " ", result.numeric);
  CHECK(result.max_relative_error < 1e-4);
  CHECK(mem.keys() == keys);
  CHECK(mem.values() == values);

  Graph g;
  auto out = respond(g, params.get("query"), mem, spec);
  g.backward(ops::sum(g, out.response));
  CHECK(bi.u->grad().cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("fixed keys are mean-pooled and frozen") {
  Matrix t(1, 3);
  t << 1, 2, 3;
  const auto key = fixed_key(t, t);
  CHECK(key.size() == 6);
  CHECK(key.head(3) == t.row(0));
  CHECK(key.tail(3) == t.row(0));
  CHECK(fixed_key(Matrix::Zero(4, 2), Matrix::Zero(2, 2)).isZero(0));

  Rng rng(9);
  MemoryStore mem(ids(2), {0, 1}, 6, 2, rng);
  Matrix keys(2, 6);
  keys << key, key;
  mem.freeze_keys(keys);
  CHECK(mem.keys_frozen());
  CHECK_THROWS_AS(mem.update_key(0, std::vector<double>(6, 0.0)), std::logic_error);
  CHECK(mem.keys() == keys);
}

TEST_CASE("snapshot round trip") {
  Rng rng(10);
  MemoryStore mem(ids(4), {0, 1, 2, 1}, 3, 3, rng);
  mem.assign_coefficients(std::vector<int>{0, 1, 0, 1}, CoefficientMode::kDynamic);
  std::stringstream buf;
  mem.save(buf);
  const auto back = MemoryStore::load(buf);
  CHECK(back.keys() == mem.keys());
  CHECK(back.values() == mem.values());
  CHECK(back.coefficients() == mem.coefficients());
  CHECK(back.instance_id(2) == "s2");
  CHECK(back.correct(1));
  CHECK_FALSE(back.correct(2));
  CHECK(back.verify_integrity());

  std::stringstream truncated(buf.str().substr(0, 20));
  CHECK_THROWS_AS(MemoryStore::load(truncated), DataError);
}
