#include <algorithm>
#include <vector>

#include "doctest.h"
#include "memrel/attention.h"
#include "memrel/encoder.h"
#include "memrel/gradcheck.h"

using namespace memrel;
using namespace memrel::ad;

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1, 1);
  return m;
}

// Kernel rows for the centre tap of a width-3 convolution occupy rows [d, 2d).
void rig_a_equals_x(const EncoderStack& enc, int layer) {
  const int d = enc.dim();
  Matrix w = Matrix::Zero(3 * d, 2 * d);
  w.block(d, 0, d, d) = Matrix::Identity(d, d);
  enc.layer(layer).weight->mutable_value() = w;
  enc.layer(layer).bias->mutable_value().setZero();
}

void set_identity_ffn(const PairAttention& att) {
  for (int l = 0; l < att.num_layers(); ++l) {
    att.ffn(l).weight->mutable_value() = Matrix::Identity(att.dim(), att.dim());
    att.ffn(l).bias->mutable_value().setZero();
  }
}

}  // namespace

TEST_CASE("glu block with A = x and B = 0 returns 1.5 x") {
  ParamRegistry params;
  EncoderStack enc(params, 1, "enc", 1, 3, 3);
  rig_a_equals_x(enc, 0);
  Rng rng(2);
  Graph g;
  Var x = g.constant(random_matrix(rng, 5, 3));
  Var y = enc.glu_block(g, x, 0, Segments::uniform(1, 5));
  CHECK((y->value() - 1.5 * x->value()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("glu gate on a single position") {
  ParamRegistry params;
  EncoderStack enc(params, 1, "enc", 1, 2, 1);
  Matrix w = Matrix::Zero(2, 4);
  enc.layer(0).weight->mutable_value() = w;
  Matrix b(1, 4);
  b << 1, -2, 0, 0;
  enc.layer(0).bias->mutable_value() = b;
  Graph g;
  Var y = enc.glu_block(g, g.constant(Matrix::Zero(1, 2)), 0, Segments::uniform(1, 1));
  CHECK(y->value()(0, 0) == doctest::Approx(0.5));
  CHECK(y->value()(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("zero conv layers are identity maps") {
  ParamRegistry params;
  EncoderStack enc(params, 3, "enc", 3, 4, 3);
  for (int l = 0; l < 3; ++l) {
    enc.layer(l).weight->mutable_value().setZero();
    enc.layer(l).bias->mutable_value().setZero();
  }
  Rng rng(5);
  Graph g;
  Var x = g.constant(random_matrix(rng, 12, 4));
  const auto outs = enc.encode(g, x, Segments::uniform(2, 6));
  REQUIRE(outs.size() == 3);
  for (Var o : outs) CHECK(o->value() == x->value());
}

TEST_CASE("encode shapes and zero input") {
  ParamRegistry params;
  EncoderStack enc(params, 4, "enc", 3, 4, 3);
  Graph g;
  const auto outs = enc.encode(g, g.constant(Matrix::Zero(14, 4)), Segments::uniform(2, 7));
  CHECK(outs.size() == 3);
  for (Var o : outs) {
    CHECK(o->shape() == Shape{14, 4});
    CHECK(o->value().isZero(0));
  }
  ParamRegistry one;
  EncoderStack single(one, 4, "enc", 1, 4, 3);
  Rng rng(1);
  Graph g2;
  Var x = g2.constant(random_matrix(rng, 7, 4));
  const auto segs = Segments::uniform(1, 7);
  CHECK(single.encode(g2, x, segs).at(0)->value() == single.glu_block(g2, x, 0, segs)->value());
}

TEST_CASE("sequences in a batch are encoded independently") {
  ParamRegistry params;
  EncoderStack enc(params, 6, "enc", 2, 3, 3);
  Rng rng(3);
  const Matrix a = random_matrix(rng, 4, 3);
  const Matrix b = random_matrix(rng, 4, 3);
  Matrix both(8, 3);
  both << a, b;
  Graph g;
  Var joint = enc.encode(g, g.constant(both), Segments::uniform(2, 4)).back();
  Var solo = enc.encode(g, g.constant(b), Segments::uniform(1, 4)).back();
  CHECK((joint->value().bottomRows(4) - solo->value()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bi-attention on singletons") {
  ParamRegistry params;
  PairAttention att(params, 1, 1, 1, false);
  set_identity_ffn(att);
  Graph g;
  auto [o1, o2] = att.bi_attention(g, g.constant(Matrix::Constant(1, 1, 2.0)),
                                   g.constant(Matrix::Constant(1, 1, 3.0)), 0, 1);
  CHECK(o2->value()(0, 0) == 3.0);
  CHECK(o1->value()(0, 0) == 2.0);
}

TEST_CASE("bi-attention over identical rows returns that row") {
  ParamRegistry params;
  PairAttention att(params, 2, 1, 3, true);
  Rng rng(8);
  Matrix u2(4, 3);
  const Matrix row = random_matrix(rng, 1, 3);
  for (Index i = 0; i < 4; ++i) u2.row(i) = row;
  Graph g;
  auto [o1, o2] = att.bi_attention(g, g.constant(random_matrix(rng, 4, 3)), g.constant(u2), 0, 1);
  for (Index i = 0; i < 4; ++i) CHECK((o2->value().row(i) - row).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bi-attention matches a direct per-sequence computation") {
  ParamRegistry params;
  PairAttention att(params, 4, 1, 3, true);
  Rng rng(9);
  const Index n = 5;
  const Matrix u1 = random_matrix(rng, 2 * n, 3);
  const Matrix u2 = random_matrix(rng, 2 * n, 3);
  Graph g;
  auto [o1, o2] = att.bi_attention(g, g.constant(u1), g.constant(u2), 0, 2);
  const Matrix& w = att.ffn(0).weight->value();
  const Matrix& b = att.ffn(0).bias->value();
  for (Index s = 0; s < 2; ++s) {
    const Matrix a1 = u1.middleRows(s * n, n);
    const Matrix a2 = u2.middleRows(s * n, n);
    Matrix f = a1 * w;
    f.rowwise() += b.row(0);
    f = f.cwiseMax(0.0);
    const Matrix m = f * a2.transpose();
    auto softmax = [](Matrix x) {
      for (Index i = 0; i < x.rows(); ++i) {
        x.row(i).array() -= x.row(i).maxCoeff();
        x.row(i) = x.row(i).array().exp().matrix();
        x.row(i) /= x.row(i).sum();
      }
      return x;
    };
    const Matrix sm = softmax(m);
    const Matrix smt = softmax(m.transpose());
    for (Index i = 0; i < n; ++i) CHECK(sm.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((o2->value().middleRows(s * n, n) - sm * a2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((o1->value().middleRows(s * n, n) - smt * a1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("top2 pooling layout and permutation invariance") {
  Graph g;
  Matrix o(3, 2);
  o << 1, 4, 3, 2, 2, 5;
  Var p = PairAttention::top2_pool(g, g.constant(o), Segments::uniform(1, 3));
  Matrix expected(1, 4);
  expected << 3, 5, 2, 4;
  CHECK(p->value() == expected);

  Matrix permuted(3, 2);
  permuted << 2, 5, 1, 4, 3, 2;
  CHECK(PairAttention::top2_pool(g, g.constant(permuted), Segments::uniform(1, 3))->value() == expected);

  Var c = PairAttention::top2_pool(g, g.constant(Matrix::Constant(4, 3, 0.7)), Segments::uniform(1, 4));
  CHECK(c->value() == Matrix::Constant(1, 6, 0.7));
}

TEST_CASE("pair representation width is 4 d L") {
  for (auto [layers, dim] : std::vector<std::pair<int, int>>{{1, 2}, {3, 128}}) {
    ParamRegistry params;
    PairAttention att(params, 1, layers, dim, true);
    CHECK(att.output_dim() == 4 * dim * layers);
  }
  ParamRegistry params;
  EncoderStack enc(params, 1, "enc", 2, 2, 3);
  PairAttention att(params, 1, 2, 2, true);
  Rng rng(4);
  Graph g;
  const auto segs = Segments::uniform(3, 4);
  const auto l1 = enc.encode(g, g.constant(random_matrix(rng, 12, 2)), segs);
  const auto l2 = enc.encode(g, g.constant(random_matrix(rng, 12, 2)), segs);
  Var r = att.pair_representation(g, l1, l2, 3, 4);
  CHECK(r->shape() == Shape{3, 16});
}

TEST_CASE("swapping the arguments swaps the halves of each layer part") {
  ParamRegistry params;
  PairAttention att(params, 1, 2, 3, false);
  set_identity_ffn(att);
  Rng rng(12);
  std::vector<Matrix> a;
  std::vector<Matrix> b;
  for (int l = 0; l < 2; ++l) {
    a.push_back(random_matrix(rng, 5, 3));
    b.push_back(random_matrix(rng, 5, 3));
  }
  Graph g;
  auto vars = [&](const std::vector<Matrix>& ms) {
    std::vector<Var> out;
    for (const auto& m : ms) out.push_back(g.constant(m));
    return out;
  };
  const Matrix r = att.pair_representation(g, vars(a), vars(b), 1, 5)->value();
  const Matrix s = att.pair_representation(g, vars(b), vars(a), 1, 5)->value();
  const Index half = 6;
  for (int l = 0; l < 2; ++l) {
    const Index base = l * 2 * half;
    CHECK((r.block(0, base, 1, half) - s.block(0, base + half, 1, half)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.block(0, base + half, 1, half) - s.block(0, base, 1, half)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("encoder and attention parameters pass the gradient check") {
  ParamRegistry params;
  EncoderStack enc(params, 21, "enc", 2, 3, 3);
  PairAttention att(params, 21, 2, 3, true);
  Rng rng(22);
  const Matrix x1 = random_matrix(rng, 8, 3);
  const Matrix x2 = random_matrix(rng, 8, 3);
  const Matrix w = random_matrix(rng, 2, 24);
  auto fn = [&](Graph& g) {
    const auto segs = Segments::uniform(2, 4);
    auto l1 = enc.encode(g, g.constant(x1), segs);
    auto l2 = enc.encode(g, g.constant(x2), segs);
    Var r = att.pair_representation(g, l1, l2, 2, 4);
    return ops::sum(g, ops::mul(g, r, g.constant(w)));
  };
  const auto result = check_gradients(fn, params, 1e-6);
  CHECK(result.max_relative_error < 1e-4);
}
