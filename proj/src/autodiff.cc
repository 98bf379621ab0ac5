#include "memrel/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "memrel/errors.h"

namespace memrel::ad {

std::string Shape::str() const {
  std::ostringstream os;
  os << "[" << rows << "x" << cols << "]";
  return os.str();
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kSigmoid: return "sigmoid";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kCrossEntropy: return "cross_entropy";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::kConv1d: return "conv1d";
    case Op::kSegmentMax: return "segment_max";
    case Op::kSegmentTop2: return "segment_top2";
    case Op::kConcatCols: return "concat_cols";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kGatherRows: return "gather_rows";
    case Op::kBlockMatMul: return "block_matmul";
    case Op::kBlockTranspose: return "block_transpose";
    case Op::kDropout: return "dropout";
    case Op::kSum: return "sum";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Node / Graph / ParamRegistry

Node::Node(Matrix value, bool requires_grad)
    : value_(std::move(value)), requires_grad_(requires_grad) {}

const Matrix& Node::grad() const {
  if (grad_.rows() != value_.rows() || grad_.cols() != value_.cols()) {
    auto& self = const_cast<Node&>(*this);
    self.grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }
  return grad_;
}

Matrix& Node::grad_buffer() {
  if (grad_.rows() != value_.rows() || grad_.cols() != value_.cols()) {
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }
  return grad_;
}

Var Graph::constant(Matrix value) {
  nodes_.push_back(std::make_unique<Node>(std::move(value), false));
  return nodes_.back().get();
}

Var Graph::variable(Matrix value) {
  nodes_.push_back(std::make_unique<Node>(std::move(value), true));
  return nodes_.back().get();
}

Var Graph::record(Op op, Matrix value, std::vector<Var> parents, Node::BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || p->requires_grad();
  auto node = std::make_unique<Node>(std::move(value), needs);
  node->op_ = op;
  node->parents_ = std::move(parents);
  if (needs) node->backward_ = std::move(backward);
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

void Graph::backward(Var root) {
  if (root->shape() != Shape{1, 1}) {
    throw std::invalid_argument("backward: root must be scalar, got " + root->shape().str());
  }
  if (!root->requires_grad()) return;
  root->grad_buffer()(0, 0) += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.backward_ || n.grad_.size() == 0) continue;
    n.backward_(n);
  }
}

Var ParamRegistry::add(const std::string& name, Matrix init) {
  if (index_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({name, std::make_unique<Node>(std::move(init), true)});
  return entries_.back().node.get();
}

Var ParamRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].node.get();
}

void ParamRegistry::zero_grad() {
  for (auto& e : entries_) e.node->zero_grad();
}

Index ParamRegistry::num_scalars() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.node->value().size();
  return n;
}

Segments::Segments(std::vector<Index> lengths) : lengths_(std::move(lengths)) {
  offsets_.reserve(lengths_.size());
  Index off = 0;
  for (Index len : lengths_) {
    if (len < 1) throw std::invalid_argument("Segments: lengths must be positive");
    offsets_.push_back(off);
    off += len;
  }
}

Segments Segments::uniform(Index count, Index length) {
  return Segments(std::vector<Index>(static_cast<std::size_t>(count), length));
}

// ---------------------------------------------------------------------------
// Primitives

namespace ops {
namespace {

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b, std::string_view why = {}) {
  std::ostringstream os;
  os << op_name(op) << ": shape mismatch " << a.str() << " vs " << b.str();
  if (!why.empty()) os << " (" << why << ")";
  throw ShapeError(os.str());
}

template <class Expr>
void accumulate(Var p, const Expr& d) {
  if (p->requires_grad()) p->grad_buffer() += d;
}

Matrix product(const Matrix& a, bool ta, const Matrix& b, bool tb) {
  Matrix out;
  if (!ta && !tb) {
    out.noalias() = a * b;
  } else if (ta && !tb) {
    out.noalias() = a.transpose() * b;
  } else if (!ta && tb) {
    out.noalias() = a * b.transpose();
  } else {
    out.noalias() = a.transpose() * b.transpose();
  }
  return out;
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_kind(Op op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::kSame;
  if (b.rows == 1 && b.cols == 1) return Broadcast::kScalar;
  if (b.rows == 1 && b.cols == a.cols) return Broadcast::kRow;
  if (b.cols == 1 && b.rows == a.rows) return Broadcast::kCol;
  shape_fail(op, a, b, "second operand must match or broadcast");
}

Matrix expand(const Matrix& b, Index rows, Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame: return b;
    case Broadcast::kRow: return b.row(0).replicate(rows, 1);
    case Broadcast::kCol: return b.col(0).replicate(1, cols);
    case Broadcast::kScalar: return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& d, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame: return d;
    case Broadcast::kRow: return d.colwise().sum();
    case Broadcast::kCol: return d.rowwise().sum();
    case Broadcast::kScalar: return Matrix::Constant(1, 1, d.sum());
  }
  return d;
}

std::vector<int> copy_targets(Op op, Var x, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != x->shape().rows) {
    shape_fail(op, x->shape(), {static_cast<Index>(targets.size()), 1}, "one target per row");
  }
  for (int t : targets) {
    if (t >= x->shape().cols) {
      throw std::out_of_range(std::string(op_name(op)) + ": target id out of range");
    }
  }
  return {targets.begin(), targets.end()};
}

double resolve_denominator(double denominator, Index rows) {
  return denominator > 0 ? denominator : static_cast<double>(rows);
}

void check_segments(Op op, Var x, const Segments& segments) {
  if (segments.total_rows() != x->shape().rows) {
    shape_fail(op, x->shape(), {segments.total_rows(), x->shape().cols},
               "segments must cover every row");
  }
}

}  // namespace

Var matmul(Graph& g, Var a, Var b, bool transpose_a, bool transpose_b) {
  const Index inner_a = transpose_a ? a->shape().rows : a->shape().cols;
  const Index inner_b = transpose_b ? b->shape().cols : b->shape().rows;
  if (inner_a != inner_b) shape_fail(Op::kMatMul, a->shape(), b->shape());
  Matrix value = product(a->value(), transpose_a, b->value(), transpose_b);
  return g.record(Op::kMatMul, std::move(value), {a, b},
                  [a, b, transpose_a, transpose_b](Node& self) {
                    const Matrix& d = self.grad();
                    if (a->requires_grad()) {
                      if (!transpose_a) {
                        accumulate(a, product(d, false, b->value(), !transpose_b));
                      } else {
                        accumulate(a, product(b->value(), transpose_b, d, true));
                      }
                    }
                    if (b->requires_grad()) {
                      if (!transpose_b) {
                        accumulate(b, product(a->value(), !transpose_a, d, false));
                      } else {
                        accumulate(b, product(d, true, a->value(), transpose_a));
                      }
                    }
                  });
}

Var add(Graph& g, Var a, Var b) {
  const auto kind = broadcast_kind(Op::kAdd, a->shape(), b->shape());
  Matrix value = a->value() + expand(b->value(), a->shape().rows, a->shape().cols, kind);
  return g.record(Op::kAdd, std::move(value), {a, b}, [a, b, kind](Node& self) {
    accumulate(a, self.grad());
    if (b->requires_grad()) accumulate(b, reduce(self.grad(), kind));
  });
}

Var sub(Graph& g, Var a, Var b) {
  const auto kind = broadcast_kind(Op::kSub, a->shape(), b->shape());
  Matrix value = a->value() - expand(b->value(), a->shape().rows, a->shape().cols, kind);
  return g.record(Op::kSub, std::move(value), {a, b}, [a, b, kind](Node& self) {
    accumulate(a, self.grad());
    if (b->requires_grad()) accumulate(b, -reduce(self.grad(), kind));
  });
}

Var mul(Graph& g, Var a, Var b) {
  const auto kind = broadcast_kind(Op::kMul, a->shape(), b->shape());
  Matrix bb = expand(b->value(), a->shape().rows, a->shape().cols, kind);
  Matrix value = a->value().cwiseProduct(bb);
  return g.record(Op::kMul, std::move(value), {a, b},
                  [a, b, kind, bb = std::move(bb)](Node& self) {
                    const Matrix& d = self.grad();
                    accumulate(a, d.cwiseProduct(bb));
                    if (b->requires_grad()) {
                      accumulate(b, reduce(d.cwiseProduct(a->value()), kind));
                    }
                  });
}

Var scale(Graph& g, Var a, double factor) {
  return g.record(Op::kScale, a->value() * factor, {a},
                  [a, factor](Node& self) { accumulate(a, self.grad() * factor); });
}

Var sigmoid(Graph& g, Var x) {
  Matrix y = x->value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return g.record(Op::kSigmoid, std::move(y), {x}, [x](Node& self) {
    const Matrix& y = self.value();
    accumulate(x, self.grad().cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var relu(Graph& g, Var x) {
  Matrix y = x->value().cwiseMax(0.0);
  return g.record(Op::kRelu, std::move(y), {x}, [x](Node& self) {
    accumulate(x, (x->value().array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad()));
  });
}

Var tanh(Graph& g, Var x) {
  Matrix y = x->value().array().tanh().matrix();
  return g.record(Op::kTanh, std::move(y), {x}, [x](Node& self) {
    const Matrix& y = self.value();
    accumulate(x, self.grad().cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var softmax_rows(Graph& g, Var x) {
  const Matrix& v = x->value();
  Matrix y(v.rows(), v.cols());
  for (Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    if (!std::isfinite(m)) {
      if (m == -std::numeric_limits<double>::infinity()) {
        y.row(r).setZero();
        continue;
      }
    }
    y.row(r) = (v.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return g.record(Op::kSoftmaxRows, std::move(y), {x}, [x](Node& self) {
    const Matrix& y = self.value();
    const Matrix& d = self.grad();
    Eigen::VectorXd dots = d.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct((d.colwise() - dots));
    accumulate(x, dx);
  });
}

Var cross_entropy(Graph& g, Var probs, std::span<const int> targets, double denominator) {
  auto t = copy_targets(Op::kCrossEntropy, probs, targets);
  const double denom = resolve_denominator(denominator, probs->shape().rows);
  double loss = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= 0) loss -= std::log(probs->value()(static_cast<Index>(i), t[i]));
  }
  return g.record(Op::kCrossEntropy, Matrix::Constant(1, 1, loss / denom), {probs},
                  [probs, t = std::move(t), denom](Node& self) {
                    const double up = self.grad()(0, 0);
                    Matrix d = Matrix::Zero(probs->shape().rows, probs->shape().cols);
                    for (std::size_t i = 0; i < t.size(); ++i) {
                      if (t[i] < 0) continue;
                      const auto r = static_cast<Index>(i);
                      d(r, t[i]) = -up / (probs->value()(r, t[i]) * denom);
                    }
                    accumulate(probs, d);
                  });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> targets,
                          double denominator) {
  auto t = copy_targets(Op::kSoftmaxCrossEntropy, logits, targets);
  const double denom = resolve_denominator(denominator, logits->shape().rows);
  const Matrix& z = logits->value();
  Matrix p(z.rows(), z.cols());
  double loss = 0;
  for (Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    p.row(r) = (z.row(r).array() - m).exp().matrix();
    const double s = p.row(r).sum();
    p.row(r) /= s;
    const int tr = t[static_cast<std::size_t>(r)];
    if (tr >= 0) loss -= z(r, tr) - m - std::log(s);
  }
  return g.record(Op::kSoftmaxCrossEntropy, Matrix::Constant(1, 1, loss / denom), {logits},
                  [logits, t = std::move(t), denom, p = std::move(p)](Node& self) {
                    const double up = self.grad()(0, 0);
                    Matrix d = p;
                    for (std::size_t i = 0; i < t.size(); ++i) {
                      const auto r = static_cast<Index>(i);
                      if (t[i] < 0) {
                        d.row(r).setZero();
                      } else {
                        d(r, t[i]) -= 1.0;
                      }
                    }
                    accumulate(logits, d * (up / denom));
                  });
}

Var conv1d(Graph& g, Var x, Var weight, Var bias, Index width, const Segments& segments) {
  check_segments(Op::kConv1d, x, segments);
  const Index d = x->shape().cols;
  if (width < 1 || weight->shape().rows != width * d) {
    shape_fail(Op::kConv1d, x->shape(), weight->shape(), "weight rows must be width * cols(x)");
  }
  if (bias->shape() != Shape{1, weight->shape().cols}) {
    shape_fail(Op::kConv1d, weight->shape(), bias->shape(), "bias must be 1 x cols(weight)");
  }
  const Index left = (width - 1) / 2;
  const Matrix& xv = x->value();
  Matrix cols = Matrix::Zero(xv.rows(), width * d);
  for (Index s = 0; s < segments.count(); ++s) {
    const Index off = segments.offset(s);
    const Index len = segments.length(s);
    for (Index t = 0; t < len; ++t) {
      for (Index j = 0; j < width; ++j) {
        const Index src = t - left + j;
        if (src < 0 || src >= len) continue;
        cols.block(off + t, j * d, 1, d) = xv.row(off + src);
      }
    }
  }
  Matrix value;
  value.noalias() = cols * weight->value();
  value.rowwise() += bias->value().row(0);
  return g.record(Op::kConv1d, std::move(value), {x, weight, bias},
                  [x, weight, bias, width, left, d, segments,
                   cols = std::move(cols)](Node& self) {
                    const Matrix& dy = self.grad();
                    if (weight->requires_grad()) {
                      Matrix dw;
                      dw.noalias() = cols.transpose() * dy;
                      accumulate(weight, dw);
                    }
                    if (bias->requires_grad()) accumulate(bias, dy.colwise().sum());
                    if (!x->requires_grad()) return;
                    Matrix dcols;
                    dcols.noalias() = dy * weight->value().transpose();
                    Matrix& dx = x->grad_buffer();
                    for (Index s = 0; s < segments.count(); ++s) {
                      const Index off = segments.offset(s);
                      const Index len = segments.length(s);
                      for (Index t = 0; t < len; ++t) {
                        for (Index j = 0; j < width; ++j) {
                          const Index src = t - left + j;
                          if (src < 0 || src >= len) continue;
                          dx.row(off + src) += dcols.block(off + t, j * d, 1, d);
                        }
                      }
                    }
                  });
}

Var segment_max(Graph& g, Var x, const Segments& segments) {
  check_segments(Op::kSegmentMax, x, segments);
  const Matrix& v = x->value();
  const Index d = v.cols();
  Matrix out(segments.count(), d);
  std::vector<Index> arg(static_cast<std::size_t>(segments.count() * d));
  for (Index s = 0; s < segments.count(); ++s) {
    const Index off = segments.offset(s);
    for (Index c = 0; c < d; ++c) {
      Index best = off;
      for (Index r = off + 1; r < off + segments.length(s); ++r) {
        if (v(r, c) > v(best, c)) best = r;
      }
      out(s, c) = v(best, c);
      arg[static_cast<std::size_t>(s * d + c)] = best;
    }
  }
  return g.record(Op::kSegmentMax, std::move(out), {x}, [x, d, arg = std::move(arg)](Node& self) {
    Matrix& dx = x->grad_buffer();
    const Matrix& dy = self.grad();
    for (Index s = 0; s < dy.rows(); ++s) {
      for (Index c = 0; c < d; ++c) dx(arg[static_cast<std::size_t>(s * d + c)], c) += dy(s, c);
    }
  });
}

Var segment_top2(Graph& g, Var x, const Segments& segments) {
  check_segments(Op::kSegmentTop2, x, segments);
  const Matrix& v = x->value();
  const Index d = v.cols();
  Matrix out(segments.count(), 2 * d);
  std::vector<Index> arg(static_cast<std::size_t>(segments.count() * 2 * d));
  for (Index s = 0; s < segments.count(); ++s) {
    const Index off = segments.offset(s);
    const Index end = off + segments.length(s);
    for (Index c = 0; c < d; ++c) {
      Index first = off;
      Index second = -1;
      for (Index r = off + 1; r < end; ++r) {
        if (v(r, c) > v(first, c)) {
          second = first;
          first = r;
        } else if (second < 0 || v(r, c) > v(second, c)) {
          second = r;
        }
      }
      if (second < 0) second = first;
      out(s, c) = v(first, c);
      out(s, d + c) = v(second, c);
      arg[static_cast<std::size_t>(s * 2 * d + c)] = first;
      arg[static_cast<std::size_t>(s * 2 * d + d + c)] = second;
    }
  }
  return g.record(Op::kSegmentTop2, std::move(out), {x},
                  [x, d, arg = std::move(arg)](Node& self) {
                    Matrix& dx = x->grad_buffer();
                    const Matrix& dy = self.grad();
                    for (Index s = 0; s < dy.rows(); ++s) {
                      for (Index c = 0; c < 2 * d; ++c) {
                        dx(arg[static_cast<std::size_t>(s * 2 * d + c)], c % d) += dy(s, c);
                      }
                    }
                  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Index rows = parts[0]->shape().rows;
  Index cols = 0;
  for (Var p : parts) {
    if (p->shape().rows != rows) shape_fail(Op::kConcatCols, parts[0]->shape(), p->shape());
    cols += p->shape().cols;
  }
  Matrix value(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    value.middleCols(at, p->shape().cols) = p->value();
    at += p->shape().cols;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return g.record(Op::kConcatCols, std::move(value), ps, [ps](Node& self) {
    Index at = 0;
    for (Var p : ps) {
      accumulate(p, self.grad().middleCols(at, p->shape().cols));
      at += p->shape().cols;
    }
  });
}

Var concat_rows(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Index cols = parts[0]->shape().cols;
  Index rows = 0;
  for (Var p : parts) {
    if (p->shape().cols != cols) shape_fail(Op::kConcatRows, parts[0]->shape(), p->shape());
    rows += p->shape().rows;
  }
  Matrix value(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    value.middleRows(at, p->shape().rows) = p->value();
    at += p->shape().rows;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return g.record(Op::kConcatRows, std::move(value), ps, [ps](Node& self) {
    Index at = 0;
    for (Var p : ps) {
      accumulate(p, self.grad().middleRows(at, p->shape().rows));
      at += p->shape().rows;
    }
  });
}

Var slice_rows(Graph& g, Var x, Index begin, Index count) {
  if (begin < 0 || count < 1 || begin + count > x->shape().rows) {
    shape_fail(Op::kSliceRows, x->shape(), {count, x->shape().cols}, "slice out of range");
  }
  return g.record(Op::kSliceRows, x->value().middleRows(begin, count), {x},
                  [x, begin, count](Node& self) {
                    if (x->requires_grad()) x->grad_buffer().middleRows(begin, count) += self.grad();
                  });
}

Var slice_cols(Graph& g, Var x, Index begin, Index count) {
  if (begin < 0 || count < 1 || begin + count > x->shape().cols) {
    shape_fail(Op::kSliceCols, x->shape(), {x->shape().rows, count}, "slice out of range");
  }
  return g.record(Op::kSliceCols, x->value().middleCols(begin, count), {x},
                  [x, begin, count](Node& self) {
                    if (x->requires_grad()) x->grad_buffer().middleCols(begin, count) += self.grad();
                  });
}

Var gather_rows(Graph& g, Var table, std::span<const Index> index) {
  const Matrix& t = table->value();
  Matrix value(static_cast<Index>(index.size()), t.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Index src = index[i];
    if (src >= t.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(src) + " out of range for " +
                              table->shape().str());
    }
    if (src < 0) {
      value.row(static_cast<Index>(i)).setZero();
    } else {
      value.row(static_cast<Index>(i)) = t.row(src);
    }
  }
  std::vector<Index> idx(index.begin(), index.end());
  return g.record(Op::kGatherRows, std::move(value), {table},
                  [table, idx = std::move(idx)](Node& self) {
                    Matrix& dt = table->grad_buffer();
                    const Matrix& d = self.grad();
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                      if (idx[i] >= 0) dt.row(idx[i]) += d.row(static_cast<Index>(i));
                    }
                  });
}

Var block_matmul(Graph& g, Var a, Var b, Index blocks, bool transpose_a, bool transpose_b) {
  if (blocks < 1 || a->shape().rows % blocks != 0 || b->shape().rows % blocks != 0) {
    shape_fail(Op::kBlockMatMul, a->shape(), b->shape(), "rows must split into equal blocks");
  }
  const Index ra = a->shape().rows / blocks;
  const Index rb = b->shape().rows / blocks;
  const Index ca = a->shape().cols;
  const Index cb = b->shape().cols;
  const Index inner_a = transpose_a ? ra : ca;
  const Index inner_b = transpose_b ? cb : rb;
  if (inner_a != inner_b) shape_fail(Op::kBlockMatMul, a->shape(), b->shape(), "inner dims");
  const Index out_r = transpose_a ? ca : ra;
  const Index out_c = transpose_b ? rb : cb;
  Matrix value(blocks * out_r, out_c);
  for (Index i = 0; i < blocks; ++i) {
    Matrix ai = a->value().middleRows(i * ra, ra);
    Matrix bi = b->value().middleRows(i * rb, rb);
    value.middleRows(i * out_r, out_r) = product(ai, transpose_a, bi, transpose_b);
  }
  return g.record(
      Op::kBlockMatMul, std::move(value), {a, b},
      [a, b, blocks, ra, rb, out_r, transpose_a, transpose_b](Node& self) {
        for (Index i = 0; i < blocks; ++i) {
          Matrix di = self.grad().middleRows(i * out_r, out_r);
          Matrix ai = a->value().middleRows(i * ra, ra);
          Matrix bi = b->value().middleRows(i * rb, rb);
          if (a->requires_grad()) {
            a->grad_buffer().middleRows(i * ra, ra) +=
                transpose_a ? product(bi, transpose_b, di, true)
                            : product(di, false, bi, !transpose_b);
          }
          if (b->requires_grad()) {
            b->grad_buffer().middleRows(i * rb, rb) +=
                transpose_b ? product(di, true, ai, transpose_a)
                            : product(ai, !transpose_a, di, false);
          }
        }
      });
}

Var block_transpose(Graph& g, Var x, Index blocks) {
  if (blocks < 1 || x->shape().rows % blocks != 0) {
    shape_fail(Op::kBlockTranspose, x->shape(), {blocks, 1}, "rows must split into equal blocks");
  }
  const Index r = x->shape().rows / blocks;
  const Index c = x->shape().cols;
  Matrix value(blocks * c, r);
  for (Index i = 0; i < blocks; ++i) {
    value.middleRows(i * c, c) = x->value().middleRows(i * r, r).transpose();
  }
  return g.record(Op::kBlockTranspose, std::move(value), {x}, [x, blocks, r, c](Node& self) {
    Matrix& dx = x->grad_buffer();
    for (Index i = 0; i < blocks; ++i) {
      dx.middleRows(i * r, r) += self.grad().middleRows(i * c, c).transpose();
    }
  });
}

Var dropout(Graph& g, Var x, double rate, Rng& rng) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x->shape().rows, x->shape().cols);
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = uniform01(rng) >= rate ? keep_scale : 0.0;
  }
  Matrix value = x->value().cwiseProduct(mask);
  return g.record(Op::kDropout, std::move(value), {x}, [x, mask = std::move(mask)](Node& self) {
    accumulate(x, self.grad().cwiseProduct(mask));
  });
}

Var sum(Graph& g, Var x) {
  return g.record(Op::kSum, Matrix::Constant(1, 1, x->value().sum()), {x}, [x](Node& self) {
    accumulate(x, Matrix::Constant(x->shape().rows, x->shape().cols, self.grad()(0, 0)));
  });
}

}  // namespace ops
}  // namespace memrel::ad
