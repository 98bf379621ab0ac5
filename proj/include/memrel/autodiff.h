#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// Every value is a 2-D matrix; vectors are 1 x n rows and scalars are 1 x 1.
// Sequences of a batch are stacked along the row axis and described by a
// Segments table, so one primitive call covers the whole batch.
//
// A Graph owns the nodes created during one forward pass, in creation
// order; creation order is a topological order, so backward walks the list
// in reverse. Parameters live in a ParamRegistry and outlive graphs; they
// take part in a graph as leaf operands.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memrel/random.h"

namespace memrel::ad {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Shape {
  Index rows = 0;
  Index cols = 0;

  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

enum class Op {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kSigmoid,
  kRelu,
  kTanh,
  kSoftmaxRows,
  kCrossEntropy,
  kSoftmaxCrossEntropy,
  kConv1d,
  kSegmentMax,
  kSegmentTop2,
  kConcatCols,
  kConcatRows,
  kSliceRows,
  kSliceCols,
  kGatherRows,
  kBlockMatMul,
  kBlockTranspose,
  kDropout,
  kSum,
};

std::string_view op_name(Op op);

class Graph;

class Node {
 public:
  // Leaf node (parameter or constant).
  explicit Node(Matrix value, bool requires_grad = false);

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Shape shape() const { return {value_.rows(), value_.cols()}; }
  const Matrix& value() const { return value_; }
  // Only meaningful for leaves; optimizers and gradient checks write here.
  Matrix& mutable_value() { return value_; }

  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return grad_.size() > 0 || value_.size() == 0; }
  // Zero matrix if nothing has been accumulated yet.
  const Matrix& grad() const;
  // Allocates (zeroed) on first use. Never called for nodes without
  // requires_grad.
  Matrix& grad_buffer();
  void zero_grad() { grad_.resize(0, 0); }

  Op op() const { return op_; }
  std::span<Node* const> parents() const { return parents_; }

  double scalar() const { return value_(0, 0); }

 private:
  friend class Graph;
  using BackwardFn = std::function<void(Node&)>;

  Matrix value_;
  Matrix grad_;
  bool requires_grad_ = false;
  Op op_ = Op::kLeaf;
  std::vector<Node*> parents_;
  BackwardFn backward_;
};

using Var = Node*;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Constant input; never receives gradient.
  Var constant(Matrix value);
  // Graph-owned variable (used by tests and gradient checks).
  Var variable(Matrix value);

  // Records a primitive. `backward` is dropped when no parent requires grad.
  Var record(Op op, Matrix value, std::vector<Var> parents, Node::BackwardFn backward);

  // Propagates d(root)/d(node) into every reachable node that requires grad.
  // Throws std::invalid_argument when root is not 1 x 1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

// Named trainable leaves with deterministic (insertion) iteration order.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    std::unique_ptr<Node> node;
  };

  // Throws std::invalid_argument on a duplicate name.
  Var add(const std::string& name, Matrix init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  Index num_scalars() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const Entry& at(std::size_t i) const { return entries_[i]; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Stacked variable-length sequences: segment s occupies rows
// [offset(s), offset(s) + length(s)).
class Segments {
 public:
  Segments() = default;
  explicit Segments(std::vector<Index> lengths);
  static Segments uniform(Index count, Index length);

  Index count() const { return static_cast<Index>(lengths_.size()); }
  Index length(Index s) const { return lengths_[s]; }
  Index offset(Index s) const { return offsets_[s]; }
  Index total_rows() const { return offsets_.empty() ? 0 : offsets_.back() + lengths_.back(); }

 private:
  std::vector<Index> lengths_;
  std::vector<Index> offsets_;
};

namespace ops {

// a (r x k) * b (k x c); transpose flags apply before the product.
Var matmul(Graph& g, Var a, Var b, bool transpose_a = false, bool transpose_b = false);

// Elementwise with broadcasting of b: b is a's shape, 1 x cols (added to
// every row), rows x 1 (added to every column) or 1 x 1.
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);

Var sigmoid(Graph& g, Var x);
Var relu(Graph& g, Var x);
Var tanh(Graph& g, Var x);

// Softmax across columns, independently per row. -inf entries get weight 0.
Var softmax_rows(Graph& g, Var x);

// sum_i -log probs(i, targets[i]) / denominator over rows with target >= 0.
// Rows with a negative target are skipped. denominator <= 0 means "number of
// rows".
Var cross_entropy(Graph& g, Var probs, std::span<const int> targets, double denominator = 0);
// Same loss computed from logits through a stable log-softmax.
Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> targets,
                          double denominator = 0);

// Per-segment 1-D convolution with zero same-padding.
// x: rows x d, weight: (width * d) x out, bias: 1 x out. Output rows x out.
// Tap j of output row t reads input row t - (width - 1) / 2 + j.
Var conv1d(Graph& g, Var x, Var weight, Var bias, Index width, const Segments& segments);

// Per-segment, per-column maximum: output segments x d. Ties go to the lower
// row.
Var segment_max(Graph& g, Var x, const Segments& segments);

// Per-segment, per-column (max, second max): output segments x 2d laid out
// as [all maxima | all second maxima]. Ties go to the lower row; a length-1
// segment reports its single value twice.
Var segment_top2(Graph& g, Var x, const Segments& segments);

Var concat_cols(Graph& g, std::span<const Var> parts);
Var concat_rows(Graph& g, std::span<const Var> parts);
Var slice_rows(Graph& g, Var x, Index begin, Index count);
Var slice_cols(Graph& g, Var x, Index begin, Index count);

// out.row(i) = table.row(index[i]); a negative index yields a zero row that
// routes no gradient.
Var gather_rows(Graph& g, Var table, std::span<const Index> index);

// `blocks` independent products stacked along rows: a holds blocks row-blocks
// of equal height, as does b; block i of the output is op(a_i) * op(b_i).
Var block_matmul(Graph& g, Var a, Var b, Index blocks, bool transpose_a = false,
                 bool transpose_b = false);
// Transposes each of `blocks` equal row-blocks of x.
Var block_transpose(Graph& g, Var x, Index blocks);

// Inverted dropout: keeps each entry with probability 1 - rate and scales
// kept entries by 1 / (1 - rate). Identity when rate == 0.
Var dropout(Graph& g, Var x, double rate, Rng& rng);

Var sum(Graph& g, Var x);

}  // namespace ops
}  // namespace memrel::ad
