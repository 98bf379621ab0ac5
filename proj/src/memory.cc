#include "memrel/memory.h"

#include <limits>
#include <stdexcept>

#include "memrel/binary_io.h"
#include "memrel/init.h"

namespace memrel {

using ad::Index;
using ad::Matrix;
using ad::Var;
namespace ops = ad::ops;

namespace {

std::span<const double> row_span(const Matrix& m, Index i) {
  return {m.row(i).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

BiaffineParams BiaffineParams::create(ad::ParamRegistry& params, std::uint64_t seed, int dim,
                                      const std::string& prefix) {
  BiaffineParams p;
  p.u = add_glorot(params, seed, prefix + "/u", dim, dim, dim, dim);
  p.w1 = add_zeros(params, prefix + "/w1", 1, dim);
  p.w2 = add_zeros(params, prefix + "/w2", 1, dim);
  p.b = add_zeros(params, prefix + "/b", 1, 1);
  return p;
}

double score_dot(std::span<const double> query, std::span<const double> key) {
  if (query.size() != key.size()) throw ShapeError("score_dot: vector sizes differ");
  double s = 0;
  for (std::size_t i = 0; i < query.size(); ++i) s += query[i] * key[i];
  return s;
}

double score_biaffine(std::span<const double> query, std::span<const double> key,
                      const BiaffineParams& p) {
  const auto d = static_cast<Index>(query.size());
  if (static_cast<Index>(key.size()) != d || p.dim() != d) {
    throw ShapeError("score_biaffine: sizes differ from the biaffine parameters");
  }
  Eigen::Map<const ad::RowVector> q(query.data(), d);
  Eigen::Map<const ad::RowVector> k(key.data(), d);
  return (q * p.u->value()).dot(k) + p.w1->value().row(0).dot(q) + p.w2->value().row(0).dot(k) +
         p.b->value()(0, 0);
}

// ---------------------------------------------------------------------------

MemoryStore::MemoryStore(std::vector<std::string> instance_ids, std::vector<int> relations,
                         int key_dim, int num_relations, Rng& rng)
    : relations_(std::move(relations)), ids_(std::move(instance_ids)), num_relations_(num_relations) {
  const auto m = static_cast<Index>(relations_.size());
  if (m == 0) throw std::invalid_argument("memory: at least one slot is required");
  if (ids_.size() != relations_.size()) throw std::invalid_argument("memory: ids and relations differ in size");
  if (key_dim < 1 || num_relations < 1) throw std::invalid_argument("memory: bad dimensions");
  keys_ = uniform_matrix(m, key_dim, 0.1, rng);
  values_ = Matrix::Zero(m, num_relations);
  for (Index i = 0; i < m; ++i) {
    const int r = relations_[static_cast<std::size_t>(i)];
    if (r < 0 || r >= num_relations) throw std::invalid_argument("memory: relation id out of range");
    values_(i, r) = 1.0;
    if (!slot_index_.emplace(ids_[static_cast<std::size_t>(i)], i).second) {
      throw std::invalid_argument("memory: duplicate instance id " + ids_[static_cast<std::size_t>(i)]);
    }
  }
  coefficients_ = Matrix::Zero(1, m);
  correct_.assign(static_cast<std::size_t>(m), 0);
  writes_.assign(static_cast<std::size_t>(m), 0);
  hashes_.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    hashes_[static_cast<std::size_t>(i)] = hash_row(row_span(keys_, i));
  }
}

std::optional<Index> MemoryStore::slot_of(const std::string& instance_id) const {
  auto it = slot_index_.find(instance_id);
  if (it == slot_index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t MemoryStore::hash_row(std::span<const double> r) {
  return fnv1a(r.data(), r.size() * sizeof(double));
}

void MemoryStore::update_key(Index slot, std::span<const double> r) {
  if (slot < 0 || slot >= size()) {
    throw std::out_of_range("memory: slot " + std::to_string(slot) + " out of range");
  }
  if (frozen_) throw std::logic_error("memory: keys are frozen");
  if (static_cast<Index>(r.size()) != key_dim()) throw ShapeError("memory: key width mismatch");
  for (Index j = 0; j < key_dim(); ++j) keys_(slot, j) = r[static_cast<std::size_t>(j)];
  hashes_[static_cast<std::size_t>(slot)] = hash_row(r);
  ++writes_[static_cast<std::size_t>(slot)];
}

void MemoryStore::freeze_keys(Matrix keys) {
  if (keys.rows() != size()) throw ShapeError("memory: fixed keys must have one row per slot");
  keys_ = std::move(keys);
  for (Index i = 0; i < size(); ++i) {
    hashes_[static_cast<std::size_t>(i)] = hash_row(row_span(keys_, i));
  }
  frozen_ = true;
}

void MemoryStore::assign_coefficients(std::span<const int> predictions, CoefficientMode mode) {
  if (static_cast<Index>(predictions.size()) != size()) {
    throw std::invalid_argument("memory: one prediction per slot is required");
  }
  std::vector<long> per_class(static_cast<std::size_t>(num_relations_), 0);
  for (Index i = 0; i < size(); ++i) {
    const auto s = static_cast<std::size_t>(i);
    correct_[s] = predictions[s] == relations_[s];
    if (mode == CoefficientMode::kBalance || correct_[s]) ++per_class[static_cast<std::size_t>(relations_[s])];
  }
  for (Index i = 0; i < size(); ++i) {
    const auto s = static_cast<std::size_t>(i);
    const long n = per_class[static_cast<std::size_t>(relations_[s])];
    const bool eligible = mode == CoefficientMode::kBalance || correct_[s];
    coefficients_(0, i) = eligible ? 1.0 / static_cast<double>(n) : 0.0;
  }
}

void MemoryStore::set_coefficients(Matrix c) {
  if (c.rows() != 1 || c.cols() != size()) throw ShapeError("memory: coefficients must be 1 x m");
  if ((c.array() < 0).any()) throw std::invalid_argument("memory: coefficients must be >= 0");
  coefficients_ = std::move(c);
}

void MemoryStore::begin_epoch() { std::fill(writes_.begin(), writes_.end(), 0); }

bool MemoryStore::verify_integrity() const {
  for (Index i = 0; i < size(); ++i) {
    if (hash_row(row_span(keys_, i)) != hashes_[static_cast<std::size_t>(i)]) {
      return false;
    }
  }
  return true;
}

void MemoryStore::save(std::ostream& out) const {
  io::write_u64(out, static_cast<std::uint64_t>(size()));
  io::write_u32(out, static_cast<std::uint32_t>(key_dim()));
  io::write_u32(out, static_cast<std::uint32_t>(num_relations_));
  io::write_u32(out, frozen_ ? 1 : 0);
  for (Index i = 0; i < size(); ++i) {
    const auto s = static_cast<std::size_t>(i);
    io::write_string(out, ids_[s]);
    io::write_u32(out, static_cast<std::uint32_t>(relations_[s]));
    io::write_u32(out, correct_[s] ? 1 : 0);
    io::write_f64(out, coefficients_(0, i));
    for (Index j = 0; j < key_dim(); ++j) io::write_f64(out, keys_(i, j));
  }
}

MemoryStore MemoryStore::load(std::istream& in) {
  const auto m = static_cast<Index>(io::read_u64(in));
  const auto d = static_cast<int>(io::read_u32(in));
  const auto n_r = static_cast<int>(io::read_u32(in));
  const bool frozen = io::read_u32(in) != 0;
  if (m < 1 || d < 1 || n_r < 1) throw DataError("checkpoint: bad memory header");
  std::vector<std::string> ids;
  std::vector<int> rels;
  std::vector<char> correct;
  Matrix keys(m, d);
  Matrix coef(1, m);
  for (Index i = 0; i < m; ++i) {
    ids.push_back(io::read_string(in));
    rels.push_back(static_cast<int>(io::read_u32(in)));
    correct.push_back(io::read_u32(in) != 0);
    coef(0, i) = io::read_f64(in);
    for (Index j = 0; j < d; ++j) keys(i, j) = io::read_f64(in);
  }
  Rng unused(0);
  MemoryStore store;
  try {
    store = MemoryStore(std::move(ids), std::move(rels), d, n_r, unused);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  store.keys_ = std::move(keys);
  for (Index i = 0; i < m; ++i) {
    store.hashes_[static_cast<std::size_t>(i)] =
        hash_row(row_span(store.keys_, i));
  }
  store.coefficients_ = std::move(coef);
  store.correct_ = std::move(correct);
  store.frozen_ = frozen;
  return store;
}

// ---------------------------------------------------------------------------

Retrieval respond(ad::Graph& g, Var queries, const MemoryStore& memory, const RetrievalSpec& spec) {
  if (queries->shape().cols != memory.key_dim()) {
    throw ShapeError("respond: query width " + std::to_string(queries->shape().cols) +
                     " does not match key width " + std::to_string(memory.key_dim()));
  }
  if (spec.response == ResponseKind::kBaseline) {
    throw std::invalid_argument("respond: baseline mode never queries the memory");
  }
  Var keys = g.constant(memory.keys());
  Var scores = nullptr;
  if (spec.attention == AttentionKind::kDot) {
    scores = ops::matmul(g, queries, keys, false, true);
  } else {
    if (!spec.biaffine) throw std::invalid_argument("respond: biaffine attention needs parameters");
    const BiaffineParams& p = *spec.biaffine;
    Var qu = ops::matmul(g, queries, p.u);
    scores = ops::matmul(g, qu, keys, false, true);
    scores = ops::add(g, scores, ops::matmul(g, queries, p.w1, false, true));
    scores = ops::add(g, scores, ops::matmul(g, p.w2, keys, false, true));
    scores = ops::add(g, scores, p.b);
  }
  if (!spec.excluded_slots.empty()) {
    const Index batch = queries->shape().rows;
    if (static_cast<Index>(spec.excluded_slots.size()) != batch) {
      throw ShapeError("respond: one excluded slot entry per query is required");
    }
    Matrix mask = Matrix::Zero(batch, memory.size());
    for (Index b = 0; b < batch; ++b) {
      const Index s = spec.excluded_slots[static_cast<std::size_t>(b)];
      if (s >= 0 && memory.size() > 1) mask(b, s) = -std::numeric_limits<double>::infinity();
    }
    scores = ops::add(g, scores, g.constant(std::move(mask)));
  }
  Retrieval out;
  out.scores = scores;
  out.weights = ops::softmax_rows(g, scores);
  Var weighted = ops::mul(g, out.weights, g.constant(memory.coefficients()));
  out.response = spec.response == ResponseKind::kValue
                     ? ops::matmul(g, weighted, g.constant(memory.values()))
                     : ops::matmul(g, weighted, keys);
  return out;
}

ad::RowVector fixed_key(const Matrix& arg1_vectors, const Matrix& arg2_vectors) {
  if (arg1_vectors.cols() != arg2_vectors.cols() || arg1_vectors.rows() == 0 ||
      arg2_vectors.rows() == 0) {
    throw ShapeError("fixed_key: arguments need rows of equal width");
  }
  ad::RowVector key(2 * arg1_vectors.cols());
  key << arg1_vectors.colwise().mean(), arg2_vectors.colwise().mean();
  return key;
}

}  // namespace memrel
