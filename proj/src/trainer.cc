#include "memrel/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memrel/errors.h"
#include "memrel/optimizer.h"

namespace memrel {

using ad::Index;
using ad::Matrix;

namespace {

struct Snapshot {
  std::vector<Matrix> params;
  Matrix frozen_words;
  std::optional<MemoryStore> memory;
};

Snapshot take_snapshot(Model& model) {
  Snapshot s;
  for (const auto& e : model.params()) s.params.push_back(e.node->value());
  s.frozen_words = model.embedder().frozen_word_table();
  if (model.memory()) s.memory = *model.memory();
  return s;
}

void restore_snapshot(Model& model, const Snapshot& s) {
  std::size_t i = 0;
  for (const auto& e : model.params()) e.node->mutable_value() = s.params[i++];
  model.embedder().frozen_word_table() = s.frozen_words;
  if (s.memory) model.set_memory(*s.memory);
}

std::vector<const EncodedInstance*> pointers(std::span<const EncodedInstance> items, std::size_t begin,
                                             std::size_t end) {
  std::vector<const EncodedInstance*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&items[i]);
  return out;
}

}  // namespace

std::vector<int> argmax_rows(const Matrix& probabilities) {
  std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
  for (Index i = 0; i < probabilities.rows(); ++i) {
    Index best = 0;
    probabilities.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Matrix predict_probabilities(const Model& model, std::span<const EncodedInstance> instances,
                             int batch_size, bool baseline_only) {
  const int n_r = model.labels().num_relations();
  Matrix out(static_cast<Index>(instances.size()), n_r);
  ForwardOptions opts;
  opts.baseline_only = baseline_only;
  for (std::size_t b = 0; b < instances.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(instances.size(), b + static_cast<std::size_t>(batch_size));
    const auto ptrs = pointers(instances, b, e);
    ad::Graph g;
    auto fwd = model.forward(g, ptrs, opts);
    ad::Var probs = ad::ops::softmax_rows(g, fwd.relation_logits);
    out.middleRows(static_cast<Index>(b), static_cast<Index>(e - b)) = probs->value();
  }
  return out;
}

EvalReport evaluate(Model& model, const std::vector<Instance>& instances) {
  const auto enc = model.encode_all(instances);
  const auto pred = argmax_rows(predict_probabilities(model, enc, model.config().batch_size));
  std::vector<std::vector<int>> gold;
  for (const auto& e : enc) gold.push_back(e.gold);
  return evaluate_predictions(pred, gold, model.labels().num_relations());
}

std::vector<PredictionDetail> predict_detailed(const Model& model,
                                               std::span<const EncodedInstance> instances,
                                               int top_k, int batch_size) {
  std::vector<PredictionDetail> out;
  const MemoryStore* mem = model.uses_memory() ? model.memory() : nullptr;
  const Index k = mem ? std::min<Index>(std::max(top_k, 0), mem->size()) : 0;
  for (std::size_t b = 0; b < instances.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(instances.size(), b + static_cast<std::size_t>(batch_size));
    const auto ptrs = pointers(instances, b, e);
    ad::Graph g;
    auto fwd = model.forward(g, ptrs, {});
    const Matrix probs = ad::ops::softmax_rows(g, fwd.relation_logits)->value();
    for (Index i = 0; i < probs.rows(); ++i) {
      PredictionDetail d;
      d.distribution.assign(probs.row(i).data(), probs.row(i).data() + probs.cols());
      Index best = 0;
      probs.row(i).maxCoeff(&best);
      d.predicted = static_cast<int>(best);
      if (k > 0) {
        const auto w = fwd.retrieval.weights->value().row(i).cwiseProduct(mem->coefficients().row(0));
        std::vector<Index> slots(static_cast<std::size_t>(mem->size()));
        std::iota(slots.begin(), slots.end(), Index{0});
        std::partial_sort(slots.begin(), slots.begin() + k, slots.end(), [&](Index x, Index y) {
          return w(x) != w(y) ? w(x) > w(y) : x < y;
        });
        for (Index j = 0; j < k; ++j) {
          d.retrieved.push_back({slots[static_cast<std::size_t>(j)], w(slots[static_cast<std::size_t>(j)])});
        }
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

TrainResult train_model(Model& model, const std::vector<Instance>& train,
                        const std::vector<Instance>* dev, const TrainHooks& hooks) {
  const TrainConfig& cfg = model.config();
  TrainResult result;
  result.expanded = expand_multilabel(train);
  if (result.expanded.empty()) throw DataError("training set is empty");
  result.encoded = model.encode_all(result.expanded);
  auto& enc = result.encoded;
  model.build_memory(enc);
  MemoryStore* mem = model.memory();

  std::vector<EncodedInstance> dev_enc;
  std::vector<std::vector<int>> dev_gold;
  if (dev && !dev->empty()) {
    dev_enc = model.encode_all(*dev);
    for (const auto& e : dev_enc) dev_gold.push_back(e.gold);
  }

  // Stored instances in slot order for the coefficient pass.
  std::vector<EncodedInstance> slotted;
  if (mem) {
    slotted.resize(static_cast<std::size_t>(mem->size()));
    for (const auto& e : enc) {
      if (e.slot >= 0) slotted[static_cast<std::size_t>(e.slot)] = e;
    }
  }

  Optimizer opt(model.params(), {cfg.optimizer, cfg.learning_rate});
  std::vector<std::size_t> order(enc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_stream(cfg.seed, "shuffle");
  const bool write_keys = mem && !mem->keys_frozen();
  std::uint64_t step = 0;
  double best_dev = -1.0;
  int since_best = 0;
  Snapshot best;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    if (mem) mem->begin_epoch();
    shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t e = std::min(order.size(), b + batch);
      std::vector<const EncodedInstance*> ptrs;
      std::vector<int> rel;
      std::vector<int> conn;
      for (std::size_t i = b; i < e; ++i) {
        const EncodedInstance& x = enc[order[i]];
        ptrs.push_back(&x);
        rel.push_back(x.relation);
        conn.push_back(x.connective);
      }
      ++step;
      ad::Graph g;
      ForwardOptions opts;
      opts.train = true;
      opts.step = step;
      auto fwd = model.forward(g, ptrs, opts);
      ad::Var loss = joint_loss(g, fwd.relation_logits, rel, fwd.connective_logits, conn);
      if (!std::isfinite(loss->scalar())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(rec.batches + 1));
      }
      loss_sum += loss->scalar();
      ++rec.batches;
      if (write_keys) {
        Matrix r = fwd.r->value();
        if (cfg.clean_key_pass) {
          ad::Graph clean;
          r = model.forward(clean, ptrs, {}).r->value();
        }
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
          const Index slot = ptrs[i]->slot;
          if (slot < 0) continue;
          const auto row = static_cast<Index>(i);
          mem->update_key(slot, {r.row(row).data(), static_cast<std::size_t>(r.cols())});
          ++rec.keys_written;
          if (hooks.on_key_write) {
            hooks.on_key_write(epoch, slot, {mem->keys().row(slot).data(), static_cast<std::size_t>(r.cols())});
          }
        }
      }
      g.backward(loss);
      opt.step();
    }
    rec.train_loss = rec.batches ? loss_sum / static_cast<double>(rec.batches) : 0.0;

    if (mem) {
      const auto pred = argmax_rows(
          predict_probabilities(model, slotted, cfg.batch_size, cfg.coefficients_from_baseline));
      mem->assign_coefficients(pred, cfg.coefficients);
      for (Index s = 0; s < mem->size(); ++s) rec.correct_slots += mem->correct(s) ? 1 : 0;
      rec.train_accuracy = static_cast<double>(rec.correct_slots) / static_cast<double>(mem->size());
    }
    if (!dev_enc.empty()) {
      const auto pred = argmax_rows(predict_probabilities(model, dev_enc, cfg.batch_size));
      rec.dev = evaluate_predictions(pred, dev_gold, model.labels().num_relations());
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec, model);
    result.epochs.push_back(rec);

    if (rec.dev) {
      if (rec.dev->accuracy > best_dev) {
        best_dev = rec.dev->accuracy;
        result.best_epoch = epoch;
        best = take_snapshot(model);
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        result.stopped_early = epoch < cfg.epochs;
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (!dev_enc.empty() && result.best_epoch != result.epochs.back().epoch) restore_snapshot(model, best);
  return result;
}

}  // namespace memrel
