#include "memrel/checkpoint.h"

#include <fstream>
#include <sstream>

#include "memrel/binary_io.h"
#include "memrel/errors.h"

namespace memrel {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'R', 'E', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_strings(std::ostream& out, const std::vector<std::string>& v) {
  io::write_u64(out, v.size());
  for (const auto& s : v) io::write_string(out, s);
}

std::vector<std::string> read_strings(std::istream& in) {
  const auto n = io::read_u64(in);
  if (n > (1ULL << 31)) throw DataError("checkpoint: implausible list length");
  std::vector<std::string> v;
  v.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(io::read_string(in));
  return v;
}

}  // namespace

std::vector<SlotRecord> slot_records(const std::vector<Instance>& expanded,
                                     const std::vector<EncodedInstance>& encoded, ad::Index slots) {
  std::vector<SlotRecord> out(static_cast<std::size_t>(slots));
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const ad::Index s = encoded[i].slot;
    if (s < 0) continue;
    const Instance& inst = expanded[i];
    out[static_cast<std::size_t>(s)] = {inst.id, join_tokens(inst.arg1), join_tokens(inst.arg2),
                                        encoded[i].relation};
  }
  return out;
}

void save_checkpoint(const std::string& path, const Model& model, const std::vector<SlotRecord>& slots,
                     int best_epoch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  io::write_u32(out, kVersion);

  RunConfig rc;
  rc.train = model.config();
  rc.train.embedding.word_trainable = model.embedder().word_trainable();
  io::write_string(out, render_settings(rc, false));
  write_strings(out, model.labels().relations());
  write_strings(out, model.labels().connectives());
  write_strings(out, model.embedder().vocabulary().tokens());
  const BpeModel& bpe = model.embedder().bpe();
  io::write_u64(out, bpe.merges().size());
  for (const auto& [a, b] : bpe.merges()) {
    io::write_string(out, a);
    io::write_string(out, b);
  }
  write_strings(out, bpe.symbols());

  io::write_u64(out, model.params().size());
  for (const auto& e : model.params()) {
    io::write_string(out, e.name);
    io::write_matrix(out, e.node->value());
  }
  io::write_matrix(out, model.embedder().word_trainable() ? ad::Matrix() : model.embedder().word_table());
  io::write_matrix(out, model.fixed_table());

  io::write_u32(out, model.memory() ? 1 : 0);
  if (model.memory()) model.memory()->save(out);
  io::write_u64(out, slots.size());
  for (const auto& s : slots) {
    io::write_string(out, s.id);
    io::write_string(out, s.arg1);
    io::write_string(out, s.arg2);
    io::write_i64(out, s.relation);
  }
  io::write_i64(out, best_epoch);
  if (!out) throw DataError("error writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path, const ContextualStore* contextual) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kMagic)) {
    throw DataError(path + " is not a checkpoint file");
  }
  const auto version = io::read_u32(in);
  if (version != kVersion) {
    throw DataError("checkpoint " + path + " has unsupported version " + std::to_string(version));
  }

  RunConfig rc;
  std::istringstream settings(io::read_string(in));
  apply_settings(rc, parse_settings(settings, path));
  auto relations = read_strings(in);
  auto connectives = read_strings(in);
  LabelSpace labels(std::move(relations), std::move(connectives));
  labels.fix();
  Vocabulary vocab;
  for (const auto& t : read_strings(in)) vocab.add(t);
  const auto n_merges = io::read_u64(in);
  if (n_merges > (1ULL << 31)) throw DataError("checkpoint: implausible merge count");
  std::vector<BpeModel::Merge> merges;
  for (std::uint64_t i = 0; i < n_merges; ++i) {
    std::string a = io::read_string(in);
    merges.emplace_back(std::move(a), io::read_string(in));
  }
  BpeModel bpe(std::move(merges), read_strings(in));

  Checkpoint ck;
  ck.model = std::make_unique<Model>(rc.train, labels, std::move(vocab), std::move(bpe), nullptr, contextual);
  Model& model = *ck.model;
  const auto n_params = io::read_u64(in);
  if (n_params != model.params().size()) {
    throw DataError("checkpoint " + path + " holds " + std::to_string(n_params) + " parameters, model has " +
                    std::to_string(model.params().size()));
  }
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = io::read_string(in);
    ad::Matrix value = io::read_matrix(in);
    if (!model.params().contains(name)) throw DataError("checkpoint parameter " + name + " is unknown");
    ad::Var p = model.params().get(name);
    if (p->value().rows() != value.rows() || p->value().cols() != value.cols()) {
      throw DataError("checkpoint parameter " + name + " has the wrong shape");
    }
    p->mutable_value() = std::move(value);
  }
  ad::Matrix frozen = io::read_matrix(in);
  if (!model.embedder().word_trainable()) model.embedder().frozen_word_table() = std::move(frozen);
  model.set_fixed_table(io::read_matrix(in));
  if (io::read_u32(in)) model.set_memory(MemoryStore::load(in));
  const auto n_slots = io::read_u64(in);
  if (n_slots > (1ULL << 31)) throw DataError("checkpoint: implausible slot count");
  for (std::uint64_t i = 0; i < n_slots; ++i) {
    SlotRecord s;
    s.id = io::read_string(in);
    s.arg1 = io::read_string(in);
    s.arg2 = io::read_string(in);
    s.relation = static_cast<int>(io::read_i64(in));
    ck.slots.push_back(std::move(s));
  }
  ck.best_epoch = static_cast<int>(io::read_i64(in));
  return ck;
}

}  // namespace memrel
