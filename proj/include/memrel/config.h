#pragma once

// Run configuration: hyperparameters plus file paths, read from a plain
// key=value file. Lines starting with '#' and blank lines are ignored.
// Unknown keys and malformed values raise UsageError naming the key.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "memrel/embedding.h"
#include "memrel/memory.h"

namespace memrel {

enum class KeyMode { kDynamic, kFixed };
enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  std::uint64_t seed = 1;
  int epochs = 15;
  int batch_size = 32;
  double learning_rate = 0.001;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int patience = 5;

  double lambda = 0.3;
  AttentionKind attention = AttentionKind::kDot;
  ResponseKind response = ResponseKind::kValue;
  CoefficientMode coefficients = CoefficientMode::kDynamic;
  KeyMode keys = KeyMode::kDynamic;
  // Write keys from the training forward pass, or from a separate
  // evaluation-mode pass over each batch.
  bool clean_key_pass = false;
  // Coefficient pass predicts with the mixed output, or with MLP_r alone.
  bool coefficients_from_baseline = false;
  bool exclude_self = false;
  double memory_fraction = 1.0;

  int max_length = 100;
  int layers = 2;
  int kernel_width = 3;
  bool shared_encoder = true;
  bool ffn_relu = true;
  EmbeddingConfig embedding;
  int bpe_merges = 1000;

  int hidden = 64;
  int mlp_depth = 2;
  double mlp_dropout = 0.5;
  double memory_dropout = 0.2;
  double embed_dropout = 0.0;
  bool connective_loss = true;

  // Throws UsageError for out-of-range or contradictory settings.
  void validate() const;
  int embed_dim() const { return embedding.embed_dim(); }
};

struct RunConfig {
  TrainConfig train;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string word_vectors_path;
  std::string contextual_path;
  std::string checkpoint_path;
  std::string report_path;
};

// Full-scale preset: hidden 2048, lr 0.0012.
TrainConfig full_scale_config();

// Applies one key=value setting.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings);
// Parses a configuration file's contents; `source` prefixes error messages.
std::map<std::string, std::string> parse_settings(std::istream& in, const std::string& source);
// Relative paths in the file resolve against the file's directory.
RunConfig load_config(const std::string& path);

// Every recognised key, in canonical order.
const std::vector<std::string>& config_keys();
// Canonical key=value rendering (hyperparameters only, or with paths).
std::map<std::string, std::string> to_settings(const RunConfig& config, bool with_paths);
std::string render_settings(const RunConfig& config, bool with_paths);

std::string to_string(AttentionKind kind);
std::string to_string(ResponseKind kind);
std::string to_string(CoefficientMode mode);
std::string to_string(KeyMode mode);

}  // namespace memrel
