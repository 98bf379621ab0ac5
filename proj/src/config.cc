#include "memrel/config.h"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "memrel/errors.h"

namespace memrel {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw UsageError("invalid value '" + value + "' for key '" + key + "' (expected " + expected + ")");
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::string real_str(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string key;
  bool is_path;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field int_field(const std::string& key, T TrainConfig::*member) {
  return {key, false,
          [key, member](RunConfig& c, const std::string& v) {
            c.train.*member = static_cast<T>(parse_int(key, v));
          },
          [member](const RunConfig& c) { return std::to_string(c.train.*member); }};
}

Field real_field(const std::string& key, double TrainConfig::*member) {
  return {key, false,
          [key, member](RunConfig& c, const std::string& v) { c.train.*member = parse_real(key, v); },
          [member](const RunConfig& c) { return real_str(c.train.*member); }};
}

Field bool_field(const std::string& key, bool TrainConfig::*member) {
  return {key, false,
          [key, member](RunConfig& c, const std::string& v) { c.train.*member = parse_bool(key, v); },
          [member](const RunConfig& c) { return bool_str(c.train.*member); }};
}

Field embed_int_field(const std::string& key, int EmbeddingConfig::*member) {
  return {key, false,
          [key, member](RunConfig& c, const std::string& v) {
            c.train.embedding.*member = static_cast<int>(parse_int(key, v));
          },
          [member](const RunConfig& c) { return std::to_string(c.train.embedding.*member); }};
}

Field path_field(const std::string& key, std::string RunConfig::*member) {
  return {key, true, [member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

template <typename E>
Field enum_field(const std::string& key, E TrainConfig::*member,
                 std::vector<std::pair<std::string, E>> names) {
  std::string expected;
  for (const auto& [n, e] : names) expected += (expected.empty() ? "" : "|") + n;
  return {key, false,
          [key, member, names, expected](RunConfig& c, const std::string& v) {
            for (const auto& [n, e] : names) {
              if (n == v) {
                c.train.*member = e;
                return;
              }
            }
            bad_value(key, v, expected.c_str());
          },
          [member, names](const RunConfig& c) {
            for (const auto& [n, e] : names) {
              if (e == c.train.*member) return n;
            }
            return std::string("?");
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", false,
                 [](RunConfig& c, const std::string& v) {
                   const long long s = parse_int("seed", v);
                   if (s < 0) bad_value("seed", v, "a non-negative integer");
                   c.train.seed = static_cast<std::uint64_t>(s);
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    f.push_back(int_field("epochs", &TrainConfig::epochs));
    f.push_back(int_field("batch_size", &TrainConfig::batch_size));
    f.push_back(real_field("learning_rate", &TrainConfig::learning_rate));
    f.push_back(enum_field<OptimizerKind>("optimizer", &TrainConfig::optimizer,
                                          {{"adam", OptimizerKind::kAdam}, {"sgd", OptimizerKind::kSgd}}));
    f.push_back(int_field("patience", &TrainConfig::patience));
    f.push_back(real_field("lambda", &TrainConfig::lambda));
    f.push_back(enum_field<AttentionKind>(
        "attention", &TrainConfig::attention,
        {{"dot", AttentionKind::kDot}, {"biaffine", AttentionKind::kBiaffine}}));
    f.push_back(enum_field<ResponseKind>("response", &TrainConfig::response,
                                         {{"baseline", ResponseKind::kBaseline},
                                          {"value", ResponseKind::kValue},
                                          {"key", ResponseKind::kKey}}));
    f.push_back(enum_field<CoefficientMode>(
        "coefficients", &TrainConfig::coefficients,
        {{"dynamic", CoefficientMode::kDynamic}, {"balance", CoefficientMode::kBalance}}));
    f.push_back(enum_field<KeyMode>("keys", &TrainConfig::keys,
                                    {{"dynamic", KeyMode::kDynamic}, {"fixed", KeyMode::kFixed}}));
    f.push_back(bool_field("clean_key_pass", &TrainConfig::clean_key_pass));
    f.push_back(bool_field("coefficients_from_baseline", &TrainConfig::coefficients_from_baseline));
    f.push_back(bool_field("exclude_self", &TrainConfig::exclude_self));
    f.push_back(real_field("memory_fraction", &TrainConfig::memory_fraction));
    f.push_back(int_field("max_length", &TrainConfig::max_length));
    f.push_back(int_field("layers", &TrainConfig::layers));
    f.push_back(int_field("kernel_width", &TrainConfig::kernel_width));
    f.push_back(bool_field("shared_encoder", &TrainConfig::shared_encoder));
    f.push_back(bool_field("ffn_relu", &TrainConfig::ffn_relu));
    f.push_back(embed_int_field("word_dim", &EmbeddingConfig::word_dim));
    f.push_back(embed_int_field("subword_dim", &EmbeddingConfig::subword_dim));
    f.push_back(embed_int_field("contextual_dim", &EmbeddingConfig::contextual_dim));
    f.push_back(embed_int_field("contextual_input_dim", &EmbeddingConfig::contextual_input_dim));
    f.push_back(embed_int_field("subword_embed_dim", &EmbeddingConfig::subword_embed_dim));
    f.push_back({"subword_kernels", false,
                 [](RunConfig& c, const std::string& v) {
                   std::vector<int> widths;
                   std::stringstream in(v);
                   std::string part;
                   while (std::getline(in, part, ',')) {
                     widths.push_back(static_cast<int>(parse_int("subword_kernels", trim(part))));
                   }
                   if (widths.empty()) bad_value("subword_kernels", v, "a comma-separated list");
                   c.train.embedding.subword_kernels = widths;
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (int w : c.train.embedding.subword_kernels) {
                     out += (out.empty() ? "" : ",") + std::to_string(w);
                   }
                   return out;
                 }});
    f.push_back(embed_int_field("highway_layers", &EmbeddingConfig::highway_layers));
    f.push_back({"word_trainable", false,
                 [](RunConfig& c, const std::string& v) {
                   if (v == "auto") {
                     c.train.embedding.word_trainable.reset();
                   } else {
                     c.train.embedding.word_trainable = parse_bool("word_trainable", v);
                   }
                 },
                 [](const RunConfig& c) {
                   const auto& t = c.train.embedding.word_trainable;
                   return t ? bool_str(*t) : std::string("auto");
                 }});
    f.push_back(int_field("bpe_merges", &TrainConfig::bpe_merges));
    f.push_back(int_field("hidden", &TrainConfig::hidden));
    f.push_back(int_field("mlp_depth", &TrainConfig::mlp_depth));
    f.push_back(real_field("mlp_dropout", &TrainConfig::mlp_dropout));
    f.push_back(real_field("memory_dropout", &TrainConfig::memory_dropout));
    f.push_back(real_field("embed_dropout", &TrainConfig::embed_dropout));
    f.push_back(bool_field("connective_loss", &TrainConfig::connective_loss));
    f.push_back(path_field("train", &RunConfig::train_path));
    f.push_back(path_field("dev", &RunConfig::dev_path));
    f.push_back(path_field("test", &RunConfig::test_path));
    f.push_back(path_field("word_vectors", &RunConfig::word_vectors_path));
    f.push_back(path_field("contextual", &RunConfig::contextual_path));
    f.push_back(path_field("checkpoint", &RunConfig::checkpoint_path));
    f.push_back(path_field("report", &RunConfig::report_path));
    return f;
  }();
  return table;
}

void check_rate(const char* key, double v, bool allow_one) {
  if (!(v >= 0.0) || (allow_one ? v > 1.0 : v >= 1.0)) {
    throw UsageError(std::string(key) + " must lie in [0, 1" + (allow_one ? "]" : ")"));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw UsageError("learning_rate must be > 0");
  if (patience < 1) throw UsageError("patience must be >= 1");
  check_rate("lambda", lambda, true);
  check_rate("mlp_dropout", mlp_dropout, false);
  check_rate("memory_dropout", memory_dropout, false);
  check_rate("embed_dropout", embed_dropout, false);
  if (!(memory_fraction > 0.0 && memory_fraction <= 1.0)) {
    throw UsageError("memory_fraction must lie in (0, 1]");
  }
  if (keys == KeyMode::kFixed && response != ResponseKind::kValue) {
    throw UsageError("keys=fixed can only be used with response=value");
  }
  if (max_length < 1) throw UsageError("max_length must be >= 1");
  if (layers < 1) throw UsageError("layers must be >= 1");
  if (kernel_width < 1) throw UsageError("kernel_width must be >= 1");
  if (hidden < 1) throw UsageError("hidden must be >= 1");
  if (mlp_depth < 0) throw UsageError("mlp_depth must be >= 0");
  if (bpe_merges < 0) throw UsageError("bpe_merges must be >= 0");
  embedding.validate();
}

TrainConfig full_scale_config() {
  TrainConfig c;
  c.hidden = 2048;
  c.learning_rate = 0.0012;
  c.lambda = 0.3;
  c.memory_dropout = 0.2;
  c.max_length = 100;
  return c;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw UsageError("unknown configuration key '" + key + "'");
}

void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings) {
  // Table order, so results do not depend on map iteration.
  for (const auto& f : fields()) {
    auto it = settings.find(f.key);
    if (it != settings.end()) f.set(config, it->second);
  }
  for (const auto& [k, v] : settings) {
    bool known = false;
    for (const auto& f : fields()) known = known || f.key == k;
    if (!known) throw UsageError("unknown configuration key '" + k + "'");
  }
}

std::map<std::string, std::string> parse_settings(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    bool known = false;
    for (const auto& f : fields()) known = known || f.key == key;
    if (!known) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": unknown configuration key '" + key + "'");
    }
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  RunConfig config;
  apply_settings(config, parse_settings(in, path));
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&config.train_path, &config.dev_path, &config.test_path, &config.word_vectors_path,
                         &config.contextual_path, &config.checkpoint_path, &config.report_path}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return config;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

std::map<std::string, std::string> to_settings(const RunConfig& config, bool with_paths) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) {
    if (!f.is_path || with_paths) out[f.key] = f.get(config);
  }
  return out;
}

std::string render_settings(const RunConfig& config, bool with_paths) {
  std::string out;
  for (const auto& f : fields()) {
    if (f.is_path && !with_paths) continue;
    out += f.key + "=" + f.get(config) + "\n";
  }
  return out;
}

std::string to_string(AttentionKind kind) { return kind == AttentionKind::kDot ? "dot" : "biaffine"; }

std::string to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::kBaseline: return "baseline";
    case ResponseKind::kValue: return "value";
    case ResponseKind::kKey: return "key";
  }
  return "?";
}

std::string to_string(CoefficientMode mode) {
  return mode == CoefficientMode::kDynamic ? "dynamic" : "balance";
}

std::string to_string(KeyMode mode) { return mode == KeyMode::kDynamic ? "dynamic" : "fixed"; }

}  // namespace memrel
