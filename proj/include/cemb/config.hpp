// Flat key=value run configuration covering every hyperparameter.

#ifndef CEMB_CONFIG_HPP
#define CEMB_CONFIG_HPP

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "text_io.hpp"

namespace cemb {

enum class ConfigType { kInt, kReal, kBool, kString, kIntList };

struct ConfigKey {
  std::string name;
  ConfigType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices = {};  // for strings; empty = free
};

inline const std::vector<ConfigKey>& config_schema() {
  using T = ConfigType;
  static const std::vector<ConfigKey> keys = {
      {"seed", T::kInt, "1", "global seed; every stage draws a named substream"},
      {"workers", T::kInt, "1", "worker threads where a module allows racy updates (embed only)"},

      {"embed.dims", T::kInt, "50", "embedding dimensionality"},
      {"embed.window", T::kInt, "2", "context window radius"},
      {"embed.negatives", T::kInt, "5", "negative samples per event"},
      {"embed.lr", T::kReal, "0.025", "initial learning rate"},
      {"embed.min_lr", T::kReal, "0.0001", "final learning rate of the linear decay"},
      {"embed.epochs", T::kInt, "5", "passes over the corpus"},
      {"embed.min_count", T::kInt, "1", "vocabulary frequency cutoff"},
      {"embed.unigram_power", T::kReal, "1.0", "exponent on group unigram counts for negative sampling"},
      {"embed.word_group", T::kBool, "true", "predict context words"},
      {"embed.pos_group", T::kBool, "true", "predict POS tags"},
      {"embed.taxonomy_group", T::kBool, "true", "predict taxonomy concepts"},
      {"embed.ne_group", T::kBool, "true", "predict NE tags"},
      {"embed.word_offset_groups", T::kBool, "false", "one word group per offset instead of one shared group"},
      {"embed.cluster_ks", T::kIntList, "100,500", "k-means cluster counts for CRF features"},
      {"embed.cluster_iters", T::kInt, "100", "maximum Lloyd iterations"},

      {"fnet.dims", T::kInt, "300", "joint space dimensionality (joint mode, random label embeddings)"},
      {"fnet.K", T::kInt, "60", "prototypes per label"},
      {"fnet.mode", T::kString, "fixed", "label embedding training mode", {"joint", "fixed", "adaptive"}},
      {"fnet.label_emb", T::kString, "proto", "pretrained label embedding", {"proto", "hle", "proto-hle", "random"}},
      {"fnet.lambda", T::kReal, "0.001", "adaptive-mode weight of ||B - B~||^2"},
      {"fnet.lr", T::kReal, "0.1", "AdaGrad learning rate"},
      {"fnet.epochs", T::kInt, "5", "WARP training passes"},
      {"fnet.threshold", T::kReal, "0.5", "type inference relative threshold t"},
      {"fnet.topk", T::kInt, "0", "type inference candidates k (0 = hierarchy depth)"},
      {"fnet.hle_transitive", T::kBool, "false", "HLE codes mark every ancestor, not just the parent"},
      {"fnet.exact_rank_limit", T::kInt, "1000", "label count up to which WARP ranks are exact"},
      {"fnet.init_scale", T::kReal, "0.01", "uniform init range of feature embeddings"},
      {"fnet.lexical_init", T::kBool, "true", "start tok=/head= feature embeddings at their word vectors"},

      {"rerank.hidden", T::kInt, "200", "RBM hidden units"},
      {"rerank.w0", T::kReal, "1.0", "weight of the ASR log posterior (fixed)"},
      {"rerank.lr", T::kReal, "0.001", "discriminative learning rate"},
      {"rerank.epochs", T::kInt, "5", "discriminative passes"},
      {"rerank.lambda", T::kReal, "0.01", "entity prior weight"},
      {"rerank.literal_prior", T::kBool, "false", "use -lambda ln prod (P-1)^2 instead of -lambda sum ln P"},
      {"rerank.presence", T::kBool, "false", "presence instead of count features in discriminative training"},
      {"rerank.pretrain_lr", T::kReal, "0.01", "CD-1 learning rate"},
      {"rerank.pretrain_epochs", T::kInt, "5", "CD-1 passes"},
      {"rerank.alpha", T::kReal, "1.0", "late fusion weight of the SLP score"},
      {"rerank.slp_pairs", T::kInt, "100", "SLP pairs sampled per list"},
      {"rerank.slp_iterations", T::kInt, "10", "SLP passes"},
      {"rerank.slp_lr", T::kReal, "1.0", "SLP learning rate"},
      {"rerank.tfidf_threshold", T::kReal, "3.0", "keyword TF-IDF threshold"},
      {"rerank.nbest", T::kInt, "100", "hypotheses kept per list"},

      {"tsa.word_dims", T::kInt, "150", "word embedding size d_w"},
      {"tsa.hidden", T::kInt, "50", "LSTM hidden size per direction d_h"},
      {"tsa.concept_dims", T::kInt, "100", "concept embedding size d_c (when no concept file)"},
      {"tsa.attention_dims", T::kInt, "50", "attention hidden size d_m"},
      {"tsa.dropout", T::kReal, "0.5", "dropout after the embedding layer"},
      {"tsa.epochs", T::kInt, "10", "training epochs"},
      {"tsa.lr", T::kReal, "0.001", "Adam learning rate"},
      {"tsa.classes", T::kInt, "3", "polarity classes (3 or 4)"},
      {"tsa.target_averaging", T::kBool, "false", "uniform target attention (ablation)"},
      {"tsa.aspects", T::kString, "", "comma-separated aspect set (empty = from training data)"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  /// Type-checks and stores; unknown keys are rejected.
  void set(const std::string& key, const std::string& value, const std::string& where = "config") {
    const ConfigKey& k = schema(key, where);
    validate(k, value, where);
    values_[key] = value;
  }

  void merge_text(const std::string& text, const std::string& where) {
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      const std::string at = where + ":" + std::to_string(lineno);
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto start = line.find_first_not_of(" \t\r");
      if (start == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw InputError(at + ": expected key=value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), at);
    }
  }

  void merge_file(const std::string& path) { merge_text(read_file(path), path); }

  /// "key=value"
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "--set");
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("unknown config key " + key);
    return it->second;
  }
  long long integer(const std::string& key) const { return std::stoll(str(key)); }
  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }
  double real(const std::string& key) const { return std::stod(str(key)); }
  bool flag(const std::string& key) const { return str(key) == "true" || str(key) == "1"; }
  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& p : split_on(str(key), ','))
      if (!p.empty()) out.push_back(static_cast<std::size_t>(std::stoull(p)));
    return out;
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    for (auto& p : split_on(str(key), ','))
      if (!p.empty()) out.push_back(trim(p));
    return out;
  }

  /// Every key=value, sorted; a reproducible manifest of the run.
  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  static std::string help_text() {
    std::string out = "Config keys (file lines or --set key=value; flags win):\n";
    for (const auto& k : config_schema()) {
      out += "  " + k.name + " = " + (k.default_value.empty() ? "\"\"" : k.default_value) + "  " + k.help;
      if (!k.choices.empty()) {
        out += " {";
        for (std::size_t i = 0; i < k.choices.size(); ++i) out += (i ? "," : "") + k.choices[i];
        out += "}";
      }
      out += "\n";
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static const ConfigKey& schema(const std::string& key, const std::string& where) {
    for (const auto& k : config_schema())
      if (k.name == key) return k;
    throw InputError(where + ": unknown config key '" + key + "'");
  }

  static void validate(const ConfigKey& k, const std::string& v, const std::string& where) {
    const std::string at = where + ": " + k.name;
    switch (k.type) {
      case ConfigType::kInt:
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
          throw InputError(at + " expects a non-negative integer, got '" + v + "'");
        break;
      case ConfigType::kReal:
        parse_double(v, at);
        break;
      case ConfigType::kBool:
        if (v != "true" && v != "false" && v != "1" && v != "0")
          throw InputError(at + " expects true/false, got '" + v + "'");
        break;
      case ConfigType::kString:
        if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end())
          throw InputError(at + ": '" + v + "' is not an allowed value");
        break;
      case ConfigType::kIntList:
        for (const auto& p : split_on(v, ','))
          if (p.empty() || p.find_first_not_of("0123456789") != std::string::npos)
            throw InputError(at + " expects a comma-separated list of integers, got '" + v + "'");
        break;
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace cemb

#endif  // CEMB_CONFIG_HPP
