// Fine-grained entity typing with label embeddings.
//
// A mention's sparse features x and a label y meet in a joint space through
// the bilinear score f(x, y) = (A x) . (B e_y), trained with the WARP ranking
// loss. B is learned (joint), held at a pretrained label embedding (fixed),
// or pulled toward it by a Frobenius regularizer (adaptive). Pretrained
// label embeddings come from prototype mentions (ProtoLE), the type
// hierarchy (HLE), or both (Proto-HLE).

#ifndef CEMB_FNET_HPP
#define CEMB_FNET_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "embed.hpp"
#include "json.hpp"
#include "log.hpp"
#include "metrics.hpp"
#include "numerics.hpp"
#include "text_io.hpp"

namespace cemb::fnet {

// ---------------------------------------------------------------------------
// Label hierarchy

/// Type tree given as path strings ("/PERSON/ARTIST"). Level 1 is the
/// coarsest.
class LabelHierarchy {
 public:
  LabelHierarchy() = default;

  /// Every non-root path must have its parent path in the list.
  explicit LabelHierarchy(const std::vector<std::string>& paths) {
    for (const auto& p : paths) {
      if (p.size() < 2 || p[0] != '/' || p.back() == '/' || p.find("//") != std::string::npos)
        throw InputError("hierarchy: malformed label path '" + p + "'");
      if (ids_.count(p)) throw InputError("hierarchy: duplicate label '" + p + "'");
      ids_[p] = labels_.size();
      labels_.push_back(p);
    }
    parent_.assign(labels_.size(), std::nullopt);
    level_.assign(labels_.size(), 1);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      const auto& p = labels_[i];
      level_[i] = static_cast<std::size_t>(std::count(p.begin(), p.end(), '/'));
      const auto cut = p.rfind('/');
      if (cut == 0) continue;
      const auto parent = p.substr(0, cut);
      auto it = ids_.find(parent);
      if (it == ids_.end()) throw InputError("hierarchy: parent '" + parent + "' of '" + p + "' is missing");
      parent_[i] = it->second;
    }
  }

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t id) const { return labels_.at(id); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<std::size_t> parent(std::size_t id) const { return parent_.at(id); }
  std::size_t level(std::size_t id) const { return level_.at(id); }
  std::size_t max_depth() const { return labels_.empty() ? 0 : *std::max_element(level_.begin(), level_.end()); }

  std::optional<std::size_t> find(const std::string& path) const {
    auto it = ids_.find(path);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t id(const std::string& path) const {
    auto it = ids_.find(path);
    if (it == ids_.end()) throw InputError("unknown label '" + path + "'");
    return it->second;
  }

  /// Root-to-label path (ids), the label itself last.
  std::vector<std::size_t> path(std::size_t id) const {
    std::vector<std::size_t> out{id};
    while (parent_[out.back()]) out.push_back(*parent_[out.back()]);
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::vector<std::size_t> ancestors(std::size_t id) const {
    auto p = path(id);
    p.pop_back();
    return p;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::size_t> level_;
  std::unordered_map<std::string, std::size_t> ids_;
};

inline LabelHierarchy parse_hierarchy(const std::string& text) {
  std::vector<std::string> paths;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) paths.push_back(line);
  }
  return LabelHierarchy(paths);
}

inline LabelHierarchy load_hierarchy(const std::string& path) { return parse_hierarchy(read_file(path)); }

inline std::string serialize_hierarchy(const LabelHierarchy& h) {
  std::string out;
  for (const auto& l : h.labels()) out += l + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Mentions and features

struct MentionInstance {
  std::vector<std::string> tokens;
  std::size_t start = 0;  // mention span [start, end)
  std::size_t end = 0;
  std::vector<std::string> labels;
  std::vector<std::string> pos;                                  // optional, per token
  std::vector<std::pair<std::string, std::string>> dependencies;  // optional (relation, other word) of the head

  /// Last mention token, lower-cased.
  std::string head() const { return to_lower(tokens.at(end - 1)); }
  std::string mention_string() const {
    std::string s;
    for (std::size_t i = start; i < end; ++i) s += (i > start ? " " : "") + tokens[i];
    return s;
  }
};

inline void validate_mention(const MentionInstance& m, const std::string& where) {
  if (m.tokens.empty()) throw InputError(where + ": no tokens");
  if (!(m.start < m.end && m.end <= m.tokens.size())) throw InputError(where + ": bad mention span");
  if (!m.pos.empty() && m.pos.size() != m.tokens.size()) throw InputError(where + ": pos length mismatch");
}

inline MentionInstance mention_from_json(const nlohmann::json& j, const std::string& where) {
  MentionInstance m;
  try {
    m.tokens = j.at("tokens").get<std::vector<std::string>>();
    m.start = j.at("start").get<std::size_t>();
    m.end = j.at("end").get<std::size_t>();
    if (j.contains("labels")) m.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("pos")) m.pos = j.at("pos").get<std::vector<std::string>>();
    if (j.contains("deps"))
      for (const auto& d : j.at("deps")) m.dependencies.emplace_back(d.at(0).get<std::string>(), d.at(1).get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(where + ": " + e.what());
  }
  validate_mention(m, where);
  return m;
}

inline nlohmann::json mention_to_json(const MentionInstance& m) {
  nlohmann::ordered_json j;
  j["tokens"] = m.tokens;
  j["start"] = m.start;
  j["end"] = m.end;
  j["labels"] = m.labels;
  if (!m.pos.empty()) j["pos"] = m.pos;
  if (!m.dependencies.empty()) {
    nlohmann::json deps = nlohmann::json::array();
    for (const auto& [r, w] : m.dependencies) deps.push_back({r, w});
    j["deps"] = deps;
  }
  return j;
}

inline std::vector<MentionInstance> parse_mentions(const std::string& text, const std::string& where = "mentions") {
  std::vector<MentionInstance> out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(mention_from_json(j, where + ":" + std::to_string(lineno)));
  }
  return out;
}

inline std::vector<MentionInstance> load_mentions(const std::string& path) { return parse_mentions(read_file(path), path); }

inline std::string serialize_mentions(const std::vector<MentionInstance>& ms) {
  std::string out;
  for (const auto& m : ms) out += mention_to_json(m).dump() + "\n";
  return out;
}

/// Maps characters to A (upper), a (lower), 0 (digit), - (other) and
/// collapses runs: "Barack" -> "Aa", "B-52" -> "A-0".
inline std::string word_shape(const std::string& w) {
  std::string out;
  for (unsigned char c : w) {
    char s = std::isupper(c) ? 'A' : std::islower(c) ? 'a' : std::isdigit(c) ? '0' : '-';
    if (out.empty() || out.back() != s) out.push_back(s);
  }
  return out;
}

/// Optional resources for mention features.
struct MentionResources {
  const std::unordered_map<std::string, std::string>* clusters = nullptr;  // head word -> cluster id
  int context_window = 2;
};

/// Feature strings of a mention: tokens, head, head cluster, POS, lower-cased
/// character trigrams of the head, word shape, context unigrams/bigrams and
/// head dependencies. Optional inputs that are absent emit nothing.
inline std::vector<std::string> mention_feature_strings(const MentionInstance& m, const MentionResources& res = {}) {
  std::vector<std::string> f;
  for (std::size_t i = m.start; i < m.end; ++i) f.push_back("tok=" + to_lower(m.tokens[i]));
  const std::string head = m.head();
  f.push_back("head=" + head);
  if (res.clusters) {
    auto it = res.clusters->find(head);
    if (it != res.clusters->end()) f.push_back("cluster=" + it->second);
  }
  if (!m.pos.empty()) {
    std::string tags;
    for (std::size_t i = m.start; i < m.end; ++i) tags += (i > m.start ? "_" : "") + m.pos[i];
    f.push_back("pos=" + tags);
  }
  for (std::size_t i = 0; i + 3 <= head.size(); ++i) f.push_back("tri=" + head.substr(i, 3));
  std::string shape;
  for (std::size_t i = m.start; i < m.end; ++i) shape += (i > m.start ? "_" : "") + word_shape(m.tokens[i]);
  f.push_back("shape=" + shape);
  const int w = res.context_window;
  const int s = static_cast<int>(m.start), e = static_cast<int>(m.end), n = static_cast<int>(m.tokens.size());
  auto tok = [&](int i) { return to_lower(m.tokens[static_cast<std::size_t>(i)]); };
  for (int i = std::max(0, s - w); i < s; ++i) f.push_back("ctx=" + tok(i));
  for (int i = e; i < std::min(n, e + w); ++i) f.push_back("ctx=" + tok(i));
  if (s >= 2) f.push_back("ctx2=" + tok(s - 2) + "_" + tok(s - 1));
  if (e + 2 <= n) f.push_back("ctx2=" + tok(e) + "_" + tok(e + 1));
  for (const auto& [rel, other] : m.dependencies) f.push_back("dep=" + rel + "_" + to_lower(other));
  for (auto& s2 : f) std::replace_if(s2.begin(), s2.end(), [](unsigned char c) { return std::isspace(c); }, '_');
  return f;
}

/// Feature string -> dense id. Grows while open; a frozen dictionary drops
/// unseen strings.
class FeatureDictionary {
 public:
  std::optional<std::size_t> id(const std::string& f) {
    auto it = ids_.find(f);
    if (it != ids_.end()) return it->second;
    if (frozen_) return std::nullopt;
    ids_[f] = names_.size();
    names_.push_back(f);
    return names_.size() - 1;
  }
  std::optional<std::size_t> find(const std::string& f) const {
    auto it = ids_.find(f);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  void freeze() { frozen_ = true; }
  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }

  static FeatureDictionary from_names(const std::vector<std::string>& names) {
    FeatureDictionary d;
    for (const auto& n : names) d.id(n);
    d.freeze();
    return d;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> ids_;
  bool frozen_ = false;
};

/// Binary sparse feature vector of a mention.
inline SparseVector extract_mention_features(const MentionInstance& m, FeatureDictionary& dict,
                                             const MentionResources& res = {}) {
  std::vector<SparseVector::Entry> entries;
  std::set<std::size_t> seen;
  for (const auto& f : mention_feature_strings(m, res))
    if (auto id = dict.id(f); id && seen.insert(*id).second) entries.emplace_back(*id, 1.0);
  return SparseVector::from_entries(std::move(entries));
}

// ---------------------------------------------------------------------------
// Prototypes

/// Co-occurrence counts of (label, mention head) events.
struct CooccurrenceTable {
  std::map<std::string, double> label_counts;
  std::map<std::string, double> mention_counts;
  std::map<std::pair<std::string, std::string>, double> joint_counts;
  double total = 0.0;

  void add(const std::string& label, const std::string& mention, double n = 1.0) {
    label_counts[label] += n;
    mention_counts[mention] += n;
    joint_counts[{label, mention}] += n;
    total += n;
  }

  double joint(const std::string& label, const std::string& mention) const {
    auto it = joint_counts.find({label, mention});
    return it == joint_counts.end() ? 0.0 : it->second;
  }
};

/// NPMI(y, m) = ln(p(y,m) / (p(y) p(m))) / -ln p(y,m); -1 when the pair
/// never co-occurs, 1 when p(y,m) = 1.
inline double npmi(const CooccurrenceTable& t, const std::string& label, const std::string& mention) {
  const double joint = t.joint(label, mention);
  if (joint <= 0.0) return -1.0;
  const double pym = joint / t.total;
  const double py = t.label_counts.at(label) / t.total;
  const double pm = t.mention_counts.at(mention) / t.total;
  if (pym >= 1.0) return 1.0;
  return std::log(pym / (py * pm)) / -std::log(pym);
}

struct Prototype {
  std::string word;
  double score;
};

/// Label path -> ranked prototype head words.
using PrototypeTable = std::map<std::string, std::vector<Prototype>>;

inline CooccurrenceTable count_label_heads(const std::vector<MentionInstance>& data) {
  CooccurrenceTable t;
  for (const auto& m : data)
    for (const auto& y : m.labels) t.add(y, m.head());
  return t;
}

/// Top-K heads by NPMI per label (ties lexicographic). `manual` lists replace
/// the NPMI list for their labels and are the only source for labels absent
/// from `data`.
inline PrototypeTable select_prototypes(const std::vector<MentionInstance>& data, const LabelHierarchy& hierarchy,
                                        std::size_t k, const std::map<std::string, std::vector<std::string>>& manual = {}) {
  if (k == 0) throw InputError("select_prototypes: K must be positive");
  const auto counts = count_label_heads(data);
  for (const auto& m : data)
    for (const auto& y : m.labels)
      if (!hierarchy.find(y)) throw InputError("select_prototypes: label '" + y + "' is not in the hierarchy");
  std::map<std::string, std::vector<std::string>> heads_by_label;
  for (const auto& [key, n] : counts.joint_counts) heads_by_label[key.first].push_back(key.second);

  PrototypeTable table;
  for (const auto& label : hierarchy.labels()) {
    if (auto it = manual.find(label); it != manual.end()) {
      std::vector<Prototype> ps;
      for (const auto& w : it->second) ps.push_back({w, counts.joint(label, w) > 0 ? npmi(counts, label, w) : 1.0});
      if (ps.size() > k) ps.resize(k);
      table[label] = std::move(ps);
      continue;
    }
    auto hit = heads_by_label.find(label);
    if (hit == heads_by_label.end())
      throw InputError("select_prototypes: label '" + label + "' has no mentions and no manual prototypes");
    std::vector<Prototype> ps;
    for (const auto& h : hit->second) ps.push_back({h, npmi(counts, label, h)});
    std::sort(ps.begin(), ps.end(), [](const Prototype& a, const Prototype& b) {
      return a.score != b.score ? a.score > b.score : a.word < b.word;
    });
    if (ps.size() > k) ps.resize(k);
    table[label] = std::move(ps);
  }
  return table;
}

/// Lines `label<TAB>w1,w2,...`.
inline std::string serialize_prototypes(const PrototypeTable& t) {
  std::string out;
  for (const auto& [label, ps] : t) {
    out += label + "\t";
    for (std::size_t i = 0; i < ps.size(); ++i) out += (i ? "," : "") + ps[i].word;
    out += "\n";
  }
  return out;
}

inline std::map<std::string, std::vector<std::string>> parse_prototype_lists(const std::string& text,
                                                                              const std::string& where = "prototypes") {
  std::map<std::string, std::vector<std::string>> out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 2 || cols[0].empty())
      throw InputError(where + ":" + std::to_string(lineno) + ": expected 'label<TAB>w1,w2,...'");
    std::vector<std::string> ws;
    for (auto& w : split_on(cols[1], ','))
      if (!w.empty()) ws.push_back(w);
    if (ws.empty()) throw InputError(where + ":" + std::to_string(lineno) + ": empty prototype list");
    out[cols[0]] = std::move(ws);
  }
  return out;
}

inline PrototypeTable to_prototype_table(const std::map<std::string, std::vector<std::string>>& lists) {
  PrototypeTable t;
  for (const auto& [label, ws] : lists)
    for (const auto& w : ws) t[label].push_back({w, 1.0});
  return t;
}

// ---------------------------------------------------------------------------
// Label embeddings

enum class LabelEmbeddingKind { kProtoLE, kHLE, kProtoHLE, kRandom };

inline const char* kind_name(LabelEmbeddingKind k) {
  switch (k) {
    case LabelEmbeddingKind::kProtoLE: return "proto";
    case LabelEmbeddingKind::kHLE: return "hle";
    case LabelEmbeddingKind::kProtoHLE: return "proto-hle";
    case LabelEmbeddingKind::kRandom: return "random";
  }
  return "?";
}

/// D x N matrix; column i embeds label i. HLE is N x N (row i = label i's
/// binary code, used with D = N).
struct LabelEmbeddingMatrix {
  LabelEmbeddingKind kind;
  Matrix values;
};

/// Column i = mean embedding of label i's distinct in-vocabulary prototype
/// head words.
inline LabelEmbeddingMatrix proto_le(const PrototypeTable& prototypes, const EmbeddingSet& emb,
                                     const LabelHierarchy& hierarchy) {
  std::unordered_map<std::string, std::size_t> rows;
  for (std::size_t i = 0; i < emb.tokens.size(); ++i) rows.emplace(emb.tokens[i], i);
  LabelEmbeddingMatrix out{LabelEmbeddingKind::kProtoLE, Matrix(emb.dims(), hierarchy.size())};
  for (std::size_t y = 0; y < hierarchy.size(); ++y) {
    const auto& label = hierarchy.label(y);
    auto it = prototypes.find(label);
    if (it == prototypes.end() || it->second.empty()) throw InputError("proto_le: no prototypes for '" + label + "'");
    std::set<std::string> seen;
    std::size_t used = 0;
    Vector acc(emb.dims(), 0.0);
    for (const auto& p : it->second) {
      if (!seen.insert(p.word).second) continue;
      auto r = rows.find(p.word);
      if (r == rows.end()) {
        warn("proto_le: prototype '" + p.word + "' of '" + label + "' has no embedding, skipped");
        continue;
      }
      axpy(1.0, emb.word_vectors.row(r->second), acc);
      ++used;
    }
    if (used == 0) throw InputError("proto_le: every prototype of '" + label + "' is out of vocabulary");
    for (std::size_t d = 0; d < acc.size(); ++d) out.values(d, y) = acc[d] / static_cast<double>(used);
  }
  return out;
}

/// B^H_ij = 1 iff i == j or label j is the parent of label i (every ancestor
/// when `transitive`).
inline LabelEmbeddingMatrix hle(const LabelHierarchy& h, bool transitive = false) {
  LabelEmbeddingMatrix out{LabelEmbeddingKind::kHLE, Matrix::identity(h.size())};
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (transitive) {
      for (std::size_t a : h.ancestors(i)) out.values(i, a) = 1.0;
    } else if (auto p = h.parent(i)) {
      out.values(i, *p) = 1.0;
    }
  }
  return out;
}

/// B^HP = B^P (B^H)^T: each label's ProtoLE vector plus its parent's.
inline LabelEmbeddingMatrix proto_hle(const LabelEmbeddingMatrix& proto, const LabelEmbeddingMatrix& hier) {
  if (hier.values.rows() != hier.values.cols() || proto.values.cols() != hier.values.rows())
    throw std::invalid_argument("proto_hle: expected D x N and N x N matrices");
  return {LabelEmbeddingKind::kProtoHLE, matmul(proto.values, hier.values.transposed())};
}

inline LabelEmbeddingMatrix random_label_embedding(std::size_t dims, std::size_t n, Rng rng) {
  LabelEmbeddingMatrix out{LabelEmbeddingKind::kRandom, Matrix(dims, n)};
  const double s = 1.0 / std::sqrt(static_cast<double>(dims));
  for (double& v : out.values.data()) v = s * rng.normal();
  return out;
}

/// Label embeddings on disk: one row per label (N x D), label paths as row
/// labels.
inline std::string serialize_label_embedding(const LabelEmbeddingMatrix& b, const LabelHierarchy& h) {
  std::ostringstream out;
  out << "#cemb label-embedding\n#meta kind " << kind_name(b.kind) << "\n#matrix B\n";
  write_matrix_block(out, {h.labels(), b.values.transposed()});
  return out.str();
}

inline LabelEmbeddingMatrix parse_label_embedding(const std::string& text, const LabelHierarchy& h,
                                                  const std::string& where = "label embedding") {
  const auto f = ModelFile::parse(text, where);
  if (f.kind != "label-embedding") throw InputError(where + ": not a label embedding file");
  const auto& blk = f.block("B");
  if (blk.labels != h.labels()) throw InputError(where + ": label rows do not match the hierarchy");
  const auto& kind = f.meta_value("kind");
  LabelEmbeddingKind k = kind == "proto" ? LabelEmbeddingKind::kProtoLE
                         : kind == "hle" ? LabelEmbeddingKind::kHLE
                         : kind == "proto-hle" ? LabelEmbeddingKind::kProtoHLE
                                               : LabelEmbeddingKind::kRandom;
  return {k, blk.values.transposed()};
}

// ---------------------------------------------------------------------------
// Joint embedding model

/// A: D x M feature embedding, B: D x N label embedding.
struct JointEmbeddingModel {
  Matrix A;
  Matrix B;

  std::size_t dims() const { return A.rows(); }
  std::size_t num_features() const { return A.cols(); }
  std::size_t num_labels() const { return B.cols(); }

  /// A x
  Vector embed(const SparseVector& x) const {
    Vector phi(dims(), 0.0);
    for (const auto& [i, v] : x.entries()) {
      if (i >= num_features()) throw std::out_of_range("feature index beyond model width");
      for (std::size_t d = 0; d < dims(); ++d) phi[d] += v * A(d, i);
    }
    return phi;
  }

  Vector scores(const SparseVector& x) const {
    const Vector phi = embed(x);
    Vector s(num_labels(), 0.0);
    for (std::size_t d = 0; d < dims(); ++d)
      if (phi[d] != 0.0) axpy(phi[d], B.row(d), s);
    return s;
  }
};

/// f(x, y) = (A x) . B[:, y]
inline double score(const SparseVector& x, std::size_t label, const JointEmbeddingModel& model) {
  if (label >= model.num_labels()) throw std::out_of_range("score: bad label id");
  const Vector phi = model.embed(x);
  double s = 0.0;
  for (std::size_t d = 0; d < model.dims(); ++d) s += phi[d] * model.B(d, label);
  return s;
}

/// L(k) = sum_{i=1..k} 1/i
inline double warp_weight(std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 1; i <= k; ++i) s += 1.0 / static_cast<double>(i);
  return s;
}

/// rank(x, y) = |{y' in negatives : 1 + f(x, y') > f(x, y)}|
inline std::size_t warp_rank(const Vector& scores, std::size_t positive, const std::vector<std::size_t>& negatives) {
  std::size_t r = 0;
  for (std::size_t y : negatives) r += (1.0 + scores[y] > scores[positive]);
  return r;
}

enum class WarpMode { kJoint, kFixed, kAdaptive };

struct WarpConfig {
  WarpMode mode = WarpMode::kFixed;
  double lambda = 1e-3;  // adaptive-mode regularizer weight
  double lr = 0.1;       // AdaGrad
  std::size_t epochs = 5;
  std::size_t dims = 300;  // joint mode without an initial B
  std::size_t exact_rank_limit = 1000;
  /// Labels eligible as positives and negatives; empty = all.
  std::vector<bool> active_labels;
  /// Initial A columns for "tok=" / "head=" features from word vectors of the
  /// same dimensionality; others start uniform in +-init_scale.
  const EmbeddingSet* lexical_init = nullptr;
  double init_scale = 0.01;
  std::uint64_t seed = 1;
};

struct TrainingExample {
  SparseVector x;
  std::vector<std::size_t> labels;
};

/// Per-example WARP loss sum_{y in Y} sum_{y' in Ybar} L(rank(x,y)) max(0, 1 - f(x,y) + f(x,y'))
/// plus lambda ||B - B~||_F^2 in adaptive mode. Ranks are treated as
/// constants, as in training.
inline double warp_loss(const JointEmbeddingModel& model, const TrainingExample& ex,
                        const std::vector<std::size_t>& negatives, const Matrix* prior, double lambda) {
  const Vector s = model.scores(ex.x);
  double loss = 0.0;
  for (std::size_t y : ex.labels) {
    const double w = warp_weight(warp_rank(s, y, negatives));
    for (std::size_t yn : negatives) loss += w * std::max(0.0, 1.0 - s[y] + s[yn]);
  }
  if (prior) {
    const double d = frobenius_distance(model.B, *prior);
    loss += lambda * d * d;
  }
  return loss;
}

/// Subgradient of `warp_loss` (dense, for verification).
inline void warp_gradient(const JointEmbeddingModel& model, const TrainingExample& ex,
                          const std::vector<std::size_t>& negatives, const Matrix* prior, double lambda, Matrix& gA,
                          Matrix& gB) {
  gA = Matrix(model.A.rows(), model.A.cols());
  gB = Matrix(model.B.rows(), model.B.cols());
  const Vector phi = model.embed(ex.x);
  const Vector s = model.scores(ex.x);
  Vector dphi(model.dims(), 0.0);
  for (std::size_t y : ex.labels) {
    const double w = warp_weight(warp_rank(s, y, negatives));
    for (std::size_t yn : negatives) {
      if (1.0 - s[y] + s[yn] <= 0.0) continue;
      for (std::size_t d = 0; d < model.dims(); ++d) {
        dphi[d] += w * (model.B(d, yn) - model.B(d, y));
        gB(d, y) -= w * phi[d];
        gB(d, yn) += w * phi[d];
      }
    }
  }
  for (const auto& [i, v] : ex.x.entries())
    for (std::size_t d = 0; d < model.dims(); ++d) gA(d, i) += v * dphi[d];
  if (prior)
    for (std::size_t k = 0; k < gB.size(); ++k) gB.data()[k] += 2.0 * lambda * (model.B.data()[k] - prior->data()[k]);
}

/// WARP training with AdaGrad. For each example and gold label y, the rank
/// is computed exactly (N <= exact_rank_limit) or estimated by sampling
/// negatives until a margin violation; one violating negative drawn
/// uniformly from Ybar gives a hinge update weighted by L(rank).
inline JointEmbeddingModel warp_train(const std::vector<TrainingExample>& data, std::size_t num_features,
                                      std::size_t num_labels, const LabelEmbeddingMatrix* b_init,
                                      const WarpConfig& cfg, const std::vector<std::string>* feature_names = nullptr) {
  if (cfg.mode != WarpMode::kJoint && !b_init) throw InputError("warp_train: fixed/adaptive mode needs an initial B");
  JointEmbeddingModel model;
  const Rng root(cfg.seed);
  Rng init_rng = root.substream("fnet.init");
  if (b_init) {
    if (b_init->values.cols() != num_labels) throw InputError("warp_train: label embedding has wrong label count");
    model.B = b_init->values;
  } else {
    model.B = random_label_embedding(cfg.dims, num_labels, init_rng).values;
  }
  const std::size_t D = model.B.rows();
  model.A = Matrix(D, num_features);
  for (double& v : model.A.data()) v = init_rng.uniform(-cfg.init_scale, cfg.init_scale);
  if (cfg.lexical_init && feature_names) {
    if (cfg.lexical_init->dims() != D) throw InputError("warp_train: lexical init dims differ from label embedding dims");
    std::unordered_map<std::string, std::size_t> rows;
    for (std::size_t i = 0; i < cfg.lexical_init->tokens.size(); ++i) rows.emplace(cfg.lexical_init->tokens[i], i);
    for (std::size_t f = 0; f < num_features; ++f) {
      const auto& name = (*feature_names)[f];
      std::string word;
      if (name.rfind("tok=", 0) == 0)
        word = name.substr(4);
      else if (name.rfind("head=", 0) == 0)
        word = name.substr(5);
      else
        continue;
      if (auto it = rows.find(word); it != rows.end())
        for (std::size_t d = 0; d < D; ++d) model.A(d, f) = cfg.lexical_init->word_vectors(it->second, d);
    }
  }
  const Matrix prior = b_init ? b_init->values : Matrix();

  std::vector<bool> active = cfg.active_labels;
  if (active.empty()) active.assign(num_labels, true);
  AdaGrad opt_a(model.A.size(), cfg.lr), opt_b(model.B.size(), cfg.lr);
  Rng rng = root.substream("fnet.warp");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Vector phi(D), dphi(D);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& ex = data[idx];
      std::vector<char> gold(num_labels, 0);
      std::vector<std::size_t> positives;
      for (std::size_t y : ex.labels)
        if (active[y]) gold[y] = 1, positives.push_back(y);
      std::vector<std::size_t> negatives;
      for (std::size_t y = 0; y < num_labels; ++y)
        if (active[y] && !gold[y]) negatives.push_back(y);
      if (positives.empty()) continue;
      if (negatives.empty()) {
        warn("warp_train: example " + std::to_string(idx) + " carries every label, skipped");
        continue;
      }
      for (std::size_t y : positives) {
        phi = model.embed(ex.x);
        const Vector s = model.scores(ex.x);
        std::size_t rank = 0;
        std::size_t violator = num_labels;
        if (num_labels <= cfg.exact_rank_limit) {
          std::vector<std::size_t> violators;
          for (std::size_t yn : negatives)
            if (1.0 + s[yn] > s[y]) violators.push_back(yn);
          rank = violators.size();
          if (rank) violator = violators[rng.uniform_int(rank)];
        } else {
          for (std::size_t trial = 1; trial <= negatives.size(); ++trial) {
            const std::size_t yn = negatives[rng.uniform_int(negatives.size())];
            if (1.0 + s[yn] > s[y]) {
              violator = yn;
              rank = (negatives.size()) / trial;
              break;
            }
          }
        }
        if (rank == 0) continue;
        const double w = warp_weight(rank);
        for (std::size_t d = 0; d < D; ++d) dphi[d] = w * (model.B(d, violator) - model.B(d, y));
        for (const auto& [i, v] : ex.x.entries())
          for (std::size_t d = 0; d < D; ++d) opt_a.step_one(model.A(d, i), d * num_features + i, v * dphi[d]);
        if (cfg.mode != WarpMode::kFixed) {
          for (std::size_t d = 0; d < D; ++d) {
            double gy = -w * phi[d], gn = w * phi[d];
            if (cfg.mode == WarpMode::kAdaptive) {
              gy += 2.0 * cfg.lambda * (model.B(d, y) - prior(d, y));
              gn += 2.0 * cfg.lambda * (model.B(d, violator) - prior(d, violator));
            }
            opt_b.step_one(model.B(d, y), d * num_labels + y, gy);
            opt_b.step_one(model.B(d, violator), d * num_labels + violator, gn);
          }
        }
      }
    }
  }
  if (!model.A.all_finite() || !model.B.all_finite()) throw NumericError("warp_train: non-finite parameters");
  return model;
}

// ---------------------------------------------------------------------------
// Type inference

struct ScoredLabel {
  std::size_t label;
  double score;
};

inline std::vector<ScoredLabel> rank_labels(const Vector& scores) {
  std::vector<ScoredLabel> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({i, scores[i]});
  std::stable_sort(out.begin(), out.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  return out;
}

/// Greedy hierarchical inference over the top-k candidates. A candidate
/// whose score is within t of the best contributes its root-to-label path,
/// level by level, until it meets a level already holding a different
/// label.
inline std::set<std::size_t> type_infer(const std::vector<ScoredLabel>& ranked, const LabelHierarchy& h, double t,
                                        std::size_t k) {
  std::set<std::size_t> out;
  if (ranked.empty()) return out;
  std::map<std::size_t, std::size_t> by_level;  // level -> admitted label
  const double best = ranked.front().score;
  for (std::size_t c = 0; c < std::min(k, ranked.size()); ++c) {
    if (best - ranked[c].score > t) continue;
    for (std::size_t lab : h.path(ranked[c].label)) {
      const std::size_t lvl = h.level(lab);
      auto it = by_level.find(lvl);
      if (it != by_level.end() && it->second != lab) break;
      by_level[lvl] = lab;
      out.insert(lab);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model persistence

inline std::string serialize_model(const JointEmbeddingModel& m, const FeatureDictionary& dict, const LabelHierarchy& h,
                                   const std::string& label_kind, const std::string& mode) {
  ModelFile f;
  f.kind = "fnet-model";
  f.meta["dims"] = std::to_string(m.dims());
  f.meta["label_embedding"] = label_kind;
  f.meta["mode"] = mode;
  f.blocks.emplace_back("A", LabeledMatrix{dict.names(), m.A.transposed()});
  f.blocks.emplace_back("B", LabeledMatrix{h.labels(), m.B.transposed()});
  return f.serialize();
}

struct LoadedModel {
  JointEmbeddingModel model;
  FeatureDictionary dict;
  std::vector<std::string> labels;
  std::map<std::string, std::string> meta;
};

inline LoadedModel parse_model(const std::string& text, const std::string& where) {
  const auto f = ModelFile::parse(text, where);
  if (f.kind != "fnet-model") throw InputError(where + ": not an fnet model");
  LoadedModel out;
  const auto& a = f.block("A");
  const auto& b = f.block("B");
  out.model.A = a.values.transposed();
  out.model.B = b.values.transposed();
  if (out.model.A.rows() != out.model.B.rows()) throw InputError(where + ": A and B dims differ");
  out.dict = FeatureDictionary::from_names(a.labels);
  out.labels = b.labels;
  out.meta = f.meta;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

using LabelPrediction = LabelSetPrediction<std::string>;

inline std::vector<LabelPrediction> predict(const JointEmbeddingModel& model, const std::vector<SparseVector>& xs,
                                            const std::vector<MentionInstance>& gold, const LabelHierarchy& h, double t,
                                            std::size_t k) {
  std::vector<LabelPrediction> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    LabelPrediction p;
    p.gold.insert(gold[i].labels.begin(), gold[i].labels.end());
    for (std::size_t lab : type_infer(rank_labels(model.scores(xs[i])), h, t, k)) p.predicted.insert(h.label(lab));
    out.push_back(std::move(p));
  }
  return out;
}

inline MetricsReport evaluate(const std::vector<LabelPrediction>& preds) {
  MetricsReport r;
  r.set("strict_acc", strict_accuracy(preds));
  r.set("macro_f1", macro_f1(preds));
  r.set("micro_f1", micro_f1(preds));
  return r;
}

/// Micro precision restricted to labels at `level`.
inline double level_micro_precision(const std::vector<LabelPrediction>& preds, const LabelHierarchy& h,
                                    std::size_t level) {
  double hit = 0.0, total = 0.0;
  for (const auto& p : preds)
    for (const auto& y : p.predicted) {
      if (h.level(h.id(y)) != level) continue;
      total += 1.0;
      hit += p.gold.count(y);
    }
  return total > 0.0 ? hit / total : 0.0;
}

/// Thresholds 0, 0.1, ..., 2.0.
inline std::vector<double> threshold_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(i / 10.0);
  return g;
}

/// Threshold on the grid with the best strict accuracy (ties: smallest t).
inline double tune_threshold(const JointEmbeddingModel& model, const std::vector<SparseVector>& xs,
                             const std::vector<MentionInstance>& dev, const LabelHierarchy& h, std::size_t k) {
  double best_t = 0.0, best = -1.0;
  for (double t : threshold_grid()) {
    const double acc = strict_accuracy(predict(model, xs, dev, h, t, k));
    if (acc > best) best = acc, best_t = t;
  }
  return best_t;
}

}  // namespace cemb::fnet

#endif  // CEMB_FNET_HPP
