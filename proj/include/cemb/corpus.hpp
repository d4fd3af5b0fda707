// Corpus ingestion, vocabulary, lexicons, grouped feature events for
// multi-task embedding training, and CRF feature-file emission.
//
// Corpus file: one token per line, TAB-separated columns
//   TOKEN  POS  NETAG  [CONCEPTS (comma-separated)]
// with a blank line ending each sentence.

#ifndef CEMB_CORPUS_HPP
#define CEMB_CORPUS_HPP

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "log.hpp"
#include "numerics.hpp"
#include "text_io.hpp"

namespace cemb {

struct Token {
  std::string surface;
  std::string pos;
  std::string ne_tag;
  std::vector<std::string> concepts;

  friend bool operator==(const Token&, const Token&) = default;
};

using Sentence = std::vector<Token>;

struct Corpus {
  std::vector<Sentence> sentences;

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Throws if an I-X tag follows O or a B-Y/I-Y tag with Y != X.
inline void validate_bio(const Sentence& s, std::size_t sentence_index) {
  std::string prev = "O";
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::string& tag = s[i].ne_tag;
    if (tag.empty()) return;
    if (tag != "O" && !(tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-'))
      throw InputError("sentence " + std::to_string(sentence_index) + ": bad BIO tag '" + tag + "'");
    if (tag[0] == 'I' && i > 0) {
      const std::string type = tag.substr(2);
      if (prev == "O" || prev.substr(2) != type)
        throw InputError("sentence " + std::to_string(sentence_index) + ", token " + std::to_string(i) + ": '" +
                         tag + "' follows '" + prev + "'");
    }
    prev = tag;
  }
}

inline Corpus parse_corpus(const std::string& text, const std::string& where = "corpus") {
  Corpus c;
  Sentence cur;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!cur.empty()) {
      validate_bio(cur, c.sentences.size());
      c.sentences.push_back(std::move(cur));
      cur.clear();
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto cols = split_on(line, '\t');
    if (cols.size() > 4) throw InputError(where + ":" + std::to_string(lineno) + ": more than 4 columns");
    if (cols[0].empty()) throw InputError(where + ":" + std::to_string(lineno) + ": empty token");
    Token t;
    t.surface = cols[0];
    if (cols.size() > 1) t.pos = cols[1];
    if (cols.size() > 2) t.ne_tag = cols[2];
    if (cols.size() > 3 && !cols[3].empty()) {
      for (auto& cid : split_on(cols[3], ','))
        if (!cid.empty()) t.concepts.push_back(cid);
    }
    cur.push_back(std::move(t));
  }
  flush();
  return c;
}

inline std::string serialize_corpus(const Corpus& c) {
  std::ostringstream out;
  for (const auto& s : c.sentences) {
    for (const auto& t : s) {
      out << t.surface;
      std::size_t ncols = 1;
      if (!t.pos.empty()) ncols = 2;
      if (!t.ne_tag.empty()) ncols = 3;
      if (!t.concepts.empty()) ncols = 4;
      if (ncols > 1) out << '\t' << t.pos;
      if (ncols > 2) out << '\t' << t.ne_tag;
      if (ncols > 3) {
        out << '\t';
        for (std::size_t i = 0; i < t.concepts.size(); ++i) out << (i ? "," : "") << t.concepts[i];
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

inline Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path), path); }

// ---------------------------------------------------------------------------

/// Token vocabulary. Id 0 is the reserved `<unk>` token; retained tokens
/// follow in (count desc, token asc) order.
class Vocabulary {
 public:
  static constexpr const char* kUnk = "<unk>";
  static constexpr std::size_t kUnkId = 0;

  Vocabulary() : tokens_{kUnk}, counts_{0} { ids_[kUnk] = kUnkId; }

  static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    std::size_t dropped = 0;
    for (const auto& [tok, n] : counts) {
      if (tok == kUnk) continue;
      if (n >= min_count)
        kept.emplace_back(tok, n);
      else
        dropped += n;
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    v.min_count_ = min_count;
    v.counts_[kUnkId] = dropped;
    for (auto& [tok, n] : kept) {
      v.ids_[tok] = v.tokens_.size();
      v.tokens_.push_back(tok);
      v.counts_.push_back(n);
    }
    return v;
  }

  /// Builds from an explicit token list (e.g. the rows of an embedding file);
  /// the list must start with `<unk>`.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.empty() || tokens[0] != kUnk) throw InputError("vocabulary must start with <unk>");
    Vocabulary v;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      if (v.ids_.count(tokens[i])) throw InputError("duplicate vocabulary token '" + tokens[i] + "'");
      v.ids_[tokens[i]] = v.tokens_.size();
      v.tokens_.push_back(tokens[i]);
      v.counts_.push_back(0);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }
  /// Unknown tokens map to `<unk>`.
  std::size_t id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnkId : it->second;
  }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t count(std::size_t id) const { return counts_.at(id); }
  std::size_t min_count() const { return min_count_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::size_t min_count_ = 1;
};

inline Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count) {
  if (corpus.sentences.empty()) throw InputError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus.sentences)
    for (const auto& t : s) ++counts[t.surface];
  return Vocabulary::from_counts(counts, min_count);
}

// ---------------------------------------------------------------------------

/// Concept -> word set, looked up case-insensitively.
class ConceptLexicon {
 public:
  void add(const std::string& concept_id, const std::vector<std::string>& words) {
    if (words.empty()) throw InputError("concept '" + concept_id + "' has no words");
    auto& set = concepts_[concept_id];
    for (const auto& w : words) {
      const auto lw = to_lower(w);
      set.insert(lw);
      index_[lw].insert(concept_id);
    }
  }

  /// Concepts containing `word`, in sorted order.
  std::vector<std::string> concepts_of(const std::string& word) const {
    auto it = index_.find(to_lower(word));
    if (it == index_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  bool contains(const std::string& concept_id, const std::string& word) const {
    auto it = concepts_.find(concept_id);
    return it != concepts_.end() && it->second.count(to_lower(word)) > 0;
  }

  const std::map<std::string, std::set<std::string>>& concepts() const { return concepts_; }
  std::size_t size() const { return concepts_.size(); }
  bool empty() const { return concepts_.empty(); }

 private:
  std::map<std::string, std::set<std::string>> concepts_;
  std::unordered_map<std::string, std::set<std::string>> index_;
};

/// Lines `concept<TAB>w1,w2,...`.
inline ConceptLexicon parse_taxonomy(const std::string& text, const std::string& where = "taxonomy") {
  ConceptLexicon lex;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 2 || cols[0].empty())
      throw InputError(where + ":" + std::to_string(lineno) + ": expected 'concept<TAB>w1,w2,...'");
    std::vector<std::string> words;
    for (auto& w : split_on(cols[1], ','))
      if (!w.empty()) words.push_back(w);
    if (words.empty()) throw InputError(where + ":" + std::to_string(lineno) + ": empty word list");
    lex.add(cols[0], words);
  }
  if (lex.empty()) warn(where + ": empty taxonomy");
  return lex;
}

inline ConceptLexicon load_taxonomy(const std::string& path) { return parse_taxonomy(read_file(path), path); }

enum class EntityClass { kLocation = 0, kOrganization = 1, kPerson = 2 };

inline const char* entity_class_name(EntityClass c) {
  switch (c) {
    case EntityClass::kLocation: return "LOCATION";
    case EntityClass::kOrganization: return "ORGANIZATION";
    case EntityClass::kPerson: return "PERSON";
  }
  return "?";
}

using Gazetteer = std::map<std::string, EntityClass>;

/// Lines `word<TAB>CLASS`. Words listed under more than one class are
/// dropped.
inline Gazetteer parse_gazetteer(const std::string& text, const std::string& where = "gazetteer") {
  std::map<std::string, std::set<EntityClass>> classes;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 2 || cols[0].empty())
      throw InputError(where + ":" + std::to_string(lineno) + ": expected 'word<TAB>CLASS'");
    EntityClass cls;
    if (cols[1] == "LOCATION")
      cls = EntityClass::kLocation;
    else if (cols[1] == "ORGANIZATION")
      cls = EntityClass::kOrganization;
    else if (cols[1] == "PERSON")
      cls = EntityClass::kPerson;
    else
      throw InputError(where + ":" + std::to_string(lineno) + ": unknown entity class '" + cols[1] + "'");
    classes[to_lower(cols[0])].insert(cls);
  }
  Gazetteer g;
  for (const auto& [w, cs] : classes)
    if (cs.size() == 1) g[w] = *cs.begin();
  if (classes.empty()) warn(where + ": empty gazetteer");
  return g;
}

inline Gazetteer load_gazetteer(const std::string& path) { return parse_gazetteer(read_file(path), path); }

// ---------------------------------------------------------------------------
// Grouped feature events

enum class FeatureType { kWord, kPos, kTaxonomy, kNeTag };

inline const char* feature_type_name(FeatureType t) {
  switch (t) {
    case FeatureType::kWord: return "word";
    case FeatureType::kPos: return "pos";
    case FeatureType::kTaxonomy: return "taxo";
    case FeatureType::kNeTag: return "ne";
  }
  return "?";
}

struct FeatureEvent {
  std::size_t center_word_id;
  std::size_t feature_id;  // dense within its group
  std::size_t group_id;

  friend bool operator==(const FeatureEvent&, const FeatureEvent&) = default;
};

/// Feature subsets S_X keyed by (type, relative offset). Each feature string
/// belongs to exactly one group; ids are dense within a group.
class FeatureGroupTable {
 public:
  struct Group {
    std::string key;
    FeatureType type;
    int offset;  // 0 for position-agnostic groups
    std::vector<std::string> features;
    std::vector<double> counts;
    std::unordered_map<std::string, std::size_t> ids;
  };

  std::size_t group_id(FeatureType type, int offset, bool position_agnostic = false) {
    const std::string key = group_key(type, offset, position_agnostic);
    auto it = group_ids_.find(key);
    if (it != group_ids_.end()) return it->second;
    group_ids_[key] = groups_.size();
    groups_.push_back({key, type, position_agnostic ? 0 : offset, {}, {}, {}});
    return groups_.size() - 1;
  }

  std::size_t feature_id(std::size_t group, const std::string& feature) {
    auto& g = groups_.at(group);
    auto it = g.ids.find(feature);
    if (it != g.ids.end()) return it->second;
    g.ids[feature] = g.features.size();
    g.features.push_back(feature);
    g.counts.push_back(0.0);
    return g.features.size() - 1;
  }

  /// Records one occurrence, returning the feature id.
  std::size_t observe(std::size_t group, const std::string& feature) {
    const std::size_t id = feature_id(group, feature);
    groups_[group].counts[id] += 1.0;
    return id;
  }

  /// Global feature string (`<group key>=<feature>`) -> (group, id).
  std::optional<std::pair<std::size_t, std::size_t>> lookup(const std::string& qualified) const {
    const auto eq = qualified.find('=');
    if (eq == std::string::npos) return std::nullopt;
    auto git = group_ids_.find(qualified.substr(0, eq));
    if (git == group_ids_.end()) return std::nullopt;
    const auto& g = groups_[git->second];
    auto fit = g.ids.find(qualified.substr(eq + 1));
    if (fit == g.ids.end()) return std::nullopt;
    return std::make_pair(git->second, fit->second);
  }

  std::string qualified_name(std::size_t group, std::size_t feature) const {
    return groups_.at(group).key + "=" + groups_[group].features.at(feature);
  }

  std::optional<std::size_t> find_group(const std::string& key) const {
    auto it = group_ids_.find(key);
    if (it == group_ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<Group>& groups() const { return groups_; }
  const Group& group(std::size_t g) const { return groups_.at(g); }
  std::size_t size() const { return groups_.size(); }

  static std::string group_key(FeatureType type, int offset, bool position_agnostic) {
    std::string key = feature_type_name(type);
    if (!position_agnostic) key += ":" + std::to_string(offset);
    return key;
  }

 private:
  std::vector<Group> groups_;
  std::unordered_map<std::string, std::size_t> group_ids_;
};

struct FeatureExtractionConfig {
  int window = 2;
  bool word_group = true;
  bool pos_group = true;
  bool taxonomy_group = true;
  bool ne_group = true;
  /// Split word-context features by relative offset. Off by default so the
  /// word-only configuration is exactly skip-gram.
  bool word_offset_groups = false;
};

struct FeatureEvents {
  FeatureGroupTable table;
  std::vector<FeatureEvent> events;
};

/// Emits, for every position i and enabled group, the events (w_i, f):
/// context words w_{i+k} (k != 0), POS tags t_{i+k}, taxonomic indicators
/// TX_g(w_{i+k}) and self-trained NE tags T_{i+k}, for |k| <= window.
/// The word group (position-agnostic) is pre-populated with the vocabulary so
/// its feature ids equal vocabulary ids.
inline FeatureEvents extract_feature_events(const Corpus& corpus, const Vocabulary& vocab,
                                            const FeatureExtractionConfig& cfg,
                                            const ConceptLexicon* taxonomy = nullptr) {
  FeatureEvents out;
  auto& table = out.table;
  const int w = cfg.window;
  std::size_t word_group = 0;
  if (cfg.word_group && !cfg.word_offset_groups) {
    word_group = table.group_id(FeatureType::kWord, 0, true);
    for (const auto& tok : vocab.tokens()) table.feature_id(word_group, tok);
  }
  for (std::size_t si = 0; si < corpus.sentences.size(); ++si) {
    const auto& s = corpus.sentences[si];
    const int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i) {
      if (cfg.pos_group && s[static_cast<std::size_t>(i)].pos.empty())
        throw InputError("sentence " + std::to_string(si) + ": missing POS column");
      if (cfg.ne_group && s[static_cast<std::size_t>(i)].ne_tag.empty())
        throw InputError("sentence " + std::to_string(si) + ": missing NETAG column");
    }
    for (int i = 0; i < n; ++i) {
      const std::size_t center = vocab.id(s[static_cast<std::size_t>(i)].surface);
      auto emit = [&](std::size_t group, const std::string& feature) {
        out.events.push_back({center, table.observe(group, feature), group});
      };
      if (cfg.word_group) {
        for (int k = -w; k <= w; ++k) {
          const int j = i + k;
          if (k == 0 || j < 0 || j >= n) continue;
          const std::size_t ctx = vocab.id(s[static_cast<std::size_t>(j)].surface);
          const std::size_t g = cfg.word_offset_groups ? table.group_id(FeatureType::kWord, k) : word_group;
          emit(g, vocab.token(ctx));
        }
      }
      if (cfg.pos_group) {
        for (int k = -w; k <= w; ++k) {
          const int j = i + k;
          if (j < 0 || j >= n) continue;
          emit(table.group_id(FeatureType::kPos, k), s[static_cast<std::size_t>(j)].pos);
        }
      }
      if (cfg.taxonomy_group && taxonomy) {
        for (int k = -w; k <= w; ++k) {
          const int j = i + k;
          if (j < 0 || j >= n) continue;
          for (const auto& g : taxonomy->concepts_of(s[static_cast<std::size_t>(j)].surface))
            emit(table.group_id(FeatureType::kTaxonomy, k), g);
        }
      }
      if (cfg.ne_group) {
        for (int k = -w; k <= w; ++k) {
          const int j = i + k;
          if (j < 0 || j >= n) continue;
          emit(table.group_id(FeatureType::kNeTag, k), s[static_cast<std::size_t>(j)].ne_tag);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CRF feature emission

/// One line per token: baseline context templates (unigrams and bigrams of
/// words and POS tags, prefixes and suffixes of length 1..4, offsets -2..2),
/// non-zero binarized embedding dimensions of w_{i+k}, and cluster unigram,
/// bigram and disjunction features for each requested K. Columns are
/// TAB-separated with the BIO tag last; sentences end with a blank line.
inline std::string emit_crf_features(const Corpus& corpus, const Vocabulary& vocab, const SignMatrix& binarized,
                                     const std::map<std::size_t, std::vector<std::size_t>>& clusterings,
                                     const std::vector<std::size_t>& cluster_ks) {
  for (std::size_t k : cluster_ks)
    if (!clusterings.count(k)) throw InputError("emit_crf_features: no clustering for K=" + std::to_string(k));
  if (binarized.rows() != 0 && binarized.rows() != vocab.size())
    throw InputError("emit_crf_features: binarized matrix does not cover the vocabulary");
  std::ostringstream out;
  for (const auto& s : corpus.sentences) {
    const int n = static_cast<int>(s.size());
    auto at = [&](int j) -> const Token& { return s[static_cast<std::size_t>(j)]; };
    auto inside = [&](int j) { return j >= 0 && j < n; };
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> f;
      for (int k = -2; k <= 2; ++k) {
        if (!inside(i + k)) continue;
        const auto& t = at(i + k);
        const std::string sk = std::to_string(k);
        f.push_back("U[" + sk + "]=" + t.surface);
        if (!t.pos.empty()) f.push_back("P[" + sk + "]=" + t.pos);
        for (std::size_t l = 1; l <= 4 && l <= t.surface.size(); ++l) {
          f.push_back("PRE[" + sk + "," + std::to_string(l) + "]=" + t.surface.substr(0, l));
          f.push_back("SUF[" + sk + "," + std::to_string(l) + "]=" + t.surface.substr(t.surface.size() - l));
        }
      }
      for (int k = -2; k <= 1; ++k) {
        if (!inside(i + k) || !inside(i + k + 1)) continue;
        const std::string sk = std::to_string(k);
        f.push_back("B[" + sk + "]=" + at(i + k).surface + "|" + at(i + k + 1).surface);
        if (!at(i + k).pos.empty())
          f.push_back("PB[" + sk + "]=" + at(i + k).pos + "|" + at(i + k + 1).pos);
      }
      if (binarized.rows() != 0) {
        for (int k = -2; k <= 2; ++k) {
          if (!inside(i + k)) continue;
          const std::size_t id = vocab.id(at(i + k).surface);
          for (std::size_t m = 0; m < binarized.cols(); ++m) {
            const int v = binarized(id, m);
            if (v == 0) continue;
            f.push_back("VD[" + std::to_string(k) + "," + std::to_string(m) + "]=" + (v > 0 ? "+1" : "-1"));
          }
        }
      }
      for (std::size_t K : cluster_ks) {
        const auto& ids = clusterings.at(K);
        auto cl = [&](int j) { return std::to_string(ids.at(vocab.id(at(j).surface))); };
        const std::string sK = std::to_string(K);
        for (int k = -2; k <= 2; ++k)
          if (inside(i + k)) f.push_back("C" + sK + "[" + std::to_string(k) + "]=" + cl(i + k));
        for (int k = -2; k <= 1; ++k)
          if (inside(i + k) && inside(i + k + 1))
            f.push_back("C" + sK + "B[" + std::to_string(k) + "]=" + cl(i + k) + "|" + cl(i + k + 1));
        if (inside(i - 1) && inside(i + 1)) f.push_back("C" + sK + "D=" + cl(i - 1) + "|" + cl(i + 1));
      }
      for (const auto& x : f) out << x << '\t';
      out << (at(i).ne_tag.empty() ? "O" : at(i).ne_tag) << '\n';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cemb

#endif  // CEMB_CORPUS_HPP
