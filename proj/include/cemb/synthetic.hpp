// Seeded generators of small synthetic datasets with known structure, one
// per task. All randomness comes from named substreams of the given seed.

#ifndef CEMB_SYNTHETIC_HPP
#define CEMB_SYNTHETIC_HPP

#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "embed.hpp"
#include "fnet.hpp"
#include "numerics.hpp"
#include "rerank.hpp"
#include "sentic.hpp"

namespace cemb::synthetic {

/// Pronounceable lower-case pseudo-words, distinct within one generator.
class WordFactory {
 public:
  explicit WordFactory(Rng rng) : rng_(rng) {}

  std::string next(std::size_t syllables = 3) {
    static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    for (;;) {
      std::string w;
      for (std::size_t i = 0; i < syllables; ++i) {
        w += kOnsets[rng_.uniform_int(std::size(kOnsets))];
        w += kVowels[rng_.uniform_int(std::size(kVowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> batch(std::size_t n, std::size_t syllables = 3) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(next(syllables));
    return out;
  }

 private:
  Rng rng_;
  std::set<std::string> used_;
};

inline std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.uniform_int(v.size())];
}

// ---------------------------------------------------------------------------
// NER corpus

struct NerData {
  Corpus corpus;
  std::string taxonomy;   // concept<TAB>words
  std::string gazetteer;  // word<TAB>CLASS
};

/// Sentences mixing entity names of three classes (with taxonomy concepts
/// and BIO tags) and generic words with POS tags.
inline NerData make_ner_corpus(std::size_t sentences, std::uint64_t seed) {
  const Rng root(seed);
  WordFactory words(root.substream("synth.ner.words"));
  Rng rng = root.substream("synth.ner.sentences");
  const std::vector<std::string> classes = {"LOC", "ORG", "PER"};
  const std::vector<std::string> class_names = {"LOCATION", "ORGANIZATION", "PERSON"};
  std::vector<std::vector<std::string>> names(3);
  for (auto& n : names) n = words.batch(12, 2);
  const std::vector<std::vector<std::string>> cues = {words.batch(4, 2), words.batch(4, 2), words.batch(4, 2)};
  const auto nouns = words.batch(30, 2), verbs = words.batch(15, 2), dets = words.batch(4, 1);

  NerData out;
  for (std::size_t k = 0; k < 3; ++k) {
    std::string line = "concept_" + to_lower(classes[k]) + "\t";
    for (std::size_t i = 0; i < names[k].size(); ++i) line += (i ? "," : "") + names[k][i];
    out.taxonomy += line + "\n";
    for (const auto& n : names[k]) out.gazetteer += n + "\t" + class_names[k] + "\n";
  }
  for (std::size_t s = 0; s < sentences; ++s) {
    Sentence sent;
    const std::size_t k = rng.uniform_int(3);
    sent.push_back({pick(dets, rng), "DT", "O", {}});
    sent.push_back({pick(nouns, rng), "NN", "O", {}});
    sent.push_back({pick(cues[k], rng), "IN", "O", {}});
    const std::size_t len = 1 + rng.uniform_int(2);
    for (std::size_t i = 0; i < len; ++i) {
      const auto& n = pick(names[k], rng);
      sent.push_back({capitalize(n), "NNP", (i ? "I-" : "B-") + classes[k], {"concept_" + to_lower(classes[k])}});
    }
    sent.push_back({pick(verbs, rng), "VB", "O", {}});
    sent.push_back({pick(dets, rng), "DT", "O", {}});
    sent.push_back({pick(nouns, rng), "NN", "O", {}});
    out.corpus.sentences.push_back(std::move(sent));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fine-grained typing

struct FnetConfig {
  std::size_t coarse = 4;
  std::size_t fine_per_coarse = 2;
  std::size_t dims = 300;
  std::size_t train_heads_per_fine = 20;
  std::size_t heldout_heads_per_fine = 20;
  std::size_t manual_heads_per_fine = 5;
  std::size_t mentions = 2000;
  double train_fraction = 0.7;
  double dev_fraction = 0.1;
  double context_signal = 0.3;  // probability a context word comes from the coarse type's pool
  double noise = 0.7;           // norm of the per-word noise relative to the type directions
  std::uint64_t seed = 1;
};

struct FnetData {
  fnet::LabelHierarchy hierarchy;
  std::vector<fnet::MentionInstance> train, dev, test;
  EmbeddingSet embeddings;
  /// Hand-picked prototypes for level-2 labels (used when they are unseen).
  std::map<std::string, std::vector<std::string>> manual_prototypes;
};

/// Two-level hierarchy. A head word of fine type f under coarse type c has
/// vector u_c + u_f + noise. Training mentions use one pool of heads per
/// fine type, dev/test mentions a disjoint pool, so typing unseen heads
/// depends on the embedding space. Context words carry weak coarse-type
/// signal.
inline FnetData make_fnet(const FnetConfig& cfg) {
  const Rng root(cfg.seed);
  WordFactory words(root.substream("synth.fnet.words"));
  Rng vec_rng = root.substream("synth.fnet.vectors");
  Rng rng = root.substream("synth.fnet.mentions");
  const std::size_t D = cfg.dims;
  const double unit = 1.0 / std::sqrt(static_cast<double>(D));
  auto random_vec = [&](double scale) {
    Vector v(D);
    for (double& x : v) x = scale * unit * vec_rng.normal();
    return v;
  };

  FnetData out;
  std::vector<std::string> paths;
  std::vector<Vector> coarse_dir;
  struct Fine {
    std::string path;
    std::size_t coarse;
    Vector dir;
    std::vector<std::string> train_heads, heldout_heads;
  };
  std::vector<Fine> fines;
  std::vector<std::string> tokens{Vocabulary::kUnk};
  std::vector<Vector> rows{Vector(D, 0.0)};
  for (std::size_t c = 0; c < cfg.coarse; ++c) {
    const std::string cp = "/" + capitalize(words.next(2));
    paths.push_back(cp);
    coarse_dir.push_back(random_vec(1.0));
    for (std::size_t f = 0; f < cfg.fine_per_coarse; ++f) {
      Fine fine{cp + "/" + capitalize(words.next(2)), c, random_vec(1.0), {}, {}};
      paths.push_back(fine.path);
      auto add_head = [&](std::vector<std::string>* pool) {
        const std::string w = words.next(3);
        Vector v = coarse_dir[c];
        axpy(1.0, fine.dir, v);
        axpy(1.0, random_vec(cfg.noise), v);
        tokens.push_back(w);
        rows.push_back(std::move(v));
        if (pool) pool->push_back(w);
        return w;
      };
      for (std::size_t i = 0; i < cfg.train_heads_per_fine; ++i) add_head(&fine.train_heads);
      for (std::size_t i = 0; i < cfg.heldout_heads_per_fine; ++i) add_head(&fine.heldout_heads);
      for (std::size_t i = 0; i < cfg.manual_heads_per_fine; ++i) out.manual_prototypes[fine.path].push_back(add_head(nullptr));
      fines.push_back(std::move(fine));
    }
  }
  out.hierarchy = fnet::LabelHierarchy(paths);

  std::vector<std::vector<std::string>> context_pools(cfg.coarse);
  for (auto& p : context_pools) p = words.batch(10, 2);
  const auto generic = words.batch(50, 2);
  const auto modifiers = words.batch(5, 1);
  for (const auto* pool : {&generic, &modifiers})
    for (const auto& w : *pool) tokens.push_back(w), rows.push_back(random_vec(1.0));
  for (const auto& pool : context_pools)
    for (const auto& w : pool) tokens.push_back(w), rows.push_back(random_vec(1.0));
  out.embeddings.tokens = tokens;
  out.embeddings.word_vectors = Matrix(rows.size(), D);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), out.embeddings.word_vectors.row(r).begin());

  const auto n_train = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(cfg.mentions));
  const auto n_dev = static_cast<std::size_t>(cfg.dev_fraction * static_cast<double>(cfg.mentions));
  for (std::size_t i = 0; i < cfg.mentions; ++i) {
    const bool is_train = i < n_train;
    const Fine& fine = fines[rng.uniform_int(fines.size())];
    auto context = [&] {
      return rng.uniform() < cfg.context_signal ? pick(context_pools[fine.coarse], rng) : pick(generic, rng);
    };
    fnet::MentionInstance m;
    m.tokens = {context(), context()};
    if (rng.uniform() < 0.3) m.tokens.push_back(capitalize(pick(modifiers, rng)));
    m.tokens.push_back(capitalize(pick(is_train ? fine.train_heads : fine.heldout_heads, rng)));
    m.start = 2;
    m.end = m.tokens.size();
    m.tokens.push_back(context());
    m.tokens.push_back(context());
    m.labels = {paths[fine.coarse * (cfg.fine_per_coarse + 1)], fine.path};
    (is_train ? out.train : i < n_train + n_dev ? out.dev : out.test).push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// N-best reranking

struct RerankConfig {
  std::size_t utterances = 500;
  std::size_t nbest = 20;
  std::size_t talks = 10;
  double train_fraction = 0.7;
  double dev_fraction = 0.1;
  double entity_swap = 0.5;      // chance a hypothesis swaps an entity word for its confusable
  double word_error = 0.08;      // chance of a generic substitution per word
  double distractor_bias = 0.4;  // log-posterior bonus the recognizer gives a confusable word
  double error_cost = 1.0;       // log-posterior penalty per generic error
  double noise = 0.5;
  std::uint64_t seed = 1;
};

struct RerankData {
  std::vector<rerank::NBestList> train, dev, test;
  Gazetteer gazetteer;
  std::string gazetteer_text;
  std::vector<std::vector<std::string>> text;  // reference sentences for pretraining
};

/// References contain gazetteer entity words. The recognizer confuses each
/// entity word with a fixed distractor and slightly prefers the distractor,
/// so its 1-best tends to miss entities that an oracle hypothesis keeps.
inline RerankData make_rerank(const RerankConfig& cfg) {
  const Rng root(cfg.seed);
  WordFactory words(root.substream("synth.rerank.words"));
  Rng rng = root.substream("synth.rerank.lists");
  const std::vector<EntityClass> classes = {EntityClass::kLocation, EntityClass::kOrganization, EntityClass::kPerson};
  RerankData out;
  std::vector<std::string> entities;
  std::map<std::string, std::string> distractor;
  for (auto cls : classes)
    for (const auto& w : words.batch(15, 3)) {
      entities.push_back(w);
      distractor[w] = words.next(3);
      out.gazetteer[w] = cls;
      out.gazetteer_text += w + "\t" + entity_class_name(cls) + "\n";
    }
  const auto function_words = words.batch(20, 1);
  const auto content = words.batch(60, 2);

  const auto n_train = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(cfg.utterances));
  const auto n_dev = static_cast<std::size_t>(cfg.dev_fraction * static_cast<double>(cfg.utterances));
  for (std::size_t u = 0; u < cfg.utterances; ++u) {
    rerank::NBestList l;
    l.utt_id = "talk" + std::to_string(u % cfg.talks) + "-" + std::to_string(u);
    const std::size_t len = 6 + rng.uniform_int(5);
    for (std::size_t i = 0; i < len; ++i) l.reference.push_back(rng.uniform() < 0.4 ? pick(function_words, rng) : pick(content, rng));
    const std::size_t n_ent = 1 + rng.uniform_int(2);
    for (std::size_t e = 0; e < n_ent; ++e) {
      const std::size_t pos = rng.uniform_int(l.reference.size() + 1);
      l.reference.insert(l.reference.begin() + static_cast<std::ptrdiff_t>(pos), pick(entities, rng));
    }
    for (std::size_t h = 0; h < cfg.nbest; ++h) {
      rerank::Hypothesis hyp;
      double logp = 0.0;
      for (const auto& w : l.reference) {
        if (distractor.count(w)) {
          if (rng.uniform() < cfg.entity_swap) {
            hyp.words.push_back(distractor[w]);
            logp += cfg.distractor_bias;
          } else {
            hyp.words.push_back(w);
          }
          continue;
        }
        const double r = rng.uniform();
        if (r < cfg.word_error) {
          hyp.words.push_back(pick(content, rng));
          logp -= cfg.error_cost;
        } else if (r < cfg.word_error * 1.4) {
          logp -= cfg.error_cost;  // deletion
        } else {
          hyp.words.push_back(w);
        }
      }
      hyp.asr_logp = logp + cfg.noise * rng.normal() - 5.0;
      l.hyps.push_back(std::move(hyp));
    }
    std::stable_sort(l.hyps.begin(), l.hyps.end(),
                     [](const rerank::Hypothesis& a, const rerank::Hypothesis& b) { return a.asr_logp > b.asr_logp; });
    if (u < n_train) out.text.push_back(l.reference);
    (u < n_train ? out.train : u < n_train + n_dev ? out.dev : out.test).push_back(std::move(l));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Targeted aspect-based sentiment

struct TsaConfig {
  std::size_t train = 2000, dev = 500, test = 500;
  std::size_t concept_dims = 100;
  double two_targets = 0.5;      // chance a sentence mentions both targets
  double repeat_target = 0.8;    // chance of each further mention of a target
  std::size_t max_repeats = 3;   // further mentions follow a polarity word of random sign
  std::uint64_t seed = 1;
};

struct TsaData {
  std::vector<sentic::TsaInstance> train, dev, test;
  std::vector<std::string> aspects;
  EmbeddingSet concepts;
};

/// Each target gets a segment "<polarity cue> <target> ... <aspect cue>";
/// a sentence holds one or two segments. A target may be mentioned again
/// near the end, each time after a polarity word of random sign; only the
/// cue at its first mention counts. The instance for a target has its segment's aspect
/// at the cue's polarity and None elsewhere.
inline TsaData make_tsa(const TsaConfig& cfg) {
  const Rng root(cfg.seed);
  WordFactory words(root.substream("synth.tsa.words"));
  Rng rng = root.substream("synth.tsa.sentences");
  Rng vec_rng = root.substream("synth.tsa.concepts");
  TsaData out;
  out.aspects = {"nightlife", "price", "safety", "transit"};
  const std::map<std::string, std::vector<std::string>> aspect_cues = {
      {"nightlife", {"bars", "clubs", "pubs"}},
      {"price", {"rent", "prices", "cost"}},
      {"safety", {"crime", "police", "safety"}},
      {"transit", {"buses", "trains", "transport"}}};
  const std::vector<std::string> positive = {"good", "great", "nice", "lovely", "excellent"};
  const std::vector<std::string> negative = {"bad", "awful", "dirty", "terrible", "poor"};
  const auto fillers = words.batch(40, 2);
  const std::vector<std::string> targets = {"location1", "location2"};

  std::map<std::string, std::string> concept_of;
  for (const auto& [a, cs] : aspect_cues)
    for (const auto& c : cs) concept_of[c] = "concept_" + a;
  for (const auto& w : positive) concept_of[w] = "concept_positive";
  for (const auto& w : negative) concept_of[w] = "concept_negative";
  std::set<std::string> concept_ids;
  for (const auto& [w, c] : concept_of) concept_ids.insert(c);
  out.concepts.word_vectors = Matrix(concept_ids.size(), cfg.concept_dims);
  std::size_t r = 0;
  for (const auto& c : concept_ids) {
    out.concepts.tokens.push_back(c);
    for (double& v : out.concepts.word_vectors.row(r)) v = vec_rng.normal() / std::sqrt(double(cfg.concept_dims));
    ++r;
  }

  auto make_sentence = [&](std::vector<sentic::TsaInstance>& sink) {
    const std::size_t n_targets = rng.uniform() < cfg.two_targets ? 2 : 1;
    struct Seg {
      std::string aspect, polarity;
    };
    std::vector<Seg> segs;
    std::vector<std::string> tokens;
    std::vector<std::vector<std::size_t>> positions(n_targets);
    for (std::size_t t = 0; t < n_targets; ++t) {
      Seg s{out.aspects[rng.uniform_int(out.aspects.size())], rng.uniform() < 0.5 ? "positive" : "negative"};
      for (std::size_t i = rng.uniform_int(2); i > 0; --i) tokens.push_back(pick(fillers, rng));
      tokens.push_back(pick(s.polarity == "positive" ? positive : negative, rng));
      positions[t].push_back(tokens.size());
      tokens.push_back(targets[t]);
      for (std::size_t i = rng.uniform_int(2); i > 0; --i) tokens.push_back(pick(fillers, rng));
      tokens.push_back(pick(aspect_cues.at(s.aspect), rng));
      segs.push_back(s);
    }
    for (std::size_t t = 0; t < n_targets; ++t)
      for (std::size_t rep = 0; rep < cfg.max_repeats && rng.uniform() < cfg.repeat_target; ++rep) {
        tokens.push_back(pick(fillers, rng));
        tokens.push_back(pick(rng.uniform() < 0.5 ? negative : positive, rng));
        positions[t].push_back(tokens.size());
        tokens.push_back(targets[t]);
      }
    if (rng.uniform() < 0.5) tokens.push_back(pick(fillers, rng));
    std::vector<std::vector<std::string>> concepts;
    for (const auto& w : tokens) {
      auto it = concept_of.find(w);
      concepts.push_back(it == concept_of.end() ? std::vector<std::string>{} : std::vector<std::string>{it->second});
    }
    for (std::size_t t = 0; t < n_targets; ++t) {
      sentic::TsaInstance inst{tokens, positions[t], {{segs[t].aspect, segs[t].polarity}}, concepts};
      sink.push_back(std::move(inst));
    }
  };
  for (auto [sink, n] : {std::pair{&out.train, cfg.train}, std::pair{&out.dev, cfg.dev}, std::pair{&out.test, cfg.test}}) {
    while (sink->size() < n) make_sentence(*sink);
    sink->resize(n);
  }
  return out;
}

}  // namespace cemb::synthetic

#endif  // CEMB_SYNTHETIC_HPP
