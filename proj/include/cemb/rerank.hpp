// N-best reranking with a discriminatively trained RBM.
//
// Visible units are unigram features phi(t) of a hypothesis; the energy adds
// the recognizer's log posterior with a fixed weight w0. Integrating out the
// binary hidden layer gives the free energy
//
//   F(t) = -w0 ln P(t|a) - b.phi - sum_j softplus(c_j + (W^T phi)_j)
//
// and S_RBM(t) = -F(t) is the reranking score.

#ifndef CEMB_RERANK_HPP
#define CEMB_RERANK_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "json.hpp"
#include "log.hpp"
#include "metrics.hpp"
#include "numerics.hpp"
#include "text_io.hpp"

namespace cemb::rerank {

struct Hypothesis {
  std::vector<std::string> words;
  double asr_logp = 0.0;
};

struct NBestList {
  std::string utt_id;
  std::vector<std::string> reference;
  std::vector<Hypothesis> hyps;
};

inline std::vector<NBestList> parse_nbest(const std::string& text, const std::string& where = "nbest",
                                          std::size_t max_hyps = 0) {
  std::vector<NBestList> out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where + ":" + std::to_string(lineno);
    NBestList l;
    try {
      const auto j = nlohmann::json::parse(line);
      l.utt_id = j.at("utt_id").get<std::string>();
      l.reference = j.at("ref").get<std::vector<std::string>>();
      for (const auto& h : j.at("hyps")) {
        Hypothesis hyp{h.at("words").get<std::vector<std::string>>(), h.at("logp").get<double>()};
        if (!std::isfinite(hyp.asr_logp)) throw InputError(at + ": non-finite logp");
        l.hyps.push_back(std::move(hyp));
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(at + ": " + e.what());
    }
    if (max_hyps && l.hyps.size() > max_hyps) l.hyps.resize(max_hyps);
    out.push_back(std::move(l));
  }
  return out;
}

inline std::vector<NBestList> load_nbest(const std::string& path, std::size_t max_hyps = 0) {
  return parse_nbest(read_file(path), path, max_hyps);
}

inline std::string serialize_nbest(const std::vector<NBestList>& lists) {
  std::string out;
  for (const auto& l : lists) {
    nlohmann::ordered_json j;
    j["utt_id"] = l.utt_id;
    j["ref"] = l.reference;
    j["hyps"] = nlohmann::json::array();
    for (const auto& h : l.hyps) j["hyps"].push_back({{"words", h.words}, {"logp", h.asr_logp}});
    out += j.dump() + "\n";
  }
  return out;
}

/// Vocabulary over training hypotheses and references.
inline Vocabulary build_rerank_vocab(const std::vector<NBestList>& data) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : data) {
    for (const auto& w : l.reference) ++counts[w];
    for (const auto& h : l.hyps)
      for (const auto& w : h.words) ++counts[w];
  }
  return Vocabulary::from_counts(counts, 1);
}

/// Word counts (or presence) per vocabulary id; OOV words go to `<unk>`.
inline SparseVector phi_unigram(const Hypothesis& hyp, const Vocabulary& vocab, bool presence = false) {
  std::vector<SparseVector::Entry> e;
  for (const auto& w : hyp.words) e.emplace_back(vocab.id(w), 1.0);
  auto v = SparseVector::from_entries(std::move(e));
  if (!presence) return v;
  std::vector<SparseVector::Entry> p;
  for (const auto& [i, c] : v.entries()) p.emplace_back(i, 1.0);
  return SparseVector::from_entries(std::move(p));
}

struct DrbmParams {
  Matrix W;  // n x d
  Matrix b;  // n x 1
  Matrix c;  // d x 1
  double w0 = 1.0;

  static DrbmParams zeros(std::size_t n, std::size_t d, double w0 = 1.0) {
    return {Matrix(n, d), Matrix(n, 1), Matrix(d, 1), w0};
  }
  std::size_t visible() const { return W.rows(); }
  std::size_t hidden() const { return W.cols(); }
  bool all_finite() const { return W.all_finite() && b.all_finite() && c.all_finite() && std::isfinite(w0); }
};

/// c + W^T phi
inline Vector hidden_preactivation(const SparseVector& phi, const DrbmParams& p) {
  Vector z(p.c.data().begin(), p.c.data().end());
  for (const auto& [i, v] : phi.entries()) {
    if (i >= p.visible()) throw std::out_of_range("feature index beyond W rows");
    axpy(v, p.W.row(i), z);
  }
  return z;
}

inline double free_energy(const SparseVector& phi, double asr_logp, const DrbmParams& p) {
  double f = -p.w0 * asr_logp;
  for (const auto& [i, v] : phi.entries()) f -= p.b(i, 0) * v;
  for (double z : hidden_preactivation(phi, p)) f -= softplus(z);
  return f;
}

inline double score_rbm(const SparseVector& phi, double asr_logp, const DrbmParams& p) {
  return -free_energy(phi, asr_logp, p);
}

/// The three parts of S_RBM: w0 ln P(t|a), b.phi and sum_j softplus(.).
struct ScoreParts {
  double asr, linear, hidden;
  double total() const { return asr + linear + hidden; }
};

inline ScoreParts score_parts(const SparseVector& phi, double asr_logp, const DrbmParams& p) {
  ScoreParts s{p.w0 * asr_logp, 0.0, 0.0};
  for (const auto& [i, v] : phi.entries()) s.linear += p.b(i, 0) * v;
  for (double z : hidden_preactivation(phi, p)) s.hidden += softplus(z);
  return s;
}

struct EntityPrior {
  std::vector<std::pair<std::size_t, std::size_t>> G;  // (feature index w, hidden index e)
  double lambda = 0.01;
  bool literal = false;  // -lambda ln prod (P - 1)^2 instead of -lambda sum ln P

  static constexpr std::size_t kReservedUnits = 3;  // LOCATION, ORGANIZATION, PERSON
};

/// Pairs each in-vocabulary gazetteer word with the hidden unit reserved for
/// its class.
inline EntityPrior make_entity_prior(const Gazetteer& gaz, const Vocabulary& vocab, double lambda) {
  if (lambda < 0.0) throw InputError("entity prior: lambda must be non-negative");
  EntityPrior p;
  p.lambda = lambda;
  for (const auto& [word, cls] : gaz)
    if (vocab.contains(word)) p.G.emplace_back(vocab.id(word), static_cast<std::size_t>(cls));
  return p;
}

/// P(h_e = 1 | phi_w = 1) = sigma(c_e + W[w][e])
inline double prior_activation(const DrbmParams& p, std::size_t w, std::size_t e) {
  return sigmoid(p.c(e, 0) + p.W(w, e));
}

inline double mean_prior_activation(const DrbmParams& p, const EntityPrior& prior) {
  if (prior.G.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [w, e] : prior.G) s += prior_activation(p, w, e);
  return s / static_cast<double>(prior.G.size());
}

inline double prior_loss(const DrbmParams& p, const EntityPrior& prior) {
  double l = 0.0;
  for (const auto& [w, e] : prior.G) {
    const double z = p.c(e, 0) + p.W(w, e);
    l += prior.literal ? -2.0 * log_sigmoid(-z) : -log_sigmoid(z);
  }
  return prior.lambda * l;
}

struct DrbmGrad {
  Matrix W, b, c;
  explicit DrbmGrad(const DrbmParams& p) : W(p.W.rows(), p.W.cols()), b(p.b.rows(), 1), c(p.c.rows(), 1) {}
};

/// Adds alpha * dS_RBM/dtheta.
inline void add_score_gradient(const SparseVector& phi, const DrbmParams& p, double alpha, DrbmGrad& g) {
  const Vector z = hidden_preactivation(phi, p);
  Vector s(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) s[j] = sigmoid(z[j]);
  for (std::size_t j = 0; j < s.size(); ++j) g.c(j, 0) += alpha * s[j];
  for (const auto& [i, v] : phi.entries()) {
    g.b(i, 0) += alpha * v;
    axpy(alpha * v, s, g.W.row(i));
  }
}

inline void add_prior_gradient(const DrbmParams& p, const EntityPrior& prior, double alpha, DrbmGrad& g) {
  for (const auto& [w, e] : prior.G) {
    const double z = p.c(e, 0) + p.W(w, e);
    // d/dz of -ln sigma(z) is -(1 - sigma(z)); of -2 ln(1 - sigma(z)) is 2 sigma(z)
    const double dz = prior.literal ? 2.0 * sigmoid(z) : -(1.0 - sigmoid(z));
    g.c(e, 0) += alpha * prior.lambda * dz;
    g.W(w, e) += alpha * prior.lambda * dz;
  }
}

/// Hypothesis with minimal WER against the reference (ties: lowest index).
inline std::size_t oracle_index(const NBestList& l) {
  if (l.hyps.empty()) throw InputError("n-best list '" + l.utt_id + "' is empty");
  std::size_t best = 0;
  std::size_t best_err = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < l.hyps.size(); ++i) {
    const std::size_t e = wer_stats(l.reference, l.hyps[i].words).errors;
    if (e < best_err) best_err = e, best = i;
  }
  return best;
}

/// Hinge objective of one utterance, sum_{t' != oracle} max(0, 1 - S(oracle) + S(t')),
/// plus the prior term. The form whose subgradient Algorithm 1 follows.
inline double utterance_loss(const NBestList& l, const std::vector<SparseVector>& phis, const DrbmParams& p,
                             const EntityPrior* prior = nullptr) {
  const std::size_t o = oracle_index(l);
  const double so = score_rbm(phis[o], l.hyps[o].asr_logp, p);
  double loss = 0.0;
  for (std::size_t i = 0; i < l.hyps.size(); ++i)
    if (i != o) loss += std::max(0.0, 1.0 - so + score_rbm(phis[i], l.hyps[i].asr_logp, p));
  if (prior) loss += prior_loss(p, *prior);
  return loss;
}

/// Subgradient of `utterance_loss`.
inline DrbmGrad utterance_gradient(const NBestList& l, const std::vector<SparseVector>& phis, const DrbmParams& p,
                                   const EntityPrior* prior = nullptr) {
  DrbmGrad g(p);
  const std::size_t o = oracle_index(l);
  const double so = score_rbm(phis[o], l.hyps[o].asr_logp, p);
  for (std::size_t i = 0; i < l.hyps.size(); ++i) {
    if (i == o || 1.0 + score_rbm(phis[i], l.hyps[i].asr_logp, p) <= so) continue;
    add_score_gradient(phis[o], p, -1.0, g);
    add_score_gradient(phis[i], p, 1.0, g);
  }
  if (prior) add_prior_gradient(p, *prior, 1.0, g);
  return g;
}

struct DrbmTrainConfig {
  std::size_t epochs = 5;
  double lr = 0.001;
  bool presence = false;
};

inline std::vector<std::vector<SparseVector>> featurize(const std::vector<NBestList>& data, const Vocabulary& vocab,
                                                        bool presence) {
  std::vector<std::vector<SparseVector>> out;
  out.reserve(data.size());
  for (const auto& l : data) {
    std::vector<SparseVector> v;
    for (const auto& h : l.hyps) v.push_back(phi_unigram(h, vocab, presence));
    out.push_back(std::move(v));
  }
  return out;
}

/// Algorithm 1. Per utterance the negative set is fixed from the scores at
/// entry; each violator then moves theta up the oracle's score and down its
/// own, with gradients at the current theta. The prior, when present, takes
/// one descent step per utterance. w0 is never updated.
inline DrbmParams train_drbm(const std::vector<NBestList>& data, const Vocabulary& vocab, DrbmParams params,
                             const EntityPrior* prior, const DrbmTrainConfig& cfg) {
  if (prior)
    for (const auto& [w, e] : prior->G)
      if (e >= params.hidden() || e >= EntityPrior::kReservedUnits || w >= params.visible())
        throw InputError("train_drbm: entity prior pair out of range");
  const auto feats = featurize(data, vocab, cfg.presence);
  auto step = [&](const SparseVector& phi, double sign) {
    const Vector z = hidden_preactivation(phi, params);
    for (std::size_t j = 0; j < z.size(); ++j) params.c(j, 0) += sign * cfg.lr * sigmoid(z[j]);
    for (const auto& [i, v] : phi.entries()) {
      params.b(i, 0) += sign * cfg.lr * v;
      auto row = params.W.row(i);
      for (std::size_t j = 0; j < z.size(); ++j) row[j] += sign * cfg.lr * v * sigmoid(z[j]);
    }
  };
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t u = 0; u < data.size(); ++u) {
      const auto& l = data[u];
      if (l.hyps.empty()) {
        warn("train_drbm: n-best list '" + l.utt_id + "' is empty, skipped");
        continue;
      }
      const std::size_t o = oracle_index(l);
      const double so = score_rbm(feats[u][o], l.hyps[o].asr_logp, params);
      std::vector<std::size_t> negatives;
      for (std::size_t i = 0; i < l.hyps.size(); ++i)
        if (i != o && 1.0 + score_rbm(feats[u][i], l.hyps[i].asr_logp, params) > so) negatives.push_back(i);
      for (std::size_t i : negatives) {
        step(feats[u][o], 1.0);
        step(feats[u][i], -1.0);
      }
      if (prior && prior->lambda > 0.0) {
        DrbmGrad g(params);
        add_prior_gradient(params, *prior, 1.0, g);
        for (const auto& [w, e] : prior->G) {
          params.W(w, e) -= cfg.lr * g.W(w, e);
          g.W(w, e) = 0.0;
        }
        for (std::size_t e = 0; e < EntityPrior::kReservedUnits && e < params.hidden(); ++e)
          params.c(e, 0) -= cfg.lr * g.c(e, 0);
      }
    }
    if (!params.all_finite()) throw NumericError("train_drbm: non-finite parameters");
  }
  return params;
}

// ---------------------------------------------------------------------------
// Generative pretraining

struct PretrainConfig {
  std::size_t epochs = 5;
  double lr = 0.01;
  double init_scale = 0.01;
  std::uint64_t seed = 1;
};

/// Mean reconstruction cross-entropy of presence vectors after one
/// mean-field up-down pass.
inline double reconstruction_cross_entropy(const std::vector<SparseVector>& data, const DrbmParams& p) {
  if (data.empty()) return 0.0;
  const std::size_t n = p.visible();
  double total = 0.0;
  Vector v1(n);
  for (const auto& v0 : data) {
    Vector h = hidden_preactivation(v0, p);
    for (double& x : h) x = sigmoid(x);
    for (std::size_t i = 0; i < n; ++i) v1[i] = p.b(i, 0) + dot(p.W.row(i), h);
    for (std::size_t i = 0; i < n; ++i) total += v0.get(i) > 0.0 ? -log_sigmoid(v1[i]) : -log_sigmoid(-v1[i]);
  }
  return total / static_cast<double>(data.size());
}

/// CD-1 on sentence presence vectors with binary visible and hidden units.
/// w0 is left at 1.
inline DrbmParams pretrain_generative(const std::vector<std::vector<std::string>>& sentences, const Vocabulary& vocab,
                                      std::size_t d, const PretrainConfig& cfg) {
  const std::size_t n = vocab.size();
  DrbmParams p = DrbmParams::zeros(n, d);
  const Rng root(cfg.seed);
  Rng init = root.substream("rerank.pretrain.init");
  for (double& w : p.W.data()) w = cfg.init_scale * init.normal();
  Rng rng = root.substream("rerank.pretrain.gibbs");
  std::vector<SparseVector> data;
  for (const auto& s : sentences) data.push_back(phi_unigram({s, 0.0}, vocab, true));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Vector h0(d), hs(d), v1(n), h1(d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& v0 = data[idx];
      h0 = hidden_preactivation(v0, p);
      for (std::size_t j = 0; j < d; ++j) {
        h0[j] = sigmoid(h0[j]);
        hs[j] = rng.uniform() < h0[j] ? 1.0 : 0.0;
      }
      for (std::size_t i = 0; i < n; ++i) v1[i] = sigmoid(p.b(i, 0) + dot(p.W.row(i), hs));
      for (std::size_t j = 0; j < d; ++j) h1[j] = p.c(j, 0);
      for (std::size_t i = 0; i < n; ++i) axpy(v1[i], p.W.row(i), h1);
      for (double& x : h1) x = sigmoid(x);
      // positive phase on the sparse v0, negative phase on the dense reconstruction
      for (const auto& [i, v] : v0.entries()) {
        axpy(cfg.lr * v, h0, p.W.row(i));
        p.b(i, 0) += cfg.lr * v;
      }
      for (std::size_t i = 0; i < n; ++i) {
        axpy(-cfg.lr * v1[i], h1, p.W.row(i));
        p.b(i, 0) -= cfg.lr * v1[i];
      }
      for (std::size_t j = 0; j < d; ++j) p.c(j, 0) += cfg.lr * (h0[j] - h1[j]);
    }
    if (!p.all_finite()) throw NumericError("pretrain_generative: non-finite parameters");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Perceptron baseline

struct SlpModel {
  Vector weights;  // over vocabulary ids
  std::size_t pairs_per_list = 100;
  std::size_t iterations = 10;

  /// S_SLP(t) = w . phi(t)
  double correction(const SparseVector& phi) const {
    double s = 0.0;
    for (const auto& [i, v] : phi.entries()) s += weights.at(i) * v;
    return s;
  }
};

struct SlpConfig {
  std::size_t pairs_per_list = 100;
  std::size_t iterations = 10;
  double lr = 1.0;
  bool presence = false;
  std::uint64_t seed = 1;
};

/// Perceptron over sampled hypothesis pairs. A pair is misordered when the
/// lower-WER member does not outscore the other under asr_logp + w.phi;
/// equal-WER pairs are skipped.
inline SlpModel train_slp(const std::vector<NBestList>& data, const Vocabulary& vocab, const SlpConfig& cfg) {
  SlpModel m{Vector(vocab.size(), 0.0), cfg.pairs_per_list, cfg.iterations};
  const auto feats = featurize(data, vocab, cfg.presence);
  std::vector<std::vector<std::size_t>> errors;
  for (const auto& l : data) {
    std::vector<std::size_t> e;
    for (const auto& h : l.hyps) e.push_back(wer_stats(l.reference, h.words).errors);
    errors.push_back(std::move(e));
  }
  Rng rng = Rng(cfg.seed).substream("rerank.slp");
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t u = 0; u < data.size(); ++u) {
      const std::size_t n = data[u].hyps.size();
      if (n < 2) continue;
      for (std::size_t k = 0; k < cfg.pairs_per_list; ++k) {
        std::size_t a = rng.uniform_int(n), b = rng.uniform_int(n - 1);
        if (b >= a) ++b;
        if (errors[u][a] == errors[u][b]) continue;
        if (errors[u][a] > errors[u][b]) std::swap(a, b);
        const double sa = data[u].hyps[a].asr_logp + m.correction(feats[u][a]);
        const double sb = data[u].hyps[b].asr_logp + m.correction(feats[u][b]);
        if (sa > sb) continue;
        for (const auto& [i, v] : feats[u][a].entries()) m.weights[i] += cfg.lr * v;
        for (const auto& [i, v] : feats[u][b].entries()) m.weights[i] -= cfg.lr * v;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Decoding

/// S(t) = S_RBM(t) + alpha S_SLP(t)
inline double fuse(double s_rbm, double s_slp, double alpha = 1.0) { return s_rbm + alpha * s_slp; }

/// Index of the highest score (ties: lowest index).
inline std::size_t rerank(const NBestList& l, const std::function<double(std::size_t)>& scorer) {
  if (l.hyps.empty()) throw InputError("rerank: n-best list '" + l.utt_id + "' is empty");
  std::size_t best = 0;
  double best_s = scorer(0);
  for (std::size_t i = 1; i < l.hyps.size(); ++i) {
    const double s = scorer(i);
    if (s > best_s) best_s = s, best = i;
  }
  return best;
}

/// Fusion weights tried by `tune_alpha`: 0, 0.1, ..., 2.0. Zero lets dev
/// data switch the perceptron off.
inline std::vector<double> alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(i / 10.0);
  return g;
}

/// The grid alpha with the fewest word errors on `dev` under
/// S_RBM + alpha S_SLP; ties go to the smaller alpha.
inline double tune_alpha(const std::vector<NBestList>& dev, const Vocabulary& vocab, const DrbmParams& p,
                         const SlpModel& slp, bool presence) {
  if (dev.empty()) throw InputError("tune_alpha: empty dev set");
  const auto feats = featurize(dev, vocab, presence);
  double best = 0.0;
  std::size_t best_errors = std::numeric_limits<std::size_t>::max();
  for (double a : alpha_grid()) {
    std::size_t errors = 0;
    for (std::size_t u = 0; u < dev.size(); ++u) {
      const std::size_t i = rerank(dev[u], [&](std::size_t t) {
        return fuse(score_rbm(feats[u][t], dev[u].hyps[t].asr_logp, p), slp.correction(feats[u][t]), a);
      });
      errors += wer_stats(dev[u].reference, dev[u].hyps[i].words).errors;
    }
    if (errors < best_errors) best_errors = errors, best = a;
  }
  return best;
}

/// Keyword weights: 1 for words with tf(w) ln(N/df(w)) >= threshold, where
/// tf is the word's total count over all documents.
inline WordWeights tfidf_keywords(const std::vector<std::vector<std::string>>& docs, double threshold = 3.0) {
  if (docs.empty()) throw InputError("tfidf_keywords: no documents");
  std::map<std::string, double> tf, df;
  for (const auto& d : docs) {
    std::set<std::string> seen;
    for (const auto& w : d) {
      tf[w] += 1.0;
      if (seen.insert(w).second) df[w] += 1.0;
    }
  }
  WordWeights out;
  const double n = static_cast<double>(docs.size());
  for (const auto& [w, f] : tf) out[w] = f * std::log(n / df[w]) >= threshold ? 1.0 : 0.0;
  return out;
}

inline std::string serialize_keywords(const WordWeights& w) {
  std::map<std::string, double> sorted(w.begin(), w.end());
  std::string out;
  for (const auto& [word, weight] : sorted) out += word + "\t" + format_double(weight) + "\n";
  return out;
}

inline WordWeights parse_keywords(const std::string& text, const std::string& where = "keywords") {
  WordWeights out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 2) throw InputError(where + ":" + std::to_string(lineno) + ": expected 'word<TAB>weight'");
    out[cols[0]] = parse_double(cols[1], where + ":" + std::to_string(lineno));
  }
  return out;
}

/// Groups utterances into documents by the utt_id prefix before the first
/// '-'; ids without '-' are their own document.
inline std::vector<std::vector<std::string>> reference_documents(const std::vector<NBestList>& data) {
  std::map<std::string, std::vector<std::string>> docs;
  for (const auto& l : data) {
    const auto dash = l.utt_id.find('-');
    auto& d = docs[dash == std::string::npos ? l.utt_id : l.utt_id.substr(0, dash)];
    d.insert(d.end(), l.reference.begin(), l.reference.end());
  }
  std::vector<std::vector<std::string>> out;
  for (auto& [k, d] : docs) out.push_back(std::move(d));
  return out;
}

struct CorpusWer {
  WerStats plain;
  WerStats weighted;
};

inline CorpusWer corpus_wer(const std::vector<NBestList>& data, const std::vector<std::size_t>& chosen,
                            const WordWeights* keywords = nullptr) {
  CorpusWer out;
  for (std::size_t u = 0; u < data.size(); ++u) {
    const auto& hyp = data[u].hyps.at(chosen[u]).words;
    out.plain += wer_stats(data[u].reference, hyp);
    if (keywords) out.weighted += weighted_wer_stats(data[u].reference, hyp, *keywords, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model file

struct RerankModel {
  std::vector<std::string> vocab;  // starts with <unk>
  DrbmParams params;
  std::optional<Vector> slp;
  std::optional<double> alpha;  // fusion weight tuned on held-out lists
  bool presence = false;
};

inline std::string serialize_rerank_model(const RerankModel& m) {
  ModelFile f;
  f.kind = "drbm";
  f.meta["n"] = std::to_string(m.params.visible());
  f.meta["d"] = std::to_string(m.params.hidden());
  f.meta["w0"] = format_double(m.params.w0);
  f.meta["features"] = m.presence ? "presence" : "count";
  if (m.alpha) f.meta["alpha"] = format_double(*m.alpha);
  f.blocks.emplace_back("W", LabeledMatrix{m.vocab, m.params.W});
  f.blocks.emplace_back("b", LabeledMatrix{m.vocab, m.params.b});
  f.blocks.emplace_back("c", numbered(m.params.c));
  if (m.slp) {
    Matrix s(m.slp->size(), 1);
    for (std::size_t i = 0; i < m.slp->size(); ++i) s(i, 0) = (*m.slp)[i];
    f.blocks.emplace_back("slp", LabeledMatrix{m.vocab, s});
  }
  return f.serialize();
}

inline RerankModel parse_rerank_model(const std::string& text, const std::string& where) {
  const auto f = ModelFile::parse(text, where);
  if (f.kind != "drbm") throw InputError(where + ": not a drbm model");
  RerankModel m;
  const auto& W = f.block("W");
  m.vocab = W.labels;
  m.params.W = W.values;
  m.params.b = f.block("b").values;
  m.params.c = f.block("c").values;
  m.params.w0 = parse_double(f.meta_value("w0"), where);
  m.presence = f.meta.count("features") && f.meta.at("features") == "presence";
  if (f.meta.count("alpha")) m.alpha = parse_double(f.meta.at("alpha"), where);
  if (m.params.b.rows() != m.params.visible() || m.params.c.rows() != m.params.hidden())
    throw InputError(where + ": inconsistent matrix shapes");
  if (f.has_block("slp")) {
    const auto s = f.block("slp").values.data();
    m.slp = Vector(s.begin(), s.end());
  }
  return m;
}

}  // namespace cemb::rerank

#endif  // CEMB_RERANK_HPP
