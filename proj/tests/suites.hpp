// Gradient and exactness checks shared by the unit tests and the acceptance
// binary. Each returns a worst-case error so callers pick the tolerance.

#ifndef CEMB_TESTS_SUITES_HPP
#define CEMB_TESTS_SUITES_HPP

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "cemb/corpus.hpp"
#include "cemb/embed.hpp"
#include "cemb/fnet.hpp"
#include "cemb/numerics.hpp"
#include "cemb/rerank.hpp"
#include "cemb/sentic.hpp"
#include "cemb/synthetic.hpp"
#include "oracles.hpp"

namespace suites {

using namespace cemb;

constexpr double kEps = 1e-5;
// Relative error denominators never drop below this, so gradients that are
// numerically zero are compared absolutely.
constexpr double kFloor = 1e-4;

inline void fill_normal(Matrix& m, Rng& rng, double scale) {
  for (double& v : m.data()) v = scale * rng.normal();
}

// --- gradients -------------------------------------------------------------

inline double skipner_gradient_error(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = 8, nf = 6;
  Matrix w(1, d), F(nf, d);
  fill_normal(w, rng, 0.5);
  fill_normal(F, rng, 0.5);
  const std::size_t positive = rng.uniform_int(nf);
  std::vector<std::size_t> negatives;
  for (int k = 0; k < 4; ++k) negatives.push_back(rng.uniform_int(nf));
  auto loss = [&] { return negative_sampling_loss(w.row(0), F, positive, negatives); };
  Vector gw;
  Matrix gF;
  negative_sampling_gradient(w.row(0), F, positive, negatives, gw, gF);
  Matrix gW(1, d);
  std::copy(gw.begin(), gw.end(), gW.data().begin());
  std::vector<Matrix*> params{&w, &F};
  std::vector<Matrix> grads{gW, gF};
  return fd_gradcheck(loss, params, grads, kEps, kFloor);
}

/// Smallest |margin| over every hinge of a WARP example; kinks are where it
/// reaches zero.
inline double warp_min_margin(const fnet::JointEmbeddingModel& m, const fnet::TrainingExample& ex,
                              const std::vector<std::size_t>& negatives) {
  const Vector s = m.scores(ex.x);
  double worst = 1e300;
  for (std::size_t y : ex.labels)
    for (std::size_t yn : negatives) worst = std::min(worst, std::abs(1.0 - s[y] + s[yn]));
  return worst;
}

inline double warp_gradient_error(std::uint64_t seed, bool adaptive) {
  Rng rng(seed);
  const std::size_t D = 5, M = 9, N = 6;
  fnet::JointEmbeddingModel model{Matrix(D, M), Matrix(D, N)};
  fnet::TrainingExample ex;
  std::vector<std::size_t> negatives;
  // redraw until every hinge sits clear of its kink
  for (int attempt = 0;; ++attempt) {
    fill_normal(model.A, rng, 0.7);
    fill_normal(model.B, rng, 0.7);
    std::vector<SparseVector::Entry> e;
    for (int k = 0; k < 4; ++k) e.emplace_back(rng.uniform_int(M), rng.uniform(0.5, 1.5));
    ex.x = SparseVector::from_entries(e);
    ex.labels = {rng.uniform_int(N)};
    if (rng.uniform() < 0.5) {
      const std::size_t y2 = rng.uniform_int(N);
      if (y2 != ex.labels[0]) ex.labels.push_back(y2);
    }
    negatives.clear();
    for (std::size_t y = 0; y < N; ++y)
      if (std::find(ex.labels.begin(), ex.labels.end(), y) == ex.labels.end()) negatives.push_back(y);
    if (warp_min_margin(model, ex, negatives) > 1e-3) break;
    if (attempt > 1000) throw std::runtime_error("warp_gradient_error: no kink-free draw");
  }
  Matrix prior(D, N);
  fill_normal(prior, rng, 0.7);
  const Matrix* pr = adaptive ? &prior : nullptr;
  const double lambda = 0.3;
  Matrix gA, gB;
  fnet::warp_gradient(model, ex, negatives, pr, lambda, gA, gB);
  auto loss = [&] { return fnet::warp_loss(model, ex, negatives, pr, lambda); };
  std::vector<Matrix*> params{&model.A, &model.B};
  std::vector<Matrix> grads{gA, gB};
  return fd_gradcheck(loss, params, grads, kEps, kFloor);
}

inline double drbm_gradient_error(std::uint64_t seed, bool literal_prior) {
  Rng rng(seed);
  const std::vector<std::string> words{"paris", "london", "the", "a", "went", "to", "bank", "pair"};
  std::vector<std::string> tokens{Vocabulary::kUnk};
  tokens.insert(tokens.end(), words.begin(), words.end());
  const auto vocab = Vocabulary::from_tokens(tokens);
  rerank::NBestList list;
  list.utt_id = "u";
  for (int k = 0; k < 4; ++k) list.reference.push_back(words[rng.uniform_int(words.size())]);
  for (int h = 0; h < 6; ++h) {
    rerank::Hypothesis hyp;
    for (std::size_t k = 0, n = 2 + rng.uniform_int(4); k < n; ++k) hyp.words.push_back(words[rng.uniform_int(words.size())]);
    hyp.asr_logp = -rng.uniform(1.0, 8.0);
    list.hyps.push_back(hyp);
  }
  const auto phis = rerank::featurize({list}, vocab, false)[0];
  rerank::EntityPrior prior;
  prior.lambda = 0.5;
  prior.literal = literal_prior;
  prior.G = {{vocab.id("paris"), 0}, {vocab.id("london"), 0}, {vocab.id("bank"), 1}};
  auto p = rerank::DrbmParams::zeros(vocab.size(), 5, 1.0);
  const std::size_t o = rerank::oracle_index(list);
  for (int attempt = 0;; ++attempt) {
    fill_normal(p.W, rng, 0.5);
    fill_normal(p.b, rng, 0.5);
    fill_normal(p.c, rng, 0.5);
    const double so = rerank::score_rbm(phis[o], list.hyps[o].asr_logp, p);
    double worst = 1e300;
    for (std::size_t i = 0; i < list.hyps.size(); ++i)
      if (i != o) worst = std::min(worst, std::abs(1.0 - so + rerank::score_rbm(phis[i], list.hyps[i].asr_logp, p)));
    if (worst > 1e-3) break;
    if (attempt > 1000) throw std::runtime_error("drbm_gradient_error: no kink-free draw");
  }
  const auto g = rerank::utterance_gradient(list, phis, p, &prior);
  auto loss = [&] { return rerank::utterance_loss(list, phis, p, &prior); };
  std::vector<Matrix*> params{&p.W, &p.b, &p.c};
  std::vector<Matrix> grads{g.W, g.b, g.c};
  return fd_gradcheck(loss, params, grads, kEps, kFloor);
}

inline sentic::SenticDims tiny_sentic_dims() {
  sentic::SenticDims d;
  d.vocab = 6;
  d.word = 4;
  d.hidden = 3;
  d.concept_dim = 3;
  d.attention = 3;
  d.aspects = 2;
  d.classes = 3;
  return d;
}

inline sentic::Encoded random_instance(Rng& rng, const sentic::SenticDims& d, std::size_t L) {
  sentic::Encoded e;
  for (std::size_t i = 0; i < L; ++i) {
    e.tokens.push_back(1 + rng.uniform_int(d.vocab - 1));
    Vector mu(d.concept_dim, 0.0);
    if (rng.uniform() < 0.6)
      for (double& v : mu) v = rng.normal();
    e.mu.push_back(mu);
  }
  e.targets = {1};
  if (L > 2 && rng.uniform() < 0.5) e.targets.push_back(2);
  for (std::size_t a = 0; a < d.aspects; ++a) e.gold.push_back(rng.uniform_int(d.classes));
  return e;
}

/// Full loss over every parameter matrix, embeddings included.
inline double sentic_gradient_error(std::uint64_t seed, bool averaging) {
  Rng rng(seed);
  const auto d = tiny_sentic_dims();
  auto p = sentic::init_params(d, rng.substream("init"));
  for (Matrix* m : p.matrices())
    for (double& v : m->data()) v += 0.1 * rng.normal();
  const auto e = random_instance(rng, d, 3 + rng.uniform_int(2));
  const sentic::RunOptions opt{averaging, 0.0, nullptr};
  auto g = sentic::SenticParams::zeros(d);
  sentic::run(e, p, opt, &g);
  auto loss = [&] { return sentic::run(e, p, opt).loss; };
  std::vector<Matrix> grads;
  for (const Matrix* m : g.matrices()) grads.push_back(*m);
  return fd_gradcheck(loss, p.matrices(), grads, kEps, kFloor);
}

// --- exactness -------------------------------------------------------------

/// |free_energy - 2^d enumeration| for a random toy with d hidden units.
inline double free_energy_enumeration_gap(std::uint64_t seed, std::size_t d) {
  Rng rng(seed);
  const std::size_t n = 7;
  auto p = rerank::DrbmParams::zeros(n, d, rng.uniform(0.5, 1.5));
  fill_normal(p.W, rng, 0.5);
  fill_normal(p.b, rng, 0.5);
  fill_normal(p.c, rng, 0.5);
  std::vector<double> dense(n, 0.0);
  std::vector<SparseVector::Entry> e;
  for (std::size_t i = 0; i < n; ++i)
    if (rng.uniform() < 0.6) {
      dense[i] = static_cast<double>(1 + rng.uniform_int(3));
      e.emplace_back(i, dense[i]);
    }
  const double logp = -rng.uniform(0.0, 10.0);
  const double fast = rerank::free_energy(SparseVector::from_entries(e), logp, p);
  return std::abs(fast - oracle::free_energy(dense, logp, p.W, p.b, p.c, p.w0));
}

/// Random tree of `n` labels: each label's parent is an earlier label or none.
inline fnet::LabelHierarchy random_tree(Rng& rng, std::size_t n) {
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "/L" + std::to_string(i);
    if (i == 0 || rng.uniform() < 0.3)
      paths.push_back(name);
    else
      paths.push_back(paths[rng.uniform_int(i)] + name);
  }
  return fnet::LabelHierarchy(paths);
}

/// Whether every Proto-HLE column equals its ProtoLE column plus the
/// parent's, bit for bit.
inline bool proto_hle_identity_holds(std::uint64_t seed) {
  Rng rng(seed);
  const auto h = random_tree(rng, 3 + rng.uniform_int(8));
  fnet::LabelEmbeddingMatrix proto{fnet::LabelEmbeddingKind::kProtoLE, Matrix(6, h.size())};
  fill_normal(proto.values, rng, 1.0);
  const auto hp = fnet::proto_hle(proto, fnet::hle(h));
  for (std::size_t c = 0; c < h.size(); ++c)
    for (std::size_t r = 0; r < proto.values.rows(); ++r) {
      double expected = proto.values(r, c);
      if (auto par = h.parent(c)) expected += proto.values(r, *par);
      if (hp.values(r, c) != expected) return false;
    }
  return true;
}

inline synthetic::NerData small_ner(std::uint64_t seed) { return synthetic::make_ner_corpus(60, seed); }

/// Largest |sum_f p(f|w) - 1| over every word and group of a trained set.
inline double grouped_softmax_normalization_gap(std::uint64_t seed) {
  const auto data = small_ner(seed);
  const auto tax = parse_taxonomy(data.taxonomy);
  const auto vocab = build_vocab(data.corpus, 1);
  SkipNerConfig cfg;
  cfg.dims = 10;
  cfg.epochs = 1;
  cfg.seed = seed;
  const auto fe = extract_feature_events(data.corpus, vocab, cfg.extraction(), &tax);
  const auto emb = train_skipner(fe, vocab, cfg);
  double worst = 0.0;
  for (const auto& [g, b] : emb.group_index)
    for (std::size_t w = 0; w < emb.vocab_size(); ++w) {
      double s = 0.0;
      for (std::size_t f = 0; f < emb.feature_blocks[b].vectors.rows(); ++f) s += group_prob(emb, w, g, f);
      worst = std::max(worst, std::abs(s - 1.0));
    }
  return worst;
}

/// Bidirectional encoding with all-zero concept vectors against a plain
/// BiLSTM made of standard LSTM steps; true when identical bit for bit.
inline bool zero_concept_reduction_holds(std::uint64_t seed) {
  Rng rng(seed);
  auto d = tiny_sentic_dims();
  d.hidden = 4;
  const auto p = sentic::init_params(d, rng.substream("init"));
  const std::size_t L = 2 + rng.uniform_int(5);
  std::vector<Vector> x(L, Vector(d.word)), mu(L, Vector(d.concept_dim, 0.0));
  for (auto& v : x)
    for (double& t : v) t = rng.normal();
  const auto H = sentic::encode_bilstm(x, mu, p).H;
  sentic::CellState s{Vector(d.hidden, 0.0), Vector(d.hidden, 0.0)};
  for (std::size_t i = 0; i < L; ++i) {
    s = sentic::lstm_step(x[i], s.h, s.C, p.fwd, d);
    for (std::size_t k = 0; k < d.hidden; ++k)
      if (H(i, k) != s.h[k]) return false;
  }
  s = {Vector(d.hidden, 0.0), Vector(d.hidden, 0.0)};
  for (std::size_t i = L; i-- > 0;) {
    s = sentic::lstm_step(x[i], s.h, s.C, p.bwd, d);
    for (std::size_t k = 0; k < d.hidden; ++k)
      if (H(i, d.hidden + k) != s.h[k]) return false;
  }
  return true;
}

/// Skip_NER restricted to the shared word group against plain skip-gram,
/// same seed; true when word and context vectors match bit for bit.
inline bool skipner_equals_skipgram(std::uint64_t seed) {
  const auto data = small_ner(seed);
  const auto vocab = build_vocab(data.corpus, 1);
  SkipNerConfig cfg;
  cfg.dims = 12;
  cfg.epochs = 2;
  cfg.seed = seed;
  cfg.pos_group = cfg.taxonomy_group = cfg.ne_group = false;
  const auto fe = extract_feature_events(data.corpus, vocab, cfg.extraction());
  const auto a = train_skipner(fe, vocab, cfg);
  const auto b = train_skipgram(data.corpus, vocab, cfg);
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(double)) == 0;
  };
  return a.feature_blocks.size() == 1 && same(a.word_vectors, b.word_vectors) &&
         same(a.feature_blocks[0].vectors, b.feature_blocks[0].vectors);
}

}  // namespace suites

#endif  // CEMB_TESTS_SUITES_HPP
