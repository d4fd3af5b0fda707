#include <gtest/gtest.h>

#include <cmath>

#include "cemb/config.hpp"
#include "cemb/pipeline.hpp"
#include "cemb/rerank.hpp"
#include "cemb/synthetic.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace cemb;
using namespace cemb::rerank;

namespace {

NBestList list(std::vector<std::string> ref, std::vector<std::pair<std::vector<std::string>, double>> hyps) {
  NBestList l;
  l.utt_id = "t-1";
  l.reference = std::move(ref);
  for (auto& [w, lp] : hyps) l.hyps.push_back({std::move(w), lp});
  return l;
}

}  // namespace

TEST(FreeEnergy, HandExamples) {
  const auto zero = DrbmParams::zeros(3, 4);
  const auto phi = SparseVector::from_entries({{0, 1.0}, {2, 2.0}});
  EXPECT_NEAR(free_energy(phi, -2.5, zero), 2.5 - 4 * std::log(2.0), 1e-12);

  DrbmParams one = DrbmParams::zeros(1, 1, 0.0);
  one.W(0, 0) = 1.0;
  EXPECT_NEAR(free_energy(SparseVector::from_entries({{0, 1.0}}), -7.0, one), -std::log1p(std::exp(1.0)), 1e-12);
  EXPECT_NEAR(free_energy(SparseVector::from_entries({{0, 1.0}}), -7.0, one), -1.3133, 1e-4);
  EXPECT_THROW(free_energy(SparseVector::from_entries({{5, 1.0}}), 0.0, one), std::out_of_range);
}

TEST(FreeEnergy, MatchesEnumerationOverHiddenStates) {
  for (std::size_t d : {1, 4, 8, 12})
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
      EXPECT_LT(suites::free_energy_enumeration_gap(seed, d), 1e-9) << d << " " << seed;
}

TEST(FreeEnergy, ScorePartsSumToScore) {
  Rng rng(2);
  auto p = DrbmParams::zeros(5, 3, 0.7);
  suites::fill_normal(p.W, rng, 1.0);
  suites::fill_normal(p.b, rng, 1.0);
  suites::fill_normal(p.c, rng, 1.0);
  const auto phi = SparseVector::from_entries({{1, 1.0}, {4, 3.0}});
  const auto parts = score_parts(phi, -3.0, p);
  EXPECT_NEAR(parts.total(), score_rbm(phi, -3.0, p), 1e-12);
  EXPECT_EQ(parts.asr, 0.7 * -3.0);
}

TEST(Features, UnigramCountsAndPresence) {
  const auto v = Vocabulary::from_tokens({"<unk>", "a", "b"});
  const Hypothesis h{{"a", "b", "a", "zzz"}, 0.0};
  const auto c = phi_unigram(h, v);
  EXPECT_EQ(c.get(1), 2.0);
  EXPECT_EQ(c.get(2), 1.0);
  EXPECT_EQ(c.get(0), 1.0);
  EXPECT_EQ(phi_unigram(h, v, true).get(1), 1.0);
}

TEST(EntityPrior, ActivationAndGazetteerPairs) {
  auto p = DrbmParams::zeros(2, 3);
  p.c(1, 0) = 1.5;
  p.W(1, 1) = 0.5;
  EXPECT_NEAR(prior_activation(p, 1, 1), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(prior_activation(p, 1, 1), 0.8808, 1e-4);
  const auto vocab = Vocabulary::from_tokens({"<unk>", "paris", "ibm"});
  const auto prior = make_entity_prior(parse_gazetteer("paris\tLOCATION\nibm\tORGANIZATION\nrome\tLOCATION\n"),
                                       vocab, 0.1);
  EXPECT_EQ(prior.G.size(), 2u);
  EXPECT_EQ(mean_prior_activation(p, EntityPrior{}), 0.0);
  EXPECT_THROW(make_entity_prior({}, vocab, -1.0), InputError);
}

TEST(Drbm, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EXPECT_LT(suites::drbm_gradient_error(seed, false), 1e-4) << seed;
    EXPECT_LT(suites::drbm_gradient_error(seed, true), 1e-4) << seed;
  }
}

TEST(Drbm, OracleIndexTiesGoToFirst) {
  const auto l = list({"a", "b"}, {{{"a", "c"}, -1}, {{"x", "b"}, -2}, {{"a", "b"}, -3}, {{"a", "b"}, -4}});
  EXPECT_EQ(oracle_index(l), 2u);
  EXPECT_THROW(oracle_index(list({"a"}, {})), InputError);
}

TEST(Drbm, SatisfiedMarginsLeaveParametersUnchanged) {
  const auto l = list({"a"}, {{{"a"}, 0.0}, {{"b"}, -10.0}, {{"c"}, -20.0}});
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b", "c"});
  Rng rng(4);
  auto p = DrbmParams::zeros(4, 3);
  suites::fill_normal(p.W, rng, 0.1);
  const auto out = train_drbm({l}, vocab, p, nullptr, {3, 0.5, false});
  EXPECT_EQ(out.W, p.W);
  EXPECT_EQ(out.b, p.b);
  EXPECT_EQ(out.c, p.c);
}

TEST(Drbm, TrainingPromotesTheOracle) {
  const auto l = list({"a"}, {{{"b"}, 0.0}, {{"a"}, -0.5}});
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b"});
  auto p = train_drbm({l}, vocab, DrbmParams::zeros(3, 2), nullptr, {20, 0.1, false});
  const auto feats = featurize({l}, vocab, false);
  EXPECT_GT(score_rbm(feats[0][1], -0.5, p), score_rbm(feats[0][0], 0.0, p));
  EXPECT_EQ(p.w0, 1.0);
}

TEST(Drbm, PriorRaisesMeanActivation) {
  const auto l = list({"a"}, {{{"a"}, 0.0}, {{"b"}, -10.0}});
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b"});
  EntityPrior prior;
  prior.G = {{1, 0}, {2, 2}};
  prior.lambda = 1.0;
  const auto p0 = DrbmParams::zeros(3, 3);
  const auto p = train_drbm({l}, vocab, p0, &prior, {10, 0.1, false});
  EXPECT_GT(mean_prior_activation(p, prior), mean_prior_activation(p0, prior));
  prior.G = {{1, 5}};
  EXPECT_THROW(train_drbm({l}, vocab, p0, &prior, {1, 0.1, false}), InputError);
}

TEST(Drbm, RerankingInvariantToAsrShift) {
  Rng rng(9);
  auto p = DrbmParams::zeros(4, 2);
  suites::fill_normal(p.W, rng, 1.0);
  suites::fill_normal(p.b, rng, 1.0);
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b", "c"});
  for (int trial = 0; trial < 20; ++trial) {
    NBestList l = list({"a"}, {});
    for (int i = 0; i < 5; ++i) l.hyps.push_back({{std::string(1, static_cast<char>('a' + rng.uniform_int(3)))}, rng.normal()});
    auto shifted = l;
    for (auto& h : shifted.hyps) h.asr_logp += 17.25;
    const auto f = featurize({l}, vocab, false)[0];
    auto pick = [&](const NBestList& x) {
      return rerank::rerank(x, [&](std::size_t i) { return score_rbm(f[i], x.hyps[i].asr_logp, p); });
    };
    EXPECT_EQ(pick(l), pick(shifted));
  }
}

TEST(Slp, PerceptronUpdateAndEqualWerSkip) {
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b"});
  const auto l = list({"a"}, {{{"a"}, -1.0}, {{"b"}, 0.0}});
  SlpConfig cfg;
  cfg.pairs_per_list = 1;
  cfg.iterations = 1;
  const auto m = train_slp({l}, vocab, cfg);
  EXPECT_EQ(m.weights[1], 1.0);
  EXPECT_EQ(m.weights[2], -1.0);
  const auto tie = list({"c"}, {{{"a"}, -1.0}, {{"b"}, 0.0}});
  for (double w : train_slp({tie}, vocab, cfg).weights) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(m.correction(SparseVector::from_entries({{1, 2.0}, {2, 1.0}})), 1.0);
}

TEST(Decoding, FuseAndRerankTies) {
  EXPECT_EQ(fuse(2.0, 3.0, 0.5), 3.5);
  EXPECT_EQ(fuse(2.0, 3.0), 5.0);
  const auto l = list({"a"}, {{{"a"}, 0}, {{"b"}, 0}, {{"c"}, 0}});
  EXPECT_EQ(rerank::rerank(l, [](std::size_t i) { return i == 0 ? 1.0 : 2.0; }), 1u);
  EXPECT_EQ(alpha_grid().size(), 21u);
  EXPECT_EQ(alpha_grid().front(), 0.0);
  EXPECT_DOUBLE_EQ(alpha_grid().back(), 2.0);
}

TEST(Decoding, TuneAlphaTakesSmallestBestWeight) {
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b"});
  const auto dev = std::vector<NBestList>{list({"a"}, {{{"a"}, -1.0}, {{"b"}, 0.0}})};
  const auto p = DrbmParams::zeros(3, 2);
  SlpModel slp;
  slp.weights = {0.0, 0.0, 0.0};
  EXPECT_EQ(tune_alpha(dev, vocab, p, slp, false), 0.0);
  // "a" wins once -1 + 3 alpha > 0
  slp.weights = {0.0, 3.0, 0.0};
  EXPECT_DOUBLE_EQ(tune_alpha(dev, vocab, p, slp, false), 0.4);
}

TEST(Keywords, TfIdfThreshold) {
  std::vector<std::vector<std::string>> docs(20, {"the"});
  docs[0] = std::vector<std::string>(40, "paris");
  const auto w = tfidf_keywords(docs, 3.0);
  EXPECT_EQ(w.at("paris"), 1.0);
  EXPECT_EQ(w.at("the"), 0.0);
  EXPECT_EQ(tfidf_keywords(docs, 40 * std::log(20.0) + 1e-9).at("paris"), 0.0);
  EXPECT_EQ(parse_keywords(serialize_keywords(w)), w);
  EXPECT_THROW(tfidf_keywords({}), InputError);
}

TEST(Keywords, DocumentsGroupedByTalkPrefix) {
  auto a = list({"x"}, {}), b = list({"y"}, {}), c = list({"z"}, {});
  a.utt_id = "t1-1";
  b.utt_id = "t1-2";
  c.utt_id = "solo";
  const auto docs = reference_documents({a, b, c});
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0], (std::vector<std::string>{"z"}));
  EXPECT_EQ(docs[1], (std::vector<std::string>{"x", "y"}));
}

TEST(Pretrain, ZeroEpochsKeepsInitialization) {
  const auto vocab = Vocabulary::from_tokens({"<unk>", "a", "b"});
  PretrainConfig cfg;
  cfg.epochs = 0;
  const auto p = pretrain_generative({{"a", "b"}}, vocab, 4, cfg);
  EXPECT_EQ(p.b, Matrix(3, 1));
  EXPECT_EQ(p.c, Matrix(4, 1));
  cfg.epochs = 3;
  const auto q = pretrain_generative({{"a", "b"}, {"a"}}, vocab, 4, cfg);
  EXPECT_TRUE(q.all_finite());
  EXPECT_EQ(q.W, pretrain_generative({{"a", "b"}, {"a"}}, vocab, 4, cfg).W);
}

TEST(NbestFormat, RoundTripAndErrors) {
  const auto l = list({"a", "b"}, {{{"a", "b"}, -1.25}, {{"a"}, -3.0}});
  const auto back = parse_nbest(serialize_nbest({l}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].reference, l.reference);
  EXPECT_EQ(back[0].hyps[0].asr_logp, -1.25);
  EXPECT_EQ(parse_nbest(serialize_nbest({l}), "x", 1)[0].hyps.size(), 1u);
  EXPECT_THROW(parse_nbest("{\"utt_id\":\"u\"}\n"), InputError);
}

TEST(ModelFile, RerankRoundTrip) {
  Rng rng(10);
  RerankModel m;
  m.vocab = {"<unk>", "a", "b"};
  m.params = DrbmParams::zeros(3, 2, 0.5);
  suites::fill_normal(m.params.W, rng, 1.0);
  suites::fill_normal(m.params.c, rng, 1.0);
  m.slp = Vector{0.0, 1.5, -2.0};
  m.alpha = 0.3;
  m.presence = true;
  const auto back = parse_rerank_model(serialize_rerank_model(m), "model");
  EXPECT_EQ(back.vocab, m.vocab);
  EXPECT_EQ(back.params.W, m.params.W);
  EXPECT_EQ(back.params.c, m.params.c);
  EXPECT_EQ(back.params.w0, 0.5);
  EXPECT_EQ(*back.slp, *m.slp);
  EXPECT_EQ(*back.alpha, 0.3);
  EXPECT_TRUE(back.presence);
}

TEST(Pipeline, DrbmBeatsRecognizerOnSyntheticLists) {
  synthetic::RerankConfig sc;
  sc.utterances = 200;
  sc.nbest = 10;
  sc.seed = 5;
  const auto data = synthetic::make_rerank(sc);
  RunConfig c;
  const auto vocab = build_rerank_vocab(data.train);
  const auto p = train_drbm(data.train, vocab, pipeline::drbm_random_init(vocab.size(), c), nullptr,
                            pipeline::drbm_config(c));
  const auto feats = featurize(data.test, vocab, false);
  const auto asr = pipeline::choose_all(data.test, [&](std::size_t u, std::size_t i) { return data.test[u].hyps[i].asr_logp; });
  const auto drbm = pipeline::choose_all(data.test, [&](std::size_t u, std::size_t i) {
    return score_rbm(feats[u][i], data.test[u].hyps[i].asr_logp, p);
  });
  EXPECT_LT(corpus_wer(data.test, drbm).plain.rate(), corpus_wer(data.test, asr).plain.rate());
}
