// End-to-end train/evaluate compositions driven by a RunConfig. The CLI is
// a thin layer over these.

#ifndef CEMB_PIPELINE_HPP
#define CEMB_PIPELINE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "corpus.hpp"
#include "embed.hpp"
#include "fnet.hpp"
#include "log.hpp"
#include "metrics.hpp"
#include "rerank.hpp"
#include "sentic.hpp"

namespace cemb::pipeline {

// ---------------------------------------------------------------------------
// Embeddings

inline SkipNerConfig skipner_config(const RunConfig& c) {
  SkipNerConfig s;
  s.dims = c.count("embed.dims");
  s.window = static_cast<int>(c.integer("embed.window"));
  s.negatives = c.count("embed.negatives");
  s.initial_lr = c.real("embed.lr");
  s.min_lr = c.real("embed.min_lr");
  s.epochs = c.count("embed.epochs");
  s.word_group = c.flag("embed.word_group");
  s.pos_group = c.flag("embed.pos_group");
  s.taxonomy_group = c.flag("embed.taxonomy_group");
  s.ne_group = c.flag("embed.ne_group");
  s.word_offset_groups = c.flag("embed.word_offset_groups");
  s.unigram_power = c.real("embed.unigram_power");
  s.seed = static_cast<std::uint64_t>(c.integer("seed"));
  s.workers = std::max<std::size_t>(1, c.count("workers"));
  return s;
}

inline EmbeddingSet embed_train(const Corpus& corpus, const ConceptLexicon* taxonomy, const RunConfig& c) {
  const auto cfg = skipner_config(c);
  const auto vocab = build_vocab(corpus, c.count("embed.min_count"));
  const auto events = extract_feature_events(corpus, vocab, cfg.extraction(), taxonomy);
  return train_skipner(events, vocab, cfg);
}

inline std::string embed_crf_features(const Corpus& corpus, const EmbeddingSet& emb, const RunConfig& c) {
  const auto vocab = Vocabulary::from_tokens(emb.tokens);
  const auto ks = c.counts("embed.cluster_ks");
  const auto clusters = cluster_words(emb, ks, static_cast<std::uint64_t>(c.integer("seed")), c.count("embed.cluster_iters"));
  return emit_crf_features(corpus, vocab, binarize(emb), clusters, ks);
}

// ---------------------------------------------------------------------------
// Fine-grained typing

inline fnet::WarpMode warp_mode(const std::string& s) {
  if (s == "joint") return fnet::WarpMode::kJoint;
  if (s == "fixed") return fnet::WarpMode::kFixed;
  if (s == "adaptive") return fnet::WarpMode::kAdaptive;
  throw InputError("unknown mode '" + s + "'");
}

/// Mentions with level-2+ labels removed (unseen types), and the mask of
/// labels that remain trainable.
inline std::vector<bool> level_one_mask(const fnet::LabelHierarchy& h) {
  std::vector<bool> m(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) m[i] = h.level(i) == 1;
  return m;
}

inline std::vector<fnet::MentionInstance> drop_unseen_levels(std::vector<fnet::MentionInstance> data,
                                                             const fnet::LabelHierarchy& h) {
  for (auto& m : data) std::erase_if(m.labels, [&](const std::string& y) { return h.level(h.id(y)) > 1; });
  return data;
}

inline fnet::PrototypeTable fnet_prototypes(const std::vector<fnet::MentionInstance>& train,
                                            const fnet::LabelHierarchy& h,
                                            const std::map<std::string, std::vector<std::string>>& manual,
                                            const RunConfig& c) {
  return fnet::select_prototypes(train, h, c.count("fnet.K"), manual);
}

inline fnet::LabelEmbeddingMatrix build_label_embedding(const std::string& kind, const fnet::LabelHierarchy& h,
                                                        const fnet::PrototypeTable* protos, const EmbeddingSet* emb,
                                                        const RunConfig& c) {
  if (kind == "hle") return fnet::hle(h, c.flag("fnet.hle_transitive"));
  if (kind == "random") {
    const Rng root(static_cast<std::uint64_t>(c.integer("seed")));
    return fnet::random_label_embedding(emb ? emb->dims() : c.count("fnet.dims"), h.size(),
                                        root.substream("fnet.random_labels"));
  }
  if (!protos || !emb) throw InputError("label embedding '" + kind + "' needs prototypes and word embeddings");
  auto p = fnet::proto_le(*protos, *emb, h);
  if (kind == "proto") return p;
  if (kind == "proto-hle") return fnet::proto_hle(p, fnet::hle(h, c.flag("fnet.hle_transitive")));
  throw InputError("unknown label embedding '" + kind + "'");
}

struct FnetTrained {
  fnet::JointEmbeddingModel model;
  fnet::FeatureDictionary dict;
};

inline std::vector<fnet::TrainingExample> fnet_examples(const std::vector<fnet::MentionInstance>& data,
                                                        const fnet::LabelHierarchy& h, fnet::FeatureDictionary& dict) {
  std::vector<fnet::TrainingExample> out;
  for (const auto& m : data) {
    fnet::TrainingExample ex{fnet::extract_mention_features(m, dict), {}};
    for (const auto& y : m.labels) ex.labels.push_back(h.id(y));
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<SparseVector> fnet_features(const std::vector<fnet::MentionInstance>& data,
                                               fnet::FeatureDictionary dict) {
  dict.freeze();
  std::vector<SparseVector> out;
  for (const auto& m : data) out.push_back(fnet::extract_mention_features(m, dict));
  return out;
}

/// `b_init` null only in joint mode. `zero_shot` trains on level-1 labels
/// only (the caller passes data whose finer labels were already dropped).
/// With lexical init, tok=/head= features exist for every embedding word, so
/// mentions whose words never occur in training still land near their
/// word vectors.
inline FnetTrained fnet_train(const std::vector<fnet::MentionInstance>& train, const fnet::LabelHierarchy& h,
                              const fnet::LabelEmbeddingMatrix* b_init, const EmbeddingSet* lexical, bool zero_shot,
                              const RunConfig& c) {
  FnetTrained out;
  fnet::WarpConfig w;
  w.mode = warp_mode(c.str("fnet.mode"));
  w.lambda = c.real("fnet.lambda");
  w.lr = c.real("fnet.lr");
  w.epochs = c.count("fnet.epochs");
  w.dims = c.count("fnet.dims");
  w.exact_rank_limit = c.count("fnet.exact_rank_limit");
  w.init_scale = c.real("fnet.init_scale");
  w.seed = static_cast<std::uint64_t>(c.integer("seed"));
  if (zero_shot) w.active_labels = level_one_mask(h);
  const std::size_t dims = b_init ? b_init->values.rows() : w.dims;
  if (lexical && c.flag("fnet.lexical_init")) {
    if (lexical->dims() == dims) {
      w.lexical_init = lexical;
      for (const auto& t : lexical->tokens) {
        if (t == Vocabulary::kUnk) continue;
        out.dict.id("tok=" + t);
        out.dict.id("head=" + t);
      }
    } else {
      info("fnet: word embedding dims differ from the joint space, lexical init skipped");
    }
  }
  const auto examples = fnet_examples(train, h, out.dict);
  out.dict.freeze();
  out.model = fnet::warp_train(examples, out.dict.size(), h.size(), b_init, w, &out.dict.names());
  return out;
}

inline std::size_t fnet_topk(const fnet::LabelHierarchy& h, const RunConfig& c) {
  const std::size_t k = c.count("fnet.topk");
  return k ? k : h.max_depth();
}

inline MetricsReport fnet_report(const std::vector<fnet::LabelPrediction>& preds, const fnet::LabelHierarchy& h) {
  auto r = fnet::evaluate(preds);
  for (std::size_t lvl = 1; lvl <= h.max_depth(); ++lvl)
    r.set("level" + std::to_string(lvl) + "_micro_precision", fnet::level_micro_precision(preds, h, lvl));
  return r;
}

// ---------------------------------------------------------------------------
// Reranking

inline rerank::DrbmTrainConfig drbm_config(const RunConfig& c) {
  return {c.count("rerank.epochs"), c.real("rerank.lr"), c.flag("rerank.presence")};
}

inline rerank::PretrainConfig pretrain_config(const RunConfig& c) {
  return {c.count("rerank.pretrain_epochs"), c.real("rerank.pretrain_lr"), 0.01,
          static_cast<std::uint64_t>(c.integer("seed"))};
}

inline rerank::SlpConfig slp_config(const RunConfig& c) {
  return {c.count("rerank.slp_pairs"), c.count("rerank.slp_iterations"), c.real("rerank.slp_lr"),
          c.flag("rerank.presence"), static_cast<std::uint64_t>(c.integer("seed"))};
}

/// Small random W (no pretraining), zero biases.
inline rerank::DrbmParams drbm_random_init(std::size_t n, const RunConfig& c) {
  auto p = rerank::DrbmParams::zeros(n, c.count("rerank.hidden"), c.real("rerank.w0"));
  Rng rng = Rng(static_cast<std::uint64_t>(c.integer("seed"))).substream("rerank.init");
  for (double& w : p.W.data()) w = 0.01 * rng.normal();
  return p;
}

/// Indices chosen per list by `scorer(list, hypothesis)`.
inline std::vector<std::size_t> choose_all(const std::vector<rerank::NBestList>& data,
                                           const std::function<double(std::size_t, std::size_t)>& scorer) {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < data.size(); ++u)
    out.push_back(rerank::rerank(data[u], [&](std::size_t i) { return scorer(u, i); }));
  return out;
}

// ---------------------------------------------------------------------------
// Sentiment

inline sentic::SenticDims sentic_dims(const sentic::Encoder& enc, const RunConfig& c) {
  sentic::SenticDims d;
  d.vocab = enc.vocab.size();
  d.word = c.count("tsa.word_dims");
  d.hidden = c.count("tsa.hidden");
  d.concept_dim = enc.concept_dims;
  d.attention = c.count("tsa.attention_dims");
  d.aspects = enc.aspects.size();
  d.classes = enc.classes;
  return d;
}

inline sentic::TrainConfig sentic_train_config(const RunConfig& c) {
  return {c.count("tsa.epochs"), c.real("tsa.lr"), c.real("tsa.dropout"), c.flag("tsa.target_averaging"),
          static_cast<std::uint64_t>(c.integer("seed"))};
}

struct TsaTrained {
  sentic::Encoder encoder;
  sentic::TrainResult result;
};

inline TsaTrained tsa_train(const std::vector<sentic::TsaInstance>& train, const std::vector<sentic::TsaInstance>& dev,
                            const EmbeddingSet* concepts, const RunConfig& c) {
  auto enc = sentic::make_encoder(train, c.list("tsa.aspects"), c.count("tsa.classes"), concepts,
                                  c.count("tsa.concept_dims"));
  std::vector<sentic::Encoded> tr, dv;
  for (const auto& t : train) tr.push_back(enc.encode(t));
  for (const auto& t : dev) dv.push_back(enc.encode(t));
  const Rng root(static_cast<std::uint64_t>(c.integer("seed")));
  auto init = sentic::init_params(sentic_dims(enc, c), root.substream("tsa.init"));
  auto result = sentic::train(tr, dv, enc.aspects, std::move(init), sentic_train_config(c));
  return {std::move(enc), std::move(result)};
}

}  // namespace cemb::pipeline

#endif  // CEMB_PIPELINE_HPP
