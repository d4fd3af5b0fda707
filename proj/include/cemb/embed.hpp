// Multi-task skip-gram (Skip_NER): word vectors trained to predict grouped
// features with a group-restricted softmax approximated by negative
// sampling. Also the discrete features derived from the trained vectors
// (binarization, k-means clusters) and embedding persistence.

#ifndef CEMB_EMBED_HPP
#define CEMB_EMBED_HPP

#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "corpus.hpp"
#include "log.hpp"
#include "numerics.hpp"
#include "text_io.hpp"

namespace cemb {

struct FeatureBlock {
  std::string key;
  std::vector<std::string> features;
  Matrix vectors;  // one row per feature
};

struct EmbeddingSet {
  std::vector<std::string> tokens;  // row labels of word_vectors, tokens[0] == "<unk>" when built from a corpus
  Matrix word_vectors;              // V x d
  /// Indexed by group id of the FeatureGroupTable used in training; disabled
  /// groups are absent from `group_index`.
  std::vector<FeatureBlock> feature_blocks;
  std::map<std::size_t, std::size_t> group_index;

  std::size_t dims() const { return word_vectors.cols(); }
  std::size_t vocab_size() const { return word_vectors.rows(); }

  const FeatureBlock* block_for_group(std::size_t group) const {
    auto it = group_index.find(group);
    return it == group_index.end() ? nullptr : &feature_blocks[it->second];
  }
  FeatureBlock* block_for_group(std::size_t group) {
    auto it = group_index.find(group);
    return it == group_index.end() ? nullptr : &feature_blocks[it->second];
  }
  const FeatureBlock* block_for_key(const std::string& key) const {
    for (const auto& b : feature_blocks)
      if (b.key == key) return &b;
    return nullptr;
  }

  std::optional<std::size_t> row_of(const std::string& token) const {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == token) return i;
    return std::nullopt;
  }
};

struct SkipNerConfig {
  std::size_t dims = 50;
  int window = 2;
  std::size_t negatives = 5;
  double initial_lr = 0.025;
  double min_lr = 1e-4;
  std::size_t epochs = 5;
  bool word_group = true;
  bool pos_group = true;
  bool taxonomy_group = true;
  bool ne_group = true;
  bool word_offset_groups = false;
  /// Exponent applied to feature counts in the negative-sampling
  /// distribution (1.0 = plain unigram).
  double unigram_power = 1.0;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  FeatureExtractionConfig extraction() const {
    FeatureExtractionConfig c;
    c.window = window;
    c.word_group = word_group;
    c.pos_group = pos_group;
    c.taxonomy_group = taxonomy_group;
    c.ne_group = ne_group;
    c.word_offset_groups = word_offset_groups;
    return c;
  }
};

/// p(f|w) = exp(v_f . v_w) / sum_{f' in C_S(f)} exp(v_f' . v_w)
inline double group_prob(const EmbeddingSet& emb, std::size_t word, std::size_t group, std::size_t feature) {
  if (word >= emb.vocab_size()) throw std::out_of_range("group_prob: unknown word id");
  const FeatureBlock* b = emb.block_for_group(group);
  if (!b) throw std::out_of_range("group_prob: unknown or disabled group");
  if (feature >= b->vectors.rows()) throw std::out_of_range("group_prob: unknown feature id");
  Vector scores(b->vectors.rows());
  for (std::size_t f = 0; f < scores.size(); ++f) scores[f] = dot(b->vectors.row(f), emb.word_vectors.row(word));
  return std::exp(scores[feature] - log_sum_exp(scores));
}

/// Exact grouped-softmax objective sum_events log p(f|w), by enumeration.
inline double full_softmax_objective(const EmbeddingSet& emb, const std::vector<FeatureEvent>& events) {
  double total = 0.0;
  for (const auto& e : events) total += std::log(group_prob(emb, e.center_word_id, e.group_id, e.feature_id));
  return total;
}

/// Negative-sampling loss of one event with fixed negatives:
/// -[log sigma(v_f.v_w) + sum_{f'} log sigma(-v_f'.v_w)].
inline double negative_sampling_loss(std::span<const double> word_vec, const Matrix& feature_vecs, std::size_t positive,
                                     std::span<const std::size_t> negatives) {
  double loss = -log_sigmoid(dot(feature_vecs.row(positive), word_vec));
  for (std::size_t f : negatives) loss -= log_sigmoid(-dot(feature_vecs.row(f), word_vec));
  return loss;
}

namespace detail {

template <bool Shared>
inline double load(const double& x) {
  if constexpr (Shared)
    return std::atomic_ref<const double>(x).load(std::memory_order_relaxed);
  else
    return x;
}

template <bool Shared>
inline void store(double& x, double v) {
  if constexpr (Shared)
    std::atomic_ref<double>(x).store(v, std::memory_order_relaxed);
  else
    x = v;
}

/// One gradient step on the negative-sampling loss. All scores and gradients
/// are computed from the parameters as they were on entry. Returns the loss
/// before the update. `Shared` selects relaxed-atomic access for the racy
/// multi-worker mode.
template <bool Shared>
double ns_update(std::span<double> word_vec, Matrix& feature_vecs, std::size_t positive,
                 std::span<const std::size_t> negatives, double lr, std::vector<double>& scratch_w,
                 std::vector<double>& scratch_grad) {
  const std::size_t d = word_vec.size();
  scratch_w.resize(d);
  scratch_grad.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) scratch_w[j] = load<Shared>(word_vec[j]);

  auto score = [&](std::size_t f) {
    auto row = feature_vecs.row(f);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += load<Shared>(row[j]) * scratch_w[j];
    return s;
  };

  // Coefficients c_k of dLoss/ds_k for the positive (k = 0) and each negative.
  const std::size_t m = negatives.size() + 1;
  std::vector<double> coef(m);
  std::vector<std::size_t> ids(m);
  double loss = 0.0;
  ids[0] = positive;
  {
    const double s = score(positive);
    loss -= log_sigmoid(s);
    coef[0] = sigmoid(s) - 1.0;
  }
  for (std::size_t k = 1; k < m; ++k) {
    ids[k] = negatives[k - 1];
    const double s = score(ids[k]);
    loss -= log_sigmoid(-s);
    coef[k] = sigmoid(s);
  }
  // Word gradient uses feature rows before their update.
  for (std::size_t k = 0; k < m; ++k) {
    auto row = feature_vecs.row(ids[k]);
    for (std::size_t j = 0; j < d; ++j) scratch_grad[j] += coef[k] * load<Shared>(row[j]);
  }
  for (std::size_t k = 0; k < m; ++k) {
    auto row = feature_vecs.row(ids[k]);
    for (std::size_t j = 0; j < d; ++j) store<Shared>(row[j], load<Shared>(row[j]) - lr * coef[k] * scratch_w[j]);
  }
  for (std::size_t j = 0; j < d; ++j) store<Shared>(word_vec[j], load<Shared>(word_vec[j]) - lr * scratch_grad[j]);
  return loss;
}

}  // namespace detail

/// Analytic gradient of `negative_sampling_loss` w.r.t. the word vector and
/// the feature matrix (dense, same shape), for verification.
inline void negative_sampling_gradient(std::span<const double> word_vec, const Matrix& feature_vecs,
                                       std::size_t positive, std::span<const std::size_t> negatives,
                                       Vector& grad_word, Matrix& grad_features) {
  grad_word.assign(word_vec.size(), 0.0);
  grad_features = Matrix(feature_vecs.rows(), feature_vecs.cols());
  auto term = [&](std::size_t f, double c) {
    axpy(c, feature_vecs.row(f), grad_word);
    axpy(c, word_vec, grad_features.row(f));
  };
  term(positive, sigmoid(dot(feature_vecs.row(positive), word_vec)) - 1.0);
  for (std::size_t f : negatives) term(f, sigmoid(dot(feature_vecs.row(f), word_vec)));
}

/// Unigram samplers per group, counts raised to `power`.
inline std::vector<DiscreteSampler> build_group_samplers(const FeatureGroupTable& table, double power) {
  std::vector<DiscreteSampler> out;
  out.reserve(table.size());
  for (const auto& g : table.groups()) {
    std::vector<double> w(g.counts.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = g.counts[i] > 0.0 ? std::pow(g.counts[i], power) : 0.0;
    out.emplace_back(w);
  }
  return out;
}

/// Draws n negatives from the event's group and applies one SGD step.
/// Returns the negated objective term of the event.
inline double sgd_step(EmbeddingSet& emb, const FeatureEvent& event, const std::vector<DiscreteSampler>& samplers,
                       double lr, std::size_t n, Rng& rng) {
  FeatureBlock* block = emb.block_for_group(event.group_id);
  if (!block) throw std::out_of_range("sgd_step: event group is not trained");
  std::vector<std::size_t> negatives(n);
  for (auto& f : negatives) f = samplers.at(event.group_id).sample(rng);
  std::vector<double> sw, sg;
  return detail::ns_update<false>(emb.word_vectors.row(event.center_word_id), block->vectors, event.feature_id,
                                  negatives, lr, sw, sg);
}

namespace detail {

inline Matrix init_word_vectors(std::size_t rows, std::size_t dims, Rng rng) {
  Matrix m(rows, dims);
  const double half = 0.5 / static_cast<double>(dims);
  for (double& x : m.data()) x = rng.uniform(-half, half);
  return m;
}

inline double linear_lr(const SkipNerConfig& cfg, std::size_t processed, std::size_t total) {
  const double frac = total ? static_cast<double>(processed) / static_cast<double>(total) : 0.0;
  return std::max(cfg.min_lr, cfg.initial_lr * (1.0 - frac));
}

}  // namespace detail

/// Trains word and feature vectors over `events`. With workers == 1 the run
/// is deterministic for a seed; with more workers, threads apply
/// unsynchronized updates to shared tables and results vary run to run.
inline EmbeddingSet train_skipner(const FeatureEvents& data, const Vocabulary& vocab, const SkipNerConfig& cfg) {
  if (data.events.empty()) throw InputError("train_skipner: empty event stream");
  if (cfg.dims == 0) throw InputError("train_skipner: dims must be positive");
  if (cfg.negatives == 0) throw InputError("train_skipner: negatives must be at least 1");
  if (!(cfg.word_group || cfg.pos_group || cfg.taxonomy_group || cfg.ne_group))
    throw InputError("train_skipner: no feature group enabled");

  const Rng root(cfg.seed);
  EmbeddingSet emb;
  emb.tokens = vocab.tokens();
  emb.word_vectors = detail::init_word_vectors(vocab.size(), cfg.dims, root.substream("embed.init"));
  for (std::size_t g = 0; g < data.table.size(); ++g) {
    const auto& grp = data.table.group(g);
    const bool enabled = (grp.type == FeatureType::kWord && cfg.word_group) ||
                         (grp.type == FeatureType::kPos && cfg.pos_group) ||
                         (grp.type == FeatureType::kTaxonomy && cfg.taxonomy_group) ||
                         (grp.type == FeatureType::kNeTag && cfg.ne_group);
    if (!enabled) continue;
    emb.group_index[g] = emb.feature_blocks.size();
    emb.feature_blocks.push_back({grp.key, grp.features, Matrix(grp.features.size(), cfg.dims)});
  }
  const auto samplers = build_group_samplers(data.table, cfg.unigram_power);
  const std::size_t total = data.events.size() * cfg.epochs;

  auto run_shard = [&]<bool Shared>(std::size_t begin, std::size_t end, std::size_t epoch, Rng rng) {
    std::vector<double> sw, sg;
    std::vector<std::size_t> negatives(cfg.negatives);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = data.events[i];
      FeatureBlock* block = emb.block_for_group(e.group_id);
      if (!block) continue;
      for (auto& f : negatives) f = samplers[e.group_id].sample(rng);
      const double lr = detail::linear_lr(cfg, epoch * data.events.size() + i, total);
      detail::ns_update<Shared>(emb.word_vectors.row(e.center_word_id), block->vectors, e.feature_id, negatives, lr,
                                sw, sg);
    }
  };

  Rng neg_rng = root.substream("embed.negatives");
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.workers <= 1) {
      // One generator across epochs keeps the single-worker stream continuous.
      std::vector<double> sw, sg;
      std::vector<std::size_t> negatives(cfg.negatives);
      for (std::size_t i = 0; i < data.events.size(); ++i) {
        const auto& e = data.events[i];
        FeatureBlock* block = emb.block_for_group(e.group_id);
        if (!block) continue;
        for (auto& f : negatives) f = samplers[e.group_id].sample(neg_rng);
        const double lr = detail::linear_lr(cfg, epoch * data.events.size() + i, total);
        detail::ns_update<false>(emb.word_vectors.row(e.center_word_id), block->vectors, e.feature_id, negatives, lr,
                                 sw, sg);
      }
    } else {
      std::vector<std::thread> threads;
      const std::size_t n = data.events.size();
      for (std::size_t w = 0; w < cfg.workers; ++w) {
        const std::size_t b = n * w / cfg.workers, e = n * (w + 1) / cfg.workers;
        Rng r = root.substream("embed.worker." + std::to_string(epoch) + "." + std::to_string(w));
        threads.emplace_back([&, b, e, epoch, r] { run_shard.template operator()<true>(b, e, epoch, r); });
      }
      for (auto& t : threads) t.join();
    }
  }
  if (!emb.word_vectors.all_finite()) throw NumericError("train_skipner: non-finite word vectors");
  return emb;
}

/// Plain skip-gram with negative sampling over (w_i, w_{i+k}) pairs, built
/// directly from the corpus. Context vectors are indexed by vocabulary id and
/// negatives come from the context-occurrence unigram distribution.
inline EmbeddingSet train_skipgram(const Corpus& corpus, const Vocabulary& vocab, const SkipNerConfig& cfg) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> ctx_counts(vocab.size(), 0.0);
  for (const auto& s : corpus.sentences) {
    const int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i)
      for (int k = -cfg.window; k <= cfg.window; ++k) {
        const int j = i + k;
        if (k == 0 || j < 0 || j >= n) continue;
        const std::size_t c = vocab.id(s[static_cast<std::size_t>(j)].surface);
        pairs.emplace_back(vocab.id(s[static_cast<std::size_t>(i)].surface), c);
        ctx_counts[c] += 1.0;
      }
  }
  if (pairs.empty()) throw InputError("train_skipgram: no context pairs");
  for (double& c : ctx_counts) c = c > 0.0 ? std::pow(c, cfg.unigram_power) : 0.0;
  const DiscreteSampler sampler(ctx_counts);

  const Rng root(cfg.seed);
  EmbeddingSet emb;
  emb.tokens = vocab.tokens();
  emb.word_vectors = detail::init_word_vectors(vocab.size(), cfg.dims, root.substream("embed.init"));
  emb.group_index[0] = 0;
  emb.feature_blocks.push_back({"word", vocab.tokens(), Matrix(vocab.size(), cfg.dims)});
  Matrix& context = emb.feature_blocks[0].vectors;

  Rng neg_rng = root.substream("embed.negatives");
  const std::size_t total = pairs.size() * cfg.epochs;
  std::vector<double> sw, sg;
  std::vector<std::size_t> negatives(cfg.negatives);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch)
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      for (auto& f : negatives) f = sampler.sample(neg_rng);
      const double lr = detail::linear_lr(cfg, epoch * pairs.size() + i, total);
      detail::ns_update<false>(emb.word_vectors.row(pairs[i].first), context, pairs[i].second, negatives, lr, sw, sg);
    }
  return emb;
}

struct Neighbor {
  std::string token;
  double cosine;
};

/// Top-k rows by cosine similarity to `query`, query excluded, ties by row.
inline std::vector<Neighbor> nearest_neighbors(const EmbeddingSet& emb, const std::string& query, std::size_t k) {
  const auto q = emb.row_of(query);
  if (!q) throw InputError("nearest_neighbors: '" + query + "' is not in the vocabulary");
  const auto qv = emb.word_vectors.row(*q);
  const double qn = norm2(qv);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < emb.vocab_size(); ++i) {
    if (i == *q) continue;
    const auto v = emb.word_vectors.row(i);
    const double denom = qn * norm2(v);
    scored.emplace_back(denom > 0.0 ? dot(qv, v) / denom : 0.0, i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i)
    out.push_back({emb.tokens[scored[i].second], scored[i].first});
  return out;
}

/// Per dimension m: 1 where the value reaches the mean of that dimension's
/// positive values, -1 where it reaches the mean of its negative values, 0
/// elsewhere. A dimension without positive (negative) values yields no 1s
/// (-1s).
inline SignMatrix binarize(const Matrix& vectors) {
  SignMatrix out(vectors.rows(), vectors.cols());
  for (std::size_t m = 0; m < vectors.cols(); ++m) {
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    for (std::size_t r = 0; r < vectors.rows(); ++r) {
      const double v = vectors(r, m);
      if (v > 0.0) pos_sum += v, ++pos_n;
      if (v < 0.0) neg_sum += v, ++neg_n;
    }
    const double pos_mean = pos_n ? pos_sum / static_cast<double>(pos_n) : std::numeric_limits<double>::infinity();
    const double neg_mean = neg_n ? neg_sum / static_cast<double>(neg_n) : -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < vectors.rows(); ++r) {
      const double v = vectors(r, m);
      if (v >= pos_mean)
        out(r, m) = 1;
      else if (v <= neg_mean)
        out(r, m) = -1;
    }
  }
  return out;
}

inline SignMatrix binarize(const EmbeddingSet& emb) { return binarize(emb.word_vectors); }

/// One k-means clustering of the word vectors per K, each seeded from its
/// own substream of `seed`.
inline std::map<std::size_t, std::vector<std::size_t>> cluster_words(const EmbeddingSet& emb,
                                                                     const std::vector<std::size_t>& ks,
                                                                     std::uint64_t seed, std::size_t max_iters = 100) {
  std::map<std::size_t, std::vector<std::size_t>> out;
  const Rng root(seed);
  for (std::size_t k : ks) {
    if (k == 0 || k > emb.vocab_size())
      throw InputError("cluster_words: K=" + std::to_string(k) + " outside [1, " + std::to_string(emb.vocab_size()) + "]");
    Rng rng = root.substream("cluster." + std::to_string(k));
    out[k] = kmeans(emb.word_vectors, k, max_iters, rng).assignments;
  }
  return out;
}

/// `<vocab_count> <dims>` then `<token> v1 ... vd` per line.
inline std::string serialize_embeddings(const EmbeddingSet& emb) {
  std::ostringstream out;
  write_matrix_block(out, {emb.tokens, emb.word_vectors});
  return out.str();
}

inline EmbeddingSet parse_embeddings(const std::string& text, const std::string& where = "embeddings") {
  std::istringstream in(text);
  auto block = read_matrix_block(in, where);
  std::string rest;
  while (std::getline(in, rest))
    if (!split_ws(rest).empty()) throw InputError(where + ": more rows than the header declares");
  EmbeddingSet emb;
  emb.tokens = std::move(block.labels);
  emb.word_vectors = std::move(block.values);
  return emb;
}

inline void save_embeddings(const EmbeddingSet& emb, const std::string& path) {
  write_file_atomic(path, serialize_embeddings(emb));
}

inline EmbeddingSet load_embeddings(const std::string& path) { return parse_embeddings(read_file(path), path); }

}  // namespace cemb

#endif  // CEMB_EMBED_HPP
