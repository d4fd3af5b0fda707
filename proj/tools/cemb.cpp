// cemb: train and evaluate concept-embedding models.
//
// Exit codes: 0 ok, 2 input error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cemb/config.hpp"
#include "cemb/pipeline.hpp"
#include "cemb/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cemb;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string config_path;
  std::vector<std::string> overrides;
};

void ensure_parent_dir(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw InputError("output directory does not exist: " + parent.string());
}

std::string json_text(const MetricsReport& r) { return r.to_json().dump(2) + "\n"; }

void emit_report(const MetricsReport& r, const std::string& out) {
  if (!out.empty()) write_file_atomic(out, json_text(r));
  std::cerr << r.to_table();
}

std::vector<std::vector<std::string>> read_sentences(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    auto toks = split_ws(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

void write_synthetic(const std::string& kind, const std::string& dir, bool small, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw InputError("output directory does not exist: " + dir);
  auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
  if (kind == "ner") {
    const auto d = synthetic::make_ner_corpus(small ? 60 : 400, seed);
    write_file_atomic(path("corpus.txt"), serialize_corpus(d.corpus));
    write_file_atomic(path("taxonomy.txt"), d.taxonomy);
    write_file_atomic(path("gazetteer.txt"), d.gazetteer);
  } else if (kind == "fnet") {
    synthetic::FnetConfig cfg;
    cfg.seed = seed;
    if (small) cfg.mentions = 300, cfg.dims = 20, cfg.train_heads_per_fine = 6, cfg.heldout_heads_per_fine = 6;
    const auto d = synthetic::make_fnet(cfg);
    write_file_atomic(path("hierarchy.txt"), fnet::serialize_hierarchy(d.hierarchy));
    write_file_atomic(path("train.jsonl"), fnet::serialize_mentions(d.train));
    write_file_atomic(path("dev.jsonl"), fnet::serialize_mentions(d.dev));
    write_file_atomic(path("test.jsonl"), fnet::serialize_mentions(d.test));
    write_file_atomic(path("word_emb.txt"), serialize_embeddings(d.embeddings));
    write_file_atomic(path("manual_prototypes.txt"), fnet::serialize_prototypes(fnet::to_prototype_table(d.manual_prototypes)));
  } else if (kind == "rerank") {
    synthetic::RerankConfig cfg;
    cfg.seed = seed;
    if (small) cfg.utterances = 60;
    const auto d = synthetic::make_rerank(cfg);
    write_file_atomic(path("train.jsonl"), rerank::serialize_nbest(d.train));
    write_file_atomic(path("dev.jsonl"), rerank::serialize_nbest(d.dev));
    write_file_atomic(path("test.jsonl"), rerank::serialize_nbest(d.test));
    write_file_atomic(path("gazetteer.txt"), d.gazetteer_text);
    std::string text;
    for (const auto& s : d.text) {
      for (std::size_t i = 0; i < s.size(); ++i) text += (i ? " " : "") + s[i];
      text += "\n";
    }
    write_file_atomic(path("text.txt"), text);
  } else if (kind == "tsa") {
    synthetic::TsaConfig cfg;
    cfg.seed = seed;
    if (small) cfg.train = 60, cfg.dev = 20, cfg.test = 20, cfg.concept_dims = 8;
    const auto d = synthetic::make_tsa(cfg);
    write_file_atomic(path("train.jsonl"), sentic::serialize_tsa(d.train));
    write_file_atomic(path("dev.jsonl"), sentic::serialize_tsa(d.dev));
    write_file_atomic(path("test.jsonl"), sentic::serialize_tsa(d.test));
    write_file_atomic(path("concepts.txt"), serialize_embeddings(d.concepts));
  } else {
    throw InputError("unknown synthetic dataset '" + kind + "' (ner, fnet, rerank, tsa)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cemb: concept embeddings for entity tagging, entity typing, n-best reranking and aspect sentiment"};
  app.require_subcommand(1);
  app.footer(RunConfig::help_text());
  Globals g;
  app.add_option("--seed", g.seed, "global seed (overrides config key 'seed')");
  app.add_option("--workers", g.workers, "worker threads (overrides config key 'workers')");
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--set", g.overrides, "config override key=value (repeatable)");

  RunConfig cfg;
  auto resolve = [&] {
    if (!g.config_path.empty()) cfg.merge_file(g.config_path);
    for (const auto& kv : g.overrides) cfg.apply_override(kv);
    if (g.seed) cfg.set("seed", std::to_string(*g.seed), "--seed");
    if (g.workers) cfg.set("workers", std::to_string(*g.workers), "--workers");
  };
  const auto seed = [&] { return static_cast<std::uint64_t>(cfg.integer("seed")); };

  // synth ------------------------------------------------------------------
  std::string synth_kind, synth_dir;
  bool synth_small = false;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (ner, fnet, rerank, tsa)");
  synth->add_option("kind", synth_kind)->required();
  synth->add_option("--out-dir", synth_dir)->required();
  synth->add_flag("--small", synth_small, "a reduced dataset for quick runs");
  synth->callback([&] {
    resolve();
    write_synthetic(synth_kind, synth_dir, synth_small, seed());
  });

  // embed ------------------------------------------------------------------
  std::string corpus_path, taxonomy_path, emb_path, out_path, query;
  std::size_t k_neighbors = 10;
  auto* et = app.add_subcommand("embed-train", "train Skip_NER word embeddings");
  et->add_option("--corpus", corpus_path)->required();
  et->add_option("--taxonomy", taxonomy_path);
  et->add_option("--out", out_path)->required();
  et->callback([&] {
    resolve();
    const auto corpus = load_corpus(corpus_path);
    std::optional<ConceptLexicon> tax;
    if (!taxonomy_path.empty()) tax = load_taxonomy(taxonomy_path);
    ensure_parent_dir(out_path);
    const auto emb = pipeline::embed_train(corpus, tax ? &*tax : nullptr, cfg);
    save_embeddings(emb, out_path);
  });

  auto* eq = app.add_subcommand("embed-query", "nearest neighbours of a word");
  eq->add_option("--emb", emb_path)->required();
  eq->add_option("--word", query)->required();
  eq->add_option("--k", k_neighbors);
  eq->callback([&] {
    resolve();
    const auto emb = load_embeddings(emb_path);
    for (const auto& n : nearest_neighbors(emb, query, k_neighbors))
      std::cout << n.token << '\t' << format_double(n.cosine) << '\n';
  });

  auto* ec = app.add_subcommand("embed-crf-feats", "emit CRF feature columns from embeddings");
  ec->add_option("--corpus", corpus_path)->required();
  ec->add_option("--emb", emb_path)->required();
  ec->add_option("--out", out_path)->required();
  ec->callback([&] {
    resolve();
    const auto corpus = load_corpus(corpus_path);
    const auto emb = load_embeddings(emb_path);
    ensure_parent_dir(out_path);
    write_file_atomic(out_path, pipeline::embed_crf_features(corpus, emb, cfg));
  });

  // fnet -------------------------------------------------------------------
  std::string train_path, dev_path, test_path, hierarchy_path, manual_path, proto_path, label_emb_file,
      write_label_emb, model_path, mode, label_kind;
  bool zero_shot = false, sweep = false;
  std::optional<double> threshold;
  auto* fp = app.add_subcommand("fnet-proto", "select label prototypes by NPMI");
  fp->add_option("--train", train_path)->required();
  fp->add_option("--hierarchy", hierarchy_path)->required();
  fp->add_option("--manual", manual_path, "label<TAB>w1,w2 lists that override NPMI selection");
  fp->add_option("--out", out_path)->required();
  fp->add_flag("--zero-shot", zero_shot, "drop level-2+ labels from the training mentions first");
  fp->callback([&] {
    resolve();
    const auto h = fnet::load_hierarchy(hierarchy_path);
    auto train = fnet::load_mentions(train_path);
    if (zero_shot) train = pipeline::drop_unseen_levels(std::move(train), h);
    std::map<std::string, std::vector<std::string>> manual;
    if (!manual_path.empty()) manual = fnet::parse_prototype_lists(read_file(manual_path), manual_path);
    ensure_parent_dir(out_path);
    write_file_atomic(out_path, fnet::serialize_prototypes(pipeline::fnet_prototypes(train, h, manual, cfg)));
  });

  std::string emb_for_fnet;
  auto* ft = app.add_subcommand("fnet-train", "train the joint mention/label embedding with WARP");
  ft->add_option("--train", train_path)->required();
  ft->add_option("--hierarchy", hierarchy_path)->required();
  ft->add_option("--mode", mode, "joint | fixed | adaptive");
  ft->add_option("--label-emb", label_kind, "proto | hle | proto-hle | random");
  ft->add_option("--prototypes", proto_path, "prototype file from fnet-proto");
  ft->add_option("--emb", emb_for_fnet, "word embeddings (prototype vectors, lexical init)");
  ft->add_option("--label-emb-file", label_emb_file, "precomputed label embedding (overrides --label-emb)");
  ft->add_option("--write-label-emb", write_label_emb, "also write the pretrained label embedding here");
  ft->add_option("--dev", dev_path, "dev mentions for --threshold-sweep");
  ft->add_flag("--threshold-sweep", sweep, "pick the inference threshold on --dev and store it in the model");
  ft->add_flag("--zero-shot", zero_shot, "train on level-1 labels only");
  ft->add_option("--out", model_path)->required();
  ft->callback([&] {
    if (!mode.empty()) g.overrides.push_back("fnet.mode=" + mode);
    if (!label_kind.empty()) g.overrides.push_back("fnet.label_emb=" + label_kind);
    resolve();
    const auto h = fnet::load_hierarchy(hierarchy_path);
    auto train = fnet::load_mentions(train_path);
    if (zero_shot) train = pipeline::drop_unseen_levels(std::move(train), h);
    std::optional<EmbeddingSet> emb;
    if (!emb_for_fnet.empty()) emb = load_embeddings(emb_for_fnet);
    std::optional<fnet::LabelEmbeddingMatrix> b;
    const bool joint = cfg.str("fnet.mode") == "joint";
    if (!label_emb_file.empty()) {
      b = fnet::parse_label_embedding(read_file(label_emb_file), h, label_emb_file);
    } else if (!joint || !write_label_emb.empty()) {
      std::optional<fnet::PrototypeTable> protos;
      if (!proto_path.empty()) protos = fnet::to_prototype_table(fnet::parse_prototype_lists(read_file(proto_path), proto_path));
      b = pipeline::build_label_embedding(cfg.str("fnet.label_emb"), h, protos ? &*protos : nullptr,
                                          emb ? &*emb : nullptr, cfg);
    }
    std::vector<fnet::MentionInstance> dev;
    if (sweep) {
      if (dev_path.empty()) throw InputError("--threshold-sweep needs --dev");
      dev = fnet::load_mentions(dev_path);
    }
    ensure_parent_dir(model_path);
    const auto trained = pipeline::fnet_train(train, h, joint ? nullptr : &*b, emb ? &*emb : nullptr, zero_shot, cfg);
    auto text = fnet::serialize_model(trained.model, trained.dict, h, cfg.str("fnet.label_emb"), cfg.str("fnet.mode"));
    if (sweep) {
      const double t = fnet::tune_threshold(trained.model, pipeline::fnet_features(dev, trained.dict), dev, h,
                                            pipeline::fnet_topk(h, cfg));
      text.insert(text.find('\n') + 1, "#meta threshold " + format_double(t) + "\n");
    }
    if (b && !write_label_emb.empty()) write_file_atomic(write_label_emb, fnet::serialize_label_embedding(*b, h));
    write_file_atomic(model_path, text);
  });

  auto* fe = app.add_subcommand("fnet-eval", "type test mentions and score strict/macro/micro");
  fe->add_option("--model", model_path)->required();
  fe->add_option("--test", test_path)->required();
  fe->add_option("--hierarchy", hierarchy_path)->required();
  fe->add_option("--threshold", threshold, "relative threshold t (default: model's tuned value, else config)");
  fe->add_flag("--threshold-sweep", sweep, "report strict accuracy for every grid threshold");
  fe->add_option("--out", out_path, "metrics JSON");
  fe->callback([&] {
    resolve();
    const auto h = fnet::load_hierarchy(hierarchy_path);
    const auto loaded = fnet::parse_model(read_file(model_path), model_path);
    if (loaded.labels != h.labels()) throw InputError(model_path + ": model labels do not match the hierarchy");
    const auto test = fnet::load_mentions(test_path);
    if (!out_path.empty()) ensure_parent_dir(out_path);
    double t = cfg.real("fnet.threshold");
    if (auto it = loaded.meta.find("threshold"); it != loaded.meta.end()) t = parse_double(it->second, model_path);
    if (threshold) t = *threshold;
    const auto xs = pipeline::fnet_features(test, loaded.dict);
    const std::size_t k = pipeline::fnet_topk(h, cfg);
    auto report = pipeline::fnet_report(fnet::predict(loaded.model, xs, test, h, t, k), h);
    report.set("threshold", t);
    if (sweep)
      for (double s : fnet::threshold_grid())
        report.set("strict_acc@" + format_double(s), strict_accuracy(fnet::predict(loaded.model, xs, test, h, s, k)));
    emit_report(report, out_path);
  });

  // rerank -----------------------------------------------------------------
  std::string text_path, init_path, gazetteer_path, keywords_path;
  std::optional<double> fuse_alpha;
  bool zero_model = false, oracle = false, no_slp = false, slp_only = false, fuse_tuned = false;
  auto* rp = app.add_subcommand("rerank-pretrain", "CD-1 pretraining of the RBM on reference text");
  rp->add_option("--text", text_path, "one sentence per line")->required();
  rp->add_option("--train", train_path, "n-best training lists (define the vocabulary)")->required();
  rp->add_option("--out", model_path)->required();
  rp->callback([&] {
    resolve();
    const auto sentences = read_sentences(text_path);
    const auto train = rerank::load_nbest(train_path, cfg.count("rerank.nbest"));
    ensure_parent_dir(model_path);
    const auto vocab = rerank::build_rerank_vocab(train);
    rerank::RerankModel m;
    m.vocab = vocab.tokens();
    m.params = rerank::pretrain_generative(sentences, vocab, cfg.count("rerank.hidden"), pipeline::pretrain_config(cfg));
    m.params.w0 = cfg.real("rerank.w0");
    write_file_atomic(model_path, rerank::serialize_rerank_model(m));
  });

  auto* rt = app.add_subcommand("rerank-train", "discriminative RBM training (and the SLP baseline)");
  rt->add_option("--train", train_path)->required();
  rt->add_option("--init", init_path, "model from rerank-pretrain (default: small random W)");
  rt->add_option("--gazetteer", gazetteer_path, "enables the entity prior");
  rt->add_flag("--no-slp", no_slp, "skip training the perceptron baseline");
  rt->add_option("--dev", dev_path, "held-out lists for tuning the fusion weight alpha");
  rt->add_option("--report", out_path, "training report JSON (entity prior activation, alpha)");
  rt->add_option("--out", model_path)->required();
  rt->callback([&] {
    resolve();
    const auto train = rerank::load_nbest(train_path, cfg.count("rerank.nbest"));
    std::vector<rerank::NBestList> dev;
    if (!dev_path.empty()) {
      if (no_slp) throw InputError("--dev tunes the fusion weight and needs the perceptron (drop --no-slp)");
      dev = rerank::load_nbest(dev_path, cfg.count("rerank.nbest"));
    }
    std::optional<Gazetteer> gaz;
    if (!gazetteer_path.empty()) gaz = load_gazetteer(gazetteer_path);
    rerank::RerankModel m;
    Vocabulary vocab;
    if (!init_path.empty()) {
      m = rerank::parse_rerank_model(read_file(init_path), init_path);
      vocab = Vocabulary::from_tokens(m.vocab);
    } else {
      vocab = rerank::build_rerank_vocab(train);
      m.vocab = vocab.tokens();
      m.params = pipeline::drbm_random_init(vocab.size(), cfg);
    }
    m.presence = cfg.flag("rerank.presence");
    ensure_parent_dir(model_path);
    if (!out_path.empty()) ensure_parent_dir(out_path);
    MetricsReport report;
    std::optional<rerank::EntityPrior> prior;
    if (gaz) {
      prior = rerank::make_entity_prior(*gaz, vocab, cfg.real("rerank.lambda"));
      prior->literal = cfg.flag("rerank.literal_prior");
      if (m.params.hidden() < rerank::EntityPrior::kReservedUnits)
        throw InputError("entity prior needs at least 3 hidden units");
      report.set("prior_activation_init", rerank::mean_prior_activation(m.params, *prior));
    }
    m.params = rerank::train_drbm(train, vocab, m.params, prior ? &*prior : nullptr, pipeline::drbm_config(cfg));
    if (prior) report.set("prior_activation_final", rerank::mean_prior_activation(m.params, *prior));
    if (!no_slp) {
      const auto slp = rerank::train_slp(train, vocab, pipeline::slp_config(cfg));
      m.slp = slp.weights;
      if (!dev.empty()) {
        m.alpha = rerank::tune_alpha(dev, vocab, m.params, slp, m.presence);
        report.set("alpha", *m.alpha);
      }
    }
    write_file_atomic(model_path, rerank::serialize_rerank_model(m));
    if (!out_path.empty()) write_file_atomic(out_path, json_text(report));
    std::cerr << report.to_table();
  });

  auto* re = app.add_subcommand("rerank-eval", "rerank n-best lists and report WER");
  re->add_option("--model", model_path);
  re->add_option("--test", test_path)->required();
  re->add_option("--fuse-slp", fuse_alpha, "late fusion S_RBM + alpha S_SLP");
  re->add_flag("--fuse", fuse_tuned, "late fusion with the model's tuned alpha (else config rerank.alpha)");
  re->add_option("--keywords", keywords_path, "word<TAB>weight file for weighted WER");
  re->add_flag("--slp-only", slp_only, "rank by the ASR posterior plus the perceptron correction");
  re->add_flag("--zero-model", zero_model, "W=b=c=0: ranks by the ASR posterior");
  re->add_flag("--oracle", oracle, "pick the minimum-WER hypothesis");
  re->add_option("--out", out_path, "metrics JSON");
  re->callback([&] {
    resolve();
    const auto test = rerank::load_nbest(test_path, cfg.count("rerank.nbest"));
    for (const auto& l : test)
      if (l.hyps.empty()) throw InputError(test_path + ": n-best list '" + l.utt_id + "' is empty");
    std::optional<WordWeights> keywords;
    if (!keywords_path.empty()) keywords = rerank::parse_keywords(read_file(keywords_path), keywords_path);
    if (!out_path.empty()) ensure_parent_dir(out_path);
    std::vector<std::size_t> chosen;
    std::string system;
    if (oracle) {
      system = "oracle";
      for (const auto& l : test) chosen.push_back(rerank::oracle_index(l));
    } else if (zero_model) {
      system = "asr";
      chosen = pipeline::choose_all(test, [&](std::size_t u, std::size_t i) { return test[u].hyps[i].asr_logp; });
    } else {
      if (model_path.empty()) throw InputError("rerank-eval needs --model (or --zero-model / --oracle)");
      const auto m = rerank::parse_rerank_model(read_file(model_path), model_path);
      const auto vocab = Vocabulary::from_tokens(m.vocab);
      const auto feats = rerank::featurize(test, vocab, m.presence);
      if (fuse_tuned) {
        if (fuse_alpha) throw InputError("--fuse and --fuse-slp are exclusive");
        fuse_alpha = m.alpha.value_or(cfg.real("rerank.alpha"));
      }
      if ((fuse_alpha || slp_only) && !m.slp) throw InputError(model_path + ": model has no SLP weights");
      if (fuse_alpha && slp_only) throw InputError("--fuse-slp and --slp-only are exclusive");
      const double alpha = fuse_alpha.value_or(0.0);
      system = fuse_alpha ? "drbm+slp" : slp_only ? "slp" : "drbm";
      rerank::SlpModel slp;
      if (m.slp) slp.weights = *m.slp;
      chosen = pipeline::choose_all(test, [&](std::size_t u, std::size_t i) {
        if (slp_only) return test[u].hyps[i].asr_logp + slp.correction(feats[u][i]);
        const double s = rerank::score_rbm(feats[u][i], test[u].hyps[i].asr_logp, m.params);
        return fuse_alpha ? rerank::fuse(s, slp.correction(feats[u][i]), alpha) : s;
      });
    }
    const auto w = rerank::corpus_wer(test, chosen, keywords ? &*keywords : nullptr);
    MetricsReport r;
    r.set("wer", w.plain.rate());
    r.set("errors", static_cast<double>(w.plain.errors));
    r.set("reference_words", static_cast<double>(w.plain.reference));
    if (keywords) r.set("weighted_wer", w.weighted.rate());
    std::cerr << "system: " << system << '\n';
    emit_report(r, out_path);
  });

  auto* rk = app.add_subcommand("rerank-keywords", "TF-IDF keyword weights from n-best references");
  rk->add_option("--refs", train_path, "n-best file whose references form the documents")->required();
  rk->add_option("--out", out_path)->required();
  rk->callback([&] {
    resolve();
    const auto data = rerank::load_nbest(train_path);
    ensure_parent_dir(out_path);
    write_file_atomic(out_path, rerank::serialize_keywords(rerank::tfidf_keywords(
                                    rerank::reference_documents(data), cfg.real("rerank.tfidf_threshold"))));
  });

  // tsa --------------------------------------------------------------------
  std::string concepts_path, model_dir;
  std::optional<std::size_t> classes;
  bool target_avg = false;
  auto* tt = app.add_subcommand("tsa-train", "train the Sentic LSTM with dev-set model selection");
  tt->add_option("--train", train_path)->required();
  tt->add_option("--dev", dev_path)->required();
  tt->add_option("--concepts", concepts_path, "concept embeddings (embedding text format)");
  tt->add_option("--classes", classes, "3 or 4");
  tt->add_flag("--target-averaging", target_avg, "uniform target attention (ablation)");
  tt->add_option("--out-dir", model_dir)->required();
  tt->callback([&] {
    if (classes) g.overrides.push_back("tsa.classes=" + std::to_string(*classes));
    if (target_avg) g.overrides.push_back("tsa.target_averaging=true");
    resolve();
    const auto train = sentic::load_tsa(train_path);
    const auto dev = sentic::load_tsa(dev_path);
    std::optional<EmbeddingSet> concepts;
    if (!concepts_path.empty()) concepts = load_embeddings(concepts_path);
    const auto trained = pipeline::tsa_train(train, dev, concepts ? &*concepts : nullptr, cfg);
    fs::create_directories(model_dir);
    nlohmann::ordered_json manifest;
    manifest["params"] = "params.txt";
    manifest["best_epoch"] = trained.result.best_epoch;
    manifest["aspects"] = trained.encoder.aspects;
    manifest["classes"] = trained.encoder.classes;
    manifest["target_averaging"] = cfg.flag("tsa.target_averaging");
    manifest["concepts"] = concepts.has_value();
    manifest["train_loss"] = trained.result.train_loss;
    manifest["dev"] = nlohmann::ordered_json::array();
    for (const auto& r : trained.result.dev_history) manifest["dev"].push_back(r.to_json());
    manifest["config"] = cfg.serialize();
    write_file_atomic((fs::path(model_dir) / "params.txt").string(),
                      sentic::serialize_params(trained.result.params, trained.encoder.vocab.tokens()));
    write_file_atomic((fs::path(model_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    std::cerr << "best epoch " << trained.result.best_epoch << '\n'
              << trained.result.dev_history[trained.result.best_epoch - 1].to_table();
  });

  auto* te = app.add_subcommand("tsa-eval", "evaluate a Sentic LSTM checkpoint");
  te->add_option("--model-dir", model_dir)->required();
  te->add_option("--test", test_path)->required();
  te->add_option("--concepts", concepts_path);
  te->add_option("--out", out_path, "metrics JSON");
  te->callback([&] {
    resolve();
    const auto manifest_path = (fs::path(model_dir) / "manifest.json").string();
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(manifest_path + ": " + e.what());
    }
    const auto params_path = (fs::path(model_dir) / "params.txt").string();
    auto [params, vocab_tokens] = sentic::parse_params(read_file(params_path), params_path);
    const auto test = sentic::load_tsa(test_path);
    sentic::Encoder enc;
    enc.vocab = Vocabulary::from_tokens(vocab_tokens);
    enc.aspects = manifest.at("aspects").get<std::vector<std::string>>();
    enc.classes = manifest.at("classes").get<std::size_t>();
    enc.concept_dims = params.dims.concept_dim;
    if (concepts_path.empty() && manifest.value("concepts", false))
      throw InputError(model_dir + " was trained with concept vectors; pass --concepts");
    if (!concepts_path.empty()) {
      const auto concepts = load_embeddings(concepts_path);
      if (concepts.dims() != enc.concept_dims) throw InputError(concepts_path + ": concept dims differ from the model");
      for (std::size_t i = 0; i < concepts.tokens.size(); ++i) {
        const auto r = concepts.word_vectors.row(i);
        enc.concept_vectors[concepts.tokens[i]] = Vector(r.begin(), r.end());
      }
    }
    std::vector<sentic::Encoded> data;
    for (const auto& t : test) data.push_back(enc.encode(t));
    if (!out_path.empty()) ensure_parent_dir(out_path);
    emit_report(sentic::predict_and_evaluate(data, params, enc.aspects, manifest.value("target_averaging", false)),
                out_path);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
