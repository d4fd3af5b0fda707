// Sentic LSTM with target-level and sentence-level attention for targeted
// aspect-based sentiment analysis.
//
// A bidirectional LSTM whose cells also read the averaged concept vector mu
// of each token: the f, I, o gates and the knowledge output gate o^c see
// [x, h_prev, mu]; the candidate C~ sees [x, h_prev]. The hidden state is
// h = o * tanh(C) + o^c * tanh(W_c mu). Target attention pools the target
// positions into v_t; per-aspect sentence attention pools the sentence with
// v_t as context; a per-aspect softmax predicts the polarity.

#ifndef CEMB_SENTIC_HPP
#define CEMB_SENTIC_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "embed.hpp"
#include "json.hpp"
#include "log.hpp"
#include "metrics.hpp"
#include "numerics.hpp"
#include "text_io.hpp"

namespace cemb::sentic {

constexpr std::size_t kMaxConcepts = 4;

/// Polarity classes; index 0 is None.
inline std::vector<std::string> class_names(std::size_t classes) {
  if (classes == 3) return {"none", "negative", "positive"};
  if (classes == 4) return {"none", "negative", "positive", "neutral"};
  throw InputError("sentic: class count must be 3 or 4");
}

// ---------------------------------------------------------------------------
// Parameters

struct SenticDims {
  std::size_t vocab = 1;
  std::size_t word = 150;
  std::size_t hidden = 50;
  std::size_t concept_dim = 100;
  std::size_t attention = 50;
  std::size_t aspects = 1;
  std::size_t classes = 3;

  std::size_t gate_input() const { return word + hidden + concept_dim; }
};

/// One direction. Gate matrices are d_h x (d_w + d_h + d_c) over [x, h, mu];
/// WC is d_h x (d_w + d_h); Wc is d_h x d_c. Biases are d_h x 1.
struct CellParams {
  Matrix Wf, WI, WC, Wo, Wco, Wc;
  Matrix bf, bI, bC, bo, bco;

  static CellParams zeros(const SenticDims& d) {
    const std::size_t in = d.gate_input(), h = d.hidden;
    return {Matrix(h, in), Matrix(h, in), Matrix(h, d.word + h), Matrix(h, in), Matrix(h, in), Matrix(h, d.concept_dim),
            Matrix(h, 1),  Matrix(h, 1),  Matrix(h, 1),               Matrix(h, 1),  Matrix(h, 1)};
  }

  std::vector<Matrix*> matrices() { return {&Wf, &WI, &WC, &Wo, &Wco, &Wc, &bf, &bI, &bC, &bo, &bco}; }
  static std::vector<std::string> names() { return {"Wf", "WI", "WC", "Wo", "Wco", "Wc", "bf", "bI", "bC", "bo", "bco"}; }
};

struct SenticParams {
  SenticDims dims;
  Matrix embed;  // vocab x d_w
  CellParams fwd, bwd;
  Matrix Wa1;  // d_m x 2d_h
  Matrix Wa2;  // 1 x d_m
  Matrix Wm;   // d_m x 4d_h
  Matrix va;   // aspects x d_m
  Matrix Wp;   // (aspects * classes) x 2d_h, rows a*C .. a*C+C-1 for aspect a
  Matrix bp;   // aspects x classes

  static SenticParams zeros(const SenticDims& d) {
    SenticParams p;
    p.dims = d;
    p.embed = Matrix(d.vocab, d.word);
    p.fwd = CellParams::zeros(d);
    p.bwd = CellParams::zeros(d);
    p.Wa1 = Matrix(d.attention, 2 * d.hidden);
    p.Wa2 = Matrix(1, d.attention);
    p.Wm = Matrix(d.attention, 4 * d.hidden);
    p.va = Matrix(d.aspects, d.attention);
    p.Wp = Matrix(d.aspects * d.classes, 2 * d.hidden);
    p.bp = Matrix(d.aspects, d.classes);
    return p;
  }

  std::vector<Matrix*> matrices() {
    std::vector<Matrix*> out{&embed};
    for (auto* m : fwd.matrices()) out.push_back(m);
    for (auto* m : bwd.matrices()) out.push_back(m);
    for (auto* m : {&Wa1, &Wa2, &Wm, &va, &Wp, &bp}) out.push_back(m);
    return out;
  }
  std::vector<const Matrix*> matrices() const {
    std::vector<const Matrix*> out;
    for (auto* m : const_cast<SenticParams*>(this)->matrices()) out.push_back(m);
    return out;
  }
  static std::vector<std::string> names() {
    std::vector<std::string> out{"embed"};
    for (const auto& n : CellParams::names()) out.push_back("fwd." + n);
    for (const auto& n : CellParams::names()) out.push_back("bwd." + n);
    for (const char* n : {"Wa1", "Wa2", "Wm", "va", "Wp", "bp"}) out.push_back(n);
    return out;
  }
  bool all_finite() const {
    for (const auto* m : matrices())
      if (!m->all_finite()) return false;
    return true;
  }
};

/// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero, embeddings
/// uniform in +-0.1.
inline SenticParams init_params(const SenticDims& d, Rng rng) {
  SenticParams p = SenticParams::zeros(d);
  auto glorot = [&](Matrix& m) {
    const double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double& v : m.data()) v = rng.uniform(-r, r);
  };
  for (double& v : p.embed.data()) v = rng.uniform(-0.1, 0.1);
  for (CellParams* c : {&p.fwd, &p.bwd})
    for (Matrix* m : {&c->Wf, &c->WI, &c->WC, &c->Wo, &c->Wco, &c->Wc}) glorot(*m);
  for (Matrix* m : {&p.Wa1, &p.Wa2, &p.Wm, &p.va, &p.Wp}) glorot(*m);
  return p;
}

// ---------------------------------------------------------------------------
// Cells

struct CellState {
  Vector h, C;
};

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("sentic: shape mismatch in ") + what);
}

/// First `len` columns of row r dotted with z.
inline double affine_row(const Matrix& W, std::size_t r, std::span<const double> z, std::size_t len) {
  return dot(W.row(r).data(), z.data(), len);
}

inline bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace detail

/// Standard LSTM step using only the [x, h] columns of the shared gate
/// blocks; no knowledge gate.
inline CellState lstm_step(std::span<const double> x, std::span<const double> h_prev, std::span<const double> C_prev,
                           const CellParams& p, const SenticDims& d) {
  detail::check(x.size() == d.word && h_prev.size() == d.hidden && C_prev.size() == d.hidden, "lstm_step");
  Vector z(x.begin(), x.end());
  z.insert(z.end(), h_prev.begin(), h_prev.end());
  const std::size_t n = z.size();
  CellState s{Vector(d.hidden), Vector(d.hidden)};
  for (std::size_t r = 0; r < d.hidden; ++r) {
    const double f = sigmoid(detail::affine_row(p.Wf, r, z, n) + p.bf(r, 0));
    const double i = sigmoid(detail::affine_row(p.WI, r, z, n) + p.bI(r, 0));
    const double g = std::tanh(detail::affine_row(p.WC, r, z, n) + p.bC(r, 0));
    const double o = sigmoid(detail::affine_row(p.Wo, r, z, n) + p.bo(r, 0));
    s.C[r] = f * C_prev[r] + i * g;
    s.h[r] = o * std::tanh(s.C[r]);
  }
  return s;
}

/// Everything a backward step needs.
struct StepCache {
  Vector z;  // [x, h_prev, mu]
  bool mu_zero = true;
  Vector f, I, g, o, oc, k, C_prev, C, tC;
};

inline CellState sentic_step(std::span<const double> x, std::span<const double> h_prev,
                             std::span<const double> C_prev, std::span<const double> mu, const CellParams& p,
                             const SenticDims& d, StepCache* cache = nullptr) {
  detail::check(x.size() == d.word && h_prev.size() == d.hidden && C_prev.size() == d.hidden && mu.size() == d.concept_dim,
                "sentic_step");
  StepCache local;
  StepCache& c = cache ? *cache : local;
  c.z.assign(x.begin(), x.end());
  c.z.insert(c.z.end(), h_prev.begin(), h_prev.end());
  c.z.insert(c.z.end(), mu.begin(), mu.end());
  c.mu_zero = detail::is_zero(mu);
  const std::size_t xh = d.word + d.hidden;
  // columns of mu contribute nothing when mu is zero
  const std::size_t n = c.mu_zero ? xh : c.z.size();
  const std::size_t H = d.hidden;
  for (Vector* v : {&c.f, &c.I, &c.g, &c.o, &c.oc, &c.k, &c.C, &c.tC}) v->assign(H, 0.0);
  c.C_prev.assign(C_prev.begin(), C_prev.end());
  CellState s{Vector(H), Vector(H)};
  for (std::size_t r = 0; r < H; ++r) {
    c.f[r] = sigmoid(detail::affine_row(p.Wf, r, c.z, n) + p.bf(r, 0));
    c.I[r] = sigmoid(detail::affine_row(p.WI, r, c.z, n) + p.bI(r, 0));
    c.g[r] = std::tanh(detail::affine_row(p.WC, r, c.z, xh) + p.bC(r, 0));
    c.o[r] = sigmoid(detail::affine_row(p.Wo, r, c.z, n) + p.bo(r, 0));
    c.oc[r] = sigmoid(detail::affine_row(p.Wco, r, c.z, n) + p.bco(r, 0));
    c.k[r] = c.mu_zero ? 0.0 : std::tanh(dot(p.Wc.row(r), mu));
    c.C[r] = c.f[r] * C_prev[r] + c.I[r] * c.g[r];
    c.tC[r] = std::tanh(c.C[r]);
    s.C[r] = c.C[r];
    s.h[r] = c.o[r] * c.tC[r] + c.oc[r] * c.k[r];
  }
  return s;
}

/// Pre-activation deltas of one step.
struct StepDeltas {
  Vector f, I, g, o, oc, k;
};

/// Backward through one sentic step without touching weight gradients.
/// Writes the gate deltas, dL/dz[0:d_w+d_h] into dxh and dL/dC_prev into
/// dC_prev.
inline void sentic_step_deltas(const StepCache& c, const CellParams& p, const SenticDims& d,
                               std::span<const double> dh, std::span<const double> dC, StepDeltas& a, Vector& dxh,
                               Vector& dC_prev) {
  const std::size_t H = d.hidden, xh = d.word + d.hidden;
  dxh.assign(xh, 0.0);
  dC_prev.assign(H, 0.0);
  for (Vector* v : {&a.f, &a.I, &a.g, &a.o, &a.oc, &a.k}) v->assign(H, 0.0);
  for (std::size_t r = 0; r < H; ++r) {
    const double dCt = dC[r] + dh[r] * c.o[r] * (1.0 - c.tC[r] * c.tC[r]);
    const double af = a.f[r] = dCt * c.C_prev[r] * c.f[r] * (1.0 - c.f[r]);
    const double aI = a.I[r] = dCt * c.g[r] * c.I[r] * (1.0 - c.I[r]);
    const double ag = a.g[r] = dCt * c.I[r] * (1.0 - c.g[r] * c.g[r]);
    const double ao = a.o[r] = dh[r] * c.tC[r] * c.o[r] * (1.0 - c.o[r]);
    const double aoc = a.oc[r] = dh[r] * c.k[r] * c.oc[r] * (1.0 - c.oc[r]);
    if (!c.mu_zero) a.k[r] = dh[r] * c.oc[r] * (1.0 - c.k[r] * c.k[r]);
    dC_prev[r] = dCt * c.f[r];
    const double *pf = p.Wf.row(r).data(), *pI = p.WI.row(r).data(), *pC = p.WC.row(r).data(),
                 *po = p.Wo.row(r).data(), *pco = p.Wco.row(r).data();
    double* out = dxh.data();
    for (std::size_t i = 0; i < xh; ++i) out[i] += pf[i] * af + pI[i] * aI + pC[i] * ag + po[i] * ao + pco[i] * aoc;
  }
}

/// Accumulates weight gradients of a whole sequence, steps taken in the
/// order given.
inline void sentic_accumulate(const std::vector<const StepCache*>& caches, const std::vector<const StepDeltas*>& deltas,
                              const SenticDims& d, CellParams& g) {
  const std::size_t H = d.hidden, xh = d.word + d.hidden;
  for (std::size_t r = 0; r < H; ++r) {
    double *gf = g.Wf.row(r).data(), *gI = g.WI.row(r).data(), *gC = g.WC.row(r).data(), *go = g.Wo.row(r).data(),
           *gco = g.Wco.row(r).data(), *gc = g.Wc.row(r).data();
    for (std::size_t t = 0; t < caches.size(); ++t) {
      const StepCache& c = *caches[t];
      const StepDeltas& a = *deltas[t];
      const std::size_t n = c.mu_zero ? xh : c.z.size();
      const double af = a.f[r], aI = a.I[r], ag = a.g[r], ao = a.o[r], aoc = a.oc[r];
      g.bf(r, 0) += af;
      g.bI(r, 0) += aI;
      g.bC(r, 0) += ag;
      g.bo(r, 0) += ao;
      g.bco(r, 0) += aoc;
      const double* z = c.z.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double zi = z[i];
        gf[i] += af * zi;
        gI[i] += aI * zi;
        go[i] += ao * zi;
        gco[i] += aoc * zi;
      }
      for (std::size_t i = 0; i < xh; ++i) gC[i] += ag * z[i];
      if (!c.mu_zero) {
        const double ak = a.k[r];
        for (std::size_t i = 0; i < d.concept_dim; ++i) gc[i] += ak * z[xh + i];
      }
    }
  }
}

/// Backward through one sentic step. Accumulates parameter gradients into
/// `g`; writes dL/dz[0:d_w+d_h] into dxh and dL/dC_prev into dC_prev.
inline void sentic_step_backward(const StepCache& c, const CellParams& p, const SenticDims& d,
                                 std::span<const double> dh, std::span<const double> dC, CellParams& g, Vector& dxh,
                                 Vector& dC_prev) {
  StepDeltas a;
  sentic_step_deltas(c, p, d, dh, dC, a, dxh, dC_prev);
  sentic_accumulate({&c}, {&a}, d, g);
}

/// Mean of at most K concept vectors; zero vector when there are none.
inline Vector average_concepts(const std::vector<Vector>& vectors, std::size_t dims, std::size_t K = kMaxConcepts) {
  if (vectors.size() > K) throw InputError("average_concepts: more than " + std::to_string(K) + " concept vectors");
  Vector mu(dims, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dims) throw std::invalid_argument("average_concepts: dimension mismatch");
    axpy(1.0, v, mu);
  }
  if (!vectors.empty())
    for (double& x : mu) x /= static_cast<double>(vectors.size());
  return mu;
}

// ---------------------------------------------------------------------------
// Instances

struct TsaInstance {
  std::vector<std::string> tokens;
  std::vector<std::size_t> target_positions;
  std::map<std::string, std::string> aspects;  // aspect -> polarity; absent means none
  std::vector<std::vector<std::string>> concepts;  // per token, may be empty
};

inline void validate_instance(const TsaInstance& t, const std::string& where) {
  if (t.tokens.empty()) throw InputError(where + ": empty sentence");
  if (t.target_positions.empty()) throw InputError(where + ": no target positions");
  for (std::size_t i = 0; i < t.target_positions.size(); ++i) {
    if (t.target_positions[i] >= t.tokens.size()) throw InputError(where + ": target position out of range");
    if (i && t.target_positions[i] <= t.target_positions[i - 1])
      throw InputError(where + ": target positions must be strictly increasing");
  }
  if (!t.concepts.empty() && t.concepts.size() != t.tokens.size())
    throw InputError(where + ": concepts must have one list per token");
}

inline std::vector<TsaInstance> parse_tsa(const std::string& text, const std::string& where = "tsa") {
  std::vector<TsaInstance> out;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where + ":" + std::to_string(lineno);
    TsaInstance t;
    try {
      const auto j = nlohmann::json::parse(line);
      t.tokens = j.at("tokens").get<std::vector<std::string>>();
      t.target_positions = j.at("target_positions").get<std::vector<std::size_t>>();
      if (j.contains("aspects"))
        for (const auto& [k, v] : j.at("aspects").items()) t.aspects[k] = to_lower(v.get<std::string>());
      if (j.contains("concepts")) t.concepts = j.at("concepts").get<std::vector<std::vector<std::string>>>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(at + ": " + e.what());
    }
    validate_instance(t, at);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<TsaInstance> load_tsa(const std::string& path) { return parse_tsa(read_file(path), path); }

inline std::string serialize_tsa(const std::vector<TsaInstance>& data) {
  std::string out;
  for (const auto& t : data) {
    nlohmann::ordered_json j;
    j["tokens"] = t.tokens;
    j["target_positions"] = t.target_positions;
    j["aspects"] = nlohmann::ordered_json(t.aspects);
    if (!t.concepts.empty()) j["concepts"] = t.concepts;
    out += j.dump() + "\n";
  }
  return out;
}

/// Model-ready instance.
struct Encoded {
  std::vector<std::size_t> tokens;
  std::vector<Vector> mu;  // per token, d_c
  std::vector<std::size_t> targets;
  std::vector<std::size_t> gold;  // class per aspect
};

/// Vocabulary, aspect list, classes and concept table used to encode raw
/// instances.
struct Encoder {
  Vocabulary vocab;
  std::vector<std::string> aspects;
  std::size_t classes = 3;
  std::unordered_map<std::string, Vector> concept_vectors;
  std::size_t concept_dims = 100;

  std::size_t aspect_index(const std::string& a) const {
    auto it = std::find(aspects.begin(), aspects.end(), a);
    if (it == aspects.end()) throw InputError("unknown aspect '" + a + "'");
    return static_cast<std::size_t>(it - aspects.begin());
  }

  std::size_t class_index(const std::string& polarity) const {
    const auto names = class_names(classes);
    auto it = std::find(names.begin(), names.end(), polarity);
    if (it == names.end()) throw InputError("unknown polarity '" + polarity + "'");
    return static_cast<std::size_t>(it - names.begin());
  }

  Encoded encode(const TsaInstance& t) const {
    Encoded e;
    for (const auto& w : t.tokens) e.tokens.push_back(vocab.id(w));
    e.targets = t.target_positions;
    e.gold.assign(aspects.size(), 0);
    for (const auto& [a, pol] : t.aspects) e.gold[aspect_index(a)] = class_index(pol);
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      std::vector<Vector> vs;
      if (!t.concepts.empty()) {
        for (const auto& c : t.concepts[i]) {
          if (vs.size() == kMaxConcepts) {
            warn("more than " + std::to_string(kMaxConcepts) + " concepts on token '" + t.tokens[i] + "', extra ignored");
            break;
          }
          if (auto it = concept_vectors.find(c); it != concept_vectors.end()) vs.push_back(it->second);
        }
      }
      e.mu.push_back(average_concepts(vs, concept_dims));
    }
    return e;
  }
};

/// Builds the vocabulary and (when not given) the sorted aspect set from
/// training data.
inline Encoder make_encoder(const std::vector<TsaInstance>& train, std::vector<std::string> aspects,
                            std::size_t classes, const EmbeddingSet* concepts, std::size_t concept_dims) {
  if (train.empty()) throw InputError("sentic: empty training set");
  Encoder enc;
  std::map<std::string, std::size_t> counts;
  std::set<std::string> seen_aspects;
  for (const auto& t : train) {
    for (const auto& w : t.tokens) ++counts[w];
    for (const auto& [a, p] : t.aspects) seen_aspects.insert(a);
  }
  enc.vocab = Vocabulary::from_counts(counts, 1);
  enc.aspects = aspects.empty() ? std::vector<std::string>(seen_aspects.begin(), seen_aspects.end()) : aspects;
  if (enc.aspects.empty()) throw InputError("sentic: empty aspect set");
  enc.classes = classes;
  class_names(classes);
  enc.concept_dims = concepts ? concepts->dims() : concept_dims;
  if (concepts)
    for (std::size_t i = 0; i < concepts->tokens.size(); ++i) {
      const auto r = concepts->word_vectors.row(i);
      enc.concept_vectors[concepts->tokens[i]] = Vector(r.begin(), r.end());
    }
  return enc;
}

// ---------------------------------------------------------------------------
// Encoder network

/// 2d_h x L, column i = [forward h_i ; backward h_i].
struct BiLstmOutput {
  Matrix H;  // L x 2d_h (row i is column i of H)
  std::vector<StepCache> fwd, bwd;
};

inline BiLstmOutput encode_bilstm(const std::vector<Vector>& x, const std::vector<Vector>& mu, const SenticParams& p) {
  const std::size_t L = x.size(), Hd = p.dims.hidden;
  if (L == 0) throw InputError("encode_bilstm: empty sentence");
  BiLstmOutput out{Matrix(L, 2 * Hd), std::vector<StepCache>(L), std::vector<StepCache>(L)};
  CellState s{Vector(Hd, 0.0), Vector(Hd, 0.0)};
  for (std::size_t i = 0; i < L; ++i) {
    s = sentic_step(x[i], s.h, s.C, mu[i], p.fwd, p.dims, &out.fwd[i]);
    std::copy(s.h.begin(), s.h.end(), out.H.row(i).begin());
  }
  s = {Vector(Hd, 0.0), Vector(Hd, 0.0)};
  for (std::size_t i = L; i-- > 0;) {
    s = sentic_step(x[i], s.h, s.C, mu[i], p.bwd, p.dims, &out.bwd[i]);
    std::copy(s.h.begin(), s.h.end(), out.H.row(i).begin() + static_cast<std::ptrdiff_t>(Hd));
  }
  return out;
}

struct AttentionResult {
  Vector weights;
  Vector vector;
  std::vector<Vector> hidden;  // tanh activations, kept for backprop
};

/// alpha = softmax(Wa2 tanh(Wa1 h_tj)), v_t = sum_j alpha_j h_tj; uniform
/// alpha when `averaging`.
inline AttentionResult target_attention(const Matrix& H, const std::vector<std::size_t>& targets, const SenticParams& p,
                                        bool averaging = false) {
  if (targets.empty()) throw InputError("target_attention: empty target");
  const std::size_t m = targets.size(), D = H.cols();
  AttentionResult r{Vector(m), Vector(D, 0.0), {}};
  if (averaging) {
    std::fill(r.weights.begin(), r.weights.end(), 1.0 / static_cast<double>(m));
  } else {
    Vector e(m);
    for (std::size_t j = 0; j < m; ++j) {
      Vector u(p.dims.attention);
      matvec(p.Wa1, H.row(targets[j]), u);
      for (double& v : u) v = std::tanh(v);
      e[j] = dot(p.Wa2.row(0), u);
      r.hidden.push_back(std::move(u));
    }
    r.weights = softmax(e);
  }
  for (std::size_t j = 0; j < m; ++j) axpy(r.weights[j], H.row(targets[j]), r.vector);
  return r;
}

/// tanh(Wm [h_i ; v_t]) for every position; shared by all aspects.
inline std::vector<Vector> sentence_hidden(const Matrix& H, std::span<const double> vt, const SenticParams& p) {
  const std::size_t L = H.rows(), D = H.cols();
  std::vector<Vector> out;
  Vector z(2 * D);
  for (std::size_t i = 0; i < L; ++i) {
    std::copy(H.row(i).begin(), H.row(i).end(), z.begin());
    std::copy(vt.begin(), vt.end(), z.begin() + static_cast<std::ptrdiff_t>(D));
    Vector g(p.dims.attention);
    matvec(p.Wm, z, g);
    for (double& v : g) v = std::tanh(v);
    out.push_back(std::move(g));
  }
  return out;
}

inline AttentionResult sentence_attention(const Matrix& H, std::vector<Vector> hidden, std::size_t aspect,
                                          const SenticParams& p) {
  if (aspect >= p.dims.aspects) throw InputError("sentence_attention: unknown aspect");
  const std::size_t L = H.rows(), D = H.cols();
  AttentionResult r{Vector(L), Vector(D, 0.0), std::move(hidden)};
  Vector s(L);
  for (std::size_t i = 0; i < L; ++i) s[i] = dot(p.va.row(aspect), r.hidden[i]);
  r.weights = softmax(s);
  for (std::size_t i = 0; i < L; ++i) axpy(r.weights[i], H.row(i), r.vector);
  return r;
}

/// beta = softmax(v_a . tanh(Wm [h_i ; v_t])), result H beta.
inline AttentionResult sentence_attention(const Matrix& H, std::span<const double> vt, std::size_t aspect,
                                          const SenticParams& p) {
  if (aspect >= p.dims.aspects) throw InputError("sentence_attention: unknown aspect");
  return sentence_attention(H, sentence_hidden(H, vt, p), aspect, p);
}

// ---------------------------------------------------------------------------
// Forward / backward

struct RunOptions {
  bool target_averaging = false;
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;  // null: no dropout
};

struct RunResult {
  double loss = 0.0;
  std::vector<Vector> probs;  // per aspect
  AttentionResult target;
  std::vector<AttentionResult> sentence;
};

/// Forward pass; the summed per-aspect cross-entropy is the loss. When
/// `grad` is given (same shapes as `p`, accumulated into) runs the backward
/// pass too.
inline RunResult run(const Encoded& e, const SenticParams& p, const RunOptions& opt = {},
                     SenticParams* grad = nullptr) {
  const auto& d = p.dims;
  const std::size_t L = e.tokens.size();
  const std::size_t D = 2 * d.hidden;
  if (L == 0) throw InputError("sentic: empty sentence");
  for (std::size_t t : e.targets)
    if (t >= L) throw InputError("sentic: target position out of range");

  std::vector<Vector> x(L), mask;
  const bool drop = opt.dropout_rng && opt.dropout > 0.0;
  if (drop) mask.assign(L, Vector(d.word, 0.0));
  for (std::size_t i = 0; i < L; ++i) {
    if (e.tokens[i] >= p.embed.rows()) throw std::out_of_range("sentic: token id beyond vocabulary");
    const auto row = p.embed.row(e.tokens[i]);
    x[i].assign(row.begin(), row.end());
    if (drop)
      for (std::size_t k = 0; k < d.word; ++k) {
        mask[i][k] = opt.dropout_rng->uniform() < opt.dropout ? 0.0 : 1.0 / (1.0 - opt.dropout);
        x[i][k] *= mask[i][k];
      }
  }

  RunResult res;
  auto enc = encode_bilstm(x, e.mu, p);
  res.target = target_attention(enc.H, e.targets, p, opt.target_averaging);
  Vector logits(d.classes);
  const auto hidden = sentence_hidden(enc.H, res.target.vector, p);
  for (std::size_t a = 0; a < d.aspects; ++a) {
    res.sentence.push_back(sentence_attention(enc.H, hidden, a, p));
    for (std::size_t c = 0; c < d.classes; ++c)
      logits[c] = dot(p.Wp.row(a * d.classes + c), res.sentence[a].vector) + p.bp(a, c);
    res.probs.push_back(softmax(logits));
    if (a < e.gold.size()) res.loss -= std::log(std::max(res.probs[a][e.gold[a]], 1e-300));
  }
  if (!grad) return res;
  if (e.gold.size() != d.aspects) throw InputError("sentic: gold labels do not cover the aspect set");

  SenticParams& g = *grad;
  Matrix dH(L, D);
  Vector dvt(D, 0.0);
  // dL/d tanh(Wm z_i), summed over aspects
  std::vector<Vector> dhid(L, Vector(d.attention, 0.0));
  for (std::size_t a = 0; a < d.aspects; ++a) {
    const auto& sa = res.sentence[a];
    Vector dlog = res.probs[a];
    dlog[e.gold[a]] -= 1.0;
    Vector dr(D, 0.0);
    for (std::size_t c = 0; c < d.classes; ++c) {
      axpy(dlog[c], sa.vector, g.Wp.row(a * d.classes + c));
      g.bp(a, c) += dlog[c];
      axpy(dlog[c], p.Wp.row(a * d.classes + c), dr);
    }
    Vector dbeta(L);
    for (std::size_t i = 0; i < L; ++i) {
      dbeta[i] = dot(dr, enc.H.row(i));
      axpy(sa.weights[i], dr, dH.row(i));
    }
    const double mean = dot(sa.weights, dbeta);
    for (std::size_t i = 0; i < L; ++i) {
      const double ds = sa.weights[i] * (dbeta[i] - mean);
      if (ds == 0.0) continue;
      axpy(ds, hidden[i], g.va.row(a));
      axpy(ds, p.va.row(a), dhid[i]);
    }
  }
  Vector dq(d.attention), dq_sum(d.attention, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t k = 0; k < d.attention; ++k) dq[k] = dhid[i][k] * (1.0 - hidden[i][k] * hidden[i][k]);
    axpy(1.0, dq, dq_sum);
    const auto hi = enc.H.row(i);
    auto dhi = dH.row(i);
    for (std::size_t k = 0; k < d.attention; ++k) {
      if (dq[k] == 0.0) continue;
      const auto w = p.Wm.row(k);
      auto gw = g.Wm.row(k);
      for (std::size_t c = 0; c < D; ++c) {
        gw[c] += dq[k] * hi[c];
        dhi[c] += dq[k] * w[c];
      }
    }
  }
  for (std::size_t k = 0; k < d.attention; ++k) {
    const auto w = p.Wm.row(k);
    auto gw = g.Wm.row(k);
    for (std::size_t c = 0; c < D; ++c) {
      gw[D + c] += dq_sum[k] * res.target.vector[c];
      dvt[c] += dq_sum[k] * w[D + c];
    }
  }

  // target attention
  const auto& ta = res.target;
  const std::size_t m = e.targets.size();
  Vector dalpha(m);
  for (std::size_t j = 0; j < m; ++j) {
    dalpha[j] = dot(dvt, enc.H.row(e.targets[j]));
    axpy(ta.weights[j], dvt, dH.row(e.targets[j]));
  }
  if (!opt.target_averaging) {
    const double mean = dot(ta.weights, dalpha);
    for (std::size_t j = 0; j < m; ++j) {
      const double de = ta.weights[j] * (dalpha[j] - mean);
      if (de == 0.0) continue;
      axpy(de, ta.hidden[j], g.Wa2.row(0));
      Vector da(d.attention);
      for (std::size_t k = 0; k < d.attention; ++k) da[k] = de * p.Wa2(0, k) * (1.0 - ta.hidden[j][k] * ta.hidden[j][k]);
      add_outer(g.Wa1, 1.0, da, enc.H.row(e.targets[j]));
      matvec_t_add(p.Wa1, da, dH.row(e.targets[j]));
    }
  }

  // bidirectional LSTM
  std::vector<Vector> dx(L, Vector(d.word, 0.0));
  Vector dh(d.hidden), dC(d.hidden, 0.0), dxh, dCp;
  Vector dh_next(d.hidden, 0.0);
  std::vector<StepDeltas> deltas(L);
  std::vector<const StepCache*> cs;
  std::vector<const StepDeltas*> ds;
  cs.reserve(L);
  ds.reserve(L);
  for (std::size_t i = L; i-- > 0;) {
    for (std::size_t k = 0; k < d.hidden; ++k) dh[k] = dH(i, k) + dh_next[k];
    sentic_step_deltas(enc.fwd[i], p.fwd, d, dh, dC, deltas[i], dxh, dCp);
    axpy(1.0, std::span<const double>(dxh.data(), d.word), dx[i]);
    dh_next.assign(dxh.begin() + static_cast<std::ptrdiff_t>(d.word), dxh.end());
    dC = dCp;
    cs.push_back(&enc.fwd[i]);
    ds.push_back(&deltas[i]);
  }
  sentic_accumulate(cs, ds, d, g.fwd);
  cs.clear();
  ds.clear();
  std::fill(dC.begin(), dC.end(), 0.0);
  std::fill(dh_next.begin(), dh_next.end(), 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t k = 0; k < d.hidden; ++k) dh[k] = dH(i, d.hidden + k) + dh_next[k];
    sentic_step_deltas(enc.bwd[i], p.bwd, d, dh, dC, deltas[i], dxh, dCp);
    axpy(1.0, std::span<const double>(dxh.data(), d.word), dx[i]);
    dh_next.assign(dxh.begin() + static_cast<std::ptrdiff_t>(d.word), dxh.end());
    dC = dCp;
    cs.push_back(&enc.bwd[i]);
    ds.push_back(&deltas[i]);
  }
  sentic_accumulate(cs, ds, d, g.bwd);
  for (std::size_t i = 0; i < L; ++i) {
    if (drop)
      for (std::size_t k = 0; k < d.word; ++k) dx[i][k] *= mask[i][k];
    axpy(1.0, dx[i], g.embed.row(e.tokens[i]));
  }
  return res;
}

/// Per-aspect class probabilities, dropout off.
inline std::vector<Vector> forward(const Encoded& e, const SenticParams& p, bool target_averaging = false) {
  return run(e, p, {target_averaging, 0.0, nullptr}).probs;
}

// ---------------------------------------------------------------------------
// Evaluation

struct AspectPrediction {
  std::vector<std::size_t> argmax;            // class per aspect
  std::vector<std::size_t> polarity_argmax;   // best class excluding None
};

inline AspectPrediction decide(const std::vector<Vector>& probs) {
  AspectPrediction out;
  for (const auto& p : probs) {
    out.argmax.push_back(argmax(p));
    std::size_t best = 1;
    for (std::size_t c = 2; c < p.size(); ++c)
      if (p[c] > p[best]) best = c;
    out.polarity_argmax.push_back(best);
  }
  return out;
}

/// strict_acc / macro_f1 / micro_f1 over aspect categorization and
/// sentiment_acc over gold (target, aspect) pairs.
inline MetricsReport evaluate(const std::vector<Encoded>& data, const std::vector<AspectPrediction>& preds,
                              const std::vector<std::string>& aspects) {
  std::vector<LabelSetPrediction<std::string>> sets;
  double correct = 0.0, pairs = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    LabelSetPrediction<std::string> s;
    for (std::size_t a = 0; a < aspects.size(); ++a) {
      if (data[n].gold[a] != 0) {
        s.gold.insert(aspects[a]);
        pairs += 1.0;
        correct += preds[n].polarity_argmax[a] == data[n].gold[a];
      }
      if (preds[n].argmax[a] != 0) s.predicted.insert(aspects[a]);
    }
    sets.push_back(std::move(s));
  }
  MetricsReport r;
  r.set("strict_acc", strict_accuracy(sets));
  r.set("macro_f1", macro_f1(sets));
  r.set("micro_f1", micro_f1(sets));
  r.set("sentiment_acc", pairs > 0.0 ? correct / pairs : 0.0);
  return r;
}

inline MetricsReport predict_and_evaluate(const std::vector<Encoded>& data, const SenticParams& p,
                                          const std::vector<std::string>& aspects, bool target_averaging = false) {
  std::vector<AspectPrediction> preds;
  for (const auto& e : data) preds.push_back(decide(forward(e, p, target_averaging)));
  return evaluate(data, preds, aspects);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  double dropout = 0.5;
  bool target_averaging = false;
  std::uint64_t seed = 1;
};

struct TrainResult {
  SenticParams params;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<MetricsReport> dev_history;
  std::vector<double> train_loss;
};

/// Dev selection key: sentiment accuracy, then strict accuracy.
inline bool better_on_dev(const MetricsReport& a, const MetricsReport& b) {
  if (a.get("sentiment_acc") != b.get("sentiment_acc")) return a.get("sentiment_acc") > b.get("sentiment_acc");
  return a.get("strict_acc") > b.get("strict_acc");
}

/// Adam, batch size 1, inverted dropout after the embedding layer; returns
/// the parameters of the epoch best on dev.
inline TrainResult train(const std::vector<Encoded>& train_set, const std::vector<Encoded>& dev_set,
                         const std::vector<std::string>& aspects, SenticParams init, const TrainConfig& cfg) {
  if (train_set.empty() || dev_set.empty()) throw InputError("sentic train: empty train or dev set");
  if (aspects.empty()) throw InputError("sentic train: empty aspect set");
  const Rng root(cfg.seed);
  Rng order_rng = root.substream("tsa.order");
  Rng drop_rng = root.substream("tsa.dropout");
  TrainResult out{init, 0, {}, {}};
  SenticParams p = std::move(init);
  auto mats = p.matrices();
  std::vector<Adam> opts;
  for (auto* m : mats) opts.emplace_back(m->size(), cfg.lr);
  SenticParams g = SenticParams::zeros(p.dims);
  auto gmats = g.matrices();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<MetricsReport> best;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t idx : order) {
      total += run(train_set[idx], p, {cfg.target_averaging, cfg.dropout, &drop_rng}, &g).loss;
      if (cfg.lr == 0.0) {
        for (auto* m : gmats) m->fill(0.0);
        continue;
      }
      // Adam clears the gradients
      for (std::size_t k = 0; k < mats.size(); ++k) opts[k].step(mats[k]->data(), gmats[k]->data());
    }
    if (!p.all_finite()) throw NumericError("sentic train: non-finite parameters");
    out.train_loss.push_back(total / static_cast<double>(train_set.size()));
    auto dev = predict_and_evaluate(dev_set, p, aspects, cfg.target_averaging);
    out.dev_history.push_back(dev);
    if (!best || better_on_dev(dev, *best)) {
      best = dev;
      out.best_epoch = epoch;
      out.params = p;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

inline std::string serialize_params(const SenticParams& p, const std::vector<std::string>& vocab) {
  ModelFile f;
  f.kind = "sentic";
  const auto& d = p.dims;
  f.meta["word"] = std::to_string(d.word);
  f.meta["hidden"] = std::to_string(d.hidden);
  f.meta["concept"] = std::to_string(d.concept_dim);
  f.meta["attention"] = std::to_string(d.attention);
  f.meta["aspects"] = std::to_string(d.aspects);
  f.meta["classes"] = std::to_string(d.classes);
  const auto names = SenticParams::names();
  const auto mats = p.matrices();
  for (std::size_t k = 0; k < mats.size(); ++k)
    f.blocks.emplace_back(names[k], k == 0 ? LabeledMatrix{vocab, *mats[k]} : numbered(*mats[k]));
  return f.serialize();
}

inline std::pair<SenticParams, std::vector<std::string>> parse_params(const std::string& text, const std::string& where) {
  const auto f = ModelFile::parse(text, where);
  if (f.kind != "sentic") throw InputError(where + ": not a sentic checkpoint");
  SenticDims d;
  auto num = [&](const char* k) { return parse_count(f.meta_value(k), where); };
  d.word = num("word");
  d.hidden = num("hidden");
  d.concept_dim = num("concept");
  d.attention = num("attention");
  d.aspects = num("aspects");
  d.classes = num("classes");
  const auto& emb = f.block("embed");
  d.vocab = emb.values.rows();
  SenticParams p = SenticParams::zeros(d);
  const auto names = SenticParams::names();
  auto mats = p.matrices();
  for (std::size_t k = 0; k < mats.size(); ++k) {
    const auto& blk = f.block(names[k]);
    if (blk.values.rows() != mats[k]->rows() || blk.values.cols() != mats[k]->cols())
      throw InputError(where + ": matrix '" + names[k] + "' has the wrong shape");
    *mats[k] = blk.values;
  }
  return {std::move(p), emb.labels};
}

}  // namespace cemb::sentic

#endif  // CEMB_SENTIC_HPP
