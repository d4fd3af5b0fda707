// Dense/sparse linear algebra, sampling, optimizers and the finite-difference
// gradient checker shared by every learning module.

#ifndef CEMB_NUMERICS_HPP
#define CEMB_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cemb {

/// Malformed or missing user input (CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw std::invalid_argument("Matrix::from_rows: ragged rows");
      std::copy(row.begin(), row.end(), m.row(r++).begin());
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Vector col(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Integer matrix with entries in {-1, 0, 1} (binarized embeddings).
class SignMatrix {
 public:
  SignMatrix() = default;
  SignMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::int8_t& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::int8_t operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  friend bool operator==(const SignMatrix&, const SignMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int8_t> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  return out;
}

/// Four interleaved partial sums, combined in a fixed order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double dot(std::span<const double> a, std::span<const double> b) { return dot(a.data(), b.data(), a.size()); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// out = m * x (out is overwritten).
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
}

/// out += m^T * x
inline void matvec_t_add(const Matrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    if (x[r] != 0.0) axpy(x[r], m.row(r), out);
}

/// m += alpha * u v^T
inline void add_outer(Matrix& m, double alpha, std::span<const double> u, std::span<const double> v) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    if (u[r] != 0.0) axpy(alpha * u[r], v, m.row(r));
}

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Sparse vector with strictly increasing indices and no explicit zeros.
class SparseVector {
 public:
  using Entry = std::pair<std::size_t, double>;

  SparseVector() = default;

  /// Sorts, merges duplicate indices by summation and drops zeros.
  static SparseVector from_entries(std::vector<Entry> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.first < b.first; });
    SparseVector v;
    for (const auto& [idx, val] : entries) {
      if (!v.entries_.empty() && v.entries_.back().first == idx)
        v.entries_.back().second += val;
      else
        v.entries_.emplace_back(idx, val);
    }
    std::erase_if(v.entries_, [](const Entry& e) { return e.second == 0.0; });
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  double get(std::size_t idx) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), idx,
                               [](const Entry& e, std::size_t i) { return e.first < i; });
    return (it != entries_.end() && it->first == idx) ? it->second : 0.0;
  }

  std::size_t max_index_bound() const { return entries_.empty() ? 0 : entries_.back().first + 1; }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Random numbers

/// xoshiro256** seeded through splitmix64. The stream for a given seed is the
/// same on every platform, which keeps frozen test vectors stable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased (rejection on the top range).
  std::size_t uniform_int(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via Box-Muller; no cached second value so the stream
  /// position depends only on the call count.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int(i)]);
  }

  /// Independent stream derived from this generator's seed and a component
  /// name. Adding a new substream never perturbs existing ones.
  Rng substream(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    std::uint64_t mix = seed_ ^ (h + 0x9e3779b97f4a7c15ULL + (seed_ << 6) + (seed_ >> 2));
    return Rng(splitmix64(mix));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

/// Draws indices with probability proportional to non-negative weights.
/// Cumulative binary search up to kAliasThreshold outcomes, Vose alias table
/// above.
class DiscreteSampler {
 public:
  static constexpr std::size_t kAliasThreshold = 1024;

  DiscreteSampler() = default;

  explicit DiscreteSampler(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw std::invalid_argument("DiscreteSampler: weights must be finite and non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("DiscreteSampler: all weights are zero");
    n_ = weights.size();
    if (n_ <= kAliasThreshold) {
      cumulative_.resize(n_);
      double acc = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        cumulative_[i] = (acc += weights[i]);
        if (weights[i] > 0.0) last_positive_ = i;
      }
      total_ = acc;
    } else {
      build_alias(weights, total);
    }
  }

  std::size_t size() const { return n_; }
  bool uses_alias() const { return !alias_.empty(); }

  std::size_t sample(Rng& rng) const {
    if (n_ == 0) throw std::logic_error("DiscreteSampler: empty sampler");
    if (!uses_alias()) {
      const double u = rng.uniform() * total_;
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      std::size_t idx = static_cast<std::size_t>(it - cumulative_.begin());
      // u can round up to the total; fall back to the last positive slot.
      if (idx >= n_) idx = last_positive_;
      return idx;
    }
    const std::size_t i = rng.uniform_int(n_);
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

 private:
  void build_alias(std::span<const double> weights, double total) {
    prob_.assign(n_, 0.0);
    alias_.assign(n_, 0);
    std::vector<double> scaled(n_);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n_; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n_) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (std::size_t i : large) prob_[i] = 1.0, alias_[i] = i;
    for (std::size_t i : small) prob_[i] = 1.0, alias_[i] = i;
  }

  std::size_t n_ = 0;
  std::size_t last_positive_ = 0;
  double total_ = 0.0;
  std::vector<double> cumulative_;
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

inline std::size_t sample_discrete(const DiscreteSampler& sampler, Rng& rng) { return sampler.sample(rng); }

// ---------------------------------------------------------------------------
// Nonlinearities

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// ln sigma(x) = -softplus(-x)
inline double log_sigmoid(double x) { return -softplus(-x); }

inline Vector softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) z += (out[i] = std::exp(v[i] - mx));
  for (double& o : out) o /= z;
  return out;
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  return mx + std::log(z);
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Matrix centroids;
  /// Within-cluster sum of squares after seeding and after every iteration.
  std::vector<double> objective_history;

  double objective() const { return objective_history.back(); }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Assigns each point to its nearest centroid (lowest index on ties); returns WCSS.
inline double assign_points(const Matrix& points, const Matrix& centroids,
                            std::vector<std::size_t>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < centroids.rows(); ++k) {
      const double d = squared_distance(points.row(i), centroids.row(k));
      if (d < best) best = d, best_k = k;
    }
    assignments[i] = best_k;
    total += best;
  }
  return total;
}

inline double wcss(const Matrix& points, const Matrix& centroids, const std::vector<std::size_t>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i)
    total += squared_distance(points.row(i), centroids.row(assignments[i]));
  return total;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Empty clusters keep their
/// previous centroid.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, Rng& rng) {
  const std::size_t n = points.rows();
  if (k == 0) throw std::invalid_argument("kmeans: K must be positive");
  if (k > n) throw std::invalid_argument("kmeans: K exceeds the number of points");
  if (max_iters == 0) throw std::invalid_argument("kmeans: max_iters must be positive");

  KMeansResult res;
  res.centroids = Matrix(k, points.cols());
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  std::size_t first = rng.uniform_int(n);
  std::copy(points.row(first).begin(), points.row(first).end(), res.centroids.row(0).begin());
  chosen[first] = 1;
  for (std::size_t c = 1; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i)
      min_d2[i] = std::min(min_d2[i], detail::squared_distance(points.row(i), res.centroids.row(c - 1)));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!chosen[i]) total += min_d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        u -= min_d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    }
    if (pick == n) {
      // Duplicates or rounding: take the first unchosen point.
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    chosen[pick] = 1;
    std::copy(points.row(pick).begin(), points.row(pick).end(), res.centroids.row(c).begin());
  }

  res.assignments.assign(n, 0);
  res.objective_history.push_back(detail::assign_points(points, res.centroids, res.assignments));
  for (std::size_t it = 0; it < max_iters; ++it) {
    Matrix sums(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      axpy(1.0, points.row(i), sums.row(res.assignments[i]));
      ++counts[res.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = res.centroids.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
    std::vector<std::size_t> next(n);
    const double obj = detail::assign_points(points, res.centroids, next);
    const bool changed = next != res.assignments;
    res.assignments = std::move(next);
    res.objective_history.push_back(obj);
    if (!changed) break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Optimizers

/// Per-parameter AdaGrad over a flat parameter block.
class AdaGrad {
 public:
  AdaGrad() = default;
  AdaGrad(std::size_t n, double lr, double eps = 1e-8) : lr_(lr), eps_(eps), accum_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (grad[i] == 0.0) continue;
      accum_[i] += grad[i] * grad[i];
      params[i] -= lr_ * grad[i] / (std::sqrt(accum_[i]) + eps_);
    }
  }

  /// Sparse update of a single coordinate.
  void step_one(double& param, std::size_t i, double g) {
    if (g == 0.0) return;
    accum_[i] += g * g;
    param -= lr_ * g / (std::sqrt(accum_[i]) + eps_);
  }

  double lr() const { return lr_; }

 private:
  double lr_ = 0.1;
  double eps_ = 1e-8;
  std::vector<double> accum_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  /// Clears `grad` as it goes.
  void step(std::span<double> params, std::span<double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double inv_c1 = 1.0 / c1, inv_c2 = 1.0 / c2;
    double* __restrict m = m_.data();
    double* __restrict v = v_.data();
    double* __restrict w = params.data();
    double* __restrict gr = grad.data();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double gi = gr[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr_ * (m[i] * inv_c1) / (std::sqrt(v[i] * inv_c2) + eps_);
      gr[i] = 0.0;
    }
  }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

// ---------------------------------------------------------------------------
// Gradient checking

/// Central-difference check of analytic gradients. `params` are perturbed in
/// place and restored. Returns the max over coordinates of
/// |numeric - analytic| / max(|analytic|, floor).
inline double fd_gradcheck(const std::function<double()>& loss_fn, std::span<Matrix* const> params,
                           std::span<const Matrix> analytic_grad, double eps, double floor = 1e-8) {
  if (params.size() != analytic_grad.size())
    throw std::invalid_argument("fd_gradcheck: parameter/gradient count mismatch");
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("fd_gradcheck: eps outside [1e-7, 1e-3]");
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& m = *params[p];
    if (m.size() != analytic_grad[p].size()) throw std::invalid_argument("fd_gradcheck: shape mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) {
      double& x = m.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = loss_fn();
      x = saved - eps;
      const double down = loss_fn();
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("fd_gradcheck: non-finite loss");
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = analytic_grad[p].data()[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(std::abs(analytic), floor));
    }
  }
  return worst;
}

}  // namespace cemb

#endif  // CEMB_NUMERICS_HPP
