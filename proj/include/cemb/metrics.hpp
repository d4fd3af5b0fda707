// Evaluation shared by the typing, reranking and sentiment pipelines:
// set-valued strict/macro/micro scores and (weighted) word error rate.

#ifndef CEMB_METRICS_HPP
#define CEMB_METRICS_HPP

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cemb {

template <typename Label = std::string>
struct LabelSetPrediction {
  std::set<Label> gold;
  std::set<Label> predicted;
};

namespace detail {

template <typename Label>
std::size_t intersection_size(const std::set<Label>& a, const std::set<Label>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

inline double f1(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

template <typename Label>
void require_non_empty(const std::vector<LabelSetPrediction<Label>>& preds) {
  if (preds.empty()) throw std::invalid_argument("set metrics: empty prediction list");
}

}  // namespace detail

template <typename Label>
double strict_accuracy(const std::vector<LabelSetPrediction<Label>>& preds) {
  detail::require_non_empty(preds);
  std::size_t hits = 0;
  for (const auto& p : preds) hits += (p.gold == p.predicted);
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1() const { return detail::f1(precision, recall); }
};

/// Per-instance averaged precision and recall. An empty predicted (gold) set
/// contributes a precision (recall) term of 0.
template <typename Label>
PrecisionRecall macro_pr(const std::vector<LabelSetPrediction<Label>>& preds) {
  detail::require_non_empty(preds);
  double p = 0.0, r = 0.0;
  for (const auto& x : preds) {
    const double inter = static_cast<double>(detail::intersection_size(x.gold, x.predicted));
    if (!x.predicted.empty()) p += inter / static_cast<double>(x.predicted.size());
    if (!x.gold.empty()) r += inter / static_cast<double>(x.gold.size());
  }
  const double n = static_cast<double>(preds.size());
  return {p / n, r / n};
}

template <typename Label>
PrecisionRecall micro_pr(const std::vector<LabelSetPrediction<Label>>& preds) {
  detail::require_non_empty(preds);
  double inter = 0.0, npred = 0.0, ngold = 0.0;
  for (const auto& x : preds) {
    inter += static_cast<double>(detail::intersection_size(x.gold, x.predicted));
    npred += static_cast<double>(x.predicted.size());
    ngold += static_cast<double>(x.gold.size());
  }
  return {npred > 0.0 ? inter / npred : 0.0, ngold > 0.0 ? inter / ngold : 0.0};
}

template <typename Label>
double macro_f1(const std::vector<LabelSetPrediction<Label>>& preds) {
  return macro_pr(preds).f1();
}

template <typename Label>
double micro_f1(const std::vector<LabelSetPrediction<Label>>& preds) {
  return micro_pr(preds).f1();
}

// ---------------------------------------------------------------------------
// Word error rate

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

struct AlignedOp {
  EditOp op;
  std::ptrdiff_t ref_index;  // -1 for insertions
  std::ptrdiff_t hyp_index;  // -1 for deletions
};

struct Alignment {
  std::vector<AlignedOp> ops;

  std::size_t count(EditOp kind) const {
    return static_cast<std::size_t>(std::count_if(ops.begin(), ops.end(), [&](const AlignedOp& o) { return o.op == kind; }));
  }
  std::size_t errors() const { return ops.size() - count(EditOp::kMatch); }
};

/// Minimum edit-distance alignment with unit costs. Among equal-cost paths
/// the backtrace prefers match, then substitution, deletion, insertion.
inline Alignment align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u), at(i - 1, j) + 1, at(i, j - 1) + 1});

  Alignment out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      out.ops.push_back({EditOp::kMatch, static_cast<std::ptrdiff_t>(i - 1), static_cast<std::ptrdiff_t>(j - 1)});
      --i, --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      out.ops.push_back({EditOp::kSubstitution, static_cast<std::ptrdiff_t>(i - 1), static_cast<std::ptrdiff_t>(j - 1)});
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      out.ops.push_back({EditOp::kDeletion, static_cast<std::ptrdiff_t>(i - 1), -1});
      --i;
    } else {
      out.ops.push_back({EditOp::kInsertion, -1, static_cast<std::ptrdiff_t>(j - 1)});
      --j;
    }
  }
  std::reverse(out.ops.begin(), out.ops.end());
  return out;
}

/// Error mass and reference mass; sums over utterances give corpus WER.
struct WerStats {
  double errors = 0.0;
  double reference = 0.0;

  WerStats& operator+=(const WerStats& o) {
    errors += o.errors;
    reference += o.reference;
    return *this;
  }
  /// Empty or zero-weight references normalize by 1.
  double rate() const { return errors / (reference > 0.0 ? reference : 1.0); }
};

using WordWeights = std::unordered_map<std::string, double>;

inline WerStats wer_stats(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return {static_cast<double>(align(ref, hyp).errors()), static_cast<double>(ref.size())};
}

/// Substitutions and deletions cost the weight of the reference word,
/// insertions the weight of the inserted word. Words missing from `weights`
/// get `default_weight`.
inline WerStats weighted_wer_stats(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                   const WordWeights& weights, double default_weight = 1.0) {
  auto weight_of = [&](const std::string& w) {
    auto it = weights.find(w);
    return it == weights.end() ? default_weight : it->second;
  };
  WerStats s;
  for (const auto& w : ref) s.reference += weight_of(w);
  for (const auto& op : align(ref, hyp).ops) {
    switch (op.op) {
      case EditOp::kMatch: break;
      case EditOp::kSubstitution:
      case EditOp::kDeletion: s.errors += weight_of(ref[static_cast<std::size_t>(op.ref_index)]); break;
      case EditOp::kInsertion: s.errors += weight_of(hyp[static_cast<std::size_t>(op.hyp_index)]); break;
    }
  }
  return s;
}

inline double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return wer_stats(ref, hyp).rate();
}

inline double weighted_wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                           const WordWeights& weights, double default_weight = 1.0) {
  return weighted_wer_stats(ref, hyp, weights, default_weight).rate();
}

// ---------------------------------------------------------------------------
// Reports

/// Ordered metric name -> value report.
class MetricsReport {
 public:
  void set(const std::string& name, double value) {
    for (auto& [k, v] : entries_)
      if (k == name) {
        v = value;
        return;
      }
    entries_.emplace_back(name, value);
  }

  double get(const std::string& name) const {
    for (const auto& [k, v] : entries_)
      if (k == name) return v;
    throw std::out_of_range("MetricsReport: no metric " + name);
  }

  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : entries_) j[k] = v;
    return j;
  }

  std::string to_table() const {
    std::size_t width = 6;
    for (const auto& e : entries_) width = std::max(width, e.first.size());
    std::ostringstream out;
    char buf[64];
    for (const auto& [k, v] : entries_) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << k << std::string(width - k.size() + 2, ' ') << buf << '\n';
    }
    return out.str();
  }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

}  // namespace cemb

#endif  // CEMB_METRICS_HPP
