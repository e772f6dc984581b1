#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlab/regimes.hpp"

namespace mtlab {

// Final per-task eval losses of one run, plus enough metadata to label plots.
struct ParetoPoint {
  std::vector<double> losses;
  std::string run_id;
  std::string regime;
  double w_low = 0.0;

  void validate() const {
    if (losses.empty()) throw std::invalid_argument("ParetoPoint: no losses");
    for (double v : losses)
      if (!std::isfinite(v) || v <= 0.0)
        throw std::invalid_argument("ParetoPoint: losses must be finite and positive");
  }
};

// a dominates b: no-worse on every task, strictly better on at least one.
// Exact floating comparison by design; near-ties are a reporting concern.
inline bool pareto_dominates(const ParetoPoint& a, const ParetoPoint& b) {
  if (a.losses.size() != b.losses.size())
    throw std::invalid_argument("pareto_dominates: dimension mismatch");
  bool strict = false;
  for (std::size_t i = 0; i < a.losses.size(); ++i) {
    if (a.losses[i] > b.losses[i]) return false;
    if (a.losses[i] < b.losses[i]) strict = true;
  }
  return strict;
}

// The undominated subset, in input order. Two-objective inputs take the
// sort-and-scan route; higher dimensions fall back to pairwise checks.
inline std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points) {
  if (points.empty()) throw std::invalid_argument("pareto_front: empty input");
  const std::size_t k = points[0].losses.size();
  for (const ParetoPoint& p : points)
    if (p.losses.size() != k) throw std::invalid_argument("pareto_front: dimension mismatch");

  std::vector<bool> dominated(points.size(), false);
  if (k == 2) {
    // skyline sweep: sort by (x asc, y asc) and walk groups of equal x.
    // p is dominated iff a strictly-smaller-x point has y <= p.y, or a
    // same-x point has y < p.y. Exact duplicates never dominate each other.
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (points[a].losses[0] != points[b].losses[0])
        return points[a].losses[0] < points[b].losses[0];
      return points[a].losses[1] < points[b].losses[1];
    });
    double min_y_smaller_x = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      const double x = points[order[i]].losses[0];
      while (j < order.size() && points[order[j]].losses[0] == x) ++j;
      const double group_min_y = points[order[i]].losses[1];
      for (std::size_t t = i; t < j; ++t) {
        const double y = points[order[t]].losses[1];
        if (min_y_smaller_x <= y || group_min_y < y) dominated[order[t]] = true;
      }
      min_y_smaller_x = std::min(min_y_smaller_x, group_min_y);
      i = j;
    }
  } else {
    for (std::size_t a = 0; a < points.size(); ++a)
      for (std::size_t b = 0; b < points.size(); ++b)
        if (b != a && pareto_dominates(points[b], points[a])) {
          dominated[a] = true;
          break;
        }
  }
  std::vector<ParetoPoint> front;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!dominated[i]) front.push_back(points[i]);
  return front;
}

// Pairs of points whose losses agree within tol on every task; dominance uses
// exact comparison, so near-ties are surfaced separately.
inline std::vector<std::pair<std::size_t, std::size_t>> near_ties(
    std::span<const ParetoPoint> points, double tol = 1e-6) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < points.size(); ++a)
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      if (points[a].losses.size() != points[b].losses.size()) continue;
      bool close = true;
      for (std::size_t i = 0; i < points[a].losses.size() && close; ++i)
        close = std::abs(points[a].losses[i] - points[b].losses[i]) <= tol;
      if (close) out.emplace_back(a, b);
    }
  return out;
}

// Expected examples drawn from a task after t steps: t * B * w_i.
inline double examples_seen(long step, long batch_size, double rate) {
  if (step < 0 || batch_size < 0) throw std::invalid_argument("examples_seen: negative inputs");
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("examples_seen: rate outside [0,1]");
  return static_cast<double>(step) * static_cast<double>(batch_size) * rate;
}

struct EfficiencyPoint {
  long examples_seen = 0;
  double eval_loss = 0.0;
  int phase = 1;
};

// Loss as a function of cumulative examples drawn from one task; one point per
// evaluation record. finetune_only restricts to the phase-2 portion.
inline std::vector<EfficiencyPoint> efficiency_curve(const RunResult& result, int task_id,
                                                     bool finetune_only = false) {
  if (task_id < 0 || static_cast<std::size_t>(task_id) >= result.config.tasks.size())
    throw std::invalid_argument("efficiency_curve: unknown task " + std::to_string(task_id));
  std::vector<EfficiencyPoint> out;
  const auto t = static_cast<std::size_t>(task_id);
  for (const EvalRecord& rec : result.records) {
    if (finetune_only && rec.phase < 2) continue;
    out.push_back({rec.examples_seen[t], rec.eval_loss[t], rec.phase});
  }
  return out;
}

// ---- corpus BLEU -------------------------------------------------------------

namespace detail {

using NGram = std::vector<std::int32_t>;

inline std::map<NGram, long> ngram_counts(std::span<const std::int32_t> tokens, std::size_t n) {
  std::map<NGram, long> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[NGram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace detail

// Corpus-level BLEU on the 0-1 scale: geometric mean of modified n-gram
// precisions (n = 1..max_n) times the brevity penalty. No smoothing: any
// zero precision gives 0.
inline double corpus_bleu(std::span<const std::vector<std::int32_t>> hypotheses,
                          std::span<const std::vector<std::int32_t>> references,
                          std::size_t max_n = 4) {
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("corpus_bleu: sentence count mismatch");
  if (hypotheses.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (max_n < 1) throw std::invalid_argument("corpus_bleu: max_n must be at least 1");
  for (const auto& ref : references)
    if (ref.empty()) throw std::invalid_argument("corpus_bleu: empty reference");

  std::vector<long> clipped(max_n, 0), total(max_n, 0);
  long hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<long>(hypotheses[s].size());
    ref_len += static_cast<long>(references[s].size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hyp_counts = detail::ngram_counts(hypotheses[s], n);
      const auto ref_counts = detail::ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clipped[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (clipped[n] == 0 || total[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped[n]) / static_cast<double>(total[n]));
  }
  const double brevity =
      hyp_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return brevity * std::exp(log_sum / static_cast<double>(max_n));
}

}  // namespace mtlab
