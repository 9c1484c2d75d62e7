#include "tim/metrics.h"

#include <algorithm>
#include <numeric>
#include <utility>

#include "tim/errors.h"

namespace tim {

void EvalRecord::validate() const {
  if (scores.size() != labels.size()) {
    throw InvalidInput("record has " + std::to_string(scores.size()) +
                       " scores but " + std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidInput("labels must be 0 or 1");
  }
}

namespace {

// Returns nullopt-like -1 when the pool is single-class.
double mann_whitney(std::vector<std::pair<double, int>>& pool) {
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < pool.size()) {
    std::size_t j = i;
    while (j < pool.size() && pool[j].first == pool[i].first) ++j;
    // ranks i+1 .. j share their average
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (pool[t].second == 1) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = pool.size() - positives;
  if (positives == 0 || negatives == 0) return -1.0;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(negatives));
}

// Slot indices of the k highest scores; ties go to the lower index.
std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

void check_k(std::span<const EvalRecord> records, std::size_t k) {
  if (records.empty()) throw InvalidInput("no evaluation records");
  for (const auto& r : records) {
    r.validate();
    if (k < 1 || k > r.scores.size()) {
      throw InvalidInput("k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(r.scores.size()) + "]");
    }
  }
}

std::size_t hits_at_k(std::span<const EvalRecord> records, std::size_t k) {
  std::size_t hits = 0;
  for (const auto& r : records) {
    for (std::size_t s : top_k(r.scores, k)) hits += static_cast<std::size_t>(r.labels[s]);
  }
  return hits;
}

}  // namespace

double auc(std::span<const EvalRecord> records, bool pooled) {
  if (pooled) {
    std::vector<std::pair<double, int>> pool;
    for (const auto& r : records) {
      r.validate();
      for (std::size_t s = 0; s < r.scores.size(); ++s) {
        pool.emplace_back(r.scores[s], r.labels[s]);
      }
    }
    const double v = mann_whitney(pool);
    if (v < 0.0) throw UndefinedMetric("AUC needs both clicked and unclicked slots");
    return v;
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& r : records) {
    r.validate();
    std::vector<std::pair<double, int>> pool;
    for (std::size_t s = 0; s < r.scores.size(); ++s) {
      pool.emplace_back(r.scores[s], r.labels[s]);
    }
    const double v = mann_whitney(pool);
    if (v >= 0.0) {
      total += v;
      ++counted;
    }
  }
  if (counted == 0) {
    throw UndefinedMetric("no record has both clicked and unclicked slots");
  }
  return total / static_cast<double>(counted);
}

double hit_ratio_at_k(std::span<const EvalRecord> records, std::size_t k) {
  check_k(records, k);
  std::size_t clicked = 0;
  for (const auto& r : records) {
    clicked += static_cast<std::size_t>(std::count(r.labels.begin(), r.labels.end(), 1));
  }
  if (clicked == 0) throw UndefinedMetric("HR@k needs at least one clicked slot");
  return static_cast<double>(hits_at_k(records, k)) / static_cast<double>(clicked);
}

double accuracy_at_k(std::span<const EvalRecord> records, std::size_t k) {
  check_k(records, k);
  return static_cast<double>(hits_at_k(records, k)) /
         static_cast<double>(k * records.size());
}

MetricsRow evaluate_metrics(std::span<const EvalRecord> records,
                            std::span<const std::size_t> ks, bool pooled) {
  MetricsRow row;
  row.auc = auc(records, pooled);
  const std::size_t slots = records.empty() ? 0 : records.front().scores.size();
  for (std::size_t k : ks) {
    if (k < 1 || k > slots) continue;
    row.ks.push_back(k);
    row.hit_ratio.push_back(hit_ratio_at_k(records, k));
    row.accuracy.push_back(accuracy_at_k(records, k));
  }
  return row;
}

}  // namespace tim
