#pragma once

#include <span>
#include <vector>

namespace tim {

struct EvalRecord {
  std::vector<double> scores;  // predicted CTR per slot
  std::vector<int> labels;     // 1 if the slot was clicked

  void validate() const;
};

// Mann-Whitney AUC with average ranks for ties. pooled=true ranks every
// (record, slot) pair together; otherwise AUC is averaged over records that
// contain both classes. Throws UndefinedMetric when no pool has both classes.
double auc(std::span<const EvalRecord> records, bool pooled = true);

// Recall@k: clicked slots found among each record's k highest scores,
// divided by all clicked slots. Ties rank the lower slot index first.
// Throws UndefinedMetric if nothing was clicked.
double hit_ratio_at_k(std::span<const EvalRecord> records, std::size_t k);

// Precision@k: clicked slots among the top k, divided by k * records.
double accuracy_at_k(std::span<const EvalRecord> records, std::size_t k);

struct MetricsRow {
  double auc = 0.0;
  std::vector<std::size_t> ks;
  std::vector<double> hit_ratio;
  std::vector<double> accuracy;
};

// ks larger than K are skipped.
MetricsRow evaluate_metrics(std::span<const EvalRecord> records,
                            std::span<const std::size_t> ks, bool pooled = true);

}  // namespace tim
