#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hgdc {

/// Step-wise average precision over descending-score thresholds; tied scores
/// form a single threshold group, which makes the result invariant to the
/// order of tied entries. Returns nullopt when the column has no positive
/// labels (the metric is undefined there).
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

struct PraucReport {
  std::vector<double> per_disease;     // NaN where undefined
  std::vector<int> undefined_labels;   // zero positives in this split
  double macro = 0.0;                  // mean over the defined columns
};

/// predictions/labels are row-major n_rows x n_labels.
PraucReport macro_prauc(const std::vector<double>& predictions,
                        const std::vector<std::uint8_t>& labels, int n_labels);

/// CSV rows (disease, prauc, delta_vs_baseline_pct) plus a trailing macro
/// row. Baseline scores are optional; without them the delta column is
/// empty.
std::string per_disease_report(const PraucReport& report,
                               const std::vector<std::string>& names,
                               const std::vector<double>* baseline = nullptr);

}  // namespace hgdc
