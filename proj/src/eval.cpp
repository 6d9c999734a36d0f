#include "hgdc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "hgdc/tensor.hpp"  // ShapeError / ValueError

namespace hgdc {

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("average_precision: " + std::to_string(scores.size()) +
                     " scores vs " + std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw ValueError("average_precision: empty input");

  std::int64_t total_pos = 0;
  for (auto y : labels) total_pos += y ? 1 : 0;
  if (total_pos == 0) return std::nullopt;
  for (double s : scores)
    if (std::isnan(s)) throw ValueError("average_precision: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::int64_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // one threshold group per distinct score
    const double group_score = scores[order[i]];
    std::size_t j = i;
    do {
      tp += labels[order[j]] ? 1 : 0;
      ++seen;
      ++j;
    } while (j < order.size() && scores[order[j]] == group_score);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

PraucReport macro_prauc(const std::vector<double>& predictions,
                        const std::vector<std::uint8_t>& labels, int n_labels) {
  if (n_labels <= 0) throw ValueError("macro_prauc: n_labels must be positive");
  if (predictions.size() != labels.size() || predictions.size() % n_labels != 0)
    throw ShapeError("macro_prauc: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(labels.size()) +
                     " labels with " + std::to_string(n_labels) + " columns");
  const std::size_t rows = predictions.size() / n_labels;

  PraucReport report;
  report.per_disease.assign(n_labels, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int defined = 0;
  std::vector<double> col_scores(rows);
  std::vector<std::uint8_t> col_labels(rows);
  for (int n = 0; n < n_labels; ++n) {
    for (std::size_t r = 0; r < rows; ++r) {
      col_scores[r] = predictions[r * n_labels + n];
      col_labels[r] = labels[r * n_labels + n];
    }
    if (auto ap = average_precision(col_scores, col_labels)) {
      report.per_disease[n] = *ap;
      sum += *ap;
      ++defined;
    } else {
      report.undefined_labels.push_back(n);
    }
  }
  report.macro = defined > 0 ? sum / defined : 0.0;
  return report;
}

std::string per_disease_report(const PraucReport& report,
                               const std::vector<std::string>& names,
                               const std::vector<double>* baseline) {
  if (names.size() != report.per_disease.size())
    throw ShapeError("per_disease_report: " + std::to_string(names.size()) +
                     " names vs " + std::to_string(report.per_disease.size()) +
                     " diseases");
  if (baseline && baseline->size() != report.per_disease.size())
    throw ShapeError("per_disease_report: baseline size mismatch");

  std::ostringstream os;
  os << "disease,prauc,delta_vs_baseline_pct\n";
  char buf[64];
  for (std::size_t n = 0; n < names.size(); ++n) {
    const double ap = report.per_disease[n];
    os << names[n] << ',';
    if (std::isnan(ap)) {
      os << "undefined,";
    } else {
      std::snprintf(buf, sizeof buf, "%.6f", ap);
      os << buf << ',';
      if (baseline && !std::isnan((*baseline)[n]) && (*baseline)[n] != 0.0) {
        std::snprintf(buf, sizeof buf, "%+.1f",
                      100.0 * (ap - (*baseline)[n]) / (*baseline)[n]);
        os << buf;
      }
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", report.macro);
  os << "macro," << buf << ",\n";
  return os.str();
}

}  // namespace hgdc
