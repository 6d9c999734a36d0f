#include "hgdc/disease_corr.hpp"

#include <cmath>
#include <string>

#include "hgdc/log.hpp"

namespace hgdc {

void count_cooccurrence(const std::vector<std::vector<std::uint8_t>>& labels,
                        std::vector<std::int64_t>& counts,
                        std::vector<std::int64_t>& cooccur) {
  if (labels.empty()) throw ValueError("count_cooccurrence: empty dataset");
  const std::size_t n = labels.front().size();
  if (n == 0) throw ValueError("count_cooccurrence: zero labels");
  counts.assign(n, 0);
  cooccur.assign(n * n, 0);
  for (const auto& sample : labels) {
    if (sample.size() != n)
      throw ShapeError("count_cooccurrence: sample with " +
                       std::to_string(sample.size()) + " labels, expected " +
                       std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!sample[i]) continue;
      ++counts[i];
      for (std::size_t j = 0; j < n; ++j)
        if (sample[j]) ++cooccur[i * n + j];
    }
  }
}

std::vector<double> conditional_matrix(const std::vector<std::int64_t>& counts,
                                       const std::vector<std::int64_t>& cooccur) {
  const std::size_t n = counts.size();
  if (cooccur.size() != n * n)
    throw ShapeError("conditional_matrix: cooccur size " +
                     std::to_string(cooccur.size()) + " vs " + std::to_string(n) +
                     " labels");
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) {
      warn("conditional_matrix: label " + std::to_string(i) +
           " never occurs; row left at zero");
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      a[i * n + j] =
          static_cast<double>(cooccur[i * n + j]) / static_cast<double>(counts[i]);
    }
  }
  return a;
}

std::vector<double> binarize(const std::vector<double>& conditional, double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw ValueError("binarize: tau must be in [0,1], got " + std::to_string(tau));
  std::vector<double> out(conditional.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = conditional[i] >= tau ? 1.0 : 0.0;
  return out;
}

std::vector<double> normalize_adjacency(const std::vector<double>& binarized) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(
      static_cast<double>(binarized.size()))));
  if (n * n != binarized.size())
    throw ShapeError("normalize_adjacency: input is not square");
  // max(B, B^T) + I; self-loops guarantee positive degrees.
  std::vector<double> s(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      s[i * n + j] = std::max(binarized[i * n + j], binarized[j * n + i]);
    s[i * n + i] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += s[i * n + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = inv_sqrt_deg[i] * s[i * n + j] * inv_sqrt_deg[j];
  return out;
}

DiseaseCorrelation DiseaseCorrelation::from_labels(
    const std::vector<std::vector<std::uint8_t>>& labels, double tau) {
  DiseaseCorrelation corr;
  count_cooccurrence(labels, corr.counts, corr.cooccur);
  corr.n_labels = static_cast<int>(corr.counts.size());
  corr.conditional = conditional_matrix(corr.counts, corr.cooccur);
  corr.binarized = binarize(corr.conditional, tau);
  corr.adjacency = normalize_adjacency(corr.binarized);
  return corr;
}

Tensor DiseaseCorrelation::adjacency_tensor() const {
  return Tensor::from({n_labels, n_labels}, adjacency);
}

Tensor gcn_forward(const Tensor& adjacency, const Tensor& label_embeddings,
                   const GcnParams& params) {
  const int n = adjacency.shape()[0];
  if (adjacency.shape() != Shape{n, n})
    throw ShapeError("gcn_forward: adjacency must be square, got " +
                     shape_str(adjacency.shape()));
  if (label_embeddings.shape()[0] != n)
    throw ShapeError("gcn_forward: adjacency " + shape_str(adjacency.shape()) +
                     " vs embeddings " + shape_str(label_embeddings.shape()));
  Tensor hidden = leaky_relu(
      matmul(matmul(adjacency, label_embeddings), params.w1), 0.2);
  return matmul(matmul(adjacency, hidden), params.w2);
}

}  // namespace hgdc
