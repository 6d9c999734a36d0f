#pragma once

#include <cstdint>
#include <vector>

#include "hgdc/tensor.hpp"

namespace hgdc {

/// Label co-occurrence statistics and the derived adjacency. Computed on the
/// training split only and frozen afterwards. All matrices are row-major
/// n_labels x n_labels; the conditional matrix is generally asymmetric.
struct DiseaseCorrelation {
  int n_labels = 0;
  std::vector<std::int64_t> counts;      // occurrences per label
  std::vector<std::int64_t> cooccur;     // pair counts, diagonal = counts
  std::vector<double> conditional;       // A_ij = cooccur(i,j)/count(i), A_ii = 0
  std::vector<double> binarized;         // 1 iff A_ij >= tau (inclusive)
  std::vector<double> adjacency;         // symmetric, self-loops, D^-1/2 (.) D^-1/2

  static DiseaseCorrelation from_labels(
      const std::vector<std::vector<std::uint8_t>>& labels, double tau);

  Tensor adjacency_tensor() const;       // constant [N,N]
};

void count_cooccurrence(const std::vector<std::vector<std::uint8_t>>& labels,
                        std::vector<std::int64_t>& counts,
                        std::vector<std::int64_t>& cooccur);

/// Rows with count 0 come out all-zero (with a warning); the division is
/// undefined there.
std::vector<double> conditional_matrix(const std::vector<std::int64_t>& counts,
                                       const std::vector<std::int64_t>& cooccur);

std::vector<double> binarize(const std::vector<double>& conditional, double tau);

/// Symmetrizes via max(B, B^T), adds self-loops, then applies the symmetric
/// degree normalization D^-1/2 (S + I) D^-1/2.
std::vector<double> normalize_adjacency(const std::vector<double>& binarized);

struct GcnParams {
  Tensor w1;  // [N, hidden]
  Tensor w2;  // [hidden, d]
};

/// Two-layer GCN over the label graph: A * act(A * Z * W1) * W2 with
/// LeakyReLU(0.2) between layers. Rows of the result are the disease
/// prototypes that drive the fusion queries.
Tensor gcn_forward(const Tensor& adjacency, const Tensor& label_embeddings,
                   const GcnParams& params);

}  // namespace hgdc
