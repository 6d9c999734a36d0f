#pragma once

#include <vector>

#include "hgdc/tensor.hpp"

namespace hgdc {

/// Parameters of the type-specific neighbor aggregation. Head projections
/// map d -> d/H; concatenating the H head messages restores dimension d.
struct AggParams {
  std::vector<Tensor> head_proj;  // H matrices [d/H, d]
  std::vector<Tensor> head_attn;  // H vectors [2*(d/H)]
  Tensor cxr_proj;                // [d, d]

  int heads() const { return static_cast<int>(head_proj.size()); }
  int dim() const { return cxr_proj.shape()[0]; }
};

struct EhrMessage {
  Tensor value;               // [d]; zero vector when no neighbors exist
  bool has_neighbors = false; // false -> fusion masks the row
};

/// Multi-head graph attention over the similar-patient neighbors. Per head,
/// scores are LeakyReLU(a . [W h_s || W h_s']), softmax-normalized over the
/// neighbor set; the target does not attend to itself.
EhrMessage aggregate_ehr_ehr(const Tensor& target,
                             const std::vector<Tensor>& neighbors,
                             const AggParams& params, double attn_slope = 0.2);

/// w_j = exp(dt_j) / sum_k exp(dt_k); strictly increasing in dt_j.
std::vector<double> temporal_weights(const std::vector<double>& delta_ts);

/// m = sum_j w_j * W_C h_j.
Tensor aggregate_cxr(const std::vector<Tensor>& cxr_embeddings,
                     const std::vector<double>& weights, const AggParams& params);

}  // namespace hgdc
