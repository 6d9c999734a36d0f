#include "hgdc/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hgdc {

EhrMessage aggregate_ehr_ehr(const Tensor& target,
                             const std::vector<Tensor>& neighbors,
                             const AggParams& params, double attn_slope) {
  const int h = params.heads();
  if (h == 0) throw ValueError("aggregate_ehr_ehr: no attention heads");
  const int d = params.dim();
  const int hd = params.head_proj[0].shape()[0];
  if (target.size() != d)
    throw ShapeError("aggregate_ehr_ehr: target shape " + shape_str(target.shape()) +
                     " vs params dimension " + std::to_string(d));
  if (neighbors.empty()) return {Tensor::zeros({d}), false};
  for (const auto& n : neighbors)
    if (n.size() != d)
      throw ShapeError("aggregate_ehr_ehr: neighbor shape " + shape_str(n.shape()) +
                       " vs params dimension " + std::to_string(d));

  Tensor neighbor_mat = stack_rows(neighbors);           // [K, d]
  Tensor open_mask = Tensor::zeros({static_cast<int>(neighbors.size())});

  std::vector<Tensor> head_messages;
  head_messages.reserve(h);
  for (int i = 0; i < h; ++i) {
    const Tensor& w = params.head_proj[i];
    const Tensor& a = params.head_attn[i];
    if (a.size() != 2 * hd)
      throw ShapeError("aggregate_ehr_ehr: attention vector shape " +
                       shape_str(a.shape()) + " vs head width " + std::to_string(hd));
    Tensor wh_target = matvec(w, target);                        // [hd]
    Tensor wh_neighbors = matmul(neighbor_mat, transpose(w));    // [K, hd]
    // a . [W h_s || W h_s'] splits into a_src . W h_s + a_dst . W h_s'.
    Tensor s_self = reduce_sum(mul(slice(a, 0, hd), wh_target));
    Tensor scores = leaky_relu(
        add_scalar(matvec(wh_neighbors, slice(a, hd, hd)), s_self), attn_slope);
    Tensor alpha = masked_softmax(scores, open_mask);            // [K]
    head_messages.push_back(matvec(transpose(wh_neighbors), alpha));
  }
  return {concat(head_messages), true};
}

std::vector<double> temporal_weights(const std::vector<double>& delta_ts) {
  if (delta_ts.empty())
    throw ValueError("temporal_weights: no acquisition times");
  const double mx = *std::max_element(delta_ts.begin(), delta_ts.end());
  std::vector<double> w(delta_ts.size());
  double denom = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = std::exp(delta_ts[j] - mx);
    denom += w[j];
  }
  for (auto& x : w) x /= denom;
  return w;
}

Tensor aggregate_cxr(const std::vector<Tensor>& cxr_embeddings,
                     const std::vector<double>& weights, const AggParams& params) {
  if (cxr_embeddings.empty())
    throw ValueError("aggregate_cxr: no CXR embeddings");
  if (cxr_embeddings.size() != weights.size())
    throw ShapeError("aggregate_cxr: " + std::to_string(cxr_embeddings.size()) +
                     " embeddings vs " + std::to_string(weights.size()) + " weights");
  const int d = params.dim();
  for (const auto& e : cxr_embeddings)
    if (e.size() != d)
      throw ShapeError("aggregate_cxr: embedding shape " + shape_str(e.shape()) +
                       " vs params dimension " + std::to_string(d));
  Tensor projected =
      matmul(stack_rows(cxr_embeddings), transpose(params.cxr_proj));  // [K, d]
  Tensor w = Tensor::from({static_cast<int>(weights.size())}, weights);
  return matvec(transpose(projected), w);
}

}  // namespace hgdc
