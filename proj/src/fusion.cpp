#include "hgdc/fusion.hpp"

#include <cmath>
#include <limits>

namespace hgdc {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

SourceStack stack_features(const Tensor& h_ehr, const Tensor& m_ee,
                           const Tensor& m_ec, SourceFlags flags) {
  const int d = h_ehr.size();
  if (m_ee.size() != d || m_ec.size() != d)
    throw ShapeError("stack_features: shapes disagree: " + shape_str(h_ehr.shape()) +
                     ", " + shape_str(m_ee.shape()) + ", " + shape_str(m_ec.shape()));
  Tensor rows[] = {h_ehr, m_ee, m_ec};
  SourceStack out;
  out.stack = stack_rows(rows);
  out.mask = Tensor::from({3}, {0.0, flags.has_neighbors ? 0.0 : kNegInf,
                                flags.has_cxr ? 0.0 : kNegInf});
  return out;
}

Attended cga_attend(const SourceStack& stack, const Tensor& query,
                    const FusionParams& params) {
  const int d = params.w_q.shape()[0];
  if (query.size() != d)
    throw ShapeError("cga_attend: query shape " + shape_str(query.shape()) +
                     " vs params dimension " + std::to_string(d));
  Tensor q = matvec(params.w_q, query);                          // [d]
  Tensor keys = matmul(stack.stack, transpose(params.w_k));      // [3, d]
  Tensor values = matmul(stack.stack, transpose(params.w_v));    // [3, d]
  Tensor scores = scale(matvec(keys, q), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor alpha = masked_softmax(scores, stack.mask);             // [3]
  return {matvec(transpose(values), alpha), alpha};
}

FusedAll fuse_all_diseases(const SourceStack& stack, const Tensor& prototypes,
                           const FusionParams& params) {
  const int d = params.w_q.shape()[0];
  if (prototypes.shape().size() != 2 || prototypes.shape()[1] != d)
    throw ShapeError("fuse_all_diseases: prototypes shape " +
                     shape_str(prototypes.shape()) + " vs params dimension " +
                     std::to_string(d));
  Tensor queries = matmul(prototypes, transpose(params.w_q));    // [N, d]
  Tensor keys = matmul(stack.stack, transpose(params.w_k));      // [3, d]
  Tensor values = matmul(stack.stack, transpose(params.w_v));    // [3, d]
  Tensor scores = scale(matmul(queries, transpose(keys)),
                        1.0 / std::sqrt(static_cast<double>(d)));  // [N, 3]
  Tensor alpha = masked_softmax_rows(scores, stack.mask);
  return {matmul(alpha, values), alpha};
}

}  // namespace hgdc
