#pragma once

#include "hgdc/tensor.hpp"

namespace hgdc {

struct SourceFlags {
  bool has_neighbors = false;
  bool has_cxr = false;
};

/// The three source features of one target node stacked as rows of a [3,d]
/// matrix, plus the {0,-inf} attention mask. Row 1 (the patient's own EHR)
/// is never masked; rows 2 and 3 are masked exactly when the corresponding
/// source is absent.
struct SourceStack {
  Tensor stack;  // [3, d]
  Tensor mask;   // [3]
};

struct FusionParams {
  Tensor w_q, w_k, w_v;  // [d, d]
};

SourceStack stack_features(const Tensor& h_ehr, const Tensor& m_ee,
                           const Tensor& m_ec, SourceFlags flags);

struct Attended {
  Tensor fused;  // [d]
  Tensor alpha;  // [3]; exactly 0 at masked rows
};

/// Correlation-guided attention for one disease: the prototype is the query,
/// keys/values are projections of the source stack, scores are scaled
/// dot-products plus the mask.
Attended cga_attend(const SourceStack& stack, const Tensor& query,
                    const FusionParams& params);

struct FusedAll {
  Tensor fused;  // [N, d]
  Tensor alpha;  // [N, 3]
};

/// Row n equals cga_attend(stack, prototypes row n, params); evaluated
/// batched over all diseases.
FusedAll fuse_all_diseases(const SourceStack& stack, const Tensor& prototypes,
                           const FusionParams& params);

}  // namespace hgdc
