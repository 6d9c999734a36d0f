#pragma once

#include "hgdc/cohort.hpp"
#include "hgdc/tensor.hpp"

namespace hgdc {

/// Small MLP encoders standing behind a stable (input -> Tensor[d], on-tape)
/// boundary. Anything honoring that contract can replace them.
struct EncoderParams {
  // EHR path: time-averaged values + centered observation-rate channel,
  // 2J -> hidden -> d with tanh.
  Tensor ehr_w1, ehr_b1, ehr_w2, ehr_b2;
  // CXR path: F -> hidden -> d with tanh.
  Tensor cxr_w1, cxr_b1, cxr_w2, cxr_b2;
};

/// Deterministic length-d embedding of one stay's EHR series. The series is
/// mean-pooled over time; the observation mask contributes a parallel
/// channel centered at 0.5 so an all-observed cohort does not inject a large
/// common component into every embedding.
Tensor encode_ehr(const EhrInput& input, const EncoderParams& params);

Tensor encode_cxr(const CxrInput& input, const EncoderParams& params);

}  // namespace hgdc
