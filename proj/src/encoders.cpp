#include "hgdc/encoders.hpp"

#include <string>

namespace hgdc {

namespace {

Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
  Tensor hidden = tanh(add(matvec(w1, x), b1));
  return add(matvec(w2, hidden), b2);
}

}  // namespace

Tensor encode_ehr(const EhrInput& input, const EncoderParams& params) {
  const int j = input.features;
  const int expected = params.ehr_w1.shape()[1];
  if (2 * j != expected)
    throw ShapeError("encode_ehr: record has " + std::to_string(j) +
                     " features but the encoder expects " +
                     std::to_string(expected / 2));
  std::vector<double> pooled(static_cast<std::size_t>(2) * j, 0.0);
  for (int t = 0; t < input.time_steps; ++t)
    for (int f = 0; f < j; ++f) {
      const std::size_t idx = static_cast<std::size_t>(t) * j + f;
      pooled[f] += input.values[idx];
      pooled[j + f] += input.mask[idx];
    }
  const double inv_t = 1.0 / input.time_steps;
  for (int f = 0; f < j; ++f) {
    pooled[f] *= inv_t;
    pooled[j + f] = pooled[j + f] * inv_t - 0.5;
  }
  Tensor x = Tensor::from({2 * j}, std::move(pooled));
  return mlp(x, params.ehr_w1, params.ehr_b1, params.ehr_w2, params.ehr_b2);
}

Tensor encode_cxr(const CxrInput& input, const EncoderParams& params) {
  const int f = static_cast<int>(input.features.size());
  const int expected = params.cxr_w1.shape()[1];
  if (f != expected)
    throw ShapeError("encode_cxr: image has " + std::to_string(f) +
                     " features but the encoder expects " + std::to_string(expected));
  Tensor x = Tensor::from({f}, input.features);
  return mlp(x, params.cxr_w1, params.cxr_b1, params.cxr_w2, params.cxr_b2);
}

}  // namespace hgdc
