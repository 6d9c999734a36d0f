#pragma once

// Central finite-difference gradient checker. Test-side oracle only: it never
// touches the tape's backward rules, it re-runs the forward pass with
// perturbed leaf values and compares difference quotients against the tape
// gradients.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hgdc/rng.hpp"
#include "hgdc/tensor.hpp"

namespace hgdc::testing {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;
};

/// `f` must rebuild the scalar output from the current leaf values on every
/// call. rel err per entry is |a-n| / max(|a|, |n|, floor); the floor keeps
/// finite-difference roundoff on near-zero gradients from registering as a
/// large relative error.
inline GradCheckReport grad_check(const std::function<Tensor()>& f,
                                  std::vector<Tensor> leaves, double h = 1e-5,
                                  double floor = 1e-4) {
  GradCheckReport report;

  Tensor loss = f();
  Tape tape(loss);
  tape.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) {
    if (leaf.has_grad())
      analytic.push_back(leaf.grad());
    else
      analytic.emplace_back(leaf.values().size(), 0.0);
    leaf.zero_grad();
  }

  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto& vals = leaves[l].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = f().value();
      vals[i] = keep - h;
      const double down = f().value();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[l][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        std::ostringstream os;
        os << "leaf " << l << " entry " << i << ": tape " << a << " vs fd "
           << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Scalarizes an arbitrary-shape output by a fixed random projection so the
/// checker can treat every op uniformly.
inline Tensor project_to_scalar(const Tensor& t, std::uint64_t seed = 99) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(0.25, 1.0);
  std::vector<double> w(t.values().size());
  for (auto& x : w) x = dist(rng);
  return reduce_sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

}  // namespace hgdc::testing
