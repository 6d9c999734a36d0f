#include "hgdc/pgraph.hpp"

#include <cmath>
#include <string>

#include "hgdc/log.hpp"

namespace hgdc {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("cosine_similarity: lengths disagree: [" +
                     std::to_string(a.size()) + "] vs [" + std::to_string(b.size()) +
                     "]");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < 1e-12 || nb < 1e-12) {
    warn("cosine_similarity: near-zero embedding, similarity treated as 0");
    return 0.0;
  }
  return ab / (na * nb);
}

double delta_t(const CxrInput& cxr, double window_hours) {
  if (window_hours <= 0.0) throw ValueError("delta_t: window must be positive");
  if (cxr.time_hours < 0.0 || cxr.time_hours > window_hours)
    throw ValueError("delta_t: acquisition time " + std::to_string(cxr.time_hours) +
                     "h outside [0," + std::to_string(window_hours) + "]");
  return cxr.time_hours / window_hours;
}

PGraph build_pgraph(const std::vector<PatientRecord>& batch,
                    const std::vector<Tensor>& ehr_embeddings, double delta,
                    double window_hours) {
  if (batch.empty()) throw ValueError("build_pgraph: empty batch");
  if (batch.size() != ehr_embeddings.size())
    throw ShapeError("build_pgraph: " + std::to_string(batch.size()) +
                     " records vs " + std::to_string(ehr_embeddings.size()) +
                     " embeddings");
  if (delta <= -1.0 || delta > 1.0)
    throw ValueError("build_pgraph: delta must be in (-1,1]");

  const int n = static_cast<int>(batch.size());
  PGraph g;
  g.n_patients = n;
  g.neighbors.resize(n);
  g.cxr_delta_t.resize(n);

  for (int s = 0; s < n; ++s)
    for (int t = s + 1; t < n; ++t) {
      const double sim =
          cosine_similarity(ehr_embeddings[s].values(), ehr_embeddings[t].values());
      if (sim > delta) {
        g.ehr_edges.push_back({s, t, sim});
        g.ehr_edges.push_back({t, s, sim});
        g.neighbors[s].push_back(t);
        g.neighbors[t].push_back(s);
      }
    }

  for (int s = 0; s < n; ++s) {
    g.cxr_delta_t[s].reserve(batch[s].cxrs.size());
    for (std::size_t k = 0; k < batch[s].cxrs.size(); ++k) {
      const double dt = delta_t(batch[s].cxrs[k], window_hours);
      g.cxr_edges.push_back({s, static_cast<int>(k), dt});
      g.cxr_delta_t[s].push_back(dt);
    }
  }
  return g;
}

}  // namespace hgdc
