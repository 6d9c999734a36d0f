#pragma once

#include <span>
#include <vector>

#include "hgdc/cohort.hpp"
#include "hgdc/tensor.hpp"

namespace hgdc {

struct EhrEdge {
  int src = 0, dst = 0;       // patient indices within the batch
  double similarity = 0.0;
};

struct CxrEdge {
  int patient = 0;            // batch index of the owning patient
  int cxr_index = 0;          // index into that patient's cxrs
  double delta_t = 0.0;       // normalized acquisition time
};

/// Batch-level heterogeneous graph: EHR target nodes, similarity EHR-EHR
/// edges (both directions materialized), intra-patient CXR->EHR edges with
/// normalized time attributes.
struct PGraph {
  int n_patients = 0;
  std::vector<EhrEdge> ehr_edges;
  std::vector<CxrEdge> cxr_edges;
  std::vector<std::vector<int>> neighbors;         // per patient, ascending
  std::vector<std::vector<double>> cxr_delta_t;    // per patient, per image
};

/// cos(a,b) in [-1,1]; a vector with norm below 1e-12 yields 0 (no edge) and
/// a warning.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Relative acquisition time in [0,1]; later images get a larger value and
/// hence a larger temporal attention weight.
double delta_t(const CxrInput& cxr, double window_hours);

/// Edge decisions threshold on detached embedding values (hard thresholding
/// is not differentiated). delta = 1 is allowed and disables every EHR-EHR
/// edge, since similarities never exceed 1.
PGraph build_pgraph(const std::vector<PatientRecord>& batch,
                    const std::vector<Tensor>& ehr_embeddings, double delta,
                    double window_hours);

}  // namespace hgdc
