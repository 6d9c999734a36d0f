#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hgdc {

/// Multivariate clinical time series for one stay. Missing entries are
/// imputed to 0 and flagged in the parallel observation mask.
struct EhrInput {
  int time_steps = 0;
  int features = 0;
  std::vector<double> values;  // row-major time_steps x features
  std::vector<double> mask;    // 1 observed, 0 missing

  double value_at(int t, int j) const {
    return values[static_cast<std::size_t>(t) * features + j];
  }
};

struct CxrInput {
  std::vector<double> features;
  double time_hours = 0.0;
};

struct PatientRecord {
  std::string patient_id;
  EhrInput ehr;
  std::vector<CxrInput> cxrs;       // may be empty
  std::vector<std::uint8_t> labels;  // multi-hot
};

/// Synthetic cohort design. Latent per-patient factors drive both the
/// features and the labels; which modality exposes a label's driving factor
/// is set per block, so some labels are readable only from CXR, some only
/// from EHR, and some only through the patient's cluster (i.e. via similar
/// patients).
struct CohortSpec {
  int n_patients = 200;
  int n_labels = 25;
  int ehr_features = 17;
  int cxr_features = 32;
  int time_steps = 16;
  double window_hours = 48.0;

  double cxr_availability_rate = 0.7;
  double cxr_count_mean = 1.89;  // images per CXR-bearing stay
  int cxr_count_min = 1;
  // "all": every image carries the signal; "non_latest": exactly one image,
  // never the most recent, carries it (the latest is pure noise).
  std::string cxr_signal_placement = "all";

  // Partition of the labels; empty -> a default partition is derived.
  std::vector<std::vector<int>> label_blocks;
  // Per block: "ehr", "cxr" or "neighbor". Sizes must match label_blocks.
  std::vector<std::string> block_modality;
  double block_cooccurrence = 0.7;  // target P(label j | label i) within a block
  double off_block_rate = 0.05;     // label rate when the block is inactive

  int n_clusters = 6;
  double cluster_strength = 2.0;   // cluster direction weight in EHR features
  double ehr_latent_strength = 1.0;
  double ehr_noise = 0.6;
  double cxr_noise = 0.8;
  double ehr_missing_rate = 0.2;
  // Stay-level recording quality: a sparse_stay_rate fraction of stays is
  // intermittently recorded and keeps only sparse_stay_observed of its
  // cells; the rest follow ehr_missing_rate.
  double sparse_stay_rate = 0.0;
  double sparse_stay_observed = 0.15;

  std::uint64_t seed = 1;

  /// Fills label_blocks/block_modality with the default layout when empty
  /// and validates ranges. Throws ValueError on an invalid spec.
  void finalize();
};

std::vector<PatientRecord> generate_cohort(const CohortSpec& spec);

/// Canned cohort designs ("--preset" in gen-data).
/// fusion: mixed EHR/CXR/neighbor-driven labels with partial CXR coverage.
/// temporal: the informative CXR is never the most recent one.
/// tiny: 16 patients, 4 labels; a memorization smoke cohort.
CohortSpec fusion_cohort_spec();
CohortSpec temporal_cohort_spec();
CohortSpec tiny_cohort_spec();

/// Within-block label rate q solving the two-state co-occurrence model
///   P(j|i) = (p q^2 + (1-p) r^2) / (p q + (1-p) r),  p = 1/2
/// for the requested conditional probability. Exposed for tests.
double block_label_rate(double target_cooccurrence, double off_rate);

// ---- JSONL cohort files -----------------------------------------------------
// One record per line:
//   {"patient_id": ..., "ehr": {"values": [[...]], "mask": [[...]]},
//    "cxrs": [{"features": [...], "time_hours": t}], "labels": [...]}
// First line is a header object carrying "format_version".

void save_cohort(const std::vector<PatientRecord>& records, const std::string& path);
std::vector<PatientRecord> load_cohort(const std::string& path);

/// Parsers for the spec JSON (gen-data input). Throws ValueError with the
/// offending key on schema violations.
CohortSpec cohort_spec_from_json(const std::string& text);
std::string cohort_spec_to_json(const CohortSpec& spec);

/// Ingestion-time validation: CXR times within [0, window], labels binary,
/// consistent feature counts. Throws ValueError naming the record.
void validate_cohort(const std::vector<PatientRecord>& records, double window_hours);

}  // namespace hgdc
