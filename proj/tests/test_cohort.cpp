#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "hgdc/cohort.hpp"
#include "hgdc/tensor.hpp"

using namespace hgdc;

namespace {

CohortSpec small_spec() {
  CohortSpec spec;
  spec.n_patients = 50;
  spec.n_labels = 6;
  spec.ehr_features = 5;
  spec.cxr_features = 4;
  spec.time_steps = 4;
  spec.seed = 3;
  return spec;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/hgdc_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("generator is deterministic per seed") {
  const auto a = generate_cohort(small_spec());
  const auto b = generate_cohort(small_spec());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].patient_id == b[i].patient_id);
    CHECK(a[i].ehr.values == b[i].ehr.values);
    CHECK(a[i].labels == b[i].labels);
    REQUIRE(a[i].cxrs.size() == b[i].cxrs.size());
    for (std::size_t k = 0; k < a[i].cxrs.size(); ++k) {
      CHECK(a[i].cxrs[k].features == b[i].cxrs[k].features);
      CHECK(a[i].cxrs[k].time_hours == b[i].cxrs[k].time_hours);
    }
  }
  auto different = small_spec();
  different.seed = 4;
  const auto c = generate_cohort(different);
  CHECK(a.front().ehr.values != c.front().ehr.values);
}

TEST_CASE("zero availability means no CXRs") {
  auto spec = small_spec();
  spec.cxr_availability_rate = 0.0;
  for (const auto& rec : generate_cohort(spec)) CHECK(rec.cxrs.empty());
}

TEST_CASE("generator honors its own co-occurrence and count design") {
  CohortSpec spec;
  spec.n_patients = 2000;
  spec.seed = 11;
  spec.finalize();
  const auto records = generate_cohort(spec);

  // designed block pair: first two labels of the first block
  const int i = spec.label_blocks[0][0], j = spec.label_blocks[0][1];
  int count_i = 0, count_ij = 0;
  for (const auto& rec : records) {
    if (rec.labels[i]) {
      ++count_i;
      if (rec.labels[j]) ++count_ij;
    }
  }
  const double conditional = static_cast<double>(count_ij) / count_i;
  CHECK(conditional >= 0.6);  // designed 0.7, sampling tolerance 0.1

  // CXR count mean within +-0.2 of the spec among bearing patients
  std::int64_t images = 0, bearing = 0;
  for (const auto& rec : records)
    if (!rec.cxrs.empty()) {
      ++bearing;
      images += static_cast<std::int64_t>(rec.cxrs.size());
    }
  const double mean = static_cast<double>(images) / bearing;
  CHECK(mean == doctest::Approx(spec.cxr_count_mean).epsilon(0.11));
  const double availability = static_cast<double>(bearing) / spec.n_patients;
  CHECK(availability == doctest::Approx(spec.cxr_availability_rate).epsilon(0.1));
}

TEST_CASE("block label rate calibration") {
  // q solves the two-state model exactly
  const double r = 0.05, t = 0.7;
  const double q = block_label_rate(t, r);
  const double p_i = 0.5 * q + 0.5 * r;
  const double p_ij = 0.5 * q * q + 0.5 * r * r;
  CHECK(p_ij / p_i == doctest::Approx(t).epsilon(1e-12));
}

TEST_CASE("non_latest placement keeps the signal off the newest image") {
  auto spec = temporal_cohort_spec();
  spec.n_patients = 20;
  const auto records = generate_cohort(spec);
  for (const auto& rec : records) {
    REQUIRE(rec.cxrs.size() >= 2);
    for (std::size_t k = 1; k < rec.cxrs.size(); ++k)
      CHECK(rec.cxrs[k - 1].time_hours <= rec.cxrs[k].time_hours);
  }
}

TEST_CASE("cohort JSONL round trip") {
  const auto records = generate_cohort(small_spec());
  TempFile f("roundtrip.jsonl");
  save_cohort(records, f.path);
  const auto loaded = load_cohort(f.path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].patient_id == records[i].patient_id);
    CHECK(loaded[i].ehr.values == records[i].ehr.values);
    CHECK(loaded[i].ehr.mask == records[i].ehr.mask);
    CHECK(loaded[i].labels == records[i].labels);
    REQUIRE(loaded[i].cxrs.size() == records[i].cxrs.size());
    for (std::size_t k = 0; k < records[i].cxrs.size(); ++k) {
      CHECK(loaded[i].cxrs[k].features == records[i].cxrs[k].features);
      CHECK(loaded[i].cxrs[k].time_hours == records[i].cxrs[k].time_hours);
    }
  }
}

TEST_CASE("empty cxrs list parses to a 0-CXR patient") {
  TempFile f("nocxr.jsonl");
  std::ofstream(f.path)
      << R"({"format_version":1})" << '\n'
      << R"({"patient_id":"a","ehr":{"values":[[1,2]]},"cxrs":[],"labels":[1,0]})"
      << '\n';
  const auto loaded = load_cohort(f.path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].cxrs.empty());
  CHECK(loaded[0].ehr.mask == std::vector<double>{1.0, 1.0});
}

TEST_CASE("malformed line reports its line number") {
  TempFile f("broken.jsonl");
  std::ofstream(f.path) << R"({"format_version":1})" << '\n'
                        << R"({"patient_id":"a","ehr":{"values":[[1)" << '\n';
  CHECK_THROWS_WITH_AS(load_cohort(f.path),
                       doctest::Contains((f.path + ":2").c_str()), ValueError);
}

TEST_CASE("validate_cohort rejects out-of-window CXR times") {
  auto records = generate_cohort(small_spec());
  validate_cohort(records, 48.0);
  bool found = false;
  for (auto& rec : records)
    if (!rec.cxrs.empty()) {
      rec.cxrs[0].time_hours = 50.0;
      found = true;
      break;
    }
  REQUIRE(found);
  CHECK_THROWS_AS(validate_cohort(records, 48.0), ValueError);
}

TEST_CASE("spec JSON round trip and validation") {
  auto spec = small_spec();
  spec.finalize();
  const auto parsed = cohort_spec_from_json(cohort_spec_to_json(spec));
  CHECK(parsed.n_patients == spec.n_patients);
  CHECK(parsed.label_blocks == spec.label_blocks);
  CHECK(parsed.block_modality == spec.block_modality);

  CHECK_THROWS_WITH_AS(cohort_spec_from_json(R"({"n_patientz": 5})"),
                       doctest::Contains("n_patientz"), ValueError);
  CHECK_THROWS_AS(cohort_spec_from_json(R"({"n_patients": -1})"), ValueError);
  CHECK_THROWS_AS(
      cohort_spec_from_json(
          R"({"cxr_signal_placement":"non_latest","cxr_count_min":1})"),
      ValueError);
}

TEST_CASE("default blocks partition every label") {
  for (int n : {1, 2, 5, 25}) {
    CohortSpec spec;
    spec.n_labels = n;
    spec.finalize();
    std::set<int> seen;
    for (const auto& block : spec.label_blocks)
      for (int l : block) seen.insert(l);
    CHECK(static_cast<int>(seen.size()) == n);
    CHECK(spec.block_modality.size() == spec.label_blocks.size());
  }
}
