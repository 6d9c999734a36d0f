#include "hgdc/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hgdc/log.hpp"
#include "hgdc/rng.hpp"
#include "hgdc/tensor.hpp"  // ValueError

namespace hgdc {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr int kLatentDims = 3;  // per-modality latent factor dimension

std::vector<double> gaussian_vec(int n, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Cluster centers: orthonormalized random directions so cross-cluster
// feature similarity stays near zero.
std::vector<std::vector<double>> make_centers(int n_clusters, int dim,
                                              std::mt19937_64& rng) {
  std::vector<std::vector<double>> centers;
  for (int c = 0; c < n_clusters; ++c) {
    std::vector<double> v = gaussian_vec(dim, rng);
    if (c < dim) {
      for (const auto& prev : centers) {
        const double proj = dot(v, prev);
        for (int j = 0; j < dim; ++j) v[j] -= proj * prev[j];
      }
    }
    double norm = std::sqrt(dot(v, v));
    if (norm < 1e-9) norm = 1.0;
    for (auto& x : v) x /= norm;
    centers.push_back(std::move(v));
  }
  return centers;
}

// rows x kLatentDims mixing matrix; per_feature_std controls how strongly a
// unit latent shows in each output feature.
std::vector<std::vector<double>> make_mixing(int rows, std::mt19937_64& rng,
                                             double per_feature_std) {
  const double stddev = per_feature_std / std::sqrt(static_cast<double>(kLatentDims));
  std::vector<std::vector<double>> m(rows);
  for (auto& r : m) r = gaussian_vec(kLatentDims, rng, stddev);
  return m;
}

std::vector<double> apply_mixing(const std::vector<std::vector<double>>& m,
                                 const std::vector<double>& latent) {
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = dot(m[i], latent);
  return out;
}

}  // namespace

double block_label_rate(double target_cooccurrence, double off_rate) {
  const double t = target_cooccurrence, r = off_rate;
  const double disc = t * t + 4.0 * r * (t - r);
  if (disc < 0.0)
    throw ValueError("block_cooccurrence " + std::to_string(t) +
                     " unreachable with off_block_rate " + std::to_string(r));
  double q = 0.5 * (t + std::sqrt(disc));
  return std::clamp(q, r, 0.995);
}

void CohortSpec::finalize() {
  if (n_patients <= 0) throw ValueError("n_patients must be positive");
  if (n_labels <= 0) throw ValueError("n_labels must be positive");
  if (ehr_features <= 0 || cxr_features <= 0 || time_steps <= 0)
    throw ValueError("feature/time dimensions must be positive");
  if (window_hours <= 0) throw ValueError("window_hours must be positive");
  if (cxr_availability_rate < 0 || cxr_availability_rate > 1)
    throw ValueError("cxr_availability_rate must be in [0,1]");
  if (ehr_missing_rate < 0 || ehr_missing_rate >= 1)
    throw ValueError("ehr_missing_rate must be in [0,1)");
  if (sparse_stay_rate < 0 || sparse_stay_rate >= 1)
    throw ValueError("sparse_stay_rate must be in [0,1)");
  if (sparse_stay_observed <= 0 || sparse_stay_observed > 1)
    throw ValueError("sparse_stay_observed must be in (0,1]");
  if (cxr_count_min < 1) throw ValueError("cxr_count_min must be >= 1");
  if (cxr_count_mean < cxr_count_min)
    throw ValueError("cxr_count_mean below cxr_count_min");
  if (cxr_signal_placement != "all" && cxr_signal_placement != "non_latest")
    throw ValueError("cxr_signal_placement must be 'all' or 'non_latest'");
  if (cxr_signal_placement == "non_latest" && cxr_count_min < 2)
    throw ValueError("cxr_signal_placement 'non_latest' needs cxr_count_min >= 2");
  if (block_cooccurrence <= 0 || block_cooccurrence >= 1)
    throw ValueError("block_cooccurrence must be in (0,1)");
  if (off_block_rate <= 0 || off_block_rate >= block_cooccurrence)
    throw ValueError("off_block_rate must be in (0, block_cooccurrence)");
  if (n_clusters < 1) throw ValueError("n_clusters must be >= 1");

  if (label_blocks.empty()) {
    // Blocks of 2-3 labels, modalities cycling ehr -> cxr -> neighbor.
    static const char* kCycle[] = {"ehr", "cxr", "neighbor"};
    int next = 0, block_idx = 0;
    while (next < n_labels) {
      const int want = (block_idx % 2 == 0) ? 3 : 2;
      const int size = std::min(want, n_labels - next);
      std::vector<int> block(size);
      for (int k = 0; k < size; ++k) block[k] = next + k;
      label_blocks.push_back(std::move(block));
      block_modality.push_back(kCycle[block_idx % 3]);
      next += size;
      ++block_idx;
    }
  }
  if (block_modality.size() != label_blocks.size())
    throw ValueError("block_modality size does not match label_blocks");
  for (const auto& m : block_modality)
    if (m != "ehr" && m != "cxr" && m != "neighbor")
      throw ValueError("block_modality entries must be ehr|cxr|neighbor, got '" + m + "'");
  std::set<int> seen;
  for (const auto& block : label_blocks) {
    if (block.empty()) throw ValueError("label_blocks entries must be non-empty");
    for (int n : block) {
      if (n < 0 || n >= n_labels)
        throw ValueError("label_blocks index " + std::to_string(n) + " out of range");
      if (!seen.insert(n).second)
        throw ValueError("label " + std::to_string(n) + " appears in two blocks");
    }
  }
  if (static_cast<int>(seen.size()) != n_labels)
    throw ValueError("label_blocks must cover every label");
}

std::vector<PatientRecord> generate_cohort(const CohortSpec& spec_in) {
  CohortSpec spec = spec_in;
  spec.finalize();

  const int n_blocks = static_cast<int>(spec.label_blocks.size());
  auto centers_rng = make_rng(spec.seed, 1);
  auto mixing_rng = make_rng(spec.seed, 2);
  auto blockdir_rng = make_rng(spec.seed, 3);
  auto clusterbit_rng = make_rng(spec.seed, 4);

  const auto centers = make_centers(spec.n_clusters, spec.ehr_features, centers_rng);
  // EHR latents spread thin over the features (typical lab-panel footprint);
  // CXR latents show up at unit strength per feature so a single image is a
  // usable but noisy view.
  const auto mix_ehr = make_mixing(
      spec.ehr_features, mixing_rng, 1.0 / std::sqrt(double(spec.ehr_features)));
  const auto mix_cxr = make_mixing(spec.cxr_features, mixing_rng, 1.0);

  std::vector<std::vector<double>> block_dirs(n_blocks);
  for (auto& v : block_dirs) {
    v = gaussian_vec(kLatentDims, blockdir_rng);
    const double norm = std::sqrt(dot(v, v));
    for (auto& x : v) x /= norm;
  }
  // Fixed cluster -> block activity bits for neighbor-driven blocks.
  std::vector<std::vector<int>> cluster_bits(spec.n_clusters,
                                             std::vector<int>(n_blocks, 0));
  std::bernoulli_distribution coin(0.5);
  for (auto& row : cluster_bits)
    for (auto& bit : row) bit = coin(clusterbit_rng) ? 1 : 0;

  const double q = block_label_rate(spec.block_cooccurrence, spec.off_block_rate);
  const double r = spec.off_block_rate;

  std::vector<PatientRecord> records;
  records.reserve(spec.n_patients);
  for (int i = 0; i < spec.n_patients; ++i) {
    auto rng = make_rng(spec.seed, 1000 + static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    PatientRecord rec;
    rec.patient_id = "p" + std::to_string(i);

    const int cluster = static_cast<int>(rng() % spec.n_clusters);
    std::vector<double> latent_ehr = gaussian_vec(kLatentDims, rng);
    std::vector<double> latent_cxr = gaussian_vec(kLatentDims, rng);

    // Block activity per modality; labels are noisy copies of it.
    std::vector<int> active(n_blocks, 0);
    for (int b = 0; b < n_blocks; ++b) {
      const std::string& m = spec.block_modality[b];
      if (m == "ehr")
        active[b] = dot(block_dirs[b], latent_ehr) > 0 ? 1 : 0;
      else if (m == "cxr")
        active[b] = dot(block_dirs[b], latent_cxr) > 0 ? 1 : 0;
      else
        active[b] = cluster_bits[cluster][b];
    }
    rec.labels.assign(spec.n_labels, 0);
    for (int b = 0; b < n_blocks; ++b)
      for (int n : spec.label_blocks[b])
        rec.labels[n] = unit(rng) < (active[b] ? q : r) ? 1 : 0;

    // EHR series: cluster direction + personal latent + per-step noise,
    // with cell-level missingness (imputed 0, mask 0). Some stays are
    // recorded only intermittently and keep a small fraction of cells.
    const auto personal = apply_mixing(mix_ehr, latent_ehr);
    const bool sparse_stay = unit(rng) < spec.sparse_stay_rate;
    const double miss_rate =
        sparse_stay ? 1.0 - spec.sparse_stay_observed : spec.ehr_missing_rate;
    rec.ehr.time_steps = spec.time_steps;
    rec.ehr.features = spec.ehr_features;
    rec.ehr.values.assign(
        static_cast<std::size_t>(spec.time_steps) * spec.ehr_features, 0.0);
    rec.ehr.mask.assign(rec.ehr.values.size(), 0.0);
    for (int t = 0; t < spec.time_steps; ++t)
      for (int j = 0; j < spec.ehr_features; ++j) {
        const std::size_t idx =
            static_cast<std::size_t>(t) * spec.ehr_features + j;
        if (unit(rng) < miss_rate) continue;
        rec.ehr.mask[idx] = 1.0;
        rec.ehr.values[idx] = spec.cluster_strength * centers[cluster][j] +
                              spec.ehr_latent_strength * personal[j] +
                              spec.ehr_noise * gauss(rng);
      }

    // CXR images: availability Bernoulli, count min + Poisson, times sorted
    // ascending within the observation window.
    if (unit(rng) < spec.cxr_availability_rate) {
      int count = spec.cxr_count_min;
      const double extra = spec.cxr_count_mean - spec.cxr_count_min;
      if (extra > 0) {
        std::poisson_distribution<int> pois(extra);
        count += pois(rng);
      }
      std::vector<double> times(count);
      for (auto& t : times) t = unit(rng) * spec.window_hours;
      std::sort(times.begin(), times.end());

      int signal_index = -1;  // -1: every image carries the signal
      if (spec.cxr_signal_placement == "non_latest")
        signal_index = count >= 2 ? static_cast<int>(rng() % (count - 1)) : 0;

      const auto visual = apply_mixing(mix_cxr, latent_cxr);
      for (int k = 0; k < count; ++k) {
        CxrInput img;
        img.time_hours = times[k];
        img.features.resize(spec.cxr_features);
        const double sig = (signal_index < 0 || k == signal_index) ? 1.0 : 0.0;
        for (int f = 0; f < spec.cxr_features; ++f)
          img.features[f] = sig * visual[f] + spec.cxr_noise * gauss(rng);
        rec.cxrs.push_back(std::move(img));
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

CohortSpec fusion_cohort_spec() {
  CohortSpec spec;
  spec.n_patients = 2000;
  // Heavy measurement noise and missingness: a single stay's view of the
  // cluster state is unreliable, so similar-patient smoothing has headroom.
  spec.ehr_noise = 1.6;
  spec.ehr_missing_rate = 0.3;
  spec.ehr_latent_strength = 2.0;
  spec.cxr_noise = 1.2;
  spec.finalize();
  return spec;
}

CohortSpec temporal_cohort_spec() {
  CohortSpec spec;
  spec.n_patients = 2000;
  spec.cxr_availability_rate = 1.0;
  spec.cxr_count_min = 2;
  spec.cxr_count_mean = 2.5;
  spec.cxr_signal_placement = "non_latest";
  spec.cxr_noise = 1.0;
  spec.ehr_noise = 1.0;
  // Weight the label set toward CXR-driven blocks so discarding the image
  // history costs the ablation most of its signal.
  spec.finalize();
  for (std::size_t b = 0; b < spec.block_modality.size(); ++b)
    spec.block_modality[b] = (b == 3) ? "ehr" : (b == 7) ? "neighbor" : "cxr";
  return spec;
}

CohortSpec tiny_cohort_spec() {
  CohortSpec spec;
  spec.n_patients = 16;
  spec.n_labels = 4;
  spec.ehr_features = 6;
  spec.cxr_features = 6;
  spec.time_steps = 4;
  spec.n_clusters = 2;
  spec.cxr_availability_rate = 0.8;
  spec.label_blocks = {{0, 1}, {2, 3}};
  spec.block_modality = {"ehr", "cxr"};
  spec.finalize();
  return spec;
}

// ---- JSONL ------------------------------------------------------------------

namespace {

json ehr_to_json(const EhrInput& e) {
  json values = json::array(), mask = json::array();
  for (int t = 0; t < e.time_steps; ++t) {
    json vrow = json::array(), mrow = json::array();
    for (int j = 0; j < e.features; ++j) {
      const std::size_t idx = static_cast<std::size_t>(t) * e.features + j;
      vrow.push_back(e.values[idx]);
      mrow.push_back(e.mask[idx]);
    }
    values.push_back(std::move(vrow));
    mask.push_back(std::move(mrow));
  }
  return json{{"values", std::move(values)}, {"mask", std::move(mask)}};
}

EhrInput ehr_from_json(const json& j) {
  EhrInput e;
  const auto& values = j.at("values");
  if (!values.is_array() || values.empty())
    throw ValueError("ehr.values must be a non-empty array of rows");
  e.time_steps = static_cast<int>(values.size());
  e.features = static_cast<int>(values[0].size());
  if (e.features == 0) throw ValueError("ehr.values rows must be non-empty");
  e.values.reserve(static_cast<std::size_t>(e.time_steps) * e.features);
  for (const auto& row : values) {
    if (static_cast<int>(row.size()) != e.features)
      throw ValueError("ehr.values rows have inconsistent lengths");
    for (const auto& v : row) e.values.push_back(v.get<double>());
  }
  if (j.contains("mask")) {
    const auto& mask = j.at("mask");
    if (static_cast<int>(mask.size()) != e.time_steps)
      throw ValueError("ehr.mask shape does not match ehr.values");
    for (const auto& row : mask) {
      if (static_cast<int>(row.size()) != e.features)
        throw ValueError("ehr.mask shape does not match ehr.values");
      for (const auto& v : row) e.mask.push_back(v.get<double>());
    }
  } else {
    e.mask.assign(e.values.size(), 1.0);
  }
  return e;
}

void warn_unknown_keys(const json& obj, const std::set<std::string>& known,
                       const std::string& where, std::set<std::string>& warned) {
  for (const auto& item : obj.items())
    if (!known.contains(item.key()) && warned.insert(item.key()).second)
      warn(where + ": ignoring unknown field '" + item.key() + "'");
}

}  // namespace

void save_cohort(const std::vector<PatientRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot open '" + path + "' for writing");
  out << json{{"format_version", kFormatVersion}}.dump() << '\n';
  for (const auto& rec : records) {
    json cxrs = json::array();
    for (const auto& c : rec.cxrs)
      cxrs.push_back(json{{"features", c.features}, {"time_hours", c.time_hours}});
    json line{{"patient_id", rec.patient_id},
              {"ehr", ehr_to_json(rec.ehr)},
              {"cxrs", std::move(cxrs)},
              {"labels", rec.labels}};
    out << line.dump() << '\n';
  }
  if (!out) throw ValueError("write to '" + path + "' failed");
}

std::vector<PatientRecord> load_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open '" + path + "'");
  std::vector<PatientRecord> records;
  std::string line;
  int line_no = 0;
  std::set<std::string> warned;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValueError(path + ":" + std::to_string(line_no) +
                       ": malformed record: " + e.what());
    }
    try {
      if (!saw_header && j.contains("format_version")) {
        saw_header = true;
        const int v = j.at("format_version").get<int>();
        if (v != kFormatVersion)
          throw ValueError("unsupported format_version " + std::to_string(v));
        continue;
      }
      warn_unknown_keys(j, {"patient_id", "ehr", "cxrs", "labels"},
                        path + ":" + std::to_string(line_no), warned);
      PatientRecord rec;
      rec.patient_id = j.at("patient_id").get<std::string>();
      rec.ehr = ehr_from_json(j.at("ehr"));
      if (j.contains("cxrs"))
        for (const auto& c : j.at("cxrs")) {
          CxrInput img;
          img.features = c.at("features").get<std::vector<double>>();
          img.time_hours = c.at("time_hours").get<double>();
          rec.cxrs.push_back(std::move(img));
        }
      for (const auto& v : j.at("labels")) {
        const int y = v.get<int>();
        if (y != 0 && y != 1) throw ValueError("labels must be 0/1");
        rec.labels.push_back(static_cast<std::uint8_t>(y));
      }
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw ValueError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValueError& e) {
      throw ValueError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void validate_cohort(const std::vector<PatientRecord>& records, double window_hours) {
  if (records.empty()) throw ValueError("cohort is empty");
  const std::size_t n_labels = records.front().labels.size();
  const int features = records.front().ehr.features;
  std::size_t cxr_features = 0;
  for (const auto& rec : records) {
    const std::string where = "patient '" + rec.patient_id + "': ";
    if (rec.labels.size() != n_labels)
      throw ValueError(where + "label count differs from the first record");
    if (rec.ehr.features != features)
      throw ValueError(where + "EHR feature count differs from the first record");
    if (rec.ehr.time_steps < 1) throw ValueError(where + "empty EHR series");
    if (rec.ehr.values.size() !=
            static_cast<std::size_t>(rec.ehr.time_steps) * rec.ehr.features ||
        rec.ehr.mask.size() != rec.ehr.values.size())
      throw ValueError(where + "EHR value/mask sizes disagree with dimensions");
    for (double v : rec.ehr.values)
      if (!std::isfinite(v)) throw ValueError(where + "non-finite EHR value");
    for (const auto& c : rec.cxrs) {
      if (c.time_hours < 0.0 || c.time_hours > window_hours)
        throw ValueError(where + "CXR time " + std::to_string(c.time_hours) +
                         "h outside [0," + std::to_string(window_hours) + "]");
      if (cxr_features == 0) cxr_features = c.features.size();
      if (c.features.size() != cxr_features)
        throw ValueError(where + "CXR feature count differs across images");
      for (double v : c.features)
        if (!std::isfinite(v)) throw ValueError(where + "non-finite CXR value");
    }
  }
}

// ---- spec JSON ----------------------------------------------------------------

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValueError(std::string("spec key '") + key + "' has the wrong type");
  }
}

}  // namespace

CohortSpec cohort_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValueError(std::string("invalid spec JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValueError("spec must be a JSON object");

  static const std::set<std::string> known{
      "format_version", "n_patients", "n_labels", "ehr_features", "cxr_features",
      "time_steps", "window_hours", "cxr_availability_rate", "cxr_count_mean",
      "cxr_count_min", "cxr_signal_placement", "label_blocks", "block_modality",
      "block_cooccurrence", "off_block_rate", "n_clusters", "cluster_strength",
      "ehr_latent_strength", "ehr_noise", "cxr_noise", "ehr_missing_rate",
      "sparse_stay_rate", "sparse_stay_observed", "seed"};
  for (const auto& item : j.items())
    if (!known.contains(item.key()))
      throw ValueError("unknown spec key '" + item.key() + "'");

  CohortSpec spec;
  read_key(j, "n_patients", spec.n_patients);
  read_key(j, "n_labels", spec.n_labels);
  read_key(j, "ehr_features", spec.ehr_features);
  read_key(j, "cxr_features", spec.cxr_features);
  read_key(j, "time_steps", spec.time_steps);
  read_key(j, "window_hours", spec.window_hours);
  read_key(j, "cxr_availability_rate", spec.cxr_availability_rate);
  read_key(j, "cxr_count_mean", spec.cxr_count_mean);
  read_key(j, "cxr_count_min", spec.cxr_count_min);
  read_key(j, "cxr_signal_placement", spec.cxr_signal_placement);
  read_key(j, "label_blocks", spec.label_blocks);
  read_key(j, "block_modality", spec.block_modality);
  read_key(j, "block_cooccurrence", spec.block_cooccurrence);
  read_key(j, "off_block_rate", spec.off_block_rate);
  read_key(j, "n_clusters", spec.n_clusters);
  read_key(j, "cluster_strength", spec.cluster_strength);
  read_key(j, "ehr_latent_strength", spec.ehr_latent_strength);
  read_key(j, "ehr_noise", spec.ehr_noise);
  read_key(j, "cxr_noise", spec.cxr_noise);
  read_key(j, "ehr_missing_rate", spec.ehr_missing_rate);
  read_key(j, "sparse_stay_rate", spec.sparse_stay_rate);
  read_key(j, "sparse_stay_observed", spec.sparse_stay_observed);
  read_key(j, "seed", spec.seed);
  spec.finalize();
  return spec;
}

std::string cohort_spec_to_json(const CohortSpec& spec) {
  json j{{"format_version", kFormatVersion},
         {"n_patients", spec.n_patients},
         {"n_labels", spec.n_labels},
         {"ehr_features", spec.ehr_features},
         {"cxr_features", spec.cxr_features},
         {"time_steps", spec.time_steps},
         {"window_hours", spec.window_hours},
         {"cxr_availability_rate", spec.cxr_availability_rate},
         {"cxr_count_mean", spec.cxr_count_mean},
         {"cxr_count_min", spec.cxr_count_min},
         {"cxr_signal_placement", spec.cxr_signal_placement},
         {"label_blocks", spec.label_blocks},
         {"block_modality", spec.block_modality},
         {"block_cooccurrence", spec.block_cooccurrence},
         {"off_block_rate", spec.off_block_rate},
         {"n_clusters", spec.n_clusters},
         {"cluster_strength", spec.cluster_strength},
         {"ehr_latent_strength", spec.ehr_latent_strength},
         {"ehr_noise", spec.ehr_noise},
         {"cxr_noise", spec.cxr_noise},
         {"ehr_missing_rate", spec.ehr_missing_rate},
         {"sparse_stay_rate", spec.sparse_stay_rate},
         {"sparse_stay_observed", spec.sparse_stay_observed},
         {"seed", spec.seed}};
  return j.dump(2);
}

}  // namespace hgdc
