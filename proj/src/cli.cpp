#include "hgdc/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "hgdc/checkpoint.hpp"
#include "hgdc/cohort.hpp"
#include "hgdc/eval.hpp"
#include "hgdc/log.hpp"
#include "hgdc/model.hpp"

namespace hgdc {

namespace {

namespace fs = std::filesystem;

/// Configuration/spec problems exit with code 2, runtime failures with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ValueError("write to '" + path + "' failed");
}

std::string matrix_csv(const std::vector<double>& m, int n) {
  std::ostringstream os;
  char buf[64];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof buf, "%.10g", m[static_cast<std::size_t>(i) * n + j]);
      os << buf << (j + 1 < n ? "," : "\n");
    }
  }
  return os.str();
}

std::vector<std::string> label_names(int n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (int i = 0; i < n; ++i) names.push_back("label_" + std::to_string(i));
  return names;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_macro_prauc\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%d,%.8f,%.6f\n", e.epoch, e.train_loss,
                  e.val_macro_prauc);
    os << buf;
  }
  return os.str();
}

std::string alpha_csv(const std::vector<PatientRecord>& records,
                      const EvalOutput& output, int n_labels) {
  std::ostringstream os;
  os << "patient_id,label,alpha_ehr,alpha_ee,alpha_cxr\n";
  char buf[128];
  for (std::size_t p = 0; p < records.size(); ++p)
    for (int l = 0; l < n_labels; ++l) {
      const std::size_t off = (p * n_labels + l) * 3;
      std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f\n",
                    records[p].patient_id.c_str(), l, output.alpha[off],
                    output.alpha[off + 1], output.alpha[off + 2]);
      os << buf;
    }
  return os.str();
}

/// Loads per-disease scores from a previously written report (for the
/// delta-vs-baseline column).
std::vector<double> baseline_scores(const std::string& path, int n_labels) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open baseline report '" + path + "'");
  std::vector<double> scores(n_labels, std::nan(""));
  std::string line;
  std::getline(in, line);  // header
  int row = 0;
  while (std::getline(in, line) && row < n_labels) {
    const auto c1 = line.find(',');
    if (c1 == std::string::npos) continue;
    const auto c2 = line.find(',', c1 + 1);
    const std::string field = line.substr(c1 + 1, c2 - c1 - 1);
    if (field != "undefined" && !field.empty()) scores[row] = std::stod(field);
    ++row;
  }
  if (row != n_labels)
    throw ValueError("baseline report '" + path + "' has " + std::to_string(row) +
                     " rows, expected " + std::to_string(n_labels));
  return scores;
}

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

TrainConfig load_train_config(const std::string& path, const GlobalFlags& g) {
  TrainConfig config;
  if (!path.empty()) {
    try {
      config = train_config_from_json(read_file(path));
    } catch (const ValueError& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  if (g.seed) config.seed = *g.seed;
  return config;
}

int cmd_gen_data(const std::string& spec_path, const std::string& preset,
                 const std::string& out_path, const std::string& emit_spec,
                 const GlobalFlags& g) {
  CohortSpec spec;
  try {
    if (!preset.empty()) {
      if (preset == "fusion")
        spec = fusion_cohort_spec();
      else if (preset == "temporal")
        spec = temporal_cohort_spec();
      else if (preset == "tiny")
        spec = tiny_cohort_spec();
      else
        throw UsageError("unknown preset '" + preset + "'");
    } else if (!spec_path.empty()) {
      spec = cohort_spec_from_json(read_file(spec_path));
    } else {
      throw UsageError("gen-data needs --spec or --preset");
    }
  } catch (const ValueError& e) {
    throw UsageError(std::string("spec: ") + e.what());
  }
  if (g.seed) spec.seed = *g.seed;
  if (!emit_spec.empty()) write_file(emit_spec, cohort_spec_to_json(spec) + "\n");
  const auto records = generate_cohort(spec);
  save_cohort(records, out_path);
  info("wrote " + std::to_string(records.size()) + " records to " + out_path);
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_dir, const GlobalFlags& g) {
  const TrainConfig config = load_train_config(config_path, g);
  const auto records = load_cohort(data_path);
  const TrainResult result = train(records, config);

  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / "model.ckpt").string();
  CheckpointMeta meta;
  meta.config_hash = config_hash(config);
  meta.dims = result.params.dims;
  meta.variant = config.variant;
  meta.delta = config.delta;
  meta.tau = config.tau;
  meta.window_hours = config.window_hours;
  save_checkpoint(ckpt_path, result.params, result.corr.adjacency, meta);
  write_file((fs::path(out_dir) / "history.csv").string(), history_csv(result.history));
  info("best epoch " + std::to_string(result.best_epoch) + " (val macro-PRAUC " +
       std::to_string(result.best_val) + "); checkpoint at " + ckpt_path);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& report_path, const std::string& alpha_path,
             const std::string& baseline_path, double floor) {
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const auto records = load_cohort(data_path);
  validate_cohort(records, ckpt.meta.window_hours);

  const ForwardOptions opts{ckpt.meta.delta, ckpt.meta.window_hours,
                            ckpt.meta.variant};
  const EvalOutput output =
      predict(records, ckpt.params, ckpt.adjacency_tensor(), opts, 64);

  std::vector<std::uint8_t> labels;
  for (const auto& rec : records)
    labels.insert(labels.end(), rec.labels.begin(), rec.labels.end());
  const int n = ckpt.params.dims.n_labels;
  const PraucReport report = macro_prauc(output.probabilities, labels, n);

  std::vector<double> baseline;
  if (!baseline_path.empty()) baseline = baseline_scores(baseline_path, n);
  write_file(report_path,
             per_disease_report(report, label_names(n),
                                baseline.empty() ? nullptr : &baseline));
  if (!alpha_path.empty()) write_file(alpha_path, alpha_csv(records, output, n));
  for (int u : report.undefined_labels)
    warn("label " + std::to_string(u) + " has no positives; excluded from macro");
  info("macro-PRAUC " + std::to_string(report.macro) + " over " +
       std::to_string(records.size()) + " records");
  if (report.macro < floor) {
    std::cerr << "macro-PRAUC " << report.macro << " below required floor " << floor
              << "\n";
    return 1;
  }
  return 0;
}

int cmd_ablate(const std::string& variant_name, const std::string& data_path,
               const std::string& config_path, const std::string& out_dir,
               const std::string& report_path, const GlobalFlags& g) {
  Variant variant = Variant::full;
  try {
    variant = variant_from_string(variant_name);
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  const TrainConfig config = load_train_config(config_path, g);
  const auto records = load_cohort(data_path);
  const AblateResult result = ablate(variant, records, config);

  const int n = result.training.params.dims.n_labels;
  if (!report_path.empty())
    write_file(report_path, per_disease_report(result.test_report, label_names(n)));
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    CheckpointMeta meta;
    TrainConfig stamped = config;
    stamped.variant = variant;
    meta.config_hash = config_hash(stamped);
    meta.dims = result.training.params.dims;
    meta.variant = variant;
    meta.delta = config.delta;
    meta.tau = config.tau;
    meta.window_hours = config.window_hours;
    save_checkpoint((fs::path(out_dir) / "model.ckpt").string(),
                    result.training.params, result.training.corr.adjacency, meta);
    write_file((fs::path(out_dir) / "history.csv").string(),
               history_csv(result.training.history));
  }
  info(variant_name + " test macro-PRAUC " + std::to_string(result.test_report.macro));
  return 0;
}

int cmd_dump_corr(const std::string& data_path, double tau, const std::string& out_a,
                  const std::string& out_bin, const std::string& out_hat) {
  const auto records = load_cohort(data_path);
  if (records.empty()) throw ValueError("cohort is empty");
  std::vector<std::vector<std::uint8_t>> labels;
  labels.reserve(records.size());
  for (const auto& rec : records) labels.push_back(rec.labels);
  DiseaseCorrelation corr;
  try {
    corr = DiseaseCorrelation::from_labels(labels, tau);
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  write_file(out_a, matrix_csv(corr.conditional, corr.n_labels));
  if (!out_bin.empty()) write_file(out_bin, matrix_csv(corr.binarized, corr.n_labels));
  if (!out_hat.empty()) write_file(out_hat, matrix_csv(corr.adjacency, corr.n_labels));
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"HGDC-Fuse: heterogeneous-graph multi-modal disease prediction"};
  app.require_subcommand(1);
  app.fallthrough();  // --seed/--quiet are accepted after the subcommand too

  GlobalFlags g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override every configured seed");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  std::string spec_path, preset, gen_out, emit_spec;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic cohort");
  gen->add_option("--spec", spec_path, "cohort spec JSON");
  gen->add_option("--preset", preset, "canned spec: fusion|temporal|tiny");
  gen->add_option("--out", gen_out, "output cohort JSONL")->required();
  gen->add_option("--emit-spec", emit_spec, "also write the effective spec JSON");

  std::string train_data, train_config, train_out;
  auto* tr = app.add_subcommand("train", "train the full model");
  tr->add_option("--data", train_data, "cohort JSONL")->required();
  tr->add_option("--config", train_config, "training config JSON");
  tr->add_option("--out", train_out, "output directory")->required();

  std::string eval_ckpt, eval_data, eval_report, eval_alpha, eval_baseline;
  double eval_floor = -1.0;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--data", eval_data, "cohort JSONL")->required();
  ev->add_option("--report", eval_report, "output report CSV")->required();
  ev->add_option("--alpha-dump", eval_alpha, "write per-patient attention CSV");
  ev->add_option("--baseline", eval_baseline, "report CSV for the delta column");
  ev->add_option("--floor", eval_floor, "fail when macro-PRAUC is below this");

  std::string ab_variant, ab_data, ab_config, ab_out, ab_report;
  auto* ab = app.add_subcommand("ablate", "train and score an ablation variant");
  ab->add_option("--variant", ab_variant, "no-ehr-ehr|last-cxr-only|no-cga")->required();
  ab->add_option("--data", ab_data, "cohort JSONL")->required();
  ab->add_option("--config", ab_config, "training config JSON");
  ab->add_option("--out", ab_out, "checkpoint output directory");
  ab->add_option("--report", ab_report, "test-split report CSV");

  std::string corr_data, corr_a, corr_bin, corr_hat;
  double corr_tau = 0.4;
  auto* dc = app.add_subcommand("dump-corr", "dump disease correlation matrices");
  dc->add_option("--data", corr_data, "cohort JSONL")->required();
  dc->add_option("--tau", corr_tau, "binarization threshold");
  dc->add_option("--out", corr_a, "conditional matrix CSV")->required();
  dc->add_option("--out-bin", corr_bin, "binarized matrix CSV");
  dc->add_option("--out-hat", corr_hat, "normalized adjacency CSV");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("hgdc");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  set_quiet(g.quiet);
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, preset, gen_out, emit_spec, g);
    if (tr->parsed()) return cmd_train(train_data, train_config, train_out, g);
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_report, eval_alpha, eval_baseline,
                      eval_floor);
    if (ab->parsed())
      return cmd_ablate(ab_variant, ab_data, ab_config, ab_out, ab_report, g);
    if (dc->parsed()) return cmd_dump_corr(corr_data, corr_tau, corr_a, corr_bin, corr_hat);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hgdc
