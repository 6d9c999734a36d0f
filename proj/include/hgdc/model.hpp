#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hgdc/aggregation.hpp"
#include "hgdc/cohort.hpp"
#include "hgdc/disease_corr.hpp"
#include "hgdc/encoders.hpp"
#include "hgdc/eval.hpp"
#include "hgdc/fusion.hpp"
#include "hgdc/tensor.hpp"

namespace hgdc {

enum class Variant { full, no_ehr_ehr, last_cxr_only, no_cga };

Variant variant_from_string(const std::string& name);
std::string variant_to_string(Variant v);

struct ModelDims {
  int embed_dim = 64;
  int heads = 4;
  int encoder_hidden = 128;
  int gcn_hidden = 0;  // 0 -> 2 * n_labels
  int n_labels = 0;
  int ehr_features = 0;
  int cxr_features = 0;

  int resolved_gcn_hidden() const {
    return gcn_hidden > 0 ? gcn_hidden : 2 * n_labels;
  }
};

struct ModelParams {
  ModelDims dims;
  EncoderParams enc;
  AggParams agg;
  GcnParams gcn;
  FusionParams fus;
  Tensor head_w;        // [N, d] per-disease readout weights
  Tensor head_b;        // [N]
  Tensor global_query;  // [d]; exercised only by the no-cga variant

  /// Fan-in-scaled uniform init for matrices, zero biases; reproducible.
  static ModelParams init(const ModelDims& dims, std::uint64_t seed);

  /// Stable name -> tensor listing (checkpoint and optimizer order).
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  ModelParams clone() const;  // deep value copy with fresh leaves
  void zero_grad() const;
};

struct ForwardOptions {
  double delta = 0.6;
  double window_hours = 48.0;
  Variant variant = Variant::full;
};

struct ForwardResult {
  Tensor probabilities;            // [B, N], on tape
  std::vector<double> alpha;       // B x N x 3 attention weights, detached
  std::vector<SourceFlags> flags;  // per patient, post-variant
};

/// Full pipeline for one batch: encoders -> P-Graph -> type-specific
/// aggregation -> disease prototypes -> correlation-guided fusion ->
/// per-disease heads.
ForwardResult forward(const std::vector<PatientRecord>& batch,
                      const ModelParams& params, const Tensor& adjacency,
                      const ForwardOptions& opts);

Tensor labels_tensor(const std::vector<PatientRecord>& batch);

/// Binary cross-entropy, summed over diseases and averaged over the batch;
/// probabilities are clamped to [1e-7, 1-1e-7].
Tensor bce_loss(const Tensor& probabilities, const Tensor& labels);

/// Training-time augmentation: of the patients that have at least one CXR,
/// a floor(rate * count)-sized uniformly random subset loses all of them.
std::vector<PatientRecord> cxr_dropout(const std::vector<PatientRecord>& batch,
                                       double rate, std::mt19937_64& rng);

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();       // a parameter without a gradient counts as zero grad
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int epochs = 50;
  double delta = 0.6;
  double tau = 0.4;
  double cxr_dropout_rate = 0.3;
  std::uint64_t seed = 1;
  double window_hours = 48.0;
  int embed_dim = 64;
  int heads = 4;
  int encoder_hidden = 128;
  int gcn_hidden = 0;
  int patience = 10;
  double train_frac = 0.7;
  double val_frac = 0.1;
  Variant variant = Variant::full;

  void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);
std::uint64_t config_hash(const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_prauc = 0.0;
};

struct Split {
  std::vector<int> train, val, test;
};

Split split_dataset(std::size_t n, double train_frac, double val_frac,
                    std::uint64_t seed);

struct TrainResult {
  ModelParams params;  // best-validation checkpoint
  DiseaseCorrelation corr;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val = 0.0;
  Split split;
};

/// Deterministic training: split, correlation statistics on the training
/// split, Adam with constant learning rate, early stopping on validation
/// macro-PRAUC. An empty validation split scores the training split instead.
TrainResult train(const std::vector<PatientRecord>& dataset,
                  const TrainConfig& config);

struct EvalOutput {
  std::vector<double> probabilities;  // row-major B x N
  std::vector<double> alpha;          // B x N x 3
  std::vector<SourceFlags> flags;
};

/// Batched inference without augmentation; batch composition follows record
/// order, so similar-patient neighborhoods are recomputed per eval batch.
EvalOutput predict(const std::vector<PatientRecord>& records,
                   const ModelParams& params, const Tensor& adjacency,
                   const ForwardOptions& opts, int batch_size);

struct AblateResult {
  TrainResult training;
  PraucReport test_report;
};

AblateResult ablate(Variant variant, const std::vector<PatientRecord>& dataset,
                    const TrainConfig& config);

}  // namespace hgdc
