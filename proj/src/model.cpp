#include "hgdc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hgdc/log.hpp"
#include "hgdc/pgraph.hpp"
#include "hgdc/rng.hpp"

namespace hgdc {

using nlohmann::json;

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "no-ehr-ehr") return Variant::no_ehr_ehr;
  if (name == "last-cxr-only") return Variant::last_cxr_only;
  if (name == "no-cga") return Variant::no_cga;
  throw ValueError("unknown variant '" + name +
                   "' (expected full|no-ehr-ehr|last-cxr-only|no-cga)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_ehr_ehr: return "no-ehr-ehr";
    case Variant::last_cxr_only: return "last-cxr-only";
    case Variant::no_cga: return "no-cga";
  }
  throw ValueError("unknown variant value");
}

// ---- parameters ---------------------------------------------------------------

namespace {

Tensor uniform_matrix(Shape shape, int fan_in, std::mt19937_64& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  if (dims.n_labels <= 0 || dims.ehr_features <= 0 || dims.cxr_features <= 0)
    throw ValueError("ModelParams::init: data dimensions must be positive");
  if (dims.embed_dim <= 0 || dims.heads <= 0 || dims.embed_dim % dims.heads != 0)
    throw ValueError("ModelParams::init: heads must divide embed_dim");

  auto rng = make_rng(seed, 7);
  const int d = dims.embed_dim;
  const int hd = d / dims.heads;
  const int hidden = dims.encoder_hidden;
  const int gcn_hidden = dims.resolved_gcn_hidden();
  const int n = dims.n_labels;

  ModelParams p;
  p.dims = dims;
  p.enc.ehr_w1 = uniform_matrix({hidden, 2 * dims.ehr_features},
                                2 * dims.ehr_features, rng);
  p.enc.ehr_b1 = Tensor::zeros({hidden}, true);
  p.enc.ehr_w2 = uniform_matrix({d, hidden}, hidden, rng);
  p.enc.ehr_b2 = Tensor::zeros({d}, true);
  p.enc.cxr_w1 = uniform_matrix({hidden, dims.cxr_features}, dims.cxr_features, rng);
  p.enc.cxr_b1 = Tensor::zeros({hidden}, true);
  p.enc.cxr_w2 = uniform_matrix({d, hidden}, hidden, rng);
  p.enc.cxr_b2 = Tensor::zeros({d}, true);
  for (int i = 0; i < dims.heads; ++i) {
    p.agg.head_proj.push_back(uniform_matrix({hd, d}, d, rng));
    p.agg.head_attn.push_back(uniform_matrix({2 * hd}, 2 * hd, rng));
  }
  p.agg.cxr_proj = uniform_matrix({d, d}, d, rng);
  p.gcn.w1 = uniform_matrix({n, gcn_hidden}, n, rng);
  p.gcn.w2 = uniform_matrix({gcn_hidden, d}, gcn_hidden, rng);
  p.fus.w_q = uniform_matrix({d, d}, d, rng);
  p.fus.w_k = uniform_matrix({d, d}, d, rng);
  p.fus.w_v = uniform_matrix({d, d}, d, rng);
  p.head_w = uniform_matrix({n, d}, d, rng);
  p.head_b = Tensor::zeros({n}, true);
  p.global_query = uniform_matrix({d}, 1, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"enc/ehr_w1", enc.ehr_w1}, {"enc/ehr_b1", enc.ehr_b1},
      {"enc/ehr_w2", enc.ehr_w2}, {"enc/ehr_b2", enc.ehr_b2},
      {"enc/cxr_w1", enc.cxr_w1}, {"enc/cxr_b1", enc.cxr_b1},
      {"enc/cxr_w2", enc.cxr_w2}, {"enc/cxr_b2", enc.cxr_b2}};
  for (std::size_t i = 0; i < agg.head_proj.size(); ++i) {
    out.emplace_back("agg/head_proj_" + std::to_string(i), agg.head_proj[i]);
    out.emplace_back("agg/head_attn_" + std::to_string(i), agg.head_attn[i]);
  }
  out.emplace_back("agg/cxr_proj", agg.cxr_proj);
  out.emplace_back("gcn/w1", gcn.w1);
  out.emplace_back("gcn/w2", gcn.w2);
  out.emplace_back("fus/w_q", fus.w_q);
  out.emplace_back("fus/w_k", fus.w_k);
  out.emplace_back("fus/w_v", fus.w_v);
  out.emplace_back("head_w", head_w);
  out.emplace_back("head_b", head_b);
  out.emplace_back("global_query", global_query);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.dims = dims;
  auto dup = [](const Tensor& t) {
    return Tensor::from(t.shape(), t.values(), true);
  };
  copy.enc = {dup(enc.ehr_w1), dup(enc.ehr_b1), dup(enc.ehr_w2), dup(enc.ehr_b2),
              dup(enc.cxr_w1), dup(enc.cxr_b1), dup(enc.cxr_w2), dup(enc.cxr_b2)};
  for (const auto& t : agg.head_proj) copy.agg.head_proj.push_back(dup(t));
  for (const auto& t : agg.head_attn) copy.agg.head_attn.push_back(dup(t));
  copy.agg.cxr_proj = dup(agg.cxr_proj);
  copy.gcn = {dup(gcn.w1), dup(gcn.w2)};
  copy.fus = {dup(fus.w_q), dup(fus.w_k), dup(fus.w_v)};
  copy.head_w = dup(head_w);
  copy.head_b = dup(head_b);
  copy.global_query = dup(global_query);
  return copy;
}

void ModelParams::zero_grad() const {
  for (auto& [name, t] : named_parameters()) {
    (void)name;
    const_cast<Tensor&>(t).zero_grad();
  }
}

// ---- forward --------------------------------------------------------------------

ForwardResult forward(const std::vector<PatientRecord>& batch,
                      const ModelParams& params, const Tensor& adjacency,
                      const ForwardOptions& opts) {
  if (batch.empty()) throw ValueError("forward: empty batch");
  const int n = params.dims.n_labels;
  if (adjacency.shape() != Shape{n, n})
    throw ShapeError("forward: adjacency shape " + shape_str(adjacency.shape()) +
                     " vs " + std::to_string(n) + " labels");
  const int b = static_cast<int>(batch.size());

  std::vector<Tensor> h_ehr;
  h_ehr.reserve(b);
  for (const auto& rec : batch) h_ehr.push_back(encode_ehr(rec.ehr, params.enc));

  const PGraph graph = build_pgraph(batch, h_ehr, opts.delta, opts.window_hours);

  // Disease prototypes are shared by every patient in the step.
  Tensor prototypes = gcn_forward(adjacency, Tensor::identity(n), params.gcn);

  ForwardResult result;
  result.alpha.reserve(static_cast<std::size_t>(b) * n * 3);
  result.flags.reserve(b);

  std::vector<Tensor> prob_rows;
  prob_rows.reserve(b);
  for (int s = 0; s < b; ++s) {
    // EHR-EHR message over the similar-patient neighborhood.
    EhrMessage ee{Tensor::zeros({params.dims.embed_dim}), false};
    if (opts.variant != Variant::no_ehr_ehr && !graph.neighbors[s].empty()) {
      std::vector<Tensor> neigh;
      neigh.reserve(graph.neighbors[s].size());
      for (int t : graph.neighbors[s]) neigh.push_back(h_ehr[t]);
      ee = aggregate_ehr_ehr(h_ehr[s], neigh, params.agg);
    }

    // CXR->EHR message; the last-cxr-only variant keeps the most recent
    // image (ties resolved toward the later index).
    std::vector<int> kept;
    if (!batch[s].cxrs.empty()) {
      if (opts.variant == Variant::last_cxr_only) {
        int best = 0;
        for (std::size_t k = 1; k < graph.cxr_delta_t[s].size(); ++k)
          if (graph.cxr_delta_t[s][k] >= graph.cxr_delta_t[s][best])
            best = static_cast<int>(k);
        kept.push_back(best);
      } else {
        kept.resize(batch[s].cxrs.size());
        std::iota(kept.begin(), kept.end(), 0);
      }
    }
    Tensor ec = Tensor::zeros({params.dims.embed_dim});
    bool has_cxr = !kept.empty();
    if (has_cxr) {
      std::vector<Tensor> imgs;
      std::vector<double> dts;
      for (int k : kept) {
        imgs.push_back(encode_cxr(batch[s].cxrs[k], params.enc));
        dts.push_back(graph.cxr_delta_t[s][k]);
      }
      ec = aggregate_cxr(imgs, temporal_weights(dts), params.agg);
    }

    const SourceFlags flags{ee.has_neighbors, has_cxr};
    SourceStack stack = stack_features(h_ehr[s], ee.value, ec, flags);

    Tensor fused_alpha;  // [N,3]
    Tensor logits;
    if (opts.variant == Variant::no_cga) {
      // Self-attention with one learned query shared across diseases.
      Attended att = cga_attend(stack, params.global_query, params.fus);
      logits = add(matvec(params.head_w, att.fused), params.head_b);
      std::vector<double> rep;
      rep.reserve(static_cast<std::size_t>(n) * 3);
      for (int i = 0; i < n; ++i)
        rep.insert(rep.end(), att.alpha.values().begin(), att.alpha.values().end());
      fused_alpha = Tensor::from({n, 3}, std::move(rep));
    } else {
      FusedAll fused = fuse_all_diseases(stack, prototypes, params.fus);
      logits = add(row_sums(mul(fused.fused, params.head_w)), params.head_b);
      fused_alpha = fused.alpha;
    }
    prob_rows.push_back(sigmoid(logits));
    result.alpha.insert(result.alpha.end(), fused_alpha.values().begin(),
                        fused_alpha.values().end());
    result.flags.push_back(flags);
  }
  result.probabilities = stack_rows(prob_rows);
  return result;
}

Tensor labels_tensor(const std::vector<PatientRecord>& batch) {
  if (batch.empty()) throw ValueError("labels_tensor: empty batch");
  const int n = static_cast<int>(batch.front().labels.size());
  std::vector<double> v;
  v.reserve(batch.size() * n);
  for (const auto& rec : batch) {
    if (static_cast<int>(rec.labels.size()) != n)
      throw ShapeError("labels_tensor: inconsistent label counts");
    for (auto y : rec.labels) v.push_back(static_cast<double>(y));
  }
  return Tensor::from({static_cast<int>(batch.size()), n}, std::move(v));
}

Tensor bce_loss(const Tensor& probabilities, const Tensor& labels) {
  if (probabilities.shape() != labels.shape())
    throw ShapeError("bce_loss: shapes disagree: " +
                     shape_str(probabilities.shape()) + " vs " +
                     shape_str(labels.shape()));
  const int rows = probabilities.shape()[0];
  Tensor p = clamp(probabilities, 1e-7, 1.0 - 1e-7);
  Tensor ones = Tensor::full(p.shape(), 1.0);
  Tensor ll = add(mul(labels, log(p)), mul(sub(ones, labels), log(sub(ones, p))));
  return scale(reduce_sum(ll), -1.0 / rows);
}

std::vector<PatientRecord> cxr_dropout(const std::vector<PatientRecord>& batch,
                                       double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValueError("cxr_dropout: rate must be in [0,1)");
  std::vector<PatientRecord> out = batch;
  std::vector<int> bearing;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!out[i].cxrs.empty()) bearing.push_back(static_cast<int>(i));
  const int strip = static_cast<int>(rate * bearing.size());
  if (strip == 0) return out;
  std::shuffle(bearing.begin(), bearing.end(), rng);
  for (int i = 0; i < strip; ++i) out[bearing[i]].cxrs.clear();
  return out;
}

// ---- optimizer -----------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.values().size(), 0.0);
    v_.emplace_back(p.values().size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& vals = params_[i].values();
    const std::vector<double>* g = params_[i].has_grad() ? &params_[i].grad() : nullptr;
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double gk = g ? (*g)[k] : 0.0;
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      vals[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---- config ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (learning_rate <= 0) throw ValueError("learning_rate must be positive");
  if (epochs < 1) throw ValueError("epochs must be >= 1");
  if (delta <= -1.0 || delta > 1.0) throw ValueError("delta must be in (-1,1]");
  if (tau < 0.0 || tau > 1.0) throw ValueError("tau must be in [0,1]");
  if (cxr_dropout_rate < 0.0 || cxr_dropout_rate >= 1.0)
    throw ValueError("cxr_dropout_rate must be in [0,1)");
  if (window_hours <= 0) throw ValueError("window_hours must be positive");
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
    throw ValueError("heads must divide embed_dim");
  if (encoder_hidden < 1) throw ValueError("encoder_hidden must be >= 1");
  if (gcn_hidden < 0) throw ValueError("gcn_hidden must be >= 0");
  if (patience < 1) throw ValueError("patience must be >= 1");
  if (train_frac <= 0 || train_frac > 1 || val_frac < 0 || val_frac > 1 ||
      train_frac + val_frac > 1.0 + 1e-12)
    throw ValueError("train_frac/val_frac must satisfy 0 < train, 0 <= val, train+val <= 1");
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValueError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValueError("config must be a JSON object");

  static const std::vector<std::string> known{
      "format_version", "batch_size",  "learning_rate",    "epochs",
      "delta",          "tau",         "cxr_dropout_rate", "seed",
      "window_hours",   "embed_dim",   "heads",            "encoder_hidden",
      "gcn_hidden",     "patience",    "train_frac",       "val_frac"};
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw ValueError("unknown config key '" + item.key() + "'");

  TrainConfig c;
  auto read = [&j](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const json::exception&) {
      throw ValueError(std::string("config key '") + key + "' has the wrong type");
    }
  };
  read("batch_size", c.batch_size);
  read("learning_rate", c.learning_rate);
  read("epochs", c.epochs);
  read("delta", c.delta);
  read("tau", c.tau);
  read("cxr_dropout_rate", c.cxr_dropout_rate);
  read("seed", c.seed);
  read("window_hours", c.window_hours);
  read("embed_dim", c.embed_dim);
  read("heads", c.heads);
  read("encoder_hidden", c.encoder_hidden);
  read("gcn_hidden", c.gcn_hidden);
  read("patience", c.patience);
  read("train_frac", c.train_frac);
  read("val_frac", c.val_frac);
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"format_version", 1},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"epochs", c.epochs},
         {"delta", c.delta},
         {"tau", c.tau},
         {"cxr_dropout_rate", c.cxr_dropout_rate},
         {"seed", c.seed},
         {"window_hours", c.window_hours},
         {"embed_dim", c.embed_dim},
         {"heads", c.heads},
         {"encoder_hidden", c.encoder_hidden},
         {"gcn_hidden", c.gcn_hidden},
         {"patience", c.patience},
         {"train_frac", c.train_frac},
         {"val_frac", c.val_frac}};
  return j.dump(2);
}

std::uint64_t config_hash(const TrainConfig& config) {
  // FNV-1a over the canonical JSON rendering (nlohmann sorts keys).
  const std::string text = train_config_to_json(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- training --------------------------------------------------------------------

Split split_dataset(std::size_t n, double train_frac, double val_frac,
                    std::uint64_t seed) {
  if (n == 0) throw ValueError("split_dataset: empty dataset");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed, 77);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(train_frac * n);
  const auto n_val = static_cast<std::size_t>(val_frac * n);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  if (s.train.empty()) throw ValueError("split_dataset: empty training split");
  return s;
}

namespace {

std::vector<PatientRecord> take(const std::vector<PatientRecord>& records,
                                const std::vector<int>& idx) {
  std::vector<PatientRecord> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(records[i]);
  return out;
}

std::vector<std::uint8_t> flat_labels(const std::vector<PatientRecord>& records) {
  std::vector<std::uint8_t> out;
  for (const auto& rec : records)
    out.insert(out.end(), rec.labels.begin(), rec.labels.end());
  return out;
}

}  // namespace

EvalOutput predict(const std::vector<PatientRecord>& records,
                   const ModelParams& params, const Tensor& adjacency,
                   const ForwardOptions& opts, int batch_size) {
  if (batch_size < 1) throw ValueError("predict: batch_size must be >= 1");
  EvalOutput out;
  for (std::size_t start = 0; start < records.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop =
        std::min(records.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<PatientRecord> batch(records.begin() + start, records.begin() + stop);
    ForwardResult fwd = forward(batch, params, adjacency, opts);
    out.probabilities.insert(out.probabilities.end(),
                             fwd.probabilities.values().begin(),
                             fwd.probabilities.values().end());
    out.alpha.insert(out.alpha.end(), fwd.alpha.begin(), fwd.alpha.end());
    out.flags.insert(out.flags.end(), fwd.flags.begin(), fwd.flags.end());
  }
  return out;
}

TrainResult train(const std::vector<PatientRecord>& dataset,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ValueError("train: empty dataset");
  validate_cohort(dataset, config.window_hours);

  const int n_labels = static_cast<int>(dataset.front().labels.size());
  int cxr_features = 0;
  for (const auto& rec : dataset)
    if (!rec.cxrs.empty()) {
      cxr_features = static_cast<int>(rec.cxrs.front().features.size());
      break;
    }
  if (cxr_features == 0) cxr_features = 1;  // cohort without any CXR at all

  TrainResult result;
  result.split = split_dataset(dataset.size(), config.train_frac, config.val_frac,
                               config.seed);
  const auto train_records = take(dataset, result.split.train);
  const auto val_records = result.split.val.empty()
                               ? train_records
                               : take(dataset, result.split.val);

  {
    std::vector<std::vector<std::uint8_t>> label_rows;
    label_rows.reserve(train_records.size());
    for (const auto& rec : train_records) label_rows.push_back(rec.labels);
    result.corr = DiseaseCorrelation::from_labels(label_rows, config.tau);
  }
  Tensor adjacency = result.corr.adjacency_tensor();

  ModelDims dims;
  dims.embed_dim = config.embed_dim;
  dims.heads = config.heads;
  dims.encoder_hidden = config.encoder_hidden;
  dims.gcn_hidden = config.gcn_hidden;
  dims.n_labels = n_labels;
  dims.ehr_features = dataset.front().ehr.features;
  dims.cxr_features = cxr_features;
  ModelParams params = ModelParams::init(dims, config.seed);

  std::vector<Tensor> opt_params;
  for (auto& [name, t] : params.named_parameters()) {
    (void)name;
    opt_params.push_back(t);
  }
  Adam opt(opt_params, config.learning_rate);

  const ForwardOptions opts{config.delta, config.window_hours, config.variant};
  auto shuffle_rng = make_rng(config.seed, 99);
  auto dropout_rng = make_rng(config.seed, 101);

  ModelParams best = params.clone();
  int stale = 0;
  std::vector<int> order(train_records.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<PatientRecord> batch;
      batch.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k)
        batch.push_back(train_records[order[k]]);
      if (config.cxr_dropout_rate > 0.0)
        batch = cxr_dropout(batch, config.cxr_dropout_rate, dropout_rng);

      ForwardResult fwd = forward(batch, params, adjacency, opts);
      // The clamp in the loss can mask a NaN probability, so check both.
      bool finite = true;
      for (double p : fwd.probabilities.values())
        finite = finite && std::isfinite(p);
      Tensor loss = bce_loss(fwd.probabilities, labels_tensor(batch));
      const double loss_value = loss.value();
      if (!finite || !std::isfinite(loss_value))
        throw ValueError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch) +
                         "; try a lower learning_rate");
      backward(loss);
      opt.step();
      opt.zero_grad();
      loss_sum += loss_value * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EvalOutput val =
        predict(val_records, params, adjacency, opts, config.batch_size);
    for (double p : val.probabilities)
      if (!std::isfinite(p))
        throw ValueError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch) +
                         "; try a lower learning_rate");
    const PraucReport report =
        macro_prauc(val.probabilities, flat_labels(val_records), n_labels);
    const double train_loss = loss_sum / static_cast<double>(seen);
    result.history.push_back({epoch, train_loss, report.macro});
    info("epoch " + std::to_string(epoch) + ": loss " + std::to_string(train_loss) +
         ", val macro-PRAUC " + std::to_string(report.macro));

    if (result.best_epoch < 0 || report.macro > result.best_val) {
      result.best_val = report.macro;
      result.best_epoch = epoch;
      best = params.clone();
      stale = 0;
    } else if (++stale >= config.patience) {
      info("early stop at epoch " + std::to_string(epoch) + " (best epoch " +
           std::to_string(result.best_epoch) + ")");
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

AblateResult ablate(Variant variant, const std::vector<PatientRecord>& dataset,
                    const TrainConfig& config) {
  TrainConfig ablated = config;
  ablated.variant = variant;
  AblateResult out{train(dataset, ablated), {}};
  const auto test_records = take(dataset, out.training.split.test);
  if (test_records.empty())
    throw ValueError("ablate: empty test split; adjust train_frac/val_frac");
  const ForwardOptions opts{ablated.delta, ablated.window_hours, ablated.variant};
  EvalOutput test = predict(test_records, out.training.params,
                            out.training.corr.adjacency_tensor(), opts,
                            ablated.batch_size);
  out.test_report = macro_prauc(test.probabilities, flat_labels(test_records),
                                out.training.params.dims.n_labels);
  return out;
}

}  // namespace hgdc
