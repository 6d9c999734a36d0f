#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "hgdc/checkpoint.hpp"
#include "hgdc/model.hpp"
#include "hgdc/pgraph.hpp"

using namespace hgdc;
using hgdc::testing::grad_check;

namespace {

CohortSpec unit_spec(int n_patients = 12, std::uint64_t seed = 5) {
  CohortSpec spec;
  spec.n_patients = n_patients;
  spec.n_labels = 3;
  spec.ehr_features = 3;
  spec.cxr_features = 3;
  spec.time_steps = 3;
  spec.n_clusters = 2;
  spec.label_blocks = {{0, 1}, {2}};
  spec.block_modality = {"ehr", "cxr"};
  spec.seed = seed;
  return spec;
}

TrainConfig unit_config() {
  TrainConfig config;
  config.batch_size = 6;
  config.epochs = 2;
  config.embed_dim = 8;
  config.heads = 2;
  config.encoder_hidden = 8;
  config.seed = 13;
  return config;
}

ModelParams small_params(int n_labels, int ehr_features, int cxr_features,
                         std::uint64_t seed, int d = 8) {
  ModelDims dims;
  dims.embed_dim = d;
  dims.heads = 2;
  dims.encoder_hidden = 6;
  dims.n_labels = n_labels;
  dims.ehr_features = ehr_features;
  dims.cxr_features = cxr_features;
  return ModelParams::init(dims, seed);
}

Tensor uniform_adjacency(int n) {
  return Tensor::from({n, n}, std::vector<double>(static_cast<std::size_t>(n) * n,
                                                  1.0 / n));
}

}  // namespace

TEST_CASE("zeroed heads predict 0.5 everywhere") {
  const auto records = generate_cohort(unit_spec());
  ModelParams p = small_params(3, 3, 3, 1);
  for (auto& v : p.head_w.values()) v = 0.0;
  for (auto& v : p.head_b.values()) v = 0.0;
  const ForwardResult fwd = forward(records, p, uniform_adjacency(3), {});
  for (double v : fwd.probabilities.values()) CHECK(v == 0.5);
}

TEST_CASE("forward is deterministic") {
  const auto records = generate_cohort(unit_spec());
  ModelParams p = small_params(3, 3, 3, 2);
  const Tensor adj = uniform_adjacency(3);
  const ForwardResult a = forward(records, p, adj, {});
  const ForwardResult b = forward(records, p, adj, {});
  CHECK(a.probabilities.values() == b.probabilities.values());
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("forward matches the composition of the module pipeline") {
  // B=2, N=2, d=4: rebuild the pipeline step by step from the module-level
  // calls (each of which has its own scalar oracle) and compare.
  CohortSpec spec = unit_spec(2, 17);
  spec.n_labels = 2;
  spec.label_blocks = {{0}, {1}};
  spec.block_modality = {"ehr", "cxr"};
  spec.cxr_availability_rate = 1.0;
  auto records = generate_cohort(spec);
  ModelParams p = small_params(2, 3, 3, 3, 4);
  const Tensor adj = uniform_adjacency(2);
  const ForwardOptions opts{-0.99, 48.0, Variant::full};  // force an edge
  const ForwardResult fwd = forward(records, p, adj, opts);

  const Tensor prototypes = gcn_forward(adj, Tensor::identity(2), p.gcn);
  std::vector<Tensor> h{encode_ehr(records[0].ehr, p.enc),
                        encode_ehr(records[1].ehr, p.enc)};
  const PGraph graph = build_pgraph(records, h, opts.delta, opts.window_hours);
  for (int s = 0; s < 2; ++s) {
    REQUIRE(graph.neighbors[s].size() == 1);
    const EhrMessage ee = aggregate_ehr_ehr(h[s], {h[1 - s]}, p.agg);
    std::vector<Tensor> imgs;
    std::vector<double> dts;
    for (std::size_t k = 0; k < records[s].cxrs.size(); ++k) {
      imgs.push_back(encode_cxr(records[s].cxrs[k], p.enc));
      dts.push_back(delta_t(records[s].cxrs[k], opts.window_hours));
    }
    const Tensor ec = aggregate_cxr(imgs, temporal_weights(dts), p.agg);
    const SourceStack stack = stack_features(h[s], ee.value, ec, {true, true});
    const FusedAll fused = fuse_all_diseases(stack, prototypes, p.fus);
    const Tensor logits =
        add(row_sums(mul(fused.fused, p.head_w)), p.head_b);
    const Tensor probs = sigmoid(logits);
    for (int n = 0; n < 2; ++n) {
      CHECK(fwd.probabilities.at(s, n) ==
            doctest::Approx(probs.at(n)).epsilon(1e-12));
      for (int k = 0; k < 3; ++k)
        CHECK(fwd.alpha[(s * 2 + n) * 3 + k] ==
              doctest::Approx(fused.alpha.at(n, k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bce loss closed forms and logit gradient identity") {
  // exact prediction: loss bounded by the clamp epsilon
  Tensor exact = bce_loss(Tensor::from({1, 2}, {1.0, 0.0}),
                          Tensor::from({1, 2}, {1.0, 0.0}));
  CHECK(exact.value() >= 0.0);
  CHECK(exact.value() <= 2e-7 * 2);

  Tensor loss = bce_loss(Tensor::from({1, 2}, {0.5, 0.5}),
                         Tensor::from({1, 2}, {1.0, 0.0}));
  CHECK(loss.value() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // d(loss)/d(logit) = (sigmoid(logit) - y) for the summed-per-row loss
  Tensor logits = Tensor::from({1, 3}, {0.3, -1.2, 2.0}, true);
  Tensor labels = Tensor::from({1, 3}, {1.0, 0.0, 1.0});
  backward(bce_loss(sigmoid(logits), labels));
  const std::vector<double> g = logits.grad();
  const std::vector<double> y{1.0, 0.0, 1.0};
  for (int i = 0; i < 3; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.values()[i]));
    CHECK(g[i] == doctest::Approx(p - y[i]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(bce_loss(Tensor::zeros({1, 2}), Tensor::zeros({2, 1})), ShapeError);
}

TEST_CASE("cxr dropout strips whole patients at the configured rate") {
  CohortSpec spec = unit_spec(40, 9);
  spec.cxr_availability_rate = 1.0;
  const auto records = generate_cohort(spec);
  auto rng = make_rng(17);

  const auto unchanged = cxr_dropout(records, 0.0, rng);
  for (std::size_t i = 0; i < records.size(); ++i)
    CHECK(unchanged[i].cxrs.size() == records[i].cxrs.size());

  std::vector<PatientRecord> ten(records.begin(), records.begin() + 10);
  const auto dropped = cxr_dropout(ten, 0.3, rng);
  int stripped = 0;
  for (const auto& rec : dropped) stripped += rec.cxrs.empty() ? 1 : 0;
  CHECK(stripped == 3);  // floor(0.3 * 10)

  // stripped patients propagate to a masked CXR row
  ModelParams p = small_params(3, 3, 3, 4);
  const ForwardResult fwd = forward(dropped, p, uniform_adjacency(3), {});
  for (std::size_t s = 0; s < dropped.size(); ++s) {
    CHECK(fwd.flags[s].has_cxr == !dropped[s].cxrs.empty());
    const double alpha3 = fwd.alpha[(s * 3 + 0) * 3 + 2];
    if (dropped[s].cxrs.empty())
      CHECK(alpha3 == 0.0);
    else
      CHECK(alpha3 > 0.0);
  }
}

TEST_CASE("delta = 1 isolates patients from the rest of the batch") {
  const auto records = generate_cohort(unit_spec(5, 21));
  ModelParams p = small_params(3, 3, 3, 5);
  const Tensor adj = uniform_adjacency(3);
  const ForwardOptions opts{1.0, 48.0, Variant::full};
  const ForwardResult full_batch = forward(records, p, adj, opts);
  for (std::size_t s = 0; s < records.size(); ++s) {
    const ForwardResult solo = forward({records[s]}, p, adj, opts);
    for (int n = 0; n < 3; ++n)
      CHECK(solo.probabilities.at(0, n) == full_batch.probabilities.at(s, n));
  }
}

TEST_CASE("0-CXR patients leave the CXR projection untouched") {
  CohortSpec spec = unit_spec(6, 23);
  spec.cxr_availability_rate = 0.0;
  const auto records = generate_cohort(spec);
  ModelParams p = small_params(3, 3, 3, 6);
  const ForwardResult fwd = forward(records, p, uniform_adjacency(3), {});
  backward(bce_loss(fwd.probabilities, labels_tensor(records)));
  CHECK_FALSE(p.agg.cxr_proj.has_grad());
  CHECK(p.enc.ehr_w1.has_grad());  // the rest of the model does train
}

TEST_CASE("full model gradients match finite differences") {
  CohortSpec spec = unit_spec(2, 27);
  spec.cxr_availability_rate = 1.0;
  const auto records = generate_cohort(spec);
  ModelParams p = small_params(3, 3, 3, 7, 4);
  const Tensor adj = uniform_adjacency(3);
  const ForwardOptions opts{-0.99, 48.0, Variant::full};
  const Tensor labels = labels_tensor(records);

  std::vector<Tensor> leaves;
  for (auto& [name, t] : p.named_parameters()) {
    (void)name;
    leaves.push_back(t);
  }
  auto rep = grad_check(
      [&] { return bce_loss(forward(records, p, adj, opts).probabilities, labels); },
      leaves, 1e-5, 1e-3);
  INFO(rep.worst);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("ablations reduce to the full model in degenerate settings") {
  CohortSpec spec = unit_spec(4, 31);
  spec.cxr_count_mean = 1.0;  // exactly one image per bearing patient
  const auto records = generate_cohort(spec);
  ModelParams p = small_params(3, 3, 3, 8);
  const Tensor adj = uniform_adjacency(3);

  // batch of one: no neighbors exist either way
  const ForwardResult base =
      forward({records[0]}, p, adj, {0.6, 48.0, Variant::full});
  const ForwardResult no_ee =
      forward({records[0]}, p, adj, {0.6, 48.0, Variant::no_ehr_ehr});
  CHECK(base.probabilities.values() == no_ee.probabilities.values());

  // K = 1 everywhere: keeping only the latest image changes nothing
  const ForwardResult full = forward(records, p, adj, {0.6, 48.0, Variant::full});
  const ForwardResult last =
      forward(records, p, adj, {0.6, 48.0, Variant::last_cxr_only});
  CHECK(full.probabilities.values() == last.probabilities.values());
}

TEST_CASE("no-cga uses one attention distribution for every disease") {
  const auto records = generate_cohort(unit_spec(3, 37));
  ModelParams p = small_params(3, 3, 3, 9);
  const ForwardResult fwd =
      forward(records, p, uniform_adjacency(3), {0.6, 48.0, Variant::no_cga});
  for (std::size_t s = 0; s < records.size(); ++s)
    for (int n = 1; n < 3; ++n)
      for (int k = 0; k < 3; ++k)
        CHECK(fwd.alpha[(s * 3 + n) * 3 + k] == fwd.alpha[(s * 3 + 0) * 3 + k]);
}

TEST_CASE("train smoke: one epoch on a tiny cohort") {
  const auto records = generate_cohort(unit_spec(8, 41));
  TrainConfig config = unit_config();
  config.epochs = 1;
  config.train_frac = 0.8;
  config.val_frac = 0.2;
  const TrainResult result = train(records, config);
  REQUIRE(result.history.size() == 1);
  CHECK(std::isfinite(result.history[0].train_loss));
  CHECK(result.best_epoch == 1);
}

TEST_CASE("training is deterministic given the seed") {
  const auto records = generate_cohort(unit_spec(12, 43));
  const TrainConfig config = unit_config();
  const TrainResult a = train(records, config);
  const TrainResult b = train(records, config);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_macro_prauc == b.history[i].val_macro_prauc);
  }
  const auto pa = a.params.named_parameters();
  const auto pb = b.params.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].second.values() == pb[i].second.values());
}

TEST_CASE("memorization loss decreases over 50 epochs") {
  auto spec = tiny_cohort_spec();
  const auto records = generate_cohort(spec);
  TrainConfig config;
  config.batch_size = 8;
  config.learning_rate = 3e-3;
  config.epochs = 50;
  config.embed_dim = 16;
  config.heads = 2;
  config.encoder_hidden = 16;
  config.train_frac = 1.0;
  config.val_frac = 0.0;
  config.patience = 1000;
  config.cxr_dropout_rate = 0.0;
  config.seed = 3;
  const TrainResult result = train(records, config);
  REQUIRE(result.history.size() == 50);
  int increases = 0;
  for (std::size_t i = 1; i < result.history.size(); ++i)
    if (result.history[i].train_loss > result.history[i - 1].train_loss + 1e-9)
      ++increases;
  CHECK(increases <= 5);
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
}

TEST_CASE("nan loss aborts with learning-rate guidance") {
  const auto records = generate_cohort(unit_spec(8, 47));
  TrainConfig config = unit_config();
  config.learning_rate = 1e200;  // drives the forward pass to overflow
  config.epochs = 50;
  CHECK_THROWS_WITH_AS(train(records, config),
                       doctest::Contains("learning_rate"), ValueError);
}

TEST_CASE("split respects the configured fractions") {
  const Split s = split_dataset(100, 0.7, 0.1, 1);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 20);
  std::vector<bool> seen(100, false);
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (int i : *part) {
      CHECK_FALSE(seen[i]);
      seen[i] = true;
    }
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig config = unit_config();
  const TrainConfig parsed = train_config_from_json(train_config_to_json(config));
  CHECK(parsed.batch_size == config.batch_size);
  CHECK(parsed.embed_dim == config.embed_dim);
  CHECK(config_hash(parsed) == config_hash(config));

  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"batch_sie": 4})"),
                       doctest::Contains("batch_sie"), ValueError);
  CHECK_THROWS_AS(train_config_from_json(R"({"cxr_dropout_rate": 1.0})"), ValueError);
  CHECK_THROWS_AS(train_config_from_json(R"({"embed_dim": 10, "heads": 4})"),
                  ValueError);
}

TEST_CASE("checkpoint round trip preserves everything") {
  const auto records = generate_cohort(unit_spec(10, 51));
  TrainConfig config = unit_config();
  config.epochs = 1;
  const TrainResult result = train(records, config);

  CheckpointMeta meta;
  meta.config_hash = config_hash(config);
  meta.dims = result.params.dims;
  meta.variant = Variant::last_cxr_only;
  meta.delta = config.delta;
  meta.tau = config.tau;
  meta.window_hours = config.window_hours;

  const std::string path = "/tmp/hgdc_test_ckpt.bin";
  save_checkpoint(path, result.params, result.corr.adjacency, meta);
  const LoadedCheckpoint loaded = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(loaded.meta.config_hash == meta.config_hash);
  CHECK(loaded.meta.variant == Variant::last_cxr_only);
  CHECK(loaded.meta.delta == config.delta);
  CHECK(loaded.adjacency == result.corr.adjacency);
  const auto expect = result.params.named_parameters();
  const auto got = loaded.params.named_parameters();
  REQUIRE(expect.size() == got.size());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(expect[i].first == got[i].first);
    CHECK(expect[i].second.values() == got[i].second.values());
  }
}

TEST_CASE("checkpoint loader rejects garbage") {
  const std::string path = "/tmp/hgdc_test_ckpt_garbage.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), ValueError);
  std::remove(path.c_str());
}
