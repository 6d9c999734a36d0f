#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hgdc/cli.hpp"
#include "hgdc/cohort.hpp"
#include "hgdc/log.hpp"

using namespace hgdc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::path("/tmp") / ("hgdc_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
    set_quiet(true);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST_CASE("gen-data / train / eval pipeline") {
  TempDir dir;
  write(dir.file("spec.json"), R"({
    "n_patients": 120, "n_labels": 4, "ehr_features": 4, "cxr_features": 4,
    "time_steps": 4, "label_blocks": [[0,1],[2,3]],
    "block_modality": ["ehr","cxr"], "seed": 5
  })");
  write(dir.file("train.json"), R"({
    "batch_size": 16, "epochs": 2, "embed_dim": 8, "heads": 2,
    "encoder_hidden": 8, "seed": 5
  })");

  CHECK(run_cli({"gen-data", "--spec", dir.file("spec.json"), "--out",
                 dir.file("cohort.jsonl")}) == 0);
  CHECK(run_cli({"train", "--data", dir.file("cohort.jsonl"), "--config",
                 dir.file("train.json"), "--out", dir.file("ckpt")}) == 0);
  CHECK(fs::exists(dir.file("ckpt/model.ckpt")));
  const std::string history = slurp(dir.file("ckpt/history.csv"));
  CHECK(history.rfind("epoch,train_loss,val_macro_prauc\n", 0) == 0);

  CHECK(run_cli({"eval", "--ckpt", dir.file("ckpt/model.ckpt"), "--data",
                 dir.file("cohort.jsonl"), "--report", dir.file("report.csv"),
                 "--alpha-dump", dir.file("alpha.csv")}) == 0);
  const std::string report = slurp(dir.file("report.csv"));
  CHECK(report.find("macro,") != std::string::npos);
  CHECK(slurp(dir.file("alpha.csv")).find("patient_id,label") == 0);

  // an unreachable floor makes eval fail
  CHECK(run_cli({"eval", "--ckpt", dir.file("ckpt/model.ckpt"), "--data",
                 dir.file("cohort.jsonl"), "--report", dir.file("r2.csv"),
                 "--floor", "1.1"}) == 1);
}

TEST_CASE("fixed seed gives byte-identical reports") {
  TempDir dir;
  write(dir.file("train.json"),
        R"({"batch_size": 16, "epochs": 2, "embed_dim": 8, "heads": 2,
            "encoder_hidden": 8})");
  auto run = [&](const std::string& tag) {
    REQUIRE(run_cli({"--seed", "7", "gen-data", "--preset", "tiny", "--out",
                     dir.file(tag + ".jsonl")}) == 0);
    REQUIRE(run_cli({"--seed", "7", "train", "--data", dir.file(tag + ".jsonl"),
                     "--config", dir.file("train.json"), "--out",
                     dir.file(tag + "_ckpt")}) == 0);
    REQUIRE(run_cli({"eval", "--ckpt", dir.file(tag + "_ckpt/model.ckpt"),
                     "--data", dir.file(tag + ".jsonl"), "--report",
                     dir.file(tag + ".csv")}) == 0);
    return slurp(dir.file(tag + ".csv"));
  };
  CHECK(run("a") == run("b"));
}

TEST_CASE("dump-corr reproduces the hand-counting oracle") {
  TempDir dir;
  // samples {1,2},{1},{1,2}: A_12 = 2/3, A_21 = 1
  std::ofstream out(dir.file("hand.jsonl"));
  out << R"({"format_version":1})" << '\n'
      << R"({"patient_id":"a","ehr":{"values":[[0]]},"cxrs":[],"labels":[1,1]})" << '\n'
      << R"({"patient_id":"b","ehr":{"values":[[0]]},"cxrs":[],"labels":[1,0]})" << '\n'
      << R"({"patient_id":"c","ehr":{"values":[[0]]},"cxrs":[],"labels":[1,1]})" << '\n';
  out.close();
  REQUIRE(run_cli({"dump-corr", "--data", dir.file("hand.jsonl"), "--tau", "0.4",
                   "--out", dir.file("A.csv"), "--out-bin", dir.file("bin.csv"),
                   "--out-hat", dir.file("hat.csv")}) == 0);
  CHECK(slurp(dir.file("A.csv")) == "0,0.6666666667\n1,0\n");
  CHECK(slurp(dir.file("bin.csv")) == "0,1\n1,0\n");
  // symmetrized + self loops: degrees 2 -> every entry 1/2
  CHECK(slurp(dir.file("hat.csv")) == "0.5,0.5\n0.5,0.5\n");
}

TEST_CASE("usage errors exit with code 2") {
  TempDir dir;
  CHECK(run_cli({"no-such-command"}) == 2);
  CHECK(run_cli({"gen-data", "--out", dir.file("x.jsonl"), "--bogus-flag"}) == 2);
  CHECK(run_cli({"gen-data", "--out", dir.file("x.jsonl")}) == 2);  // no spec/preset
  CHECK(run_cli({"ablate", "--variant", "nonsense", "--data", "x"}) == 2);

  write(dir.file("bad.json"), R"({"batch_sie": 4})");
  write(dir.file("tiny.jsonl"), "");
  REQUIRE(run_cli({"gen-data", "--preset", "tiny", "--out", dir.file("tiny.jsonl")}) == 0);
  CHECK(run_cli({"train", "--data", dir.file("tiny.jsonl"), "--config",
                 dir.file("bad.json"), "--out", dir.file("ckpt")}) == 2);
}

TEST_CASE("runtime failures exit with code 1") {
  TempDir dir;
  CHECK(run_cli({"train", "--data", dir.file("missing.jsonl"), "--out",
                 dir.file("ckpt")}) == 1);
  CHECK(run_cli({"eval", "--ckpt", dir.file("missing.ckpt"), "--data",
                 dir.file("missing.jsonl"), "--report", dir.file("r.csv")}) == 1);
}

TEST_CASE("ablate trains a variant end to end") {
  TempDir dir;
  write(dir.file("train.json"),
        R"({"batch_size": 16, "epochs": 1, "embed_dim": 8, "heads": 2,
            "encoder_hidden": 8, "train_frac": 0.6, "val_frac": 0.1})");
  REQUIRE(run_cli({"gen-data", "--preset", "tiny", "--out", dir.file("c.jsonl"),
                   "--seed", "3"}) == 0);
  CHECK(run_cli({"ablate", "--variant", "no-cga", "--data", dir.file("c.jsonl"),
                 "--config", dir.file("train.json"), "--report",
                 dir.file("ab.csv"), "--out", dir.file("ab_ckpt")}) == 0);
  CHECK(slurp(dir.file("ab.csv")).find("macro,") != std::string::npos);
  CHECK(fs::exists(dir.file("ab_ckpt/model.ckpt")));
}
