#include <cstdlib>
#include <set>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args, const fs::path& log = {}) {
  std::string cmd = std::string(VIPEEG_CLI_PATH) + " --log-level quiet " + args;
  cmd += log.empty() ? " >/dev/null 2>&1" : " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testutil::slurp(e.path());
  return out;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

const char* kTinyConfig = R"({
  "synth": {"patients": 6, "segments_per_patient": 4, "fs": 50, "t_total_s": 10},
  "filter": {"high_hz": 20},
  "train": {
    "model": {"backbone": {"stages": [{"channels": 8, "stride": 2}, {"channels": 16, "stride": 2}],
                           "input_scale": 0.0625}},
    "stage1": {"epochs": 1, "batch_size": 8},
    "stage2": {"epochs": 1, "batch_size": 8},
    "folds": 3
  },
  "pretext": {"n_train": 1024, "n_test": 256},
  "tsne": {"perplexity": 3, "iterations": 100, "exaggeration_iters": 50}
})";

// Shared tiny run, built once.
const fs::path& tiny_run() {
  static const fs::path root = [] {
    const auto dir = testutil::scratch_dir("cli_run");
    std::ofstream(dir / "tiny.json") << kTinyConfig;
    const std::string cfg = "--config " + (dir / "tiny.json").string();
    REQUIRE(run(cfg + " gen --out " + (dir / "data").string()) == 0);
    REQUIRE(run(cfg + " --seed 3 train --data " + (dir / "data").string() + " --out " + (dir / "run").string()) == 0);
    return dir;
  }();
  return root;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  const auto dir = testutil::scratch_dir("cli_usage");
  CHECK(run("gen --no-such-flag", dir / "out.txt") == 2);
  CHECK(testutil::slurp(dir / "out.txt").find("Usage") != std::string::npos);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --data x") == 2);
  std::ofstream(dir / "bad.json") << R"({"train": {"learning_speed": 3}})";
  CHECK(run("--config " + (dir / "bad.json").string() + " gen --out " + (dir / "d").string()) == 2);
  CHECK(run("gen --out " + (dir / "d").string() + " --label-noise 2") == 2);
}

TEST_CASE("data errors exit with status 1") {
  const auto dir = testutil::scratch_dir("cli_data");
  CHECK(run("train --data " + (dir / "missing").string() + " --out " + (dir / "run").string()) == 1);
  std::ofstream(dir / "tiny.json") << kTinyConfig;
  REQUIRE(run("--config " + (dir / "tiny.json").string() + " gen --out " + (dir / "data").string()) == 0);
  fs::remove(dir / "data" / "signals" / "S000003.bin");
  CHECK(run("--config " + (dir / "tiny.json").string() + " train --data " + (dir / "data").string() + " --out " +
            (dir / "run").string()) == 1);
}

TEST_CASE("gen is reproducible and honours the data-dir variable") {
  const auto dir = testutil::scratch_dir("cli_gen");
  std::ofstream(dir / "tiny.json") << kTinyConfig;
  const std::string cfg = "--config " + (dir / "tiny.json").string();
  REQUIRE(run(cfg + " --seed 4 gen --out " + (dir / "a").string()) == 0);
  REQUIRE(run(cfg + " --seed 4 gen --out " + (dir / "b").string()) == 0);
  CHECK(tree(dir / "a") == tree(dir / "b"));
  REQUIRE(run(cfg + " --seed 5 gen --out " + (dir / "c").string()) == 0);
  CHECK(tree(dir / "a") != tree(dir / "c"));

  ::setenv("VIPEEG_DATA_DIR", (dir / "env").string().c_str(), 1);
  const int rc = run(cfg + " --seed 4 gen");
  ::unsetenv("VIPEEG_DATA_DIR");
  REQUIRE(rc == 0);
  CHECK(tree(dir / "env") == tree(dir / "a"));
}

TEST_CASE("flags override the config file, which overrides defaults") {
  const auto dir = testutil::scratch_dir("cli_precedence");
  std::ofstream(dir / "c.json") << R"({"synth": {"segments_per_patient": 1, "fs": 50, "t_total_s": 10,
                                                 "patients": 7}})";
  std::ofstream(dir / "d.json") << R"({"synth": {"segments_per_patient": 1, "fs": 50, "t_total_s": 10}})";
  auto patients = [&](const fs::path& data) {
    return vipeeg::read_manifest_csv(data / "manifest.csv").patients().size();
  };
  REQUIRE(run("--config " + (dir / "c.json").string() + " gen --out " + (dir / "file").string()) == 0);
  CHECK(patients(dir / "file") == 7);
  REQUIRE(run("--config " + (dir / "c.json").string() + " gen --patients 5 --out " + (dir / "flag").string()) == 0);
  CHECK(patients(dir / "flag") == 5);
  REQUIRE(run("--config " + (dir / "d.json").string() + " gen --out " + (dir / "default").string()) == 0);
  CHECK(patients(dir / "default") == 60);
}

TEST_CASE("train writes checkpoints and reports tagged with hash and seed") {
  const auto& dir = tiny_run();
  const auto rep = json::parse(testutil::slurp(dir / "run" / "train_report.json"));
  const auto hash = rep.at("config_hash").get<std::string>();
  CHECK(hash.size() == 16);
  CHECK(rep.at("seed") == 3);
  CHECK(rep.contains("pretext"));
  CHECK(rep.at("folds").size() == 3);
  for (int f = 0; f < 3; ++f) CHECK(fs::exists(dir / "run" / "checkpoints" / ("fold_" + std::to_string(f) + ".ckpt")));
  const auto ck = vipeeg::load_checkpoint(dir / "run" / "checkpoints" / "fold_0.ckpt");
  const auto meta = json::parse(ck.meta);
  CHECK(meta.at("config_hash") == hash);
  CHECK(meta.at("seed") == 3);
  const std::string tag = "# config_hash=" + hash + " seed=3";
  CHECK(lines(dir / "run" / "oof.csv").front() == tag);
  CHECK(lines(dir / "run" / "embeddings.csv").front() == tag);
  CHECK(lines(dir / "run" / "oof.csv").size() == 2 + 24);
}

TEST_CASE("evaluate produces a full report") {
  const auto& dir = tiny_run();
  REQUIRE(run("evaluate --run " + (dir / "run").string() + " --data " + (dir / "data").string() + " --all-samples") == 0);
  const auto rep = json::parse(testutil::slurp(dir / "run" / "report" / "report.json"));
  for (const char* k : {"mean_kld", "mean_kld_ci95", "accuracy", "classes", "confusion", "n_samples", "n_patients",
                        "n_folds", "config_hash", "seed"})
    CHECK_MESSAGE(rep.contains(k), k);
  CHECK(rep.at("n_samples") == 24);
  CHECK(rep.at("classes").size() == 6);
  CHECK(fs::exists(dir / "run" / "report" / "confusion.svg"));
}

TEST_CASE("predict writes one normalized row per segment") {
  const auto& dir = tiny_run();
  const auto out = dir / "pred" / "p.csv";
  REQUIRE(run("predict --run " + (dir / "run").string() + " --data " + (dir / "data").string() + " --out " +
              out.string()) == 0);
  const auto ls = lines(out);
  REQUIRE(ls.size() == 2 + 24);
  CHECK(ls[0].rfind("# config_hash=", 0) == 0);
  CHECK(ls[1] == "id,seizure_vote,lpd_vote,gpd_vote,lrda_vote,grda_vote,other_vote");
  std::set<std::string> ids;
  for (std::size_t i = 2; i < ls.size(); ++i) {
    std::stringstream ss(ls[i]);
    std::string cell, id;
    std::getline(ss, id, ',');
    ids.insert(id);
    int cols = 1;
    double sum = 0;
    while (std::getline(ss, cell, ',')) sum += std::stod(cell), ++cols;
    CHECK(cols == 7);
    CHECK(std::abs(sum - 1) <= 1e-9);
  }
  CHECK(ids.size() == 24);
}

TEST_CASE("tsne and preprocess subcommands") {
  const auto& dir = tiny_run();
  // Low-quality segments are excluded; make sure enough high-quality points exist.
  const auto m = vipeeg::read_manifest_csv(dir / "data" / "manifest.csv");
  std::size_t hq = 0;
  for (const auto& e : m.entries) hq += e.votes.total() >= 10;
  if (hq >= 10) {
    REQUIRE(run("--config " + (dir / "tiny.json").string() + " tsne --run " + (dir / "run").string() + " --data " +
                (dir / "data").string()) == 0);
    CHECK(fs::exists(dir / "run" / "tsne" / "tsne.svg"));
  }
  REQUIRE(run("--config " + (dir / "tiny.json").string() + " preprocess --data " + (dir / "data").string() +
              " --out " + (dir / "filtered").string()) == 0);
  CHECK(fs::exists(dir / "filtered" / "preprocess.json"));
  CHECK(vipeeg::read_manifest_csv(dir / "filtered" / "manifest.csv").entries.size() == 24);
  CHECK(run("preprocess --data " + (dir / "filtered").string() + " --out " + (dir / "twice").string()) == 1);
}
