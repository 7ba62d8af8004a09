#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prefopt/cli.hpp"
#include "prefopt/datapipe.hpp"
#include "prefopt/reward.hpp"
#include "prefopt/trainer.hpp"
#include "support.hpp"

using namespace prefopt;
using namespace prefopt::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / ("prefopt_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

Dataset sample_dataset() {
  Engine rng(1);
  auto ds = planted_policy_dataset(12, 2, rng);
  ds.items[3].responses.push_back(response({2, 3}, 2, {3}));
  for (std::size_t i = 0; i < ds.items.size(); ++i) ds.items[i].query.category = kAllCategories[i % 3];
  return ds;
}

}  // namespace

TEST_CASE("help output matches the golden files") {
  const fs::path golden(PREFOPT_GOLDEN_DIR);
  for (std::string cmd : {"", "gen-pairs", "cluster-sample", "score", "train-dpo", "train-rm", "eval-rm",
                          "grid-search"}) {
    std::vector<std::string> args;
    if (!cmd.empty()) args.push_back(cmd);
    args.push_back("--help");
    const auto r = invoke(args);
    CHECK(r.code == cli::kExitOk);
    const auto expected = slurp(golden / ("help_" + (cmd.empty() ? std::string("root") : cmd) + ".txt"));
    CHECK_MESSAGE(r.out == expected, cmd);
  }
}

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == cli::kExitValidation);
  CHECK(invoke({"frobnicate"}).code == cli::kExitValidation);
  CHECK(invoke({"gen-pairs"}).code == cli::kExitValidation);
  Workdir wd;
  std::ofstream(wd / "d.jsonl") << "";
  CHECK(invoke({"gen-pairs", "--in", wd / "d.jsonl", "--bogus"}).code == cli::kExitValidation);
  CHECK(invoke({"eval-rm", "--bench", "x", "--ckpt", "y", "--mode", "fancy"}).code == cli::kExitValidation);
}

TEST_CASE("missing input files exit 2") {
  Workdir wd;
  const auto r = invoke({"gen-pairs", "--in", wd / "absent.jsonl"});
  CHECK(r.code == cli::kExitIo);
  CHECK(r.err.find("absent.jsonl") != std::string::npos);
  CHECK(invoke({"train-dpo", "--in", wd / "absent.jsonl", "--out", wd / "c.json"}).code == cli::kExitIo);
}

TEST_CASE("gen-pairs output is byte-identical to the library") {
  Workdir wd;
  const auto ds = sample_dataset();
  spit(wd / "data.jsonl", serialize_dataset(ds));

  std::ostringstream expected;
  write_pairs(expected, all_pairs(ds));
  const auto r = invoke({"gen-pairs", "--in", wd / "data.jsonl", "--quiet"});
  CHECK(r.code == 0);
  CHECK(r.out == expected.str());
  CHECK(r.err.empty());

  // With margins, vision negatives and a file target.
  Engine rng(2);
  const auto table = planted_margins(ds, 0.5, 3.0, rng);
  std::vector<ResponseScore> scores;
  for (const auto& [key, value] : table) scores.push_back({key.first, key.second, {}, value});
  std::ostringstream sbuf;
  write_scores(sbuf, scores);
  spit(wd / "scores.jsonl", sbuf.str());
  std::ostringstream with;
  write_pairs(with, attach_vision_negatives(attach_margins(all_pairs(ds), table), ds, 0.3));
  const auto f = invoke({"gen-pairs", "--in", wd / "data.jsonl", "--rewards", wd / "scores.jsonl", "--vision",
                         "--alpha", "0.3", "--out", wd / "pairs.jsonl"});
  CHECK(f.code == 0);
  CHECK(f.out.empty());
  CHECK(slurp(wd / "pairs.jsonl") == with.str());
  CHECK(!fs::exists(wd / "pairs.jsonl.tmp"));
}

TEST_CASE("cluster-sample prints sorted indices") {
  Workdir wd;
  spit(wd / "data.jsonl", serialize_dataset(sample_dataset()));
  const auto r = invoke({"cluster-sample", "--in", wd / "data.jsonl", "--k", "3", "--per-cluster", "2",
                         "--format", "json", "--seed", "4"});
  REQUIRE(r.code == 0);
  const auto idx = nlohmann::json::parse(r.out).get<std::vector<std::size_t>>();
  std::vector<Point> points;
  for (const auto& item : sample_dataset().items) points.push_back(item.query.features);
  CHECK(idx == cluster_sample(kmeans(points, 3, 100, 4), 2, 4));
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  const auto again = invoke({"cluster-sample", "--in", wd / "data.jsonl", "--k", "3", "--per-cluster", "2",
                             "--format", "json", "--seed", "4"});
  CHECK(again.out == r.out);

  const auto ratio = invoke({"cluster-sample", "--in", wd / "data.jsonl", "--k", "4", "--per-cluster", "3",
                             "--ratio", "Long=1,Short=1,MCQ=1", "--total", "6"});
  CHECK(ratio.code == 0);
  CHECK(std::count(ratio.out.begin(), ratio.out.end(), '\n') == 6);
  CHECK(invoke({"cluster-sample", "--in", wd / "data.jsonl", "--k", "50", "--per-cluster", "1"}).code ==
        cli::kExitValidation);
  CHECK(invoke({"cluster-sample", "--in", wd / "data.jsonl", "--per-cluster", "0"}).code == cli::kExitValidation);
}

TEST_CASE("train-dpo rejects an invalid config and names the field") {
  Workdir wd;
  spit(wd / "data.jsonl", serialize_dataset(sample_dataset()));
  spit(wd / "bad.cfg", "w = -1\n");
  const auto r = invoke({"train-dpo", "--in", wd / "data.jsonl", "--config", wd / "bad.cfg", "--out", wd / "c.json"});
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("w must be") != std::string::npos);
  CHECK(!fs::exists(wd / "c.json"));
}

TEST_CASE("train-dpo writes a checkpoint and log and resumes bitwise") {
  Workdir wd;
  const auto ds = sample_dataset();
  spit(wd / "data.jsonl", serialize_dataset(ds));
  spit(wd / "run.cfg", R"({"steps": 12, "batch_size": 4, "seed": 3, "lr": 0.5})");

  const auto full = invoke({"train-dpo", "--in", wd / "data.jsonl", "--config", wd / "run.cfg", "--out",
                            wd / "full.json", "--log", wd / "full.log", "--quiet"});
  REQUIRE(full.code == 0);
  const auto summary = nlohmann::json::parse(full.out);
  CHECK(summary["steps"] == 12);
  const std::string log = slurp(wd / "full.log");
  CHECK(std::count(log.begin(), log.end(), '\n') == 12);

  // Same as the library.
  const auto cfg = load_train_config(wd / "run.cfg");
  PolicyTrainer lib(build_policy_pairs(ds, nullptr, cfg), ds.vocab_size, ds.feature_dim, cfg);
  lib.run();
  CHECK(slurp(wd / "full.json") == serialize_checkpoint(lib.checkpoint()));

  CHECK(invoke({"train-dpo", "--in", wd / "data.jsonl", "--config", wd / "run.cfg", "--steps", "5", "--out",
                wd / "part.json", "--quiet"})
            .code == 0);
  CHECK(invoke({"train-dpo", "--in", wd / "data.jsonl", "--resume", wd / "part.json", "--steps", "12", "--out",
                wd / "resumed.json", "--quiet"})
            .code == 0);
  CHECK(slurp(wd / "resumed.json") == slurp(wd / "full.json"));
}

TEST_CASE("train-rm, score and eval-rm chain together") {
  Workdir wd;
  auto ds = sample_dataset();
  for (auto& item : ds.items) {
    for (auto& r : item.responses) r.critique = r.rank == 1 ? TokenSeq{0, 0} : TokenSeq{1};
  }
  spit(wd / "data.jsonl", serialize_dataset(ds));
  spit(wd / "rm.cfg", "steps = 40\nbatch_size = 8\nlr = 0.5\n");
  const auto tr = invoke({"train-rm", "--in", wd / "data.jsonl", "--config", wd / "rm.cfg", "--out",
                          wd / "rm.json", "--plain", "--quiet"});
  REQUIRE(tr.code == 0);
  const auto ckpt = load_reward_checkpoint(wd / "rm.json");
  CHECK(ckpt.objective == RewardObjective::Plain);

  const auto sc = invoke({"score", "--in", wd / "data.jsonl", "--ckpt", wd / "rm.json", "--mode", "none",
                          "--out", wd / "scores.jsonl", "--quiet"});
  REQUIRE(sc.code == 0);
  std::ifstream sin(wd / "scores.jsonl");
  CHECK(read_scores(sin) == score_dataset(ckpt.model, ds, CritiqueSource::None));

  const auto ev = invoke({"eval-rm", "--bench", wd / "data.jsonl", "--ckpt", wd / "rm.json", "--mode", "none"});
  REQUIRE(ev.code == 0);
  const auto report = nlohmann::json::parse(ev.out);
  CHECK(report["overall"]["n_pairs"] == 13);
  CHECK(report["overall"]["n_samples"] == 12);
  CHECK(report.contains("per_category"));

  const auto csv = invoke({"eval-rm", "--bench", wd / "data.jsonl", "--ckpt", wd / "rm.json", "--csv"});
  CHECK(csv.code == 0);
  CHECK(csv.out.rfind("category,acc,acc_plus", 0) == 0);

  CHECK(invoke({"eval-rm", "--bench", wd / "data.jsonl", "--ckpt", wd / "nope.json"}).code == cli::kExitIo);
}

TEST_CASE("grid-search emits the full table") {
  Workdir wd;
  spit(wd / "data.jsonl", serialize_dataset(sample_dataset()));
  const auto r = invoke({"grid-search", "--in", wd / "data.jsonl", "--steps", "2", "--sft-grid", "0,0.5",
                         "--lr-grid", "0.1", "--quiet"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["cells"].size() == 2);
  CHECK(j["best_config"]["steps"] == 2);
  CHECK(invoke({"grid-search", "--in", wd / "data.jsonl", "--sft-grid", "a,b"}).code == cli::kExitValidation);
}
