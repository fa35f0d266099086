#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "testsupport.hpp"
#include "trackplan/io.hpp"
#include "trackplan/synth.hpp"

using namespace trackplan;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  static int counter = 0;
  const fs::path out = dir / ("stdout_" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = std::string(TRACKPLAN_CLI_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Strict full-schema dataset config, written through the library's own
// serializer so the file format always matches the reader.
synth::DatasetConfig base_config(int train_episodes, std::uint64_t seed) {
  synth::DatasetConfig cfg;
  cfg.name = "cli-test";
  cfg.seed = seed;
  cfg.horizon = 8;
  cfg.raster_resolution = 32;
  cfg.points_min = 40;
  cfg.points_max = 60;
  cfg.step_bound = 0.5;  // small horizons need roomier per-step motion
  cfg.splits["train"] = {train_episodes,
                         {{synth::ShapeKind::box, synth::FamilyKind::translation_line},
                          {synth::ShapeKind::cylinder_shell,
                           synth::FamilyKind::rotation_about_scene_axis}}};
  return cfg;
}

void write_config(const fs::path& path, const synth::DatasetConfig& cfg) {
  io::write_json_file(path, io::to_json(cfg));
}

std::string tiny_tracker_config() {
  return R"({"n_blocks": 2, "hidden_size": 32, "n_heads": 2, "embed_dim": 32,
             "enc_c1": 4, "enc_c2": 8, "k_steps": 40})";
}

std::string tiny_policy_config() {
  return R"({"n_blocks": 2, "hidden_size": 32, "n_heads": 2, "embed_dim": 32,
             "p_tokens": 24, "enc_c1": 4, "enc_c2": 8})";
}

// Relative-path -> file-bytes map of a directory tree.
std::vector<std::pair<std::string, std::string>> dir_contents(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> loss_column(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    out.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  return out;
}

}  // namespace

TEST_CASE("dataset generation writes a manifest and reruns are byte-identical") {
  const fs::path dir = test::scratch_dir("cli_gen");
  write_config(dir / "cfg.json", base_config(10, 3));

  const RunResult r = run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                                  (dir / "d1").string() + " --seed 7",
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("10 episodes") != std::string::npos);
  const io::Dataset ds = io::open_dataset(dir / "d1");
  CHECK(ds.entries.size() == 10);
  CHECK(ds.config.seed == 7);  // the master seed overrides the config file's

  const RunResult r2 = run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                                   (dir / "d2").string() + " --seed 7",
                               dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(dir_contents(dir / "d1") == dir_contents(dir / "d2"));
}

TEST_CASE("a config file missing a required field is rejected by name") {
  const fs::path dir = test::scratch_dir("cli_badcfg");
  io::json j = io::to_json(base_config(2, 1));
  j.erase("horizon");
  io::write_json_file(dir / "cfg.json", j);

  const RunResult r = run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                                  (dir / "d").string() + " --seed 1",
                              dir);
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("horizon") != std::string::npos);
}

TEST_CASE("the tracker overfits a single episode and resumes bitwise") {
  const fs::path dir = test::scratch_dir("cli_tracker");
  write_config(dir / "cfg.json", base_config(1, 5));
  io::write_text_file(dir / "model.json", tiny_tracker_config());
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                      (dir / "data").string() + " --seed 5",
                  dir)
              .exit_code == 0);
  const std::string common =
      " --dataset " + (dir / "data").string() + " --batch 1 --lr 2e-3 --seed 9";

  const RunResult full = run_cli("train-tracker --config " + (dir / "model.json").string() +
                                     " --out " + (dir / "full").string() + " --steps 200" + common,
                                 dir);
  REQUIRE(full.exit_code == 0);
  const std::vector<double> losses = loss_column(dir / "full" / "losses.csv");
  REQUIRE(losses.size() == 200);
  CHECK(losses.back() < 0.5 * losses.front());

  // Same run split in two: the checkpoint, optimizer state, and every loss
  // value must match the uninterrupted run exactly.
  REQUIRE(run_cli("train-tracker --config " + (dir / "model.json").string() + " --out " +
                      (dir / "half").string() + " --steps 100" + common,
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("train-tracker --resume " + (dir / "half").string() + " --out " +
                      (dir / "resumed").string() + " --steps 200" + common,
                  dir)
              .exit_code == 0);
  CHECK(slurp(dir / "full" / "checkpoint.bin") == slurp(dir / "resumed" / "checkpoint.bin"));
  CHECK(slurp(dir / "full" / "optimizer.bin") == slurp(dir / "resumed" / "optimizer.bin"));
  const std::vector<double> tail = loss_column(dir / "resumed" / "losses.csv");
  REQUIRE(tail.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(tail[i] == losses[100 + i]);
}

TEST_CASE("a model horizon that disagrees with the dataset is rejected before training") {
  const fs::path dir = test::scratch_dir("cli_mismatch");
  write_config(dir / "cfg.json", base_config(1, 6));
  io::write_text_file(dir / "model.json", R"({"n_blocks": 2, "hidden_size": 32, "n_heads": 2,
      "embed_dim": 32, "enc_c1": 4, "enc_c2": 8, "horizon": 5})");
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                      (dir / "data").string() + " --seed 6",
                  dir)
              .exit_code == 0);

  const RunResult r = run_cli("train-tracker --dataset " + (dir / "data").string() +
                                  " --config " + (dir / "model.json").string() + " --out " +
                                  (dir / "t").string() + " --steps 10 --seed 1",
                              dir);
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("horizon") != std::string::npos);
  CHECK(!fs::exists(dir / "t" / "checkpoint.bin"));
}

TEST_CASE("the correction policy overfits a single demo and resumes bitwise") {
  const fs::path dir = test::scratch_dir("cli_residual");
  write_config(dir / "cfg.json", base_config(1, 8));
  io::write_text_file(dir / "model.json", tiny_policy_config());
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                      (dir / "data").string() + " --seed 8",
                  dir)
              .exit_code == 0);
  const std::string common = " --dataset " + (dir / "data").string() +
                             " --batch 1 --lr 2e-3 --grasp-offset 0.05 -0.03 0.02 --seed 13";

  const RunResult full = run_cli("train-residual --config " + (dir / "model.json").string() +
                                     " --out " + (dir / "full").string() + " --steps 200" + common,
                                 dir);
  REQUIRE(full.exit_code == 0);
  const std::vector<double> losses = loss_column(dir / "full" / "losses.csv");
  REQUIRE(losses.size() == 200);
  CHECK(losses.front() > 0.0);  // the offset demo disagrees with the plan
  CHECK(losses.back() < 0.5 * losses.front());

  REQUIRE(run_cli("train-residual --config " + (dir / "model.json").string() + " --out " +
                      (dir / "half").string() + " --steps 100" + common,
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("train-residual --resume " + (dir / "half").string() + " --out " +
                      (dir / "resumed").string() + " --steps 200" + common,
                  dir)
              .exit_code == 0);
  CHECK(slurp(dir / "full" / "checkpoint.bin") == slurp(dir / "resumed" / "checkpoint.bin"));
  const std::vector<double> tail = loss_column(dir / "resumed" / "losses.csv");
  REQUIRE(tail.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(tail[i] == losses[100 + i]);
}

TEST_CASE("the full pipeline produces a four-split report with perfect open-loop control") {
  const fs::path dir = test::scratch_dir("cli_pipeline");
  synth::DatasetConfig cfg = base_config(8, 20);
  cfg.splits["MG"] = {4, {{synth::ShapeKind::box, synth::FamilyKind::translation_line}}};
  cfg.splits["G"] = {4,
                     {{synth::ShapeKind::box, synth::FamilyKind::translation_line}},
                     1.25,
                     1.40};
  cfg.splits["CG"] = {4,
                      {{synth::ShapeKind::box, synth::FamilyKind::rotation_about_scene_axis}}};
  write_config(dir / "cfg.json", cfg);
  io::write_text_file(dir / "tracker.json", tiny_tracker_config());
  io::write_text_file(dir / "policy.json", tiny_policy_config());
  const std::string data = (dir / "data").string();

  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " + data +
                      " --seed 20",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("train-tracker --dataset " + data + " --config " +
                      (dir / "tracker.json").string() + " --out " + (dir / "tracker").string() +
                      " --steps 2 --batch 2 --seed 21",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("train-residual --dataset " + data + " --config " +
                      (dir / "policy.json").string() + " --out " + (dir / "policy").string() +
                      " --steps 0 --seed 22",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("predict-tracks --dataset " + data + " --checkpoint " +
                      (dir / "tracker" / "checkpoint.bin").string() + " --out " +
                      (dir / "pred").string() + " --episodes 1 --denoise-steps 4 --seed 23",
                  dir)
              .exit_code == 0);
  for (const char* split : {"train", "MG", "G", "CG"})
    CHECK(fs::exists(dir / "pred" / split / "000000.json"));

  const RunResult fit = run_cli("fit --dataset " + data + " --ground-truth --out " +
                                    (dir / "fit").string() + " --seed 24",
                                dir);
  REQUIRE(fit.exit_code == 0);
  const io::json summary = io::read_json_file(dir / "fit" / "summary.json");
  CHECK(summary.at("overall_mean_residual_px").get<double>() < 1e-6);

  REQUIRE(run_cli("plan --dataset " + data + " --fit " + (dir / "fit").string() + " --out " +
                      (dir / "plans").string() + " --seed 25",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("rollout --dataset " + data + " --plan " + (dir / "plans").string() +
                      " --open-loop --out " + (dir / "roll_open").string() + " --seed 26",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("rollout --dataset " + data + " --plan " + (dir / "plans").string() +
                      " --closed-loop --policy " + (dir / "policy" / "checkpoint.bin").string() +
                      " --out " + (dir / "roll_closed").string() + " --seed 26",
                  dir)
              .exit_code == 0);
  // A zero-initialized policy is an exact pass-through: every per-episode
  // trace file must match the open-loop bytes.
  for (const char* split : {"train", "MG", "G", "CG"})
    CHECK(dir_contents(dir / "roll_open" / split) == dir_contents(dir / "roll_closed" / split));
  const io::json roll_summary = io::read_json_file(dir / "roll_open" / "summary.json");
  for (const auto& [name, s] : roll_summary.at("splits").items())
    CHECK(s.at("success_rate").get<double>() == 1.0);

  const std::string eval_args = "eval --dataset " + data + " --policy " +
                                (dir / "policy" / "checkpoint.bin").string() +
                                " --track-source ground_truth --episodes 2 --seed 27 --out ";
  const RunResult ev = run_cli(eval_args + (dir / "eval").string(), dir);
  REQUIRE(ev.exit_code == 0);
  const io::json report = io::read_json_file(dir / "eval" / "report.json");
  REQUIRE(report.at("splits").size() == 4);
  std::set<std::string> names;
  for (const auto& s : report.at("splits")) names.insert(s.at("split").get<std::string>());
  CHECK(names == std::set<std::string>{"train", "MG", "G", "CG"});
  CHECK(report.at("overall").at("open_loop_success_rate").get<double>() == 1.0);
  CHECK(report.at("overall").at("delta_auc").get<double>() == 1.0);

  // Rerunning the benchmark with the same config and seed is byte-identical.
  REQUIRE(run_cli(eval_args + (dir / "eval_b").string(), dir).exit_code == 0);
  CHECK(slurp(dir / "eval" / "report.json") == slurp(dir / "eval_b" / "report.json"));
  CHECK(slurp(dir / "eval" / "report.csv") == slurp(dir / "eval_b" / "report.csv"));

  const RunResult rep = run_cli("report --in " + (dir / "eval" / "report.json").string() +
                                    " --format both --seed 0",
                                dir);
  CHECK(rep.exit_code == 0);
  CHECK(rep.out.find("overall") != std::string::npos);
  CHECK(rep.out.find("split,episode,delta_auc") != std::string::npos);
}

TEST_CASE("stage misuse produces named diagnostics") {
  const fs::path dir = test::scratch_dir("cli_errors");
  write_config(dir / "cfg.json", base_config(1, 30));
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                      (dir / "data").string() + " --seed 30",
                  dir)
              .exit_code == 0);
  const std::string data = (dir / "data").string();

  SUBCASE("fit requires exactly one track source") {
    const RunResult r = run_cli("fit --dataset " + data + " --out " + (dir / "f").string() +
                                    " --seed 1",
                                dir);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("exactly one") != std::string::npos);
  }
  SUBCASE("fit names a missing predictions directory") {
    const RunResult r = run_cli("fit --dataset " + data + " --tracks " + (dir / "nope").string() +
                                    " --out " + (dir / "f").string() + " --seed 1",
                                dir);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("tracks directory") != std::string::npos);
  }
  SUBCASE("rollout refuses ambiguous loop modes") {
    const RunResult r = run_cli("rollout --dataset " + data + " --plan " + data + " --out " +
                                    (dir / "r").string() + " --open-loop --closed-loop --seed 1",
                                dir);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("exactly one") != std::string::npos);
  }
  SUBCASE("predicted-source eval requires a tracker checkpoint") {
    write_config(dir / "p.json", base_config(1, 31));  // placeholder file path for --policy
    const RunResult r = run_cli("eval --dataset " + data + " --policy " +
                                    (dir / "p.json").string() +
                                    " --track-source predicted --out " + (dir / "e").string() +
                                    " --seed 1",
                                dir);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("--tracker") != std::string::npos);
  }
  SUBCASE("a missing required flag fails parsing") {
    const RunResult r = run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                                    (dir / "x").string(),
                                dir);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("--seed") != std::string::npos);
  }
}
