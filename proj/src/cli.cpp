#include "trackplan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trackplan/errors.hpp"
#include "trackplan/io.hpp"
#include "trackplan/metrics.hpp"
#include "trackplan/planner.hpp"
#include "trackplan/residual.hpp"
#include "trackplan/rigidfit.hpp"
#include "trackplan/rng.hpp"
#include "trackplan/simenv.hpp"
#include "trackplan/synth.hpp"
#include "trackplan/trackdiff.hpp"

namespace trackplan::cli {

namespace {

namespace fs = std::filesystem;
using io::json;

// ---- small helpers ----------------------------------------------------------

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path require_file(const std::string& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw InvalidConfig(what + " not found: " + p);
  return p;
}

fs::path require_dir(const std::string& p, const std::string& what) {
  if (!fs::is_directory(p)) throw InvalidConfig(what + " not found: " + p);
  return p;
}

std::vector<std::string> resolve_splits(const io::Dataset& ds, const std::string& flag) {
  if (flag.empty()) return ds.split_names();
  std::vector<std::string> out;
  std::stringstream ss(flag);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (ds.config.splits.find(item) == ds.config.splits.end())
      throw InvalidConfig("dataset has no split named " + item);
    out.push_back(item);
  }
  if (out.empty()) throw InvalidConfig("--splits lists no split names");
  return out;
}

std::vector<io::ManifestEntry> split_entries(const io::Dataset& ds, const std::string& split) {
  std::vector<io::ManifestEntry> out;
  for (const auto& e : ds.entries)
    if (e.split == split) out.push_back(e);
  return out;
}

int episode_cap(int flag_value, int available) {
  return flag_value > 0 ? std::min(flag_value, available) : available;
}

fs::path stage_file(const fs::path& root, const std::string& split, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.json", index);
  return root / split / name;
}

Eigen::MatrixXd first_frame_matrix(const synth::Episode& ep) {
  const std::vector<geom::Vec2> pts = ep.first_frame_points2d();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = pts[i].x();
    m(static_cast<Eigen::Index>(i), 1) = pts[i].y();
  }
  return m;
}

json pose_to_json(const plan::Pose& p) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(p.orientation.m(r, c));
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"rotation", std::move(rot)},
          {"gripper", p.gripper}};
}

plan::Pose pose_from_json(const json& j) {
  plan::Pose p;
  const auto& pos = j.at("position");
  p.position = geom::Vec3(pos.at(0).get<double>(), pos.at(1).get<double>(),
                          pos.at(2).get<double>());
  const auto& rot = j.at("rotation");
  if (rot.size() != 9) throw IoError("pose: rotation must hold 9 numbers");
  geom::Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = rot.at(static_cast<std::size_t>(3 * r + c)).get<double>();
  p.orientation = geom::Rotation3::from_matrix(m);
  p.gripper = j.at("gripper").get<double>();
  return p;
}

// ---- shared error-model flags -------------------------------------------------

struct ErrorOpts {
  std::vector<double> offset{0.0, 0.0, 0.0};
  double radius = 0.08;
  double sigma = 0.0;
};

void add_error_flags(CLI::App* cmd, ErrorOpts& e) {
  cmd->add_option("--grasp-offset", e.offset,
                  "displacement of the true grasp point from the object centroid (3 numbers)")
      ->expected(3);
  cmd->add_option("--grasp-radius", e.radius, "attachment radius around the grasp point");
  cmd->add_option("--noise-sigma", e.sigma, "per-step actuation noise scale");
}

sim::ErrorModel to_error(const ErrorOpts& e) {
  sim::ErrorModel m;
  m.grasp_offset = geom::Vec3(e.offset.at(0), e.offset.at(1), e.offset.at(2));
  m.grasp_radius = e.radius;
  m.action_noise_sigma = e.sigma;
  return m;
}

// ---- optimizer-state persistence ----------------------------------------------

void save_adam(const fs::path& path, const nn::AdamState& st) {
  io::Checkpoint ck;
  ck.kind = "adam-state";
  ck.meta = {{"t", st.t}};
  for (const auto& [name, m] : st.m) ck.tensors.emplace_back("m/" + name, m);
  for (const auto& [name, m] : st.v) ck.tensors.emplace_back("v/" + name, m);
  io::write_checkpoint(path, ck);
}

nn::AdamState load_adam(const fs::path& path) {
  const io::Checkpoint ck = io::read_checkpoint(path);
  if (ck.kind != "adam-state")
    throw IoError("optimizer state: expected kind adam-state, found " + ck.kind);
  nn::AdamState st;
  st.t = ck.meta.at("t").get<std::int64_t>();
  for (const auto& [name, m] : ck.tensors) {
    if (name.rfind("m/", 0) == 0)
      st.m[name.substr(2)] = m;
    else if (name.rfind("v/", 0) == 0)
      st.v[name.substr(2)] = m;
    else
      throw IoError("optimizer state: unexpected tensor " + name);
  }
  return st;
}

// ---- loss tables ---------------------------------------------------------------

struct LossRow {
  int step = 0;
  double train = 0.0;
  bool has_eval = false;
  double eval = 0.0;
};

std::string losses_csv(const std::vector<LossRow>& rows) {
  std::ostringstream out;
  out << "step,train_loss,eval_loss\n";
  for (const LossRow& r : rows) {
    out << r.step << ',' << fmt17(r.train) << ',';
    if (r.has_eval) out << fmt17(r.eval);
    out << '\n';
  }
  return out.str();
}

// Shared train-loop scaffolding: holdout carving, per-step batch selection,
// resume bookkeeping. Both trainers derive per-step seeds as
// child_seed(seed, "batch"|"step"|"eval", step), so a resumed run replays the
// exact stream of an uninterrupted one.
template <typename Item>
std::pair<std::vector<const Item*>, std::vector<const Item*>> carve_holdout(
    const std::vector<Item>& all, double frac) {
  const int n = static_cast<int>(all.size());
  const int n_hold = n >= 5 ? std::max(1, static_cast<int>(frac * n)) : 0;
  std::vector<const Item*> train, hold;
  for (int i = 0; i < n - n_hold; ++i) train.push_back(&all[static_cast<std::size_t>(i)]);
  for (int i = n - n_hold; i < n; ++i) hold.push_back(&all[static_cast<std::size_t>(i)]);
  if (hold.empty()) hold = train;  // tiny datasets evaluate on the training slice
  return {std::move(train), std::move(hold)};
}

template <typename Item>
std::vector<const Item*> pick_batch(const std::vector<const Item*>& pool, int batch,
                                    std::uint64_t seed) {
  Rng rng(seed);
  const int k = std::min<int>(batch, static_cast<int>(pool.size()));
  std::vector<int> idx = rng.sample_indices(static_cast<int>(pool.size()), k);
  std::vector<const Item*> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i : idx) out.push_back(pool[static_cast<std::size_t>(i)]);
  return out;
}

int read_resume_step(const fs::path& resume_dir) {
  const json j = io::read_json_file(resume_dir / "state.json");
  return j.at("next_step").get<int>();
}

// ---- gen-data -------------------------------------------------------------------

struct GenDataOpts {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataOpts& o) {
  const json cfg_json = io::read_json_file(require_file(o.config, "config file"));
  synth::DatasetConfig cfg = io::dataset_config_from_json(cfg_json);
  cfg.seed = o.seed;  // the master seed governs generation, not the file's seed field
  fs::create_directories(o.out);
  const int n = synth::generate_dataset(cfg, o.out);
  io::write_run_artifact(o.out, "gen-data", io::to_json(cfg), o.seed, {o.config});
  std::cout << "gen-data: wrote " << n << " episodes to " << o.out << "\n";
  return 0;
}

// ---- train-tracker ----------------------------------------------------------------

json denoiser_config_json(const diff::DenoiserConfig& c, int k_steps) {
  return {{"n_blocks", c.n_blocks},   {"hidden_size", c.hidden_size},
          {"n_heads", c.n_heads},     {"p_max", c.p_max},
          {"horizon", c.horizon},     {"embed_dim", c.embed_dim},
          {"raster_resolution", c.raster_resolution},
          {"enc_c1", c.enc_c1},       {"enc_c2", c.enc_c2},
          {"k_steps", k_steps}};
}

void apply_denoiser_config(const json& j, diff::DenoiserConfig& c, int& k_steps) {
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.p_max = j.value("p_max", c.p_max);
  c.horizon = j.value("horizon", c.horizon);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.raster_resolution = j.value("raster_resolution", c.raster_resolution);
  c.enc_c1 = j.value("enc_c1", c.enc_c1);
  c.enc_c2 = j.value("enc_c2", c.enc_c2);
  k_steps = j.value("k_steps", k_steps);
}

struct TrainOpts {
  std::string dataset;
  std::string out;
  std::string config;
  std::string resume;
  std::string split = "train";
  int steps = 2000;
  int batch = 8;
  int eval_every = 100;
  double lr = 1e-4;
  double holdout_frac = 0.1;
  std::uint64_t seed = 0;
};

void add_train_flags(CLI::App* cmd, TrainOpts& o) {
  cmd->add_option("--dataset", o.dataset, "dataset directory")->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--config", o.config, "model config JSON (absent fields keep defaults)");
  cmd->add_option("--resume", o.resume, "previous training output directory to continue from");
  cmd->add_option("--split", o.split, "training split name");
  cmd->add_option("--steps", o.steps, "total optimization steps (including resumed ones)");
  cmd->add_option("--batch", o.batch, "episodes per step");
  cmd->add_option("--eval-every", o.eval_every, "holdout evaluation period in steps (0 = never)");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--holdout-frac", o.holdout_frac, "fraction of the split held out for eval");
  cmd->add_option("--seed", o.seed, "master seed")->required();
}

void check_train_opts(const TrainOpts& o) {
  if (o.steps < 0) throw InvalidConfig("--steps must be non-negative");
  if (o.batch < 1) throw InvalidConfig("--batch must be positive");
  if (!(o.lr > 0)) throw InvalidConfig("--lr must be positive");
  if (!(o.holdout_frac >= 0.0 && o.holdout_frac < 1.0))
    throw InvalidConfig("--holdout-frac must lie in [0, 1)");
  if (!o.resume.empty() && !o.config.empty())
    throw InvalidConfig("--resume takes the model config from the checkpoint; drop --config");
}

int cmd_train_tracker(const TrainOpts& o) {
  check_train_opts(o);
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));

  diff::Denoiser den;
  nn::AdamState opt;
  int start_step = 0;
  int k_steps = 100;
  std::vector<fs::path> inputs{ds.root / "manifest.json"};

  if (o.resume.empty()) {
    diff::DenoiserConfig mc;
    mc.horizon = ds.config.horizon;
    mc.raster_resolution = ds.config.raster_resolution;
    if (!o.config.empty()) {
      apply_denoiser_config(io::read_json_file(require_file(o.config, "model config")), mc,
                            k_steps);
      inputs.push_back(o.config);
    }
    if (mc.horizon != ds.config.horizon)
      throw InvalidConfig("train-tracker: model horizon " + std::to_string(mc.horizon) +
                          " does not match dataset horizon " + std::to_string(ds.config.horizon));
    if (mc.raster_resolution != ds.config.raster_resolution)
      throw InvalidConfig("train-tracker: model raster_resolution " +
                          std::to_string(mc.raster_resolution) +
                          " does not match the dataset's " +
                          std::to_string(ds.config.raster_resolution));
    mc.validate();
    den = diff::Denoiser::init(mc, diff::NoiseSchedule::cosine(k_steps),
                               child_seed(o.seed, "init"));
  } else {
    const fs::path rdir = require_dir(o.resume, "resume directory");
    den = diff::load_denoiser((rdir / "checkpoint.bin").string());
    opt = load_adam(rdir / "optimizer.bin");
    start_step = read_resume_step(rdir);
    k_steps = den.schedule.k_steps;
    if (den.config.horizon != ds.config.horizon)
      throw InvalidConfig("train-tracker: resumed checkpoint horizon " +
                          std::to_string(den.config.horizon) + " does not match dataset horizon " +
                          std::to_string(ds.config.horizon));
    inputs.push_back(rdir / "checkpoint.bin");
    inputs.push_back(rdir / "optimizer.bin");
  }
  if (o.steps < start_step)
    throw InvalidConfig("train-tracker: --steps " + std::to_string(o.steps) +
                        " is below the resumed step count " + std::to_string(start_step));

  const std::vector<synth::Episode> all = io::load_split(ds, o.split);
  if (all.empty()) throw InvalidConfig("train-tracker: split " + o.split + " has no episodes");
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i].n_points() > den.config.p_max)
      throw InvalidConfig("train-tracker: split " + o.split + " episode " + std::to_string(i) +
                          " has " + std::to_string(all[i].n_points()) +
                          " points, more than the model's p_max " +
                          std::to_string(den.config.p_max));
  const auto [train_set, holdout] = carve_holdout(all, o.holdout_frac);

  nn::AdamConfig ocfg;
  ocfg.lr = o.lr;
  std::vector<LossRow> rows;
  for (int step = start_step; step < o.steps; ++step) {
    const auto batch = pick_batch(train_set, o.batch, child_seed(o.seed, "batch", step));
    LossRow row;
    row.step = step;
    try {
      row.train = diff::train_step(den, batch, opt, ocfg, child_seed(o.seed, "step", step));
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss("train-tracker: aborted at step " + std::to_string(step) + ": " +
                          e.what());
    }
    if (o.eval_every > 0 && ((step + 1) % o.eval_every == 0 || step + 1 == o.steps)) {
      row.has_eval = true;
      row.eval = diff::loss(den, holdout, child_seed(o.seed, "eval", step));
    }
    rows.push_back(row);
  }

  fs::create_directories(o.out);
  diff::save_denoiser(den, (fs::path(o.out) / "checkpoint.bin").string());
  save_adam(fs::path(o.out) / "optimizer.bin", opt);
  io::write_json_file(fs::path(o.out) / "state.json", {{"next_step", o.steps}});
  io::write_text_file(fs::path(o.out) / "losses.csv", losses_csv(rows));
  const json snapshot{{"model", denoiser_config_json(den.config, k_steps)},
                      {"dataset", o.dataset},
                      {"split", o.split},
                      {"steps", o.steps},
                      {"batch", o.batch},
                      {"lr", o.lr},
                      {"eval_every", o.eval_every},
                      {"holdout_frac", o.holdout_frac},
                      {"resume", o.resume}};
  io::write_run_artifact(o.out, "train-tracker", snapshot, o.seed, inputs);
  std::cout << "train-tracker: ran steps " << start_step << ".." << o.steps << "; final loss "
            << (rows.empty() ? std::string("n/a") : fmt17(rows.back().train)) << "\n";
  return 0;
}

// ---- train-residual ------------------------------------------------------------------

json residual_config_json(const res::ResidualConfig& c) {
  return {{"n_blocks", c.n_blocks},   {"hidden_size", c.hidden_size},
          {"n_heads", c.n_heads},     {"embed_dim", c.embed_dim},
          {"lookahead", c.lookahead}, {"p_tokens", c.p_tokens},
          {"horizon", c.horizon},     {"raster_resolution", c.raster_resolution},
          {"enc_c1", c.enc_c1},       {"enc_c2", c.enc_c2},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"mode", res::to_string(c.mode)}};
}

void apply_residual_config(const json& j, res::ResidualConfig& c) {
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.lookahead = j.value("lookahead", c.lookahead);
  c.p_tokens = j.value("p_tokens", c.p_tokens);
  c.horizon = j.value("horizon", c.horizon);
  c.raster_resolution = j.value("raster_resolution", c.raster_resolution);
  c.enc_c1 = j.value("enc_c1", c.enc_c1);
  c.enc_c2 = j.value("enc_c2", c.enc_c2);
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
}

struct TrainResidualOpts {
  TrainOpts base;
  std::string mode = "residual_correction";
  ErrorOpts err;
  double max_offset = 0.0;
};

int cmd_train_residual(const TrainResidualOpts& ro) {
  const TrainOpts& o = ro.base;
  check_train_opts(o);
  if (!o.resume.empty() && ro.mode != "residual_correction")
    throw InvalidConfig("--resume takes the mode from the checkpoint; drop --mode");
  if (ro.max_offset < 0) throw InvalidConfig("--max-offset must be non-negative");
  if (ro.max_offset > ro.err.radius)
    throw InvalidConfig("--max-offset exceeds --grasp-radius; such demos could never attach");
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));

  res::ResidualPolicy policy;
  nn::AdamState opt;
  int start_step = 0;
  std::vector<fs::path> inputs{ds.root / "manifest.json"};

  if (o.resume.empty()) {
    res::ResidualConfig pc;
    pc.horizon = ds.config.horizon;
    pc.raster_resolution = ds.config.raster_resolution;
    pc.image_width = ds.config.intrinsics.width;
    pc.image_height = ds.config.intrinsics.height;
    if (!o.config.empty()) {
      apply_residual_config(io::read_json_file(require_file(o.config, "policy config")), pc);
      inputs.push_back(o.config);
    }
    pc.mode = res::mode_from_string(ro.mode);
    if (pc.horizon != ds.config.horizon)
      throw InvalidConfig("train-residual: policy horizon " + std::to_string(pc.horizon) +
                          " does not match dataset horizon " + std::to_string(ds.config.horizon));
    if (pc.raster_resolution != ds.config.raster_resolution)
      throw InvalidConfig("train-residual: policy raster_resolution " +
                          std::to_string(pc.raster_resolution) + " does not match the dataset's " +
                          std::to_string(ds.config.raster_resolution));
    if (pc.image_width != ds.config.intrinsics.width ||
        pc.image_height != ds.config.intrinsics.height)
      throw InvalidConfig("train-residual: policy image size does not match the dataset camera");
    if (pc.p_tokens > ds.config.points_min)
      throw InvalidConfig("train-residual: p_tokens " + std::to_string(pc.p_tokens) +
                          " exceeds the dataset's minimum point count " +
                          std::to_string(ds.config.points_min));
    pc.validate();
    policy = res::ResidualPolicy::init(pc, child_seed(o.seed, "init"));
  } else {
    const fs::path rdir = require_dir(o.resume, "resume directory");
    policy = res::load_policy((rdir / "checkpoint.bin").string());
    opt = load_adam(rdir / "optimizer.bin");
    start_step = read_resume_step(rdir);
    if (policy.config.horizon != ds.config.horizon)
      throw InvalidConfig("train-residual: resumed checkpoint horizon " +
                          std::to_string(policy.config.horizon) +
                          " does not match dataset horizon " + std::to_string(ds.config.horizon));
    inputs.push_back(rdir / "checkpoint.bin");
    inputs.push_back(rdir / "optimizer.bin");
  }
  if (o.steps < start_step)
    throw InvalidConfig("train-residual: --steps " + std::to_string(o.steps) +
                        " is below the resumed step count " + std::to_string(start_step));

  const std::vector<synth::Episode> episodes = io::load_split(ds, o.split);
  if (episodes.empty())
    throw InvalidConfig("train-residual: split " + o.split + " has no episodes");

  // One scripted demo per episode. With --max-offset the grasp error is
  // drawn per demo (direction uniform, magnitude uniform in [0, max]);
  // otherwise the fixed --grasp-offset applies to every demo.
  std::vector<res::TrainingDemo> demos;
  demos.reserve(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    sim::ErrorModel em = to_error(ro.err);
    if (ro.max_offset > 0) {
      Rng rng(child_seed(o.seed, "demo-error", i));
      geom::Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      while (dir.norm() < 1e-9) dir = geom::Vec3(rng.normal(), rng.normal(), rng.normal());
      em.grasp_offset = dir.normalized() * rng.uniform(0.0, ro.max_offset);
    }
    em.seed = child_seed(o.seed, "demo-noise", i);
    try {
      demos.push_back(res::collect_training_demo(episodes[i], em, policy.config.p_tokens,
                                                 child_seed(o.seed, "demo", i)));
    } catch (const Error& e) {
      throw Error("train-residual: split " + o.split + " episode " + std::to_string(i) + ": " +
                  e.what());
    }
  }
  const auto [train_set, holdout] = carve_holdout(demos, o.holdout_frac);

  nn::AdamConfig ocfg;
  ocfg.lr = o.lr;
  std::vector<LossRow> rows;
  for (int step = start_step; step < o.steps; ++step) {
    const auto batch = pick_batch(train_set, o.batch, child_seed(o.seed, "batch", step));
    LossRow row;
    row.step = step;
    try {
      row.train = res::bc_train_step(policy, batch, opt, ocfg, child_seed(o.seed, "step", step));
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss("train-residual: aborted at step " + std::to_string(step) + ": " +
                          e.what());
    }
    if (o.eval_every > 0 && ((step + 1) % o.eval_every == 0 || step + 1 == o.steps)) {
      row.has_eval = true;
      row.eval = res::bc_loss(policy, holdout, child_seed(o.seed, "eval", step));
    }
    rows.push_back(row);
  }

  fs::create_directories(o.out);
  res::save_policy(policy, (fs::path(o.out) / "checkpoint.bin").string());
  save_adam(fs::path(o.out) / "optimizer.bin", opt);
  io::write_json_file(fs::path(o.out) / "state.json", {{"next_step", o.steps}});
  io::write_text_file(fs::path(o.out) / "losses.csv", losses_csv(rows));
  json snapshot{{"model", residual_config_json(policy.config)},
                {"dataset", o.dataset},
                {"split", o.split},
                {"steps", o.steps},
                {"batch", o.batch},
                {"lr", o.lr},
                {"eval_every", o.eval_every},
                {"holdout_frac", o.holdout_frac},
                {"resume", o.resume},
                {"max_offset", ro.max_offset},
                {"grasp_offset", ro.err.offset},
                {"grasp_radius", ro.err.radius},
                {"noise_sigma", ro.err.sigma}};
  io::write_run_artifact(o.out, "train-residual", snapshot, o.seed, inputs);
  std::cout << "train-residual: ran steps " << start_step << ".." << o.steps << "; final loss "
            << (rows.empty() ? std::string("n/a") : fmt17(rows.back().train)) << "\n";
  return 0;
}

// ---- predict-tracks ---------------------------------------------------------------

struct PredictOpts {
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string splits;
  int episodes = 0;
  int denoise_steps = 25;
  std::uint64_t seed = 0;
};

int cmd_predict_tracks(const PredictOpts& o) {
  if (o.denoise_steps < 1) throw InvalidConfig("--denoise-steps must be positive");
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));
  const diff::Denoiser den = diff::load_denoiser(require_file(o.checkpoint, "checkpoint").string());
  if (den.config.horizon != ds.config.horizon)
    throw InvalidConfig("predict-tracks: checkpoint horizon " +
                        std::to_string(den.config.horizon) + " does not match dataset horizon " +
                        std::to_string(ds.config.horizon));
  if (den.config.raster_resolution != ds.config.raster_resolution)
    throw InvalidConfig("predict-tracks: checkpoint raster_resolution does not match the dataset");

  int written = 0;
  for (const std::string& split : resolve_splits(ds, o.splits)) {
    const auto entries = split_entries(ds, split);
    const int n = episode_cap(o.episodes, static_cast<int>(entries.size()));
    fs::create_directories(fs::path(o.out) / split);
    for (int i = 0; i < n; ++i) {
      try {
        const synth::Episode ep = io::load_episode(ds, entries[static_cast<std::size_t>(i)]);
        if (ep.n_points() > den.config.p_max)
          throw InvalidConfig("episode has " + std::to_string(ep.n_points()) +
                              " points, more than the model's p_max " +
                              std::to_string(den.config.p_max));
        const diff::Embedding z0 = diff::encode_raster(den, ep.initial_raster);
        const diff::Embedding zg = diff::encode_raster(den, ep.goal_raster);
        const TrackTensor tracks = diff::sample_tracks(
            den, z0, zg, first_frame_matrix(ep), ep.intrinsics.width, ep.intrinsics.height,
            o.denoise_steps, child_seed(o.seed, "sample-" + split, i));
        io::write_json_file(stage_file(o.out, split, i),
                            {{"split", split},
                             {"index", i},
                             {"episode_seed", ep.seed},
                             {"tracks", io::to_json(tracks)}});
        ++written;
      } catch (const Error& e) {
        throw Error("predict-tracks: split " + split + " episode " + std::to_string(i) + ": " +
                    e.what());
      }
    }
  }
  io::write_run_artifact(o.out, "predict-tracks",
                         {{"dataset", o.dataset},
                          {"checkpoint", o.checkpoint},
                          {"splits", o.splits},
                          {"episodes", o.episodes},
                          {"denoise_steps", o.denoise_steps}},
                         o.seed, {ds.root / "manifest.json", o.checkpoint});
  std::cout << "predict-tracks: wrote " << written << " track files to " << o.out << "\n";
  return 0;
}

// ---- fit ------------------------------------------------------------------------------

struct FitOpts {
  std::string dataset;
  std::string out;
  std::string tracks;
  bool ground_truth = false;
  std::string splits;
  int episodes = 0;
  rigidfit::FitConfig fit;
  bool no_huber = false;
  bool independent_steps = false;
  std::uint64_t seed = 0;
};

int cmd_fit(const FitOpts& o) {
  if (o.ground_truth == !o.tracks.empty())
    throw InvalidConfig("fit: pass exactly one of --tracks and --ground-truth");
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));
  if (!o.tracks.empty()) require_dir(o.tracks, "tracks directory");

  rigidfit::FitConfig base = o.fit;
  base.use_huber = !o.no_huber;
  base.independent_steps = o.independent_steps;
  base.validate();

  json summary_splits;
  double overall_sum = 0.0;
  int overall_n = 0;
  for (const std::string& split : resolve_splits(ds, o.splits)) {
    const auto entries = split_entries(ds, split);
    const int n = episode_cap(o.episodes, static_cast<int>(entries.size()));
    fs::create_directories(fs::path(o.out) / split);
    double split_sum = 0.0, split_max = 0.0;
    for (int i = 0; i < n; ++i) {
      try {
        const synth::Episode ep = io::load_episode(ds, entries[static_cast<std::size_t>(i)]);
        const TrackTensor tracks =
            o.ground_truth
                ? ep.gt_tracks
                : io::tracks_from_json(
                      io::read_json_file(stage_file(o.tracks, split, i)).at("tracks"));
        rigidfit::FitConfig fcfg = base;
        fcfg.seed = child_seed(o.seed, "fit-" + split, i);
        const rigidfit::TransformTrajectory traj =
            rigidfit::fit_trajectory(tracks, ep.points3d_t0, ep.intrinsics, fcfg);

        double mean_res = 0.0;
        for (double r : traj.per_step_residual) mean_res += r;
        mean_res /= static_cast<double>(traj.per_step_residual.size());
        split_sum += mean_res;
        split_max = std::max(split_max, mean_res);

        json transforms = json::array();
        for (const auto& t : traj.transforms) transforms.push_back(io::to_json(t));
        json inliers = json::array();
        for (const auto& step : traj.per_step_inliers) inliers.push_back(step);
        io::write_json_file(stage_file(o.out, split, i),
                            {{"split", split},
                             {"index", i},
                             {"episode_seed", ep.seed},
                             {"mean_residual_px", mean_res},
                             {"inlier_count", traj.inlier_count},
                             {"transforms", std::move(transforms)},
                             {"per_step_residual", traj.per_step_residual},
                             {"per_step_inliers", std::move(inliers)},
                             {"moving_indices", traj.moving_indices}});
      } catch (const Error& e) {
        throw Error("fit: split " + split + " episode " + std::to_string(i) + ": " + e.what());
      }
    }
    summary_splits[split] = {{"episodes", n},
                             {"mean_residual_px", n > 0 ? split_sum / n : 0.0},
                             {"max_residual_px", split_max}};
    overall_sum += split_sum;
    overall_n += n;
  }
  io::write_json_file(fs::path(o.out) / "summary.json",
                      {{"splits", std::move(summary_splits)},
                       {"overall_mean_residual_px", overall_n > 0 ? overall_sum / overall_n : 0.0},
                       {"source", o.ground_truth ? "ground_truth" : "predicted"}});

  std::vector<fs::path> inputs{ds.root / "manifest.json"};
  const json snapshot{{"dataset", o.dataset},
                      {"tracks", o.tracks},
                      {"ground_truth", o.ground_truth},
                      {"splits", o.splits},
                      {"episodes", o.episodes},
                      {"motion_threshold", base.motion_threshold},
                      {"ransac_iters", base.ransac_iters},
                      {"ransac_inlier_px", base.ransac_inlier_px},
                      {"huber_delta", base.huber_delta},
                      {"use_huber", base.use_huber},
                      {"independent_steps", base.independent_steps}};
  io::write_run_artifact(o.out, "fit", snapshot, o.seed, inputs);
  std::cout << "fit: " << overall_n << " episodes; overall mean residual "
            << fmt17(overall_n > 0 ? overall_sum / overall_n : 0.0) << " px\n";
  return 0;
}

// ---- plan ------------------------------------------------------------------------------

struct PlanOpts {
  std::string dataset;
  std::string fit_dir;
  std::string out;
  std::string splits;
  int episodes = 0;
  std::uint64_t seed = 0;
};

int cmd_plan(const PlanOpts& o) {
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));
  require_dir(o.fit_dir, "fit directory");
  int written = 0;
  for (const std::string& split : resolve_splits(ds, o.splits)) {
    const auto entries = split_entries(ds, split);
    const int n = episode_cap(o.episodes, static_cast<int>(entries.size()));
    fs::create_directories(fs::path(o.out) / split);
    for (int i = 0; i < n; ++i) {
      try {
        const synth::Episode ep = io::load_episode(ds, entries[static_cast<std::size_t>(i)]);
        const json fj = io::read_json_file(stage_file(o.fit_dir, split, i));
        std::vector<geom::RigidTransform> transforms;
        for (const json& tj : fj.at("transforms"))
          transforms.push_back(io::transform_from_json(tj));
        std::vector<geom::Vec3> moving3d;
        for (const json& idx : fj.at("moving_indices"))
          moving3d.push_back(ep.points3d_t0.at(idx.get<std::size_t>()));
        const plan::Pose e1 = plan::initial_grasp_pose(sim::home_pose(ep), moving3d);
        const plan::EndEffectorPlan pl = plan::open_loop_plan(transforms, e1);
        json poses = json::array();
        for (const plan::Pose& p : pl.poses) poses.push_back(pose_to_json(p));
        io::write_json_file(stage_file(o.out, split, i), {{"split", split},
                                                          {"index", i},
                                                          {"episode_seed", ep.seed},
                                                          {"grasp_step", pl.grasp_step},
                                                          {"poses", std::move(poses)}});
        ++written;
      } catch (const Error& e) {
        throw Error("plan: split " + split + " episode " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  io::write_run_artifact(
      o.out, "plan",
      {{"dataset", o.dataset}, {"fit", o.fit_dir}, {"splits", o.splits}, {"episodes", o.episodes}},
      o.seed, {ds.root / "manifest.json"});
  std::cout << "plan: wrote " << written << " plans to " << o.out << "\n";
  return 0;
}

// ---- rollout -----------------------------------------------------------------------------

struct RolloutOpts {
  std::string dataset;
  std::string plan_dir;
  std::string out;
  std::string policy;
  std::string tracks;
  bool open_loop = false;
  bool closed_loop = false;
  std::string splits;
  int episodes = 0;
  ErrorOpts err;
  std::uint64_t seed = 0;
};

int cmd_rollout(const RolloutOpts& o) {
  if (o.open_loop == o.closed_loop)
    throw InvalidConfig("rollout: pass exactly one of --open-loop and --closed-loop");
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));
  require_dir(o.plan_dir, "plan directory");
  std::optional<res::ResidualPolicy> policy;
  if (o.closed_loop) {
    if (o.policy.empty()) throw InvalidConfig("rollout: --closed-loop requires --policy");
    policy = res::load_policy(require_file(o.policy, "policy checkpoint").string());
    if (policy->config.horizon != ds.config.horizon)
      throw InvalidConfig("rollout: policy horizon " + std::to_string(policy->config.horizon) +
                          " does not match dataset horizon " + std::to_string(ds.config.horizon));
  }
  if (!o.tracks.empty()) require_dir(o.tracks, "tracks directory");

  json summary_splits;
  for (const std::string& split : resolve_splits(ds, o.splits)) {
    const auto entries = split_entries(ds, split);
    const int n = episode_cap(o.episodes, static_cast<int>(entries.size()));
    fs::create_directories(fs::path(o.out) / split);
    int successes = 0;
    for (int i = 0; i < n; ++i) {
      try {
        const synth::Episode ep = io::load_episode(ds, entries[static_cast<std::size_t>(i)]);
        const json pj = io::read_json_file(stage_file(o.plan_dir, split, i));
        plan::EndEffectorPlan pl;
        pl.grasp_step = pj.at("grasp_step").get<int>();
        for (const json& jp : pj.at("poses")) pl.poses.push_back(pose_from_json(jp));
        pl.validate();

        sim::ErrorModel error = to_error(o.err);
        error.seed = child_seed(o.seed, "rollout-" + split, i);
        const sim::GoalSpec goal = sim::default_goal(ep);

        res::RolloutTrace trace;
        if (o.open_loop) {
          trace = res::rollout_open_loop(ep, pl, error, goal);
        } else {
          const TrackTensor raw =
              o.tracks.empty()
                  ? ep.gt_tracks
                  : io::tracks_from_json(
                        io::read_json_file(stage_file(o.tracks, split, i)).at("tracks"));
          const TrackTensor cond = metrics::subsample_tracks(
              raw, policy->config.p_tokens, child_seed(o.seed, "policy-tracks-" + split, i));
          trace = res::rollout_closed_loop(*policy, ep, cond, pl, error, goal);
        }
        successes += trace.success ? 1 : 0;

        // Trace files carry no mode marker, so open- and closed-loop runs of
        // an identity policy produce byte-identical episode files.
        json actions = json::array();
        for (const plan::Pose& p : trace.actions) actions.push_back(pose_to_json(p));
        json object_poses = json::array();
        for (const auto& t : trace.object_poses) object_poses.push_back(io::to_json(t));
        io::write_json_file(stage_file(o.out, split, i), {{"split", split},
                                                          {"index", i},
                                                          {"episode_seed", ep.seed},
                                                          {"success", trace.success},
                                                          {"actions", std::move(actions)},
                                                          {"object_poses", std::move(object_poses)}});
      } catch (const Error& e) {
        throw Error("rollout: split " + split + " episode " + std::to_string(i) + ": " + e.what());
      }
    }
    summary_splits[split] = {{"episodes", n},
                             {"success_rate", n > 0 ? static_cast<double>(successes) / n : 0.0}};
  }
  io::write_json_file(fs::path(o.out) / "summary.json",
                      {{"mode", o.open_loop ? "open_loop" : "closed_loop"},
                       {"splits", std::move(summary_splits)}});

  std::vector<fs::path> inputs{ds.root / "manifest.json"};
  if (!o.policy.empty()) inputs.push_back(o.policy);
  io::write_run_artifact(o.out, "rollout",
                         {{"dataset", o.dataset},
                          {"plan", o.plan_dir},
                          {"policy", o.policy},
                          {"tracks", o.tracks},
                          {"mode", o.open_loop ? "open_loop" : "closed_loop"},
                          {"splits", o.splits},
                          {"episodes", o.episodes},
                          {"grasp_offset", o.err.offset},
                          {"grasp_radius", o.err.radius},
                          {"noise_sigma", o.err.sigma}},
                         o.seed, inputs);
  std::cout << "rollout: wrote traces to " << o.out << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------------------

struct EvalOpts {
  std::string dataset;
  std::string out;
  std::vector<std::string> policies;
  std::string tracker;
  std::string source = "ground_truth";
  std::string splits;
  int episodes = 100;
  int denoise_steps = 25;
  int thresholds = 10;
  ErrorOpts err;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalOpts& o) {
  const io::Dataset ds = io::open_dataset(require_dir(o.dataset, "dataset directory"));
  const std::vector<std::string> splits = resolve_splits(ds, o.splits);

  metrics::BenchmarkConfig bc;
  bc.metric.n_thresholds = o.thresholds;
  bc.metric.horizon = ds.config.horizon;
  bc.track_source = metrics::track_source_from_string(o.source);
  bc.episodes_per_split = o.episodes;
  bc.n_denoise_steps = o.denoise_steps;
  bc.error = to_error(o.err);
  bc.seed = o.seed;

  std::optional<diff::Denoiser> den;
  std::vector<fs::path> inputs{ds.root / "manifest.json"};
  if (bc.track_source == metrics::TrackSource::predicted) {
    if (o.tracker.empty())
      throw InvalidConfig("eval: --track-source predicted requires --tracker");
    den = diff::load_denoiser(require_file(o.tracker, "tracker checkpoint").string());
    if (den->config.horizon != ds.config.horizon)
      throw InvalidConfig("eval: tracker horizon " + std::to_string(den->config.horizon) +
                          " does not match dataset horizon " + std::to_string(ds.config.horizon));
    inputs.push_back(o.tracker);
  }

  std::vector<metrics::MetricReport> reports;
  std::string text;
  for (const std::string& path : o.policies) {
    const res::ResidualPolicy policy =
        res::load_policy(require_file(path, "policy checkpoint").string());
    if (policy.config.horizon != ds.config.horizon)
      throw InvalidConfig("eval: policy horizon " + std::to_string(policy.config.horizon) +
                          " does not match dataset horizon " + std::to_string(ds.config.horizon));
    inputs.push_back(path);
    reports.push_back(metrics::run_benchmark(ds.config, splits, den ? &*den : nullptr, policy,
                                             bc));
    text += metrics::report_text(reports.back());
  }

  fs::create_directories(o.out);
  if (reports.size() == 1) {
    io::write_json_file(fs::path(o.out) / "report.json", metrics::to_json(reports[0]));
    io::write_text_file(fs::path(o.out) / "report.csv", metrics::report_csv(reports[0]));
  } else {
    json jr = json::array();
    for (const auto& r : reports) jr.push_back(metrics::to_json(r));
    io::write_json_file(fs::path(o.out) / "report.json", {{"reports", std::move(jr)}});
    for (std::size_t i = 0; i < reports.size(); ++i)
      io::write_text_file(fs::path(o.out) / ("report-" + std::to_string(i) + ".csv"),
                          metrics::report_csv(reports[i]));
  }
  io::write_text_file(fs::path(o.out) / "report.txt", text);
  io::write_run_artifact(o.out, "eval",
                         {{"dataset", o.dataset},
                          {"policies", o.policies},
                          {"tracker", o.tracker},
                          {"track_source", o.source},
                          {"splits", o.splits},
                          {"episodes", o.episodes},
                          {"denoise_steps", o.denoise_steps},
                          {"thresholds", o.thresholds},
                          {"grasp_offset", o.err.offset},
                          {"grasp_radius", o.err.radius},
                          {"noise_sigma", o.err.sigma}},
                         o.seed, inputs);
  std::cout << text;
  return 0;
}

// ---- report -----------------------------------------------------------------------------

struct ReportOpts {
  std::string in;
  std::string format = "text";
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_report(const ReportOpts& o) {
  if (o.format != "text" && o.format != "csv" && o.format != "both")
    throw InvalidConfig("report: --format must be text, csv, or both");
  const json j = io::read_json_file(require_file(o.in, "report file"));
  std::vector<metrics::MetricReport> reports;
  if (j.contains("reports"))
    for (const json& jr : j.at("reports")) reports.push_back(metrics::report_from_json(jr));
  else
    reports.push_back(metrics::report_from_json(j));

  std::string text, csv;
  for (const auto& r : reports) {
    text += metrics::report_text(r);
    csv += "# policy_mode: " + r.policy_mode + "\n" + metrics::report_csv(r);
  }
  if (o.out.empty()) {
    if (o.format == "text" || o.format == "both") std::cout << text;
    if (o.format == "csv" || o.format == "both") std::cout << csv;
  } else {
    fs::create_directories(o.out);
    if (o.format == "text" || o.format == "both")
      io::write_text_file(fs::path(o.out) / "report.txt", text);
    if (o.format == "csv" || o.format == "both")
      io::write_text_file(fs::path(o.out) / "report.csv", csv);
    io::write_run_artifact(o.out, "report", {{"in", o.in}, {"format", o.format}}, o.seed,
                           {o.in});
  }
  return 0;
}

}  // namespace

// ---- argv wiring ----------------------------------------------------------------------

int run(int argc, const char* const* argv) {
  CLI::App app{"trackplan: synthetic point-track prediction and manipulation pipeline"};
  app.require_subcommand(1);

  GenDataOpts gen;
  CLI::App* c_gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  c_gen->add_option("--config", gen.config, "dataset config JSON")->required();
  c_gen->add_option("--out", gen.out, "dataset output directory")->required();
  c_gen->add_option("--seed", gen.seed, "master seed (overrides the config's seed field)")
      ->required();

  TrainOpts tracker;
  CLI::App* c_tracker = app.add_subcommand("train-tracker", "train the track-prediction model");
  add_train_flags(c_tracker, tracker);

  TrainResidualOpts residual;
  CLI::App* c_residual =
      app.add_subcommand("train-residual", "train the correction policy by behavior cloning");
  add_train_flags(c_residual, residual.base);
  c_residual->add_option("--mode", residual.mode,
                         "residual_correction (default) or direct_action");
  c_residual->add_option("--max-offset", residual.max_offset,
                         "per-demo grasp offsets drawn up to this magnitude (0 = fixed offset)");
  add_error_flags(c_residual, residual.err);

  PredictOpts predict;
  CLI::App* c_predict =
      app.add_subcommand("predict-tracks", "sample track predictions for dataset episodes");
  c_predict->add_option("--dataset", predict.dataset, "dataset directory")->required();
  c_predict->add_option("--checkpoint", predict.checkpoint, "tracker checkpoint")->required();
  c_predict->add_option("--out", predict.out, "output directory")->required();
  c_predict->add_option("--splits", predict.splits, "comma-separated split names (default: all)");
  c_predict->add_option("--episodes", predict.episodes, "cap per split (0 = all)");
  c_predict->add_option("--denoise-steps", predict.denoise_steps, "sampling steps");
  c_predict->add_option("--seed", predict.seed, "master seed")->required();

  FitOpts fit;
  CLI::App* c_fit = app.add_subcommand("fit", "recover per-step rigid transforms from tracks");
  c_fit->add_option("--dataset", fit.dataset, "dataset directory")->required();
  c_fit->add_option("--out", fit.out, "output directory")->required();
  c_fit->add_option("--tracks", fit.tracks, "predicted-tracks directory (from predict-tracks)");
  c_fit->add_flag("--ground-truth", fit.ground_truth, "fit the dataset's exact tracks instead");
  c_fit->add_option("--splits", fit.splits, "comma-separated split names (default: all)");
  c_fit->add_option("--episodes", fit.episodes, "cap per split (0 = all)");
  c_fit->add_option("--motion-threshold", fit.fit.motion_threshold,
                    "max-displacement split between moving and static points (px)");
  c_fit->add_option("--ransac-iters", fit.fit.ransac_iters, "consensus sampling iterations");
  c_fit->add_option("--inlier-px", fit.fit.ransac_inlier_px, "consensus reprojection gate (px)");
  c_fit->add_option("--huber-delta", fit.fit.huber_delta, "robust-loss transition point (px)");
  c_fit->add_flag("--no-huber", fit.no_huber, "plain least squares in the refinement");
  c_fit->add_flag("--independent-steps", fit.independent_steps,
                  "disable warm-starting each step from the previous one");
  c_fit->add_option("--seed", fit.seed, "master seed")->required();

  PlanOpts planner;
  CLI::App* c_plan = app.add_subcommand("plan", "derive end-effector plans from fitted transforms");
  c_plan->add_option("--dataset", planner.dataset, "dataset directory")->required();
  c_plan->add_option("--fit", planner.fit_dir, "fit output directory")->required();
  c_plan->add_option("--out", planner.out, "output directory")->required();
  c_plan->add_option("--splits", planner.splits, "comma-separated split names (default: all)");
  c_plan->add_option("--episodes", planner.episodes, "cap per split (0 = all)");
  c_plan->add_option("--seed", planner.seed, "master seed")->required();

  RolloutOpts rollout;
  CLI::App* c_roll = app.add_subcommand("rollout", "execute plans in the kinematic simulator");
  c_roll->add_option("--dataset", rollout.dataset, "dataset directory")->required();
  c_roll->add_option("--plan", rollout.plan_dir, "plan output directory")->required();
  c_roll->add_option("--out", rollout.out, "output directory")->required();
  c_roll->add_option("--policy", rollout.policy, "correction-policy checkpoint");
  c_roll->add_option("--tracks", rollout.tracks,
                     "predicted-tracks directory for policy conditioning (default: exact tracks)");
  c_roll->add_flag("--open-loop", rollout.open_loop, "execute the plan verbatim");
  c_roll->add_flag("--closed-loop", rollout.closed_loop, "apply per-step policy corrections");
  c_roll->add_option("--splits", rollout.splits, "comma-separated split names (default: all)");
  c_roll->add_option("--episodes", rollout.episodes, "cap per split (0 = all)");
  add_error_flags(c_roll, rollout.err);
  c_roll->add_option("--seed", rollout.seed, "master seed")->required();

  EvalOpts eval;
  CLI::App* c_eval = app.add_subcommand("eval", "run the end-to-end benchmark and write reports");
  c_eval->add_option("--dataset", eval.dataset, "dataset directory")->required();
  c_eval->add_option("--out", eval.out, "output directory")->required();
  c_eval->add_option("--policy", eval.policies, "policy checkpoint (repeat for mode comparisons)")
      ->required();
  c_eval->add_option("--tracker", eval.tracker, "tracker checkpoint (for --track-source predicted)");
  c_eval->add_option("--track-source", eval.source, "predicted or ground_truth");
  c_eval->add_option("--splits", eval.splits, "comma-separated split names (default: all)");
  c_eval->add_option("--episodes", eval.episodes, "episodes per split");
  c_eval->add_option("--denoise-steps", eval.denoise_steps, "sampling steps for predicted tracks");
  c_eval->add_option("--thresholds", eval.thresholds, "accuracy thresholds 1..N px");
  add_error_flags(c_eval, eval.err);
  c_eval->add_option("--seed", eval.seed, "master seed")->required();

  ReportOpts report;
  CLI::App* c_report = app.add_subcommand("report", "render a saved report as text or CSV");
  c_report->add_option("--in", report.in, "report.json produced by eval")->required();
  c_report->add_option("--format", report.format, "text, csv, or both");
  c_report->add_option("--out", report.out, "directory to write files to (default: stdout)");
  c_report->add_option("--seed", report.seed, "master seed")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_gen) return cmd_gen_data(gen);
    if (*c_tracker) return cmd_train_tracker(tracker);
    if (*c_residual) return cmd_train_residual(residual);
    if (*c_predict) return cmd_predict_tracks(predict);
    if (*c_fit) return cmd_fit(fit);
    if (*c_plan) return cmd_plan(planner);
    if (*c_roll) return cmd_rollout(rollout);
    if (*c_eval) return cmd_eval(eval);
    if (*c_report) return cmd_report(report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace trackplan::cli
