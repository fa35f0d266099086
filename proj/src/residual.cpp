#include "trackplan/residual.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "trackplan/errors.hpp"
#include "trackplan/io.hpp"
#include "trackplan/models.hpp"
#include "trackplan/rng.hpp"

namespace trackplan::res {

namespace {

nn::RasterEncoderConfig encoder_config(const ResidualConfig& cfg) {
  nn::RasterEncoderConfig ec;
  ec.resolution = cfg.raster_resolution;
  ec.c1 = cfg.enc_c1;
  ec.c2 = cfg.enc_c2;
  ec.embed_dim = cfg.embed_dim;
  return ec;
}

bool all_zero(const PoseDelta& d) {
  return d.translation.x() == 0.0 && d.translation.y() == 0.0 && d.translation.z() == 0.0 &&
         d.rotation.x() == 0.0 && d.rotation.y() == 0.0 && d.rotation.z() == 0.0 &&
         d.gripper == 0.0;
}

Eigen::RowVectorXd encode_delta(const PoseDelta& d) {
  Eigen::RowVectorXd row(ResidualConfig::kPoseDim);
  row << d.translation.x(), d.translation.y(), d.translation.z(), d.rotation.x(), d.rotation.y(),
      d.rotation.z(), d.gripper;
  return row;
}

// Fixed sinusoidal identity for each of the h plan-window slots; track tokens
// get none, preserving their permutation invariance.
Mat slot_embeddings(int h, int hidden) {
  Mat slots(h, hidden);
  for (int i = 0; i < h; ++i)
    slots.row(i) = nn::sinusoidal_embedding(static_cast<double>(i), hidden);
  return slots;
}

// Forward pass shared by inference and training; returns the h x 7 output
// block read off the plan-token positions.
nn::Var residual_graph(nn::Tape& tape, nn::ParamStore& params, const ResidualConfig& cfg,
                       const Mat& track_values, const Mat& window_rows, const Raster& obs,
                       const Raster& goal, int t) {
  nn::Var x_track = nn::linear(params, "in_track", tape.constant(track_values));
  nn::Var x_plan = nn::add(nn::linear(params, "in_plan", tape.constant(window_rows)),
                           tape.constant(slot_embeddings(cfg.lookahead, cfg.hidden_size)));
  nn::Var x = nn::concat_rows(x_track, x_plan);

  nn::Var z_obs = nn::encode_raster(tape, params, "enc", encoder_config(cfg), obs);
  nn::Var z_goal = nn::encode_raster(tape, params, "enc", encoder_config(cfg), goal);
  nn::Var z_t = nn::embed_timestep(tape, params, "temb", static_cast<double>(t), cfg.embed_dim);
  nn::Var cond_act = nn::silu(nn::add(nn::add(z_obs, z_goal), z_t));

  for (int b = 0; b < cfg.n_blocks; ++b)
    x = nn::dit_block(params, "blk" + std::to_string(b), x, cond_act, cfg.n_heads);
  nn::Var out = nn::dit_final(params, "final", x, cond_act);
  return nn::slice_rows(out, cfg.p_tokens, cfg.lookahead);
}

Mat window_matrix(const std::vector<plan::Pose>& window) {
  Mat rows(static_cast<Eigen::Index>(window.size()), ResidualConfig::kPoseDim);
  for (std::size_t i = 0; i < window.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = encode_pose(window[i]);
  return rows;
}

void check_forward_inputs(const ResidualConfig& cfg, const Raster& obs, const Raster& goal,
                          const TrackTensor& tracks, const std::vector<plan::Pose>& window,
                          int t) {
  if (obs.resolution != cfg.raster_resolution || goal.resolution != cfg.raster_resolution)
    throw ShapeMismatch("residual: raster resolution does not match the policy");
  if (tracks.p != cfg.p_tokens)
    throw ShapeMismatch("residual: track count does not match p_tokens");
  if (tracks.H != cfg.horizon)
    throw ShapeMismatch("residual: track horizon does not match the policy");
  if (tracks.space != CoordSpace::pixels)
    throw ShapeMismatch("residual: tracks must be in pixel space");
  if (static_cast<int>(window.size()) != cfg.lookahead)
    throw ShapeMismatch("residual: plan window must hold exactly h poses");
  if (t < 0) throw InvalidConfig("residual: step index must be non-negative");
}

plan::Pose action_from_prediction(Mode mode, const plan::Pose& plan_pose,
                                  const PoseDelta& delta) {
  if (mode == Mode::residual_correction) return compose_action(plan_pose, delta);
  plan::Pose pose;
  pose.position = delta.translation;
  pose.orientation = geom::Rotation3::from_matrix(geom::rotation_exp(delta.rotation));
  pose.gripper = std::clamp(delta.gripper, 0.0, 1.0);
  return pose;
}

Eigen::RowVectorXd target_row(Mode mode, const plan::Pose& plan_pose,
                              const plan::Pose& demo_pose) {
  if (mode == Mode::residual_correction) return encode_delta(pose_delta(plan_pose, demo_pose));
  return encode_pose(demo_pose);
}

void check_batch(const std::vector<const TrainingDemo*>& batch, const ResidualConfig& cfg) {
  if (batch.empty()) throw InvalidConfig("behavior-cloning batch must be nonempty");
  for (const TrainingDemo* d : batch) {
    if (d == nullptr || d->episode == nullptr)
      throw InvalidConfig("behavior-cloning batch holds a null demo");
    if (d->demo.steps.empty()) throw InvalidConfig("demo has no steps");
    if (d->demo.steps.size() != d->plan.poses.size())
      throw ShapeMismatch("demo and plan lengths disagree");
    if (d->tracks.p != cfg.p_tokens || d->tracks.H != cfg.horizon)
      throw ShapeMismatch("demo tracks do not match the policy shape");
    if (d->episode->goal_raster.resolution != cfg.raster_resolution)
      throw ShapeMismatch("episode raster resolution does not match the policy");
  }
}

double batch_pass(ResidualPolicy& policy, const std::vector<const TrainingDemo*>& batch,
                  std::uint64_t seed, bool with_grad) {
  check_batch(batch, policy.config);
  const ResidualConfig& cfg = policy.config;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainingDemo* d : batch) {
    // Keyed on the episode's generation seed so a duplicated batch entry
    // contributes the identical term.
    Rng rng(child_seed(seed, "bc", d->episode->seed));
    const int length = static_cast<int>(d->plan.poses.size());
    const int t = rng.uniform_int(length);

    const std::vector<plan::Pose> window = plan_window(d->plan, t, cfg.lookahead);
    Mat targets(cfg.lookahead, ResidualConfig::kPoseDim);
    for (int i = 0; i < cfg.lookahead; ++i) {
      const int j = std::min(t + i, length - 1);
      targets.row(i) = target_row(cfg.mode, d->plan.poses[static_cast<std::size_t>(j)],
                                  d->demo.steps[static_cast<std::size_t>(j)].action);
    }

    const TrackTensor normed =
        to_normalized(d->tracks, cfg.image_width, cfg.image_height);
    nn::Tape tape;
    nn::Var pred = residual_graph(tape, policy.params, cfg, normed.values,
                                  window_matrix(window),
                                  d->demo.steps[static_cast<std::size_t>(t)].observation,
                                  d->episode->goal_raster, t);
    nn::Var demo_loss = nn::mean_all(nn::square(nn::sub(pred, tape.constant(targets))));
    total += demo_loss.val()(0, 0) * inv_b;
    if (with_grad) tape.backward(demo_loss, inv_b);
  }
  return total;
}

}  // namespace

std::string to_string(Mode mode) {
  return mode == Mode::residual_correction ? "residual_correction" : "direct_action";
}

Mode mode_from_string(const std::string& s) {
  if (s == "residual_correction") return Mode::residual_correction;
  if (s == "direct_action") return Mode::direct_action;
  throw InvalidConfig("unknown residual mode: " + s);
}

void ResidualConfig::validate() const {
  if (n_blocks < 1 || hidden_size < 1 || n_heads < 1 || embed_dim < 1)
    throw InvalidConfig("residual config: counts must be positive");
  if (hidden_size % n_heads != 0)
    throw InvalidConfig("residual config: hidden_size must be divisible by n_heads");
  if (lookahead < 1) throw InvalidConfig("residual config: lookahead must be >= 1");
  if (p_tokens < 1) throw InvalidConfig("residual config: p_tokens must be >= 1");
  if (horizon < 1) throw InvalidConfig("residual config: horizon must be >= 1");
  if (raster_resolution < 16) throw InvalidConfig("residual config: raster resolution too small");
  if (enc_c1 < 1 || enc_c2 < 1) throw InvalidConfig("residual config: encoder channels");
  if (image_width < 1 || image_height < 1) throw InvalidConfig("residual config: image size");
}

ResidualPolicy ResidualPolicy::init(const ResidualConfig& config, std::uint64_t seed) {
  config.validate();
  ResidualPolicy policy;
  policy.config = config;
  nn::ParamStore& s = policy.params;
  nn::add_raster_encoder(s, "enc", encoder_config(config));
  nn::init_raster_encoder(s, "enc", seed);
  nn::add_timestep_embedder(s, "temb", config.embed_dim);
  nn::init_timestep_embedder(s, "temb", seed);
  nn::add_linear(s, "in_track", config.track_token_dim(), config.hidden_size);
  nn::init_linear_xavier(s, "in_track", seed);
  nn::add_linear(s, "in_plan", ResidualConfig::kPoseDim, config.hidden_size);
  nn::init_linear_xavier(s, "in_plan", seed);
  for (int b = 0; b < config.n_blocks; ++b) {
    const std::string prefix = "blk" + std::to_string(b);
    nn::add_dit_block(s, prefix, config.hidden_size, config.embed_dim);
    nn::init_dit_block(s, prefix, seed);
  }
  // Zero-initialized output head: the untrained policy is an exact no-op.
  nn::add_dit_final(s, "final", config.hidden_size, config.embed_dim, ResidualConfig::kPoseDim);
  return policy;
}

Eigen::RowVectorXd encode_pose(const plan::Pose& pose) {
  Eigen::RowVectorXd row(ResidualConfig::kPoseDim);
  const geom::Vec3 w = geom::rotation_log(pose.orientation.m);
  row << pose.position.x(), pose.position.y(), pose.position.z(), w.x(), w.y(), w.z(),
      pose.gripper;
  return row;
}

PoseDelta pose_delta(const plan::Pose& plan_pose, const plan::Pose& demo_pose) {
  PoseDelta d;
  d.translation = demo_pose.position - plan_pose.position;
  // Bitwise-equal orientations short-circuit to an exactly zero tangent, so
  // error-free demos produce exactly zero targets.
  if ((demo_pose.orientation.m.array() == plan_pose.orientation.m.array()).all()) {
    d.rotation = geom::Vec3::Zero();
  } else {
    d.rotation =
        geom::rotation_log(demo_pose.orientation.m * plan_pose.orientation.m.transpose());
  }
  d.gripper = demo_pose.gripper - plan_pose.gripper;
  return d;
}

plan::Pose compose_action(const plan::Pose& plan_pose, const PoseDelta& delta) {
  // The identity correction must be a bit-for-bit pass-through.
  if (all_zero(delta)) return plan_pose;
  plan::Pose pose;
  pose.position = plan_pose.position + delta.translation;
  pose.orientation =
      geom::Rotation3::from_matrix(geom::rotation_exp(delta.rotation)) * plan_pose.orientation;
  pose.gripper = std::clamp(plan_pose.gripper + delta.gripper, 0.0, 1.0);
  return pose;
}

std::vector<plan::Pose> plan_window(const plan::EndEffectorPlan& plan, int t, int h) {
  if (plan.poses.empty()) throw InvalidConfig("plan window: plan is empty");
  if (t < 0 || h < 1) throw InvalidConfig("plan window: need t >= 0 and h >= 1");
  std::vector<plan::Pose> window;
  window.reserve(static_cast<std::size_t>(h));
  const int last = static_cast<int>(plan.poses.size()) - 1;
  for (int i = 0; i < h; ++i)
    window.push_back(plan.poses[static_cast<std::size_t>(std::min(t + i, last))]);
  return window;
}

std::vector<PoseDelta> predict_residuals(const ResidualPolicy& policy, const Raster& obs,
                                         const Raster& goal, const TrackTensor& tracks,
                                         const std::vector<plan::Pose>& window, int t) {
  const ResidualConfig& cfg = policy.config;
  check_forward_inputs(cfg, obs, goal, tracks, window, t);
  const TrackTensor normed = to_normalized(tracks, cfg.image_width, cfg.image_height);
  nn::Tape tape;
  // Inference-only pass: the tape is local and backward is never invoked, so
  // the parameter store is read, not written.
  nn::Var out = residual_graph(tape, const_cast<nn::ParamStore&>(policy.params), cfg,
                               normed.values, window_matrix(window), obs, goal, t);
  const Mat& rows = out.val();
  std::vector<PoseDelta> deltas(static_cast<std::size_t>(cfg.lookahead));
  for (int i = 0; i < cfg.lookahead; ++i) {
    deltas[static_cast<std::size_t>(i)].translation =
        geom::Vec3(rows(i, 0), rows(i, 1), rows(i, 2));
    deltas[static_cast<std::size_t>(i)].rotation = geom::Vec3(rows(i, 3), rows(i, 4), rows(i, 5));
    deltas[static_cast<std::size_t>(i)].gripper = rows(i, 6);
  }
  return deltas;
}

TrainingDemo collect_training_demo(const synth::Episode& episode, const sim::ErrorModel& error,
                                   int p_tokens, std::uint64_t seed) {
  if (episode.n_points() < p_tokens)
    throw ShapeMismatch("episode has fewer points than the requested track token count");
  TrainingDemo d;
  d.episode = &episode;
  d.demo = sim::scripted_demo(episode, error);
  std::vector<geom::Vec3> moving;
  for (int i = 0; i < episode.n_points(); ++i)
    if (episode.object_mask[static_cast<std::size_t>(i)])
      moving.push_back(episode.points3d_t0[static_cast<std::size_t>(i)]);
  // The plan is built without knowledge of the grasp error; the demo's expert
  // compensation is exactly what the policy must learn to reproduce.
  const plan::Pose e1 = plan::initial_grasp_pose(sim::home_pose(episode), moving);
  d.plan = plan::open_loop_plan(episode.gt_transforms, e1);
  d.tracks = synth::subsample_points(episode, p_tokens, child_seed(seed, "demo-tracks")).gt_tracks;
  return d;
}

double bc_loss(const ResidualPolicy& policy, const std::vector<const TrainingDemo*>& batch,
               std::uint64_t seed) {
  return batch_pass(const_cast<ResidualPolicy&>(policy), batch, seed, false);
}

double bc_train_step(ResidualPolicy& policy, const std::vector<const TrainingDemo*>& batch,
                     nn::AdamState& opt, const nn::AdamConfig& cfg, std::uint64_t seed) {
  policy.params.zero_grads();
  const double value = batch_pass(policy, batch, seed, true);
  if (!std::isfinite(value))
    throw NonFiniteLoss("behavior-cloning loss is not finite; parameters left untouched");
  nn::adam_step(policy.params, opt, cfg);
  return value;
}

RolloutTrace rollout_open_loop(const synth::Episode& episode, const plan::EndEffectorPlan& plan,
                               const sim::ErrorModel& error, const sim::GoalSpec& goal,
                               const sim::SimConfig& config) {
  sim::SimEnv env(episode, error, config);
  env.reset();
  RolloutTrace trace;
  trace.actions.reserve(plan.poses.size());
  trace.object_poses.reserve(plan.poses.size());
  for (const plan::Pose& pose : plan.poses) {
    const auto [state, obs] = env.step(pose);
    trace.actions.push_back(pose);
    trace.object_poses.push_back(state.object_pose);
  }
  trace.success = sim::success(env.state(), goal);
  return trace;
}

RolloutTrace rollout_closed_loop(const ResidualPolicy& policy, const synth::Episode& episode,
                                 const TrackTensor& tracks, const plan::EndEffectorPlan& plan,
                                 const sim::ErrorModel& error, const sim::GoalSpec& goal,
                                 const sim::SimConfig& config) {
  if (plan.poses.empty()) throw InvalidConfig("closed-loop rollout: plan is empty");
  sim::SimEnv env(episode, error, config);
  Raster obs = env.reset().second;
  RolloutTrace trace;
  trace.actions.reserve(plan.poses.size());
  trace.object_poses.reserve(plan.poses.size());
  for (int t = 0; t < static_cast<int>(plan.poses.size()); ++t) {
    const std::vector<plan::Pose> window = plan_window(plan, t, policy.config.lookahead);
    const std::vector<PoseDelta> deltas =
        predict_residuals(policy, obs, episode.goal_raster, tracks, window, t);
    const plan::Pose action = action_from_prediction(
        policy.config.mode, plan.poses[static_cast<std::size_t>(t)], deltas[0]);
    const auto [state, next_obs] = env.step(action);
    trace.actions.push_back(action);
    trace.object_poses.push_back(state.object_pose);
    obs = next_obs;
  }
  trace.success = sim::success(env.state(), goal);
  return trace;
}

void save_policy(const ResidualPolicy& policy, const std::string& path) {
  io::Checkpoint ck;
  ck.kind = "residual-policy";
  ck.meta = {{"config",
              {{"n_blocks", policy.config.n_blocks},
               {"hidden_size", policy.config.hidden_size},
               {"n_heads", policy.config.n_heads},
               {"embed_dim", policy.config.embed_dim},
               {"lookahead", policy.config.lookahead},
               {"p_tokens", policy.config.p_tokens},
               {"horizon", policy.config.horizon},
               {"raster_resolution", policy.config.raster_resolution},
               {"enc_c1", policy.config.enc_c1},
               {"enc_c2", policy.config.enc_c2},
               {"image_width", policy.config.image_width},
               {"image_height", policy.config.image_height},
               {"mode", to_string(policy.config.mode)}}}};
  for (const auto& [name, value] : policy.params.values) ck.tensors.emplace_back(name, value);
  io::write_checkpoint(path, ck);
}

ResidualPolicy load_policy(const std::string& path) {
  const io::Checkpoint ck = io::read_checkpoint(path);
  if (ck.kind != "residual-policy")
    throw IoError("checkpoint at " + path + " is not a residual-policy");
  ResidualConfig cfg;
  const auto& jc = ck.meta.at("config");
  cfg.n_blocks = jc.at("n_blocks").get<int>();
  cfg.hidden_size = jc.at("hidden_size").get<int>();
  cfg.n_heads = jc.at("n_heads").get<int>();
  cfg.embed_dim = jc.at("embed_dim").get<int>();
  cfg.lookahead = jc.at("lookahead").get<int>();
  cfg.p_tokens = jc.at("p_tokens").get<int>();
  cfg.horizon = jc.at("horizon").get<int>();
  cfg.raster_resolution = jc.at("raster_resolution").get<int>();
  cfg.enc_c1 = jc.at("enc_c1").get<int>();
  cfg.enc_c2 = jc.at("enc_c2").get<int>();
  cfg.image_width = jc.at("image_width").get<int>();
  cfg.image_height = jc.at("image_height").get<int>();
  cfg.mode = mode_from_string(jc.at("mode").get<std::string>());
  ResidualPolicy policy = ResidualPolicy::init(cfg, 0);
  if (ck.tensors.size() != policy.params.values.size())
    throw IoError("checkpoint tensor count does not match the architecture");
  for (const auto& [name, value] : ck.tensors) {
    Mat& dst = policy.params.at(name);
    if (dst.rows() != value.rows() || dst.cols() != value.cols())
      throw IoError("checkpoint tensor shape mismatch for " + name);
    dst = value;
  }
  return policy;
}

}  // namespace trackplan::res
