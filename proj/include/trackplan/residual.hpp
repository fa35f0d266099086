#pragma once

#include <string>
#include <vector>

#include "trackplan/nn.hpp"
#include "trackplan/planner.hpp"
#include "trackplan/simenv.hpp"
#include "trackplan/synth.hpp"
#include "trackplan/track.hpp"

// Closed-loop residual policy: a small adaLN-conditioned transformer that
// reads p track tokens plus an h-step window of the open-loop plan and
// predicts per-step pose corrections, trained by behavior cloning on
// simulator demos. Zero-initialized output layers make the untrained policy
// an exact no-op, so closed-loop execution starts identical to open-loop.
namespace trackplan::res {

using Mat = Eigen::MatrixXd;

// residual_correction: predict deltas added onto the plan (the default).
// direct_action: predict absolute end-effector poses with the same network,
// targets, tokens, and harness — the plan window is still an input but
// nothing is added at composition time.
enum class Mode { residual_correction, direct_action };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct ResidualConfig {
  int n_blocks = 3;     // full-scale reference uses 12
  int hidden_size = 96; // full-scale reference uses 512
  int n_heads = 4;
  int embed_dim = 96;
  int lookahead = 4;  // h: plan tokens in, deltas out
  int p_tokens = 64;  // track tokens per forward pass
  int horizon = 16;   // trajectory length carried by each track token
  int raster_resolution = 64;
  int enc_c1 = 8;
  int enc_c2 = 16;
  int image_width = 256;
  int image_height = 256;
  Mode mode = Mode::residual_correction;

  void validate() const;
  int track_token_dim() const { return 2 * horizon; }
  static constexpr int kPoseDim = 7;  // position 3 + rotation tangent 3 + gripper 1
};

// One per-step correction in the tangent space of the pose.
struct PoseDelta {
  geom::Vec3 translation = geom::Vec3::Zero();
  geom::Vec3 rotation = geom::Vec3::Zero();  // axis-angle, norm < pi
  double gripper = 0.0;
};

struct ResidualPolicy {
  ResidualConfig config;
  nn::ParamStore params;

  static ResidualPolicy init(const ResidualConfig& config, std::uint64_t seed);
};

// 7-channel tangent encoding of a pose: [position, rotation_log, gripper].
Eigen::RowVectorXd encode_pose(const plan::Pose& pose);

// Per-channel difference demo - plan; rotations via the log of the relative
// rotation. Bitwise-identical poses produce an exactly zero delta.
PoseDelta pose_delta(const plan::Pose& plan_pose, const plan::Pose& demo_pose);

// position added, orientation rotated by exp(delta.rotation), gripper clamped
// to [0,1]. An all-zero delta returns plan_pose untouched, bit for bit.
plan::Pose compose_action(const plan::Pose& plan_pose, const PoseDelta& delta);

// The h plan poses starting at step t, tail-padded by repeating the final
// pose past the end of the plan.
std::vector<plan::Pose> plan_window(const plan::EndEffectorPlan& plan, int t, int h);

// One forward pass: h corrections for steps t .. t+h-1. tracks must hold
// exactly p_tokens points over the configured horizon, in pixel space.
std::vector<PoseDelta> predict_residuals(const ResidualPolicy& policy, const Raster& obs,
                                         const Raster& goal, const TrackTensor& tracks,
                                         const std::vector<plan::Pose>& window, int t);

// A behavior-cloning sample: the demo, the open-loop plan it corrects, and
// the (sub-sampled) track conditioning captured at collection time.
struct TrainingDemo {
  const synth::Episode* episode = nullptr;  // owns the goal raster and geometry
  sim::Demo demo;
  plan::EndEffectorPlan plan;
  TrackTensor tracks;  // pixel space, exactly p_tokens points
};

// Collects a scripted demo plus its (uncompensated) ground-truth open-loop
// plan and subsampled ground-truth tracks for the given episode.
TrainingDemo collect_training_demo(const synth::Episode& episode, const sim::ErrorModel& error,
                                   int p_tokens, std::uint64_t seed);

// Mean over the batch of the per-demo lookahead MSE at one sampled step per
// demo (step choice keyed on episode content, so duplicates contribute
// identical terms). Returns the loss without updating parameters.
double bc_loss(const ResidualPolicy& policy, const std::vector<const TrainingDemo*>& batch,
               std::uint64_t seed);

// One Adam update on the behavior-cloning loss. Throws NonFiniteLoss before
// touching the parameters if the loss is not finite.
double bc_train_step(ResidualPolicy& policy, const std::vector<const TrainingDemo*>& batch,
                     nn::AdamState& opt, const nn::AdamConfig& cfg, std::uint64_t seed);

struct RolloutTrace {
  std::vector<plan::Pose> actions;  // the pose commanded at each step
  std::vector<geom::RigidTransform> object_poses;
  bool success = false;
};

// Executes the plan verbatim through the simulator.
RolloutTrace rollout_open_loop(const synth::Episode& episode, const plan::EndEffectorPlan& plan,
                               const sim::ErrorModel& error, const sim::GoalSpec& goal,
                               const sim::SimConfig& config = {});

// At every step: predict h corrections from the current observation, compose
// the first with the planned pose (or use it as the action directly in
// direct_action mode), and execute it.
RolloutTrace rollout_closed_loop(const ResidualPolicy& policy, const synth::Episode& episode,
                                 const TrackTensor& tracks, const plan::EndEffectorPlan& plan,
                                 const sim::ErrorModel& error, const sim::GoalSpec& goal,
                                 const sim::SimConfig& config = {});

void save_policy(const ResidualPolicy& policy, const std::string& path);
ResidualPolicy load_policy(const std::string& path);

}  // namespace trackplan::res
