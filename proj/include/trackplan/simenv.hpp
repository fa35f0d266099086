#pragma once

#include <utility>
#include <vector>

#include "trackplan/geometry.hpp"
#include "trackplan/planner.hpp"
#include "trackplan/raster.hpp"
#include "trackplan/rng.hpp"
#include "trackplan/synth.hpp"

// Deterministic kinematic manipulation environment: executes end-effector
// poses, models grasp attachment with an injectable error model, renders
// splat-raster observations, and judges success against a goal pose.
namespace trackplan::sim {

// Grasp and actuation disturbances. Attachment succeeds iff the commanded
// grasp position lies within grasp_radius of the object centroid displaced by
// grasp_offset; executed poses are perturbed by zero-mean Gaussian noise of
// scale action_noise_sigma.
struct ErrorModel {
  geom::Vec3 grasp_offset = geom::Vec3::Zero();
  double grasp_radius = 0.08;
  double action_noise_sigma = 0.0;
  std::uint64_t seed = 0;
  void validate() const;  // grasp_radius > 0, sigma >= 0
};

struct GoalSpec {
  geom::RigidTransform goal_object_pose;
  Raster goal_raster;
  double rot_tol = 0.0;    // radians
  double trans_tol = 0.0;  // scene units
  void validate() const;   // tolerances > 0
};

struct SimConfig {
  // Commands displacing the end-effector farther than this in one step are
  // halted (the state does not change except the step count).
  double max_step_displacement = 4.0;
  void validate() const;
};

// Value-type state: copying it (rng included) forks the rollout
// deterministically. Scene geometry stays in the env's episode.
struct SimState {
  geom::RigidTransform object_pose;  // relative to the episode's t=0 frame
  plan::Pose ee_pose;
  bool attached = false;
  geom::RigidTransform grip_transform;  // invert(ee) * object, fixed while attached
  int step = 0;
  Rng rng{0};
};

// Home pose: safely left of the frustum at the scene's mean depth, gripper
// open, identity orientation — guaranteed out of frame so the reset
// observation matches the episode's initial raster bitwise.
plan::Pose home_pose(const synth::Episode& episode);

class SimEnv {
 public:
  SimEnv(synth::Episode episode, ErrorModel error, SimConfig config = {});

  // Object at identity, end-effector at home, detached, step 0.
  std::pair<SimState, Raster> reset();

  // Executes one commanded pose against the stored state (noise, clamping,
  // attachment, rigid following), advances the step counter, and returns the
  // new state with its observation. Throws HorizonExceeded past max_steps().
  std::pair<SimState, Raster> step(const plan::Pose& commanded);

  // Splat raster of all scene points under the current object pose plus the
  // end-effector marker (when in front of the camera and in frame).
  Raster observe() const;

  const SimState& state() const { return state_; }
  void set_state(const SimState& s) { state_ = s; }
  const synth::Episode& episode() const { return episode_; }
  const ErrorModel& error_model() const { return error_; }
  // Approach + grasp prefix plus one slot per transform step.
  int max_steps() const { return episode_.horizon + 2; }

 private:
  synth::Episode episode_;
  ErrorModel error_;
  SimConfig config_;
  SimState state_;
  geom::Vec3 centroid_t0_ = geom::Vec3::Zero();
};

// True iff the object pose is within both tolerances of the goal pose.
bool success(const SimState& state, const GoalSpec& goal);

// Goal at the episode's final ground-truth transform; rot_tol 10 degrees,
// trans_tol 5% of the object's initial centroid depth.
GoalSpec default_goal(const synth::Episode& episode);

struct DemoStep {
  Raster observation;  // what the policy would see before acting
  plan::Pose action;
};

struct Demo {
  std::vector<DemoStep> steps;
};

// Expert rollout from ground-truth transforms with the grasp offset
// pre-compensated; length equals the open-loop plan length (H + 2).
Demo scripted_demo(const synth::Episode& episode, const ErrorModel& error,
                   const SimConfig& config = {});

}  // namespace trackplan::sim
