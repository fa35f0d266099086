#include "trackplan/simenv.hpp"

#include <algorithm>
#include <cmath>

#include "trackplan/errors.hpp"

namespace trackplan::sim {

namespace {

constexpr double kClosedThreshold = 0.5;
constexpr double kPi = 3.14159265358979323846;

bool is_closed(double gripper) { return gripper >= kClosedThreshold; }

geom::RigidTransform ee_transform(const plan::Pose& pose) {
  return {pose.orientation, pose.position};
}

}  // namespace

void ErrorModel::validate() const {
  if (!(grasp_radius > 0)) throw InvalidConfig("error model: grasp_radius must be positive");
  if (!(action_noise_sigma >= 0))
    throw InvalidConfig("error model: action_noise_sigma must be non-negative");
  if (!grasp_offset.allFinite()) throw InvalidConfig("error model: grasp_offset must be finite");
}

void GoalSpec::validate() const {
  if (!(rot_tol > 0)) throw InvalidConfig("goal: rot_tol must be positive");
  if (!(trans_tol > 0)) throw InvalidConfig("goal: trans_tol must be positive");
}

void SimConfig::validate() const {
  if (!(max_step_displacement > 0))
    throw InvalidConfig("sim: max_step_displacement must be positive");
}

plan::Pose home_pose(const synth::Episode& episode) {
  if (episode.points3d_t0.empty()) throw EmptyPointSet("home_pose: episode has no points");
  double mean_depth = 0.0;
  for (const auto& p : episode.points3d_t0) mean_depth += p.z();
  mean_depth /= static_cast<double>(episode.points3d_t0.size());
  // A quarter image-width left of the frame: the projected marker can never
  // touch the raster, so the reset observation equals the initial raster.
  const geom::Vec2 pixel(-0.25 * episode.intrinsics.width, 0.5 * episode.intrinsics.height);
  plan::Pose pose;
  pose.position = geom::backproject(episode.intrinsics, pixel, mean_depth);
  pose.orientation = geom::Rotation3::identity();
  pose.gripper = 0.0;
  return pose;
}

SimEnv::SimEnv(synth::Episode episode, ErrorModel error, SimConfig config)
    : episode_(std::move(episode)), error_(error), config_(config) {
  error_.validate();
  config_.validate();
  if (episode_.n_points() == 0) throw EmptyPointSet("sim: episode has no points");
  if (episode_.horizon < 1) throw InvalidConfig("sim: episode horizon must be >= 1");
  if (static_cast<int>(episode_.gt_transforms.size()) != episode_.horizon)
    throw ShapeMismatch("sim: transform count does not match horizon");
  centroid_t0_ = episode_.object_centroid();
  reset();
}

std::pair<SimState, Raster> SimEnv::reset() {
  state_ = SimState{};
  state_.object_pose = geom::RigidTransform::identity();
  state_.ee_pose = home_pose(episode_);
  state_.attached = false;
  state_.grip_transform = geom::RigidTransform::identity();
  state_.step = 0;
  state_.rng = Rng(child_seed(error_.seed, "rollout"));
  return {state_, observe()};
}

std::pair<SimState, Raster> SimEnv::step(const plan::Pose& commanded) {
  if (state_.step >= max_steps())
    throw HorizonExceeded("sim: rollout already ran for the full horizon");

  plan::Pose executed = commanded;
  executed.gripper = std::clamp(commanded.gripper, 0.0, 1.0);
  if (error_.action_noise_sigma > 0.0) {
    const double s = error_.action_noise_sigma;
    geom::Vec3 dp(state_.rng.normal(), state_.rng.normal(), state_.rng.normal());
    geom::Vec3 dr(state_.rng.normal(), state_.rng.normal(), state_.rng.normal());
    executed.position += s * dp;
    executed.orientation =
        geom::Rotation3::from_matrix(geom::rotation_exp(s * dr)) * commanded.orientation;
  }

  const double displacement = (executed.position - state_.ee_pose.position).norm();
  if (displacement > config_.max_step_displacement) {
    // Oversized motion is refused: the scene is untouched, the step is spent.
    state_.step += 1;
    return {state_, observe()};
  }

  const bool was_attached = state_.attached;
  const bool was_closed = is_closed(state_.ee_pose.gripper);
  const bool now_closed = is_closed(executed.gripper);

  state_.ee_pose = executed;

  if (was_attached && now_closed) {
    // The object is rigidly coupled to the gripper while it stays closed.
    state_.object_pose = geom::compose(ee_transform(executed), state_.grip_transform);
  } else if (was_attached && !now_closed) {
    state_.attached = false;
  } else if (!was_attached && !was_closed && now_closed) {
    // Closing the gripper grabs the object only when the commanded position
    // is close enough to the (error-displaced) graspable spot.
    const geom::Vec3 grasp_point =
        geom::apply(state_.object_pose, centroid_t0_) + error_.grasp_offset;
    if ((commanded.position - grasp_point).norm() <= error_.grasp_radius) {
      state_.attached = true;
      state_.grip_transform = geom::compose(geom::invert(ee_transform(executed)),
                                            state_.object_pose);
    }
  }

  state_.step += 1;
  return {state_, observe()};
}

Raster SimEnv::observe() const {
  std::vector<geom::Vec2> points;
  points.reserve(episode_.points3d_t0.size() + 1);
  for (int i = 0; i < episode_.n_points(); ++i) {
    geom::Vec3 p = episode_.points3d_t0[static_cast<std::size_t>(i)];
    if (episode_.object_mask[static_cast<std::size_t>(i)])
      p = geom::apply(state_.object_pose, p);
    if (!(p.z() > 0)) continue;  // behind the camera: invisible
    points.push_back(geom::project(episode_.intrinsics, p));
  }
  if (state_.ee_pose.position.z() > 0) {
    points.push_back(geom::project(episode_.intrinsics, state_.ee_pose.position));
  }
  return rasterize(points, episode_.intrinsics.width, episode_.intrinsics.height,
                   episode_.initial_raster.resolution);
}

bool success(const SimState& state, const GoalSpec& goal) {
  goal.validate();
  const double angle =
      geom::geodesic_angle(state.object_pose.rotation.m, goal.goal_object_pose.rotation.m);
  const double dist =
      (state.object_pose.translation - goal.goal_object_pose.translation).norm();
  return angle <= goal.rot_tol && dist <= goal.trans_tol;
}

GoalSpec default_goal(const synth::Episode& episode) {
  if (episode.gt_transforms.empty())
    throw InvalidConfig("default_goal: episode has no transforms");
  GoalSpec goal;
  goal.goal_object_pose = episode.gt_transforms.back();
  goal.goal_raster = episode.goal_raster;
  goal.rot_tol = 10.0 * kPi / 180.0;
  goal.trans_tol = 0.05 * episode.object_centroid().z();
  return goal;
}

Demo scripted_demo(const synth::Episode& episode, const ErrorModel& error,
                   const SimConfig& config) {
  SimEnv env(episode, error, config);

  std::vector<geom::Vec3> moving;
  for (int i = 0; i < episode.n_points(); ++i) {
    if (episode.object_mask[static_cast<std::size_t>(i)])
      moving.push_back(episode.points3d_t0[static_cast<std::size_t>(i)]);
  }
  plan::Pose grasp = plan::initial_grasp_pose(home_pose(episode), moving);
  // The expert knows the grasp error and aims at the displaced grasp point.
  grasp.position += error.grasp_offset;
  const plan::EndEffectorPlan expert = plan::open_loop_plan(episode.gt_transforms, grasp);

  Demo demo;
  demo.steps.reserve(expert.poses.size());
  Raster obs = env.reset().second;
  for (const auto& pose : expert.poses) {
    demo.steps.push_back({obs, pose});
    obs = env.step(pose).second;
  }
  return demo;
}

}  // namespace trackplan::sim
