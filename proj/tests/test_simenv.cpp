#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "testsupport.hpp"
#include "trackplan/errors.hpp"
#include "trackplan/planner.hpp"
#include "trackplan/rng.hpp"
#include "trackplan/simenv.hpp"
#include "trackplan/synth.hpp"

using namespace trackplan;
using namespace trackplan::sim;
using geom::RigidTransform;
using geom::Rotation3;
using geom::Vec3;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool same_matrix(const geom::Mat3& a, const geom::Mat3& b) {
  return (a.array() == b.array()).all();
}

bool same_vec(const Vec3& a, const Vec3& b) { return (a.array() == b.array()).all(); }

bool same_pose(const plan::Pose& a, const plan::Pose& b) {
  return same_vec(a.position, b.position) && same_matrix(a.orientation.m, b.orientation.m) &&
         a.gripper == b.gripper;
}

synth::DatasetConfig small_config() {
  synth::DatasetConfig cfg;
  cfg.name = "sim-test";
  cfg.seed = 4242;
  cfg.horizon = 8;
  cfg.points_min = 60;
  cfg.points_max = 90;
  cfg.splits["train"] = {6,
                         {{synth::ShapeKind::box, synth::FamilyKind::translation_line},
                          {synth::ShapeKind::cylinder_shell,
                           synth::FamilyKind::rotation_about_scene_axis},
                          {synth::ShapeKind::handle_bar, synth::FamilyKind::arc_pull}}};
  return cfg;
}

synth::Episode make_episode(int index = 0) {
  return synth::generate_episode(small_config(), "train", index);
}

std::vector<Vec3> moving_points(const synth::Episode& ep) {
  std::vector<Vec3> out;
  for (int i = 0; i < ep.n_points(); ++i)
    if (ep.object_mask[static_cast<std::size_t>(i)])
      out.push_back(ep.points3d_t0[static_cast<std::size_t>(i)]);
  return out;
}

plan::EndEffectorPlan gt_plan(const synth::Episode& ep) {
  const plan::Pose e1 = plan::initial_grasp_pose(home_pose(ep), moving_points(ep));
  return plan::open_loop_plan(ep.gt_transforms, e1);
}

RigidTransform random_rigid(Rng& rng, double rot_scale, double trans_scale) {
  const Vec3 w(rng.normal(), rng.normal(), rng.normal());
  const Vec3 t(rng.normal(), rng.normal(), rng.normal());
  return {Rotation3::from_matrix(geom::rotation_exp(rot_scale * w)), trans_scale * t};
}

}  // namespace

TEST_CASE("reset: initial conditions and bitwise agreement with the episode raster") {
  const synth::Episode ep = make_episode();
  SimEnv env(ep, ErrorModel{});
  auto [state, obs] = env.reset();

  CHECK(state.attached == false);
  CHECK(state.step == 0);
  CHECK(same_matrix(state.object_pose.rotation.m, geom::Mat3::Identity()));
  CHECK(same_vec(state.object_pose.translation, Vec3::Zero()));
  CHECK(same_pose(state.ee_pose, home_pose(ep)));
  CHECK(state.ee_pose.gripper == 0.0);

  // The home pose projects left of the frame, so the observation must equal
  // the episode's initial raster bit for bit.
  CHECK((obs.cells.array() == ep.initial_raster.cells.array()).all());

  auto [state2, obs2] = env.reset();
  CHECK(same_pose(state2.ee_pose, state.ee_pose));
  CHECK((obs2.cells.array() == obs.cells.array()).all());
}

TEST_CASE("open-gripper motion far from the object leaves it untouched") {
  const synth::Episode ep = make_episode();
  SimEnv env(ep, ErrorModel{});
  env.reset();
  plan::Pose cmd = home_pose(ep);
  for (int i = 0; i < 4; ++i) {
    cmd.position += Vec3(0.3, 0.1, -0.05);
    const auto [state, obs] = env.step(cmd);
    CHECK(same_matrix(state.object_pose.rotation.m, geom::Mat3::Identity()));
    CHECK(same_vec(state.object_pose.translation, Vec3::Zero()));
    CHECK(state.attached == false);
  }
}

TEST_CASE("perfect grasp then translation moves the object by exactly that translation") {
  const synth::Episode ep = make_episode();
  SimEnv env(ep, ErrorModel{});
  env.reset();

  plan::Pose grasp;
  grasp.position = ep.object_centroid();
  grasp.gripper = 0.0;
  env.step(grasp);  // approach, open
  grasp.gripper = 1.0;
  auto [attached_state, obs1] = env.step(grasp);
  REQUIRE(attached_state.attached);

  const Vec3 d(0.25, -0.125, 0.0625);
  plan::Pose moved = grasp;
  moved.position += d;
  const auto [state, obs2] = env.step(moved);
  CHECK((state.object_pose.translation - d).norm() < 1e-12);
  CHECK(geom::geodesic_angle(state.object_pose.rotation.m, geom::Mat3::Identity()) < 1e-12);
}

TEST_CASE("grasp offset twice the radius prevents attachment for the whole rollout") {
  const synth::Episode ep = make_episode();
  ErrorModel error;
  error.grasp_offset = Vec3(2.0 * error.grasp_radius, 0.0, 0.0);
  SimEnv env(ep, error);
  env.reset();

  const plan::EndEffectorPlan plan = gt_plan(ep);
  for (const auto& pose : plan.poses) {
    const auto [state, obs] = env.step(pose);
    CHECK(state.attached == false);
  }
  CHECK(same_vec(env.state().object_pose.translation, Vec3::Zero()));
  CHECK(same_matrix(env.state().object_pose.rotation.m, geom::Mat3::Identity()));
}

TEST_CASE("attachment requires an open-to-closed transition at the grasp point") {
  const synth::Episode ep = make_episode();
  SimEnv env(ep, ErrorModel{});
  env.reset();

  // Close far from the object: no attachment.
  plan::Pose far = home_pose(ep);
  far.gripper = 1.0;
  CHECK(env.step(far).first.attached == false);

  // Move onto the centroid while already closed: still no transition.
  plan::Pose at_centroid = far;
  at_centroid.position = ep.object_centroid();
  CHECK(env.step(at_centroid).first.attached == false);

  // Re-open, then close in place: now it grabs.
  plan::Pose open = at_centroid;
  open.gripper = 0.0;
  CHECK(env.step(open).first.attached == false);
  plan::Pose close = at_centroid;
  close.gripper = 1.0;
  CHECK(env.step(close).first.attached == true);
}

TEST_CASE("attachment rigidity: gripper-to-object transform constant within 1e-12") {
  const synth::Episode ep = make_episode(1);
  SimEnv env(ep, ErrorModel{});
  env.reset();

  const plan::EndEffectorPlan plan = gt_plan(ep);
  bool saw_attached = false;
  RigidTransform grip0;
  for (const auto& pose : plan.poses) {
    const auto [state, obs] = env.step(pose);
    if (!state.attached) continue;
    const RigidTransform ee{state.ee_pose.orientation, state.ee_pose.position};
    const RigidTransform grip = geom::compose(geom::invert(ee), state.object_pose);
    if (!saw_attached) {
      saw_attached = true;
      grip0 = grip;
    } else {
      CHECK((grip.rotation.m - grip0.rotation.m).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((grip.translation - grip0.translation).norm() < 1e-12);
    }
  }
  CHECK(saw_attached);
}

TEST_CASE("ground-truth plan drives the object to the final transform on every episode") {
  const synth::DatasetConfig cfg = small_config();
  for (int i = 0; i < 6; ++i) {
    const synth::Episode ep = synth::generate_episode(cfg, "train", i);
    SimEnv env(ep, ErrorModel{});
    env.reset();
    for (const auto& pose : gt_plan(ep).poses) env.step(pose);

    const RigidTransform& target = ep.gt_transforms.back();
    const RigidTransform& reached = env.state().object_pose;
    CHECK(geom::geodesic_angle(reached.rotation.m, target.rotation.m) < 1e-9);
    CHECK((reached.translation - target.translation).norm() < 1e-9);
    CHECK(success(env.state(), default_goal(ep)));
  }
}

TEST_CASE("success: exact match, tolerance boundary, and displacement symmetry") {
  GoalSpec goal;
  goal.goal_object_pose = {Rotation3::about_axis(Vec3(0, 1, 0), 0.3), Vec3(0.1, 0.2, 0.3)};
  goal.rot_tol = 10.0 * kPi / 180.0;
  goal.trans_tol = 0.1;

  SimState state;
  state.object_pose = goal.goal_object_pose;
  CHECK(success(state, goal));

  // Rotation off by twice the tolerance fails; half the tolerance passes.
  SimState rotated = state;
  rotated.object_pose.rotation =
      Rotation3::about_axis(Vec3(1, 0, 0), 2.0 * goal.rot_tol) * state.object_pose.rotation;
  CHECK_FALSE(success(rotated, goal));
  rotated.object_pose.rotation =
      Rotation3::about_axis(Vec3(1, 0, 0), 0.5 * goal.rot_tol) * state.object_pose.rotation;
  CHECK(success(rotated, goal));

  SimState shifted = state;
  shifted.object_pose.translation += Vec3(2.0 * goal.trans_tol, 0, 0);
  CHECK_FALSE(success(shifted, goal));
  shifted.object_pose.translation = state.object_pose.translation + Vec3(0.5 * goal.trans_tol, 0, 0);
  CHECK(success(shifted, goal));

  // Displacing state and goal by the same rigid transform never changes the
  // verdict.
  Rng rng(991);
  int flips = 0;
  for (int i = 0; i < 200; ++i) {
    SimState s;
    s.object_pose = random_rigid(rng, 0.15, 0.1);
    GoalSpec g = goal;
    g.goal_object_pose = random_rigid(rng, 0.15, 0.1);
    const bool before = success(s, g);

    const RigidTransform d = random_rigid(rng, 1.0, 5.0);
    SimState s2 = s;
    s2.object_pose = geom::compose(d, s.object_pose);
    GoalSpec g2 = g;
    g2.goal_object_pose = geom::compose(d, g.goal_object_pose);
    if (success(s2, g2) != before) ++flips;
  }
  CHECK(flips == 0);
}

TEST_CASE("default goal mirrors the episode") {
  const synth::Episode ep = make_episode(2);
  const GoalSpec goal = default_goal(ep);
  CHECK(same_matrix(goal.goal_object_pose.rotation.m, ep.gt_transforms.back().rotation.m));
  CHECK(same_vec(goal.goal_object_pose.translation, ep.gt_transforms.back().translation));
  CHECK((goal.goal_raster.cells.array() == ep.goal_raster.cells.array()).all());
  CHECK(goal.rot_tol == doctest::Approx(10.0 * kPi / 180.0).epsilon(1e-12));
  CHECK(goal.trans_tol == doctest::Approx(0.05 * ep.object_centroid().z()).epsilon(1e-12));
}

TEST_CASE("scripted demo: zero error model reproduces the ground-truth plan exactly") {
  const synth::Episode ep = make_episode(3);
  const Demo demo = scripted_demo(ep, ErrorModel{});
  const plan::EndEffectorPlan plan = gt_plan(ep);

  REQUIRE(demo.steps.size() == plan.poses.size());
  REQUIRE(static_cast<int>(demo.steps.size()) == ep.horizon + 2);
  for (std::size_t i = 0; i < demo.steps.size(); ++i)
    CHECK(same_pose(demo.steps[i].action, plan.poses[i]));
  CHECK((demo.steps[0].observation.cells.array() == ep.initial_raster.cells.array()).all());
}

TEST_CASE("scripted demo: replay ends in success, with and without grasp offset") {
  const synth::DatasetConfig cfg = small_config();
  for (int i = 0; i < 4; ++i) {
    const synth::Episode ep = synth::generate_episode(cfg, "train", i);
    ErrorModel error;
    if (i % 2 == 1) error.grasp_offset = 0.9 * error.grasp_radius * Vec3(0.6, -0.8, 0.0);

    const Demo demo = scripted_demo(ep, error);
    SimEnv env(ep, error);
    env.reset();
    for (const auto& step : demo.steps) env.step(step.action);

    CHECK(success(env.state(), default_goal(ep)));
    const RigidTransform& target = ep.gt_transforms.back();
    CHECK(geom::geodesic_angle(env.state().object_pose.rotation.m, target.rotation.m) < 1e-9);
    CHECK((env.state().object_pose.translation - target.translation).norm() < 1e-9);
  }
}

TEST_CASE("oversized commands are halted: step is spent, state untouched") {
  const synth::Episode ep = make_episode();
  SimEnv env(ep, ErrorModel{}, SimConfig{1.0});
  env.reset();
  const plan::Pose before = env.state().ee_pose;

  plan::Pose jump = before;
  jump.position += Vec3(10.0, 0.0, 0.0);
  const auto [state, obs] = env.step(jump);
  CHECK(same_pose(state.ee_pose, before));
  CHECK(state.step == 1);
  CHECK(same_vec(state.object_pose.translation, Vec3::Zero()));
}

TEST_CASE("stepping past the horizon throws") {
  const synth::Episode ep = make_episode();
  SimEnv env(ep, ErrorModel{});
  env.reset();
  const plan::Pose hold = home_pose(ep);
  for (int i = 0; i < env.max_steps(); ++i) env.step(hold);
  CHECK_THROWS_AS(env.step(hold), HorizonExceeded);
}

TEST_CASE("action noise perturbs the executed pose but rollouts stay bitwise reproducible") {
  const synth::Episode ep = make_episode(4);
  ErrorModel noisy;
  noisy.action_noise_sigma = 0.02;
  noisy.seed = 77;

  const plan::EndEffectorPlan plan = gt_plan(ep);

  SimEnv a(ep, noisy);
  SimEnv b(ep, noisy);
  a.reset();
  b.reset();
  bool any_deviation = false;
  for (const auto& pose : plan.poses) {
    const auto [sa, ra] = a.step(pose);
    const auto [sb, rb] = b.step(pose);
    CHECK(same_pose(sa.ee_pose, sb.ee_pose));
    CHECK(same_matrix(sa.object_pose.rotation.m, sb.object_pose.rotation.m));
    CHECK(same_vec(sa.object_pose.translation, sb.object_pose.translation));
    CHECK((ra.cells.array() == rb.cells.array()).all());
    if (!same_pose(sa.ee_pose, pose)) any_deviation = true;
  }
  CHECK(any_deviation);

  // A different error seed produces a different trace.
  ErrorModel other = noisy;
  other.seed = 78;
  SimEnv c(ep, other);
  c.reset();
  bool differs = false;
  for (const auto& pose : plan.poses) {
    const auto sc = c.step(pose).first;
    if (!same_pose(sc.ee_pose, a.state().ee_pose)) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("copying the state forks a rollout deterministically") {
  const synth::Episode ep = make_episode(5);
  ErrorModel noisy;
  noisy.action_noise_sigma = 0.05;
  noisy.seed = 3;
  SimEnv env(ep, noisy);
  env.reset();

  const plan::EndEffectorPlan plan = gt_plan(ep);
  env.step(plan.poses[0]);
  const SimState saved = env.state();

  const auto first = env.step(plan.poses[1]).first;
  env.set_state(saved);
  const auto second = env.step(plan.poses[1]).first;
  CHECK(same_pose(first.ee_pose, second.ee_pose));
  CHECK(same_vec(first.object_pose.translation, second.object_pose.translation));
}

TEST_CASE("malformed configuration is rejected") {
  const synth::Episode ep = make_episode();

  ErrorModel zero_radius;
  zero_radius.grasp_radius = 0.0;
  CHECK_THROWS_AS(SimEnv(ep, zero_radius), InvalidConfig);

  ErrorModel negative_noise;
  negative_noise.action_noise_sigma = -0.1;
  CHECK_THROWS_AS(SimEnv(ep, negative_noise), InvalidConfig);

  CHECK_THROWS_AS(SimEnv(ep, ErrorModel{}, SimConfig{0.0}), InvalidConfig);

  GoalSpec no_tol;
  no_tol.rot_tol = 0.0;
  no_tol.trans_tol = 0.1;
  CHECK_THROWS_AS(success(SimState{}, no_tol), InvalidConfig);

  synth::Episode broken = ep;
  broken.gt_transforms.pop_back();
  CHECK_THROWS_AS(SimEnv(broken, ErrorModel{}), ShapeMismatch);
}
