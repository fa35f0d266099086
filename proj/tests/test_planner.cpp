#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "testsupport.hpp"
#include "trackplan/errors.hpp"
#include "trackplan/planner.hpp"

using namespace trackplan;
using namespace trackplan::plan;
using geom::RigidTransform;
using geom::Rotation3;
using geom::Vec3;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool same_matrix(const geom::Mat3& a, const geom::Mat3& b) {
  return (a.array() == b.array()).all();
}

bool same_vec(const Vec3& a, const Vec3& b) { return (a.array() == b.array()).all(); }

RigidTransform translation_only(const Vec3& d) {
  return {Rotation3::identity(), d};
}

}  // namespace

TEST_CASE("grasp pose: singleton centroid is the point itself") {
  Pose e0;
  const Vec3 q(0.375, -1.25, 2.5);
  const Pose e1 = initial_grasp_pose(e0, {q});
  CHECK(same_vec(e1.position, q));
  CHECK(e1.gripper == 1.0);
}

TEST_CASE("grasp pose: cube-corner centroid is the cube center exactly") {
  // Dyadic coordinates so every corner, the sum, and the /8 are exact.
  const Vec3 c(0.5, -0.25, 2.0);
  const double s = 0.125;
  std::vector<Vec3> corners;
  for (int dx : {-1, 1})
    for (int dy : {-1, 1})
      for (int dz : {-1, 1}) corners.push_back(c + s * Vec3(dx, dy, dz));
  const Pose e1 = initial_grasp_pose(Pose{}, corners);
  CHECK(same_vec(e1.position, c));
}

TEST_CASE("grasp pose: orientation carried over bitwise, gripper closed") {
  Pose e0;
  e0.orientation = Rotation3::about_axis(Vec3(0, 0, 1), kPi / 4.0);
  e0.gripper = 0.0;
  const Pose e1 = initial_grasp_pose(e0, {Vec3(1, 2, 3), Vec3(3, 2, 1)});
  CHECK(same_matrix(e1.orientation.m, e0.orientation.m));
  CHECK(e1.gripper == 1.0);
}

TEST_CASE("grasp pose: empty point set is rejected") {
  CHECK_THROWS_AS(initial_grasp_pose(Pose{}, {}), EmptyPointSet);
}

TEST_CASE("plan layout: approach + grasp prefix, length H + 2, gripper steps up once") {
  Pose e1;
  e1.position = Vec3(0.5, 0.25, 2.0);
  e1.orientation = Rotation3::about_axis(Vec3(0, 0, 1), kPi / 6.0);
  e1.gripper = 1.0;
  const std::vector<RigidTransform> transforms(4, RigidTransform::identity());
  const EndEffectorPlan plan = open_loop_plan(transforms, e1);

  REQUIRE(plan.poses.size() == 6);
  CHECK(plan.grasp_step == 1);
  CHECK(plan.poses[0].gripper == 0.0);
  for (std::size_t i = 1; i < plan.poses.size(); ++i) CHECK(plan.poses[i].gripper == 1.0);
  CHECK_NOTHROW(plan.validate());

  // Approach and grasp both sit at the grasp pose.
  CHECK(same_vec(plan.poses[0].position, e1.position));
  CHECK(same_matrix(plan.poses[0].orientation.m, e1.orientation.m));
  CHECK(same_vec(plan.poses[1].position, e1.position));
}

TEST_CASE("plan: all-identity transforms keep every pose at the grasp pose") {
  Pose e1;
  e1.position = Vec3(0.5, 0.25, 2.0);
  e1.orientation = Rotation3::about_axis(Vec3(0, 0, 1), kPi / 6.0);
  const EndEffectorPlan plan = open_loop_plan(
      std::vector<RigidTransform>(5, RigidTransform::identity()), e1);
  for (std::size_t i = 2; i < plan.poses.size(); ++i) {
    CHECK(same_vec(plan.poses[i].position, e1.position));
    CHECK(same_matrix(plan.poses[i].orientation.m, e1.orientation.m));
  }
}

TEST_CASE("plan: pure translation shifts the position and keeps the orientation") {
  Pose e1;
  e1.position = Vec3(0.5, 0.25, 2.0);
  e1.orientation = Rotation3::about_axis(Vec3(1, 0, 0), 0.3);
  const Vec3 d(0.125, -0.5, 0.25);
  const std::vector<RigidTransform> transforms{RigidTransform::identity(), translation_only(d),
                                               RigidTransform::identity()};
  const EndEffectorPlan plan = open_loop_plan(transforms, e1);
  CHECK(same_vec(plan.poses[3].position, Vec3(e1.position + d)));
  CHECK(same_matrix(plan.poses[3].orientation.m, e1.orientation.m));
}

TEST_CASE("plan: 90-degree rotation about an off-origin axis matches hand arithmetic") {
  // Axis z through c = (1, 2, 3); e1 at (2, 2, 3) lies one unit along +x from
  // c, so a quarter turn moves it one unit along +y: (1, 3, 3).
  const Vec3 c(1.0, 2.0, 3.0);
  const RigidTransform t = geom::rotation_about_point(Vec3(0, 0, 1), kPi / 2.0, c);
  Pose e1;
  e1.position = Vec3(2.0, 2.0, 3.0);
  const EndEffectorPlan plan = open_loop_plan({t}, e1);
  REQUIRE(plan.poses.size() == 3);
  CHECK((plan.poses[2].position - Vec3(1.0, 3.0, 3.0)).norm() < 1e-12);
  CHECK(geom::geodesic_angle(plan.poses[2].orientation.m, t.rotation.m) < 1e-12);
}

TEST_CASE("plan: trajectory overload matches the raw transform overload") {
  Pose e1;
  e1.position = Vec3(0.25, -0.5, 1.5);
  rigidfit::TransformTrajectory traj;
  traj.transforms = {translation_only(Vec3(0.1, 0, 0)),
                     geom::rotation_about_point(Vec3(0, 1, 0), 0.4, Vec3(0, 0, 2))};
  const EndEffectorPlan a = open_loop_plan(traj, e1);
  const EndEffectorPlan b = open_loop_plan(traj.transforms, e1);
  REQUIRE(a.poses.size() == b.poses.size());
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    CHECK(same_vec(a.poses[i].position, b.poses[i].position));
    CHECK(same_matrix(a.poses[i].orientation.m, b.poses[i].orientation.m));
    CHECK(a.poses[i].gripper == b.poses[i].gripper);
  }
}

TEST_CASE("plan validation rejects malformed gripper schedules") {
  Pose e1;
  EndEffectorPlan plan = open_loop_plan(std::vector<RigidTransform>(3, RigidTransform::identity()), e1);

  EndEffectorPlan early_close = plan;
  early_close.poses[0].gripper = 1.0;
  CHECK_THROWS_AS(early_close.validate(), InvalidConfig);

  EndEffectorPlan late_open = plan;
  late_open.poses[3].gripper = 0.0;
  CHECK_THROWS_AS(late_open.validate(), InvalidConfig);

  EndEffectorPlan bad_index = plan;
  bad_index.grasp_step = 99;
  CHECK_THROWS_AS(bad_index.validate(), InvalidConfig);
}
