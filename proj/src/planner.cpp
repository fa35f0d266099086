#include "trackplan/planner.hpp"

#include "trackplan/errors.hpp"

namespace trackplan::plan {

void EndEffectorPlan::validate() const {
  if (grasp_step < 0 || grasp_step >= static_cast<int>(poses.size()))
    throw InvalidConfig("plan: grasp_step out of range");
  for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
    const double g = poses[static_cast<std::size_t>(i)].gripper;
    if (i < grasp_step ? g != 0.0 : g != 1.0)
      throw InvalidConfig("plan: gripper must be 0 before the grasp step and 1 from it on");
  }
}

Pose initial_grasp_pose(const Pose& e0, const std::vector<geom::Vec3>& moving_points3d) {
  if (moving_points3d.empty())
    throw EmptyPointSet("initial_grasp_pose: no moving points to grasp");
  geom::Vec3 centroid = geom::Vec3::Zero();
  for (const geom::Vec3& p : moving_points3d) centroid += p;
  centroid /= static_cast<double>(moving_points3d.size());
  Pose e1;
  e1.position = centroid;
  e1.orientation = e0.orientation;
  e1.gripper = 1.0;
  return e1;
}

EndEffectorPlan open_loop_plan(const std::vector<geom::RigidTransform>& transforms,
                               const Pose& e1) {
  EndEffectorPlan plan;
  plan.grasp_step = 1;
  plan.poses.reserve(transforms.size() + 2);
  Pose approach = e1;
  approach.gripper = 0.0;
  plan.poses.push_back(approach);
  Pose grasp = e1;
  grasp.gripper = 1.0;
  plan.poses.push_back(grasp);
  for (const geom::RigidTransform& t : transforms) {
    Pose p;
    p.position = geom::apply(t, e1.position);
    p.orientation = t.rotation * e1.orientation;
    p.gripper = 1.0;
    plan.poses.push_back(p);
  }
  return plan;
}

EndEffectorPlan open_loop_plan(const rigidfit::TransformTrajectory& traj, const Pose& e1) {
  return open_loop_plan(traj.transforms, e1);
}

}  // namespace trackplan::plan
