#pragma once

#include <vector>

#include "trackplan/geometry.hpp"
#include "trackplan/rigidfit.hpp"

// Turns a recovered object-transform trajectory into an open-loop
// end-effector plan: pick a grasp pose at the centroid of the moving points,
// then carry that pose through every per-step rigid transform.
namespace trackplan::plan {

struct Pose {
  geom::Vec3 position = geom::Vec3::Zero();
  geom::Rotation3 orientation = geom::Rotation3::identity();
  double gripper = 0.0;  // 0 fully open .. 1 fully closed
};

// Approach (open) and grasp (closed) at the grasp pose, then one transformed
// pose per trajectory step: poses.size() == H + 2.
struct EndEffectorPlan {
  std::vector<Pose> poses;
  int grasp_step = 1;  // first index with a closed gripper
  void validate() const;  // gripper 0 before grasp_step, 1 from it onward
};

// Grasp pose: centroid of the moving 3D points, orientation carried over from
// the current end-effector pose, gripper closed.
Pose initial_grasp_pose(const Pose& e0, const std::vector<geom::Vec3>& moving_points3d);

// pose_t.position = T_t * e1.position, pose_t.orientation = T_t.rotation *
// e1.orientation, gripper closed, prefixed by approach (e1, open) and grasp
// (e1, closed).
EndEffectorPlan open_loop_plan(const std::vector<geom::RigidTransform>& transforms,
                               const Pose& e1);
EndEffectorPlan open_loop_plan(const rigidfit::TransformTrajectory& traj, const Pose& e1);

}  // namespace trackplan::plan
