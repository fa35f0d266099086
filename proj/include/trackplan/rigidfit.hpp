#pragma once

#include <utility>
#include <vector>

#include "trackplan/geometry.hpp"
#include "trackplan/track.hpp"

// Per-timestep rigid-transform recovery from 2D tracks and first-frame 3D
// points: filter the moving subset, RANSAC out track outliers, refine each
// step with Gauss-Newton over a 6-DOF twist.
namespace trackplan::rigidfit {

struct FitConfig {
  // Total pixel displacement (from the first stored step) above which a point
  // counts as moving. Zero keeps everything that moved at all.
  double motion_threshold = 5.0;
  int ransac_iters = 200;
  double ransac_inlier_px = 3.0;
  int gn_max_iters = 50;
  double gn_tol = 1e-12;  // stop when the accepted update twist norm is below
  double huber_delta = 2.0;
  // Pure-L2 objective when false; Huber per coordinate when true. Identical
  // on clean data once every residual is inside huber_delta.
  bool use_huber = true;
  // Initialize every step from identity instead of the previous step's
  // solution. Results can differ from the warm-start chain.
  bool independent_steps = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (motion_threshold < 0) throw InvalidConfig("fit: motion_threshold must be >= 0");
    if (ransac_iters <= 0 || gn_max_iters <= 0) throw InvalidConfig("fit: iters must be positive");
    if (!(ransac_inlier_px > 0) || !(gn_tol > 0) || !(huber_delta > 0))
      throw InvalidConfig("fit: thresholds must be positive");
  }
};

struct MovingPointSet {
  std::vector<int> indices;          // into the original point array
  TrackTensor tracks;                // restricted to those indices
  std::vector<geom::Vec3> points3d;  // matching first-frame 3D points
};

struct TransformTrajectory {
  std::vector<geom::RigidTransform> transforms;  // one per step
  std::vector<double> per_step_residual;         // mean px error over that step's inliers
  int inlier_count = 0;                          // min over steps
  // Original point indices accepted at each step, plus the moving subset the
  // fit ran on.
  std::vector<std::vector<int>> per_step_inliers;
  std::vector<int> moving_indices;
};

// Keeps point i iff it is not out-of-frame-flagged and
// max_t ||track_i(t) - track_i(first step)|| > motion_threshold.
// Throws NoMovingPoints when fewer than 6 survive.
MovingPointSet filter_moving(const TrackTensor& tracks, const std::vector<geom::Vec3>& points3d,
                             const FitConfig& cfg);

// Robust objective evaluated at T: sum over per-coordinate reprojection
// errors of Huber(huber_delta) or plain half-square per cfg.use_huber.
// Infinite when any point lands at non-positive depth.
double reprojection_objective(const std::vector<geom::Vec3>& points3d,
                              const std::vector<geom::Vec2>& obs2d,
                              const geom::CameraIntrinsics& k, const geom::RigidTransform& t,
                              const FitConfig& cfg);

// Gauss-Newton from init over a right-multiplicative twist, with step
// halving; accepted iterates never increase the objective. Returns the
// transform and the mean Euclidean reprojection error in px. If
// objective_trace is given it receives the objective at init and after every
// accepted iterate.
// Throws DegenerateGeometry (fewer than 6 or collinear points) and
// DivergedSolve (initialization places points behind the camera). A step
// that cannot measurably decrease the objective even under the deepest
// damping stops at the current iterate instead of diverging.
std::pair<geom::RigidTransform, double> fit_transform_step(
    const std::vector<geom::Vec3>& points3d, const std::vector<geom::Vec2>& obs2d,
    const geom::CameraIntrinsics& k, const geom::RigidTransform& init, const FitConfig& cfg,
    std::vector<double>* objective_trace = nullptr);

struct RansacResult {
  geom::RigidTransform transform;
  std::vector<int> inliers;  // indices into the moving set, ascending
  double mean_residual = 0.0;  // mean px error over inliers under the refit
};

// Minimal 6-point hypotheses solved by fit_transform_step; inliers are points
// with Euclidean reprojection error < ransac_inlier_px; the best hypothesis
// is refit on its inliers. Deterministic per (cfg.seed, step). Throws
// NoConsensus when the best inlier set has fewer than 6 points.
RansacResult ransac_fit(const MovingPointSet& moving, const geom::CameraIntrinsics& k, int step,
                        const FitConfig& cfg,
                        const geom::RigidTransform& init = geom::RigidTransform::identity());

// filter_moving once, then per-step ransac_fit; step t starts from the
// accepted solution at t-1 (identity at the first step) unless
// cfg.independent_steps. NoConsensus failures carry the step index.
TransformTrajectory fit_trajectory(const TrackTensor& tracks,
                                   const std::vector<geom::Vec3>& points3d,
                                   const geom::CameraIntrinsics& k, const FitConfig& cfg);

}  // namespace trackplan::rigidfit
