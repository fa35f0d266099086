#include "trackplan/rigidfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trackplan/rng.hpp"

namespace trackplan::rigidfit {

using geom::Mat3;
using geom::RigidTransform;
using geom::Twist6;
using geom::Vec2;
using geom::Vec3;

MovingPointSet filter_moving(const TrackTensor& tracks, const std::vector<Vec3>& points3d,
                             const FitConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(points3d.size()) != tracks.p)
    throw ShapeMismatch("filter_moving: tracks/points3d length mismatch");
  MovingPointSet out;
  for (int i = 0; i < tracks.p; ++i) {
    if (tracks.flagged(i)) continue;
    const Vec2 ref{tracks.u(i, 0), tracks.v(i, 0)};
    double d = 0.0;
    for (int t = 1; t < tracks.H; ++t)
      d = std::max(d, (Vec2{tracks.u(i, t), tracks.v(i, t)} - ref).norm());
    if (d > cfg.motion_threshold) out.indices.push_back(i);
  }
  if (static_cast<int>(out.indices.size()) < 6)
    throw NoMovingPoints("filter_moving: only " + std::to_string(out.indices.size()) +
                         " points exceed the motion threshold");
  out.tracks = tracks.select(out.indices);
  out.points3d.reserve(out.indices.size());
  for (int i : out.indices) out.points3d.push_back(points3d[i]);
  return out;
}

namespace {

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

// sigma_2 <= 1e-8 * sigma_1 of the centered point matrix means the points sit
// on a line; two distinct depths are then indistinguishable from a rotation.
bool collinear(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd m(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) m.row(i) = (pts[i] - mean).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return sv(1) <= 1e-8 * sv(0);
}

}  // namespace

double reprojection_objective(const std::vector<Vec3>& points3d, const std::vector<Vec2>& obs2d,
                              const geom::CameraIntrinsics& k, const RigidTransform& t,
                              const FitConfig& cfg) {
  double obj = 0.0;
  for (size_t i = 0; i < points3d.size(); ++i) {
    const Vec3 q = geom::apply(t, points3d[i]);
    if (!(q.z() > 0)) return std::numeric_limits<double>::infinity();
    const Vec2 pr{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
    const double ru = pr.x() - obs2d[i].x();
    const double rv = pr.y() - obs2d[i].y();
    obj += cfg.use_huber ? huber(ru, cfg.huber_delta) + huber(rv, cfg.huber_delta)
                         : 0.5 * (ru * ru + rv * rv);
  }
  return obj;
}

std::pair<RigidTransform, double> fit_transform_step(const std::vector<Vec3>& points3d,
                                                     const std::vector<Vec2>& obs2d,
                                                     const geom::CameraIntrinsics& k,
                                                     const RigidTransform& init,
                                                     const FitConfig& cfg,
                                                     std::vector<double>* objective_trace) {
  cfg.validate();
  const int n = static_cast<int>(points3d.size());
  if (n != static_cast<int>(obs2d.size()))
    throw ShapeMismatch("fit_transform_step: points3d/obs2d length mismatch");
  if (n < 6) throw DegenerateGeometry("fit_transform_step: fewer than 6 points");
  if (collinear(points3d)) throw DegenerateGeometry("fit_transform_step: collinear points");

  RigidTransform t = init;
  double obj = reprojection_objective(points3d, obs2d, k, t, cfg);
  if (std::isinf(obj))
    throw DivergedSolve("fit_transform_step: init places points behind the camera");
  if (objective_trace) {
    objective_trace->clear();
    objective_trace->push_back(obj);
  }

  Eigen::MatrixXd jac(2 * n, 6);
  Eigen::VectorXd res(2 * n), w(2 * n);
  for (int iter = 0; iter < cfg.gn_max_iters; ++iter) {
    const Mat3& r = t.rotation.m;
    for (int i = 0; i < n; ++i) {
      const Vec3 q = r * points3d[i] + t.translation;
      const double iz = 1.0 / q.z();
      res(2 * i) = k.fx * q.x() * iz + k.cx - obs2d[i].x();
      res(2 * i + 1) = k.fy * q.y() * iz + k.cy - obs2d[i].y();
      Eigen::Matrix<double, 2, 3> jproj;
      jproj << k.fx * iz, 0.0, -k.fx * q.x() * iz * iz,
               0.0, k.fy * iz, -k.fy * q.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> jq;
      jq.leftCols<3>() = -r * geom::skew(points3d[i]);
      jq.rightCols<3>() = r;
      jac.block<2, 6>(2 * i, 0) = jproj * jq;
    }
    if (cfg.use_huber) {
      for (int c = 0; c < 2 * n; ++c) {
        const double a = std::abs(res(c));
        w(c) = a <= cfg.huber_delta ? 1.0 : cfg.huber_delta / a;
      }
    } else {
      w.setOnes();
    }

    const Eigen::MatrixXd jw = w.asDiagonal() * jac;
    Eigen::Matrix<double, 6, 6> h = jac.transpose() * jw;
    const Eigen::Matrix<double, 6, 1> g = -jac.transpose() * (w.asDiagonal() * res);
    // Tiny Tikhonov term keeps coplanar minimal samples solvable without
    // biasing well-conditioned fits.
    h.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    const Twist6 delta = h.ldlt().solve(g);
    if (!delta.allFinite())
      throw DegenerateGeometry("fit_transform_step: singular normal equations");
    if (delta.norm() < cfg.gn_tol) break;

    double alpha = 1.0;
    bool accepted = false;
    RigidTransform t_try;
    double obj_try = 0.0;
    const auto try_alpha = [&] {
      t_try = geom::compose(t, geom::exp_map(alpha * delta));
      obj_try = reprojection_objective(points3d, obs2d, k, t_try, cfg);
      return obj_try <= obj;
    };
    for (int halving = 0; halving <= 5 && !accepted; ++halving) {
      accepted = try_alpha();
      if (!accepted) alpha *= 0.5;
    }
    if (!accepted && delta.norm() >= 1e-8) {
      // Strongly nonlinear territory (large step, e.g. outlier-heavy robust
      // fits): damp much deeper before giving up. Small steps skip this and
      // fall through to the noise-floor handling so the convergence tail
      // stays independent of summation order.
      for (int halving = 6; halving <= 20 && !accepted; ++halving) {
        accepted = try_alpha();
        if (!accepted) alpha *= 0.5;
      }
      // The direction solves H d = -g with H positive semidefinite and g the
      // exact (robust) gradient, so it is a strict descent direction; if even
      // alpha ~ 1e-6 cannot produce a measurable decrease, the iterate sits
      // at the objective's numerical floor. Stop here rather than diverge.
      if (!accepted) break;
    }
    if (!accepted) {
      // Inside the objective's floating-point noise floor the halving test
      // cannot resolve descent, but the Newton direction (built from exact
      // residuals, not objective differences) still contracts toward the
      // minimizer. Take it and keep iterating until gn_tol.
      t = geom::compose(t, geom::exp_map(delta));
      obj = reprojection_objective(points3d, obs2d, k, t, cfg);
      if (objective_trace) objective_trace->push_back(obj);
      continue;
    }
    t = t_try;
    obj = obj_try;
    if (objective_trace) objective_trace->push_back(obj);
    if (alpha * delta.norm() < cfg.gn_tol) break;
  }

  double mean_px = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec2 pr = geom::project(k, geom::apply(t, points3d[i]));
    mean_px += (pr - obs2d[i]).norm();
  }
  return {t, mean_px / n};
}

namespace {

std::vector<Vec2> step_observations(const TrackTensor& tracks, int step) {
  std::vector<Vec2> obs(tracks.p);
  for (int i = 0; i < tracks.p; ++i) obs[i] = {tracks.u(i, step), tracks.v(i, step)};
  return obs;
}

std::vector<int> inliers_under(const std::vector<Vec3>& points3d, const std::vector<Vec2>& obs2d,
                               const geom::CameraIntrinsics& k, const RigidTransform& t,
                               double inlier_px) {
  std::vector<int> out;
  for (size_t i = 0; i < points3d.size(); ++i) {
    const Vec3 q = geom::apply(t, points3d[i]);
    if (!(q.z() > 0)) continue;
    const Vec2 pr{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
    if ((pr - obs2d[i]).norm() < inlier_px) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

RansacResult ransac_fit(const MovingPointSet& moving, const geom::CameraIntrinsics& k, int step,
                        const FitConfig& cfg, const RigidTransform& init) {
  cfg.validate();
  const double diag = std::hypot(static_cast<double>(k.width), static_cast<double>(k.height));
  if (!(cfg.ransac_inlier_px < diag))
    throw InvalidConfig("fit: ransac_inlier_px must be below the image diagonal");
  const int n = static_cast<int>(moving.points3d.size());
  if (n < 6) throw NoConsensus("ransac_fit: fewer than 6 moving points");

  const std::vector<Vec2> obs = step_observations(moving.tracks, step);
  Rng rng(child_seed(cfg.seed, "ransac", static_cast<std::uint64_t>(step)));

  std::vector<int> best_inliers;
  RigidTransform best_t;
  for (int it = 0; it < cfg.ransac_iters; ++it) {
    const std::vector<int> sample = rng.sample_indices(n, 6);
    std::vector<Vec3> sp;
    std::vector<Vec2> so;
    sp.reserve(6);
    so.reserve(6);
    for (int i : sample) {
      sp.push_back(moving.points3d[i]);
      so.push_back(obs[i]);
    }
    RigidTransform hyp;
    try {
      hyp = fit_transform_step(sp, so, k, init, cfg).first;
    } catch (const Error&) {
      continue;  // degenerate or diverged sample; the draw still advanced rng
    }
    std::vector<int> inl = inliers_under(moving.points3d, obs, k, hyp, cfg.ransac_inlier_px);
    if (inl.size() > best_inliers.size()) {
      best_inliers = std::move(inl);
      best_t = hyp;
      if (static_cast<int>(best_inliers.size()) == n) break;
    }
  }
  if (static_cast<int>(best_inliers.size()) < 6)
    throw NoConsensus("ransac_fit: best hypothesis explains only " +
                      std::to_string(best_inliers.size()) + " points");

  const auto refit = [&](const std::vector<int>& idx, const RigidTransform& init_t) {
    std::vector<Vec3> ip;
    std::vector<Vec2> io;
    ip.reserve(idx.size());
    io.reserve(idx.size());
    for (int i : idx) {
      ip.push_back(moving.points3d[i]);
      io.push_back(obs[i]);
    }
    return fit_transform_step(ip, io, k, init_t, cfg);
  };

  // Refit on the consensus set, then re-gate around the refined model until
  // the set stabilizes. The winning hypothesis comes from a noisy minimal
  // sample, so gating around it keeps points that happen to agree with its
  // bias; gating around the refined fit removes that selection bias.
  auto [t, mean_px] = refit(best_inliers, best_t);
  for (int round = 0; round < 4; ++round) {
    std::vector<int> regated = inliers_under(moving.points3d, obs, k, t, cfg.ransac_inlier_px);
    if (static_cast<int>(regated.size()) < 6 || regated == best_inliers) break;
    best_inliers = std::move(regated);
    std::tie(t, mean_px) = refit(best_inliers, t);
  }
  return {t, std::move(best_inliers), mean_px};
}

TransformTrajectory fit_trajectory(const TrackTensor& tracks, const std::vector<Vec3>& points3d,
                                   const geom::CameraIntrinsics& k, const FitConfig& cfg) {
  const MovingPointSet moving = filter_moving(tracks, points3d, cfg);
  TransformTrajectory out;
  out.moving_indices = moving.indices;
  out.inlier_count = moving.tracks.p;
  RigidTransform prev = RigidTransform::identity();
  for (int t = 0; t < tracks.H; ++t) {
    RansacResult r;
    try {
      r = ransac_fit(moving, k, t, cfg,
                     cfg.independent_steps ? RigidTransform::identity() : prev);
    } catch (const NoConsensus& e) {
      throw NoConsensus("step " + std::to_string(t + 1) + ": " + e.what());
    }
    prev = r.transform;
    out.transforms.push_back(r.transform);
    out.per_step_residual.push_back(r.mean_residual);
    out.inlier_count = std::min(out.inlier_count, static_cast<int>(r.inliers.size()));
    std::vector<int> original;
    original.reserve(r.inliers.size());
    for (int i : r.inliers) original.push_back(moving.indices[i]);
    out.per_step_inliers.push_back(std::move(original));
  }
  return out;
}

}  // namespace trackplan::rigidfit
