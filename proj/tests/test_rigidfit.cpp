#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "testsupport.hpp"
#include "trackplan/rigidfit.hpp"
#include "trackplan/rng.hpp"
#include "trackplan/synth.hpp"

using namespace trackplan;
using namespace trackplan::rigidfit;
using geom::RigidTransform;
using geom::Vec2;
using geom::Vec3;

namespace {

geom::CameraIntrinsics test_cam() { return {220.0, 220.0, 128.0, 128.0, 256, 256}; }

// Non-coplanar cloud centered near (0, 0, 2.1), comfortably in frame.
std::vector<Vec3> cloud(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i)
    pts.push_back({rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), 2.1 + rng.uniform(-0.2, 0.2)});
  return pts;
}

std::vector<Vec2> project_all(const std::vector<Vec3>& pts, const RigidTransform& t) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(geom::project(test_cam(), geom::apply(t, p)));
  return out;
}

MovingPointSet make_moving(const std::vector<Vec3>& pts, const TrackTensor& tracks) {
  MovingPointSet m;
  m.indices.resize(pts.size());
  std::iota(m.indices.begin(), m.indices.end(), 0);
  m.tracks = tracks;
  m.points3d = pts;
  return m;
}

double rot_err(const RigidTransform& a, const RigidTransform& b) {
  return geom::geodesic_angle(a.rotation.m, b.rotation.m);
}

double trans_err(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

}  // namespace

TEST_CASE("filter_moving rejects all-static tracks") {
  const auto pts = cloud(12, 1);
  TrackTensor tr = TrackTensor::zeros(12, 5);
  for (int i = 0; i < 12; ++i) {
    const Vec2 q = geom::project(test_cam(), pts[i]);
    for (int t = 0; t < 5; ++t) tr.set(i, t, q.x(), q.y());
  }
  CHECK_THROWS_AS(filter_moving(tr, pts, FitConfig{}), NoMovingPoints);
}

TEST_CASE("filter_moving keeps exactly the object points of a displaced episode") {
  synth::SceneSpec spec;
  spec.object_shape = synth::ShapeKind::box;
  spec.n_object_points = 24;
  spec.n_background_points = 12;
  spec.seed = 4;
  const synth::Scene scene = synth::sample_scene(spec, test_cam());

  // Ramp to a 0.4-unit lateral shift: ~40 px at depth ~2.1.
  std::vector<RigidTransform> traj;
  for (int t = 1; t <= 6; ++t)
    traj.push_back({geom::Rotation3::identity(), Vec3{0.4 * t / 6.0, 0.0, 0.0}});
  const TrackTensor tracks = synth::render_tracks(scene, traj, test_cam());

  const MovingPointSet m = filter_moving(tracks, scene.points3d, FitConfig{});
  std::vector<int> expected;
  for (size_t i = 0; i < scene.points3d.size(); ++i)
    if (scene.object_mask[i] && !tracks.flagged(static_cast<int>(i)))
      expected.push_back(static_cast<int>(i));
  CHECK(m.indices == expected);
}

TEST_CASE("filter_moving with zero threshold keeps every noisy point") {
  const auto pts = cloud(20, 2);
  TrackTensor tr = TrackTensor::zeros(20, 3);
  for (int i = 0; i < 20; ++i) {
    const Vec2 q = geom::project(test_cam(), pts[i]);
    for (int t = 0; t < 3; ++t) tr.set(i, t, q.x(), q.y());
  }
  const auto noisy = synth::corrupt_tracks(tr, 0.1, 0.0, 9, test_cam());
  FitConfig cfg;
  cfg.motion_threshold = 0.0;
  const MovingPointSet m = filter_moving(noisy.tracks, pts, cfg);
  CHECK(m.indices.size() == 20);
}

TEST_CASE("fit_transform_step is a fixed point on identity observations") {
  const auto pts = cloud(15, 3);
  const auto obs = project_all(pts, RigidTransform::identity());
  const auto [t, residual] = fit_transform_step(pts, obs, test_cam(),
                                                RigidTransform::identity(), FitConfig{});
  CHECK(rot_err(t, RigidTransform::identity()) < 1e-9);
  CHECK(trans_err(t, RigidTransform::identity()) < 1e-9);
  CHECK(residual < 1e-9);
}

TEST_CASE("fit_transform_step recovers a 10 degree rotation plus translation exactly") {
  const auto pts = cloud(15, 5);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.0, 0.0, 10.0 * std::numbers::pi / 180.0}), Vec3{0.05, 0.0, 0.0});
  const auto obs = project_all(pts, gt);
  const auto [t, residual] =
      fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{});
  CHECK(rot_err(t, gt) < 1e-6);
  CHECK(trans_err(t, gt) < 1e-6);
  CHECK(residual < 1e-6);
}

TEST_CASE("fit_transform_step rejects collinear points") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({0.02 * i, 0.01 * i, 2.0 + 0.03 * i});
  const auto obs = project_all(pts, RigidTransform::identity());
  CHECK_THROWS_AS(
      fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{}),
      DegenerateGeometry);
}

TEST_CASE("fit_transform_step rejects fewer than 6 points") {
  const auto pts = cloud(5, 6);
  const auto obs = project_all(pts, RigidTransform::identity());
  CHECK_THROWS_AS(
      fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{}),
      DegenerateGeometry);
}

TEST_CASE("accepted Gauss-Newton iterates never increase the objective") {
  const auto pts = cloud(20, 7);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.1, -0.2, 0.3}), Vec3{0.05, -0.04, 0.08});
  auto obs = project_all(pts, gt);
  Rng rng(11);
  for (auto& q : obs) {
    q.x() += rng.normal(0.0, 1.5);
    q.y() += rng.normal(0.0, 1.5);
  }
  std::vector<double> trace;
  fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{}, &trace);
  REQUIRE(trace.size() >= 2);
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("solution never scores worse than ground truth on clean data") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pts = cloud(18, child_seed(21, "opt", seed));
    Rng rng(child_seed(22, "opt-t", seed));
    const RigidTransform gt = RigidTransform::from_parts(
        geom::rotation_exp(test::random_unit(rng) * rng.uniform(0.0, 0.3)),
        Vec3{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05)});
    const auto obs = project_all(pts, gt);
    FitConfig cfg;
    const auto [t, residual] =
        fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), cfg);
    CHECK(reprojection_objective(pts, obs, test_cam(), t, cfg) <=
          reprojection_objective(pts, obs, test_cam(), gt, cfg) + 1e-9);
  }
}

TEST_CASE("perturbing the init by a small twist leaves the solution unchanged") {
  const auto pts = cloud(16, 8);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.05, 0.1, -0.08}), Vec3{0.03, 0.02, -0.04});
  const auto obs = project_all(pts, gt);
  const auto [base, r0] =
      fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{});
  Rng rng(31);
  for (int k = 0; k < 10; ++k) {
    geom::Twist6 d;
    for (int i = 0; i < 6; ++i) d(i) = rng.normal();
    d *= rng.uniform(0.0, 0.1) / d.norm();
    const RigidTransform init = geom::compose(RigidTransform::identity(), geom::exp_map(d));
    const auto [t, r] = fit_transform_step(pts, obs, test_cam(), init, FitConfig{});
    CHECK(rot_err(t, base) < 1e-6);
    CHECK(trans_err(t, base) < 1e-6);
  }
}

TEST_CASE("permuting point order leaves the converged transform unchanged") {
  const auto pts = cloud(14, 9);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.0, 0.15, 0.1}), Vec3{-0.02, 0.06, 0.0});
  auto obs = project_all(pts, gt);
  Rng noise(12);
  for (auto& q : obs) {
    q.x() += noise.normal(0.0, 0.5);
    q.y() += noise.normal(0.0, 0.5);
  }
  const auto [base, r0] =
      fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{});

  std::vector<int> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(13);
  rng.shuffle(perm);
  std::vector<Vec3> pp;
  std::vector<Vec2> po;
  for (int i : perm) {
    pp.push_back(pts[i]);
    po.push_back(obs[i]);
  }
  const auto [t, r] = fit_transform_step(pp, po, test_cam(), RigidTransform::identity(), FitConfig{});
  CHECK(rot_err(t, base) < 1e-9);
  CHECK(trans_err(t, base) < 1e-9);
}

TEST_CASE("ransac on clean data keeps every point and matches the direct fit") {
  const auto pts = cloud(30, 10);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.0, 0.0, 0.2}), Vec3{0.06, -0.03, 0.0});
  TrackTensor tracks = TrackTensor::zeros(30, 1);
  const auto obs = project_all(pts, gt);
  for (int i = 0; i < 30; ++i) tracks.set(i, 0, obs[i].x(), obs[i].y());

  const RansacResult r = ransac_fit(make_moving(pts, tracks), test_cam(), 0, FitConfig{});
  CHECK(r.inliers.size() == 30);
  const auto [direct, dres] =
      fit_transform_step(pts, obs, test_cam(), RigidTransform::identity(), FitConfig{});
  CHECK(rot_err(r.transform, direct) < 1e-9);
  CHECK(trans_err(r.transform, direct) < 1e-9);
}

TEST_CASE("ransac excludes injected outliers and still recovers the transform") {
  const auto pts = cloud(40, 14);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.05, -0.1, 0.25}), Vec3{0.04, 0.05, -0.02});
  TrackTensor tracks = TrackTensor::zeros(40, 1);
  const auto obs = project_all(pts, gt);
  for (int i = 0; i < 40; ++i) tracks.set(i, 0, obs[i].x(), obs[i].y());
  const synth::CorruptedTracks corrupted = synth::corrupt_tracks(tracks, 0.0, 0.2, 15, test_cam());
  REQUIRE(corrupted.outlier_indices.size() == 8);

  const RansacResult r = ransac_fit(make_moving(pts, corrupted.tracks), test_cam(), 0, FitConfig{});
  CHECK(rot_err(r.transform, gt) < 1e-6);
  CHECK(trans_err(r.transform, gt) < 1e-6);
  for (int out : corrupted.outlier_indices)
    CHECK(std::find(r.inliers.begin(), r.inliers.end(), out) == r.inliers.end());
  CHECK(r.inliers.size() == 32);
}

TEST_CASE("ransac is deterministic per seed") {
  const auto pts = cloud(25, 16);
  const RigidTransform gt = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.0, 0.1, 0.1}), Vec3{0.02, 0.0, 0.03});
  TrackTensor tracks = TrackTensor::zeros(25, 1);
  const auto obs = project_all(pts, gt);
  for (int i = 0; i < 25; ++i) tracks.set(i, 0, obs[i].x(), obs[i].y());
  const auto corrupted = synth::corrupt_tracks(tracks, 1.0, 0.15, 17, test_cam());

  FitConfig cfg;
  cfg.seed = 1234;
  const RansacResult a = ransac_fit(make_moving(pts, corrupted.tracks), test_cam(), 0, cfg);
  const RansacResult b = ransac_fit(make_moving(pts, corrupted.tracks), test_cam(), 0, cfg);
  CHECK(a.inliers == b.inliers);
  CHECK(a.transform.rotation.m == b.transform.rotation.m);
  CHECK(a.transform.translation == b.transform.translation);
}

TEST_CASE("ransac with no rigid consensus raises NoConsensus") {
  const auto pts = cloud(10, 18);
  TrackTensor tracks = TrackTensor::zeros(10, 1);
  Rng rng(19);
  for (int i = 0; i < 10; ++i)
    tracks.set(i, 0, rng.uniform(0.0, 256.0), rng.uniform(0.0, 256.0));
  FitConfig cfg;
  cfg.ransac_inlier_px = 1e-3;
  cfg.ransac_iters = 50;
  CHECK_THROWS_AS(ransac_fit(make_moving(pts, tracks), test_cam(), 0, cfg), NoConsensus);
}

TEST_CASE("fit_trajectory recovers a noiseless episode within 1e-5") {
  synth::DatasetConfig dcfg;
  dcfg.seed = 40;
  dcfg.horizon = 10;
  dcfg.points_min = 40;
  dcfg.points_max = 60;
  synth::SplitConfig train;
  train.episodes = 2;
  train.pairs = {{synth::ShapeKind::box, synth::FamilyKind::rotation_about_scene_axis}};
  dcfg.splits = {{"train", train}};

  for (int e = 0; e < 2; ++e) {
    const synth::Episode ep = synth::generate_episode(dcfg, "train", e);
    const TransformTrajectory fit =
        fit_trajectory(ep.gt_tracks, ep.points3d_t0, ep.intrinsics, FitConfig{});
    REQUIRE(fit.transforms.size() == ep.gt_transforms.size());
    for (size_t t = 0; t < fit.transforms.size(); ++t) {
      CHECK(rot_err(fit.transforms[t], ep.gt_transforms[t]) < 1e-5);
      CHECK(trans_err(fit.transforms[t], ep.gt_transforms[t]) < 1e-5);
      CHECK(fit.per_step_residual[t] < 1e-6);
    }
    CHECK(fit.inlier_count >= 6);
  }
}

TEST_CASE("fit_trajectory sees pure translation as rotation-free") {
  // 7-point non-coplanar cluster translating rigidly amid static background.
  std::vector<Vec3> pts = cloud(7, 23);
  for (int i = 0; i < 10; ++i) pts.push_back({0.9 * std::cos(i), 0.9 * std::sin(i), 2.3});
  const Vec3 shift{0.3, 0.1, 0.0};
  const int H = 5;
  TrackTensor tracks = TrackTensor::zeros(static_cast<int>(pts.size()), H);
  for (size_t i = 0; i < pts.size(); ++i) {
    for (int t = 0; t < H; ++t) {
      const Vec3 p = i < 7 ? Vec3(pts[i] + shift * ((t + 1.0) / H)) : pts[i];
      const Vec2 q = geom::project(test_cam(), p);
      tracks.set(static_cast<int>(i), t, q.x(), q.y());
    }
  }
  const TransformTrajectory fit = fit_trajectory(tracks, pts, test_cam(), FitConfig{});
  CHECK(fit.moving_indices == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  for (int t = 0; t < H; ++t) {
    CHECK(geom::geodesic_angle(fit.transforms[t].rotation.m, geom::Mat3::Identity()) < 1e-6);
    CHECK((fit.transforms[t].translation - shift * ((t + 1.0) / H)).norm() < 1e-6);
  }
}

TEST_CASE("appending static background points does not change the fit") {
  const auto pts = cloud(12, 27);
  const int H = 4;
  TrackTensor tracks = TrackTensor::zeros(12, H);
  const RigidTransform step = RigidTransform::from_parts(
      geom::rotation_exp(Vec3{0.0, 0.0, 0.06}), Vec3{0.05, 0.0, 0.0});
  RigidTransform acc = RigidTransform::identity();
  std::vector<RigidTransform> gt;
  for (int t = 0; t < H; ++t) {
    acc = geom::compose(step, acc);
    gt.push_back(acc);
    for (int i = 0; i < 12; ++i) {
      const Vec2 q = geom::project(test_cam(), geom::apply(acc, pts[i]));
      tracks.set(i, t, q.x(), q.y());
    }
  }
  const TransformTrajectory base = fit_trajectory(tracks, pts, test_cam(), FitConfig{});

  auto pts2 = pts;
  TrackTensor tracks2 = TrackTensor::zeros(20, H);
  tracks2.values.topRows(12) = tracks.values;
  for (int i = 12; i < 20; ++i) {
    const Vec3 p{0.5 * std::sin(i), -0.4 * std::cos(i), 2.4};
    pts2.push_back(p);
    const Vec2 q = geom::project(test_cam(), p);
    for (int t = 0; t < H; ++t) tracks2.set(i, t, q.x(), q.y());
  }
  const TransformTrajectory ext = fit_trajectory(tracks2, pts2, test_cam(), FitConfig{});
  REQUIRE(ext.transforms.size() == base.transforms.size());
  CHECK(ext.moving_indices == base.moving_indices);
  for (size_t t = 0; t < base.transforms.size(); ++t) {
    CHECK(ext.transforms[t].rotation.m == base.transforms[t].rotation.m);
    CHECK(ext.transforms[t].translation == base.transforms[t].translation);
  }
}

TEST_CASE("fit config validation rejects bad thresholds") {
  FitConfig cfg;
  cfg.ransac_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = FitConfig{};
  cfg.motion_threshold = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = FitConfig{};
  cfg.ransac_inlier_px = 1000.0;
  const auto pts = cloud(8, 1);
  TrackTensor tr = TrackTensor::zeros(8, 1);
  CHECK_THROWS_AS(ransac_fit(make_moving(pts, tr), test_cam(), 0, cfg), InvalidConfig);
}
