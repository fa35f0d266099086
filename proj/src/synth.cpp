#include "trackplan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <set>

#include "trackplan/io.hpp"
#include "trackplan/rng.hpp"

namespace trackplan::synth {

using geom::Mat3;
using geom::RigidTransform;
using geom::Vec2;
using geom::Vec3;

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder_shell: return "cylinder-shell";
    case ShapeKind::planar_door: return "planar-door";
    case ShapeKind::handle_bar: return "handle-bar";
    case ShapeKind::blob: return "blob";
  }
  throw InvalidConfig("unknown shape kind");
}

std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::translation_line: return "translation-line";
    case FamilyKind::rotation_about_scene_axis: return "rotation-about-scene-axis";
    case FamilyKind::screw: return "screw";
    case FamilyKind::arc_pull: return "arc-pull";
    case FamilyKind::pour_tilt: return "pour-tilt";
  }
  throw InvalidConfig("unknown family kind");
}

ShapeKind shape_from_string(const std::string& s) {
  if (s == "box") return ShapeKind::box;
  if (s == "cylinder-shell") return ShapeKind::cylinder_shell;
  if (s == "planar-door") return ShapeKind::planar_door;
  if (s == "handle-bar") return ShapeKind::handle_bar;
  if (s == "blob") return ShapeKind::blob;
  throw InvalidConfig("unknown shape kind: " + s);
}

FamilyKind family_from_string(const std::string& s) {
  if (s == "translation-line") return FamilyKind::translation_line;
  if (s == "rotation-about-scene-axis") return FamilyKind::rotation_about_scene_axis;
  if (s == "screw") return FamilyKind::screw;
  if (s == "arc-pull") return FamilyKind::arc_pull;
  if (s == "pour-tilt") return FamilyKind::pour_tilt;
  throw InvalidConfig("unknown family kind: " + s);
}

namespace {

Vec3 random_unit(Rng& rng) {
  Vec3 v{rng.normal(), rng.normal(), rng.normal()};
  return v.normalized();
}

// Points in the object frame, centered at the origin. dims are the sampled
// base dimensions recorded in Scene::shape_dims.
std::vector<Vec3> shape_points(ShapeKind kind, const std::vector<double>& dims, int n, Rng& rng) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  switch (kind) {
    case ShapeKind::box: {
      const double hx = dims[0], hy = dims[1], hz = dims[2];
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
          for (double sz : {-1.0, 1.0}) pts.push_back({sx * hx, sy * hy, sz * hz});
      while (static_cast<int>(pts.size()) < n) {
        const int face = rng.uniform_int(6);
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
        switch (face) {
          case 0: pts.push_back({hx, a * hy, b * hz}); break;
          case 1: pts.push_back({-hx, a * hy, b * hz}); break;
          case 2: pts.push_back({a * hx, hy, b * hz}); break;
          case 3: pts.push_back({a * hx, -hy, b * hz}); break;
          case 4: pts.push_back({a * hx, b * hy, hz}); break;
          default: pts.push_back({a * hx, b * hy, -hz}); break;
        }
      }
      break;
    }
    case ShapeKind::cylinder_shell: {
      const double r = dims[0], hh = dims[1];
      for (int i = 0; i < n; ++i) {
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        pts.push_back({r * std::cos(phi), r * std::sin(phi), rng.uniform(-hh, hh)});
      }
      break;
    }
    case ShapeKind::planar_door: {
      const double hw = dims[0], hh = dims[1];
      for (int i = 0; i < n; ++i)
        pts.push_back({rng.uniform(-hw, hw), rng.uniform(-hh, hh), 0.0});
      break;
    }
    case ShapeKind::handle_bar: {
      const double hl = dims[0], hc = dims[1];
      for (int i = 0; i < n; ++i)
        pts.push_back({rng.uniform(-hl, hl), rng.uniform(-hc, hc), rng.uniform(-hc, hc)});
      break;
    }
    case ShapeKind::blob: {
      const double sx = dims[0], sy = dims[1], sz = dims[2];
      for (int i = 0; i < n; ++i) {
        pts.push_back({std::clamp(rng.normal() * sx, -2.5 * sx, 2.5 * sx),
                       std::clamp(rng.normal() * sy, -2.5 * sy, 2.5 * sy),
                       std::clamp(rng.normal() * sz, -2.5 * sz, 2.5 * sz)});
      }
      break;
    }
  }
  return pts;
}

std::vector<double> sample_dims(ShapeKind kind, double scale, Rng& rng) {
  switch (kind) {
    case ShapeKind::box:
      return {scale * rng.uniform(0.07, 0.14), scale * rng.uniform(0.07, 0.14),
              scale * rng.uniform(0.07, 0.14)};
    case ShapeKind::cylinder_shell:
      return {scale * rng.uniform(0.06, 0.12), scale * rng.uniform(0.10, 0.18)};
    case ShapeKind::planar_door:
      return {scale * rng.uniform(0.12, 0.20), scale * rng.uniform(0.09, 0.16)};
    case ShapeKind::handle_bar:
      return {scale * rng.uniform(0.14, 0.22), scale * rng.uniform(0.02, 0.04)};
    case ShapeKind::blob:
      return {scale * rng.uniform(0.05, 0.10), scale * rng.uniform(0.05, 0.10),
              scale * rng.uniform(0.05, 0.10)};
  }
  throw InvalidConfig("unknown shape kind");
}

double max_extent(ShapeKind kind, const std::vector<double>& dims) {
  switch (kind) {
    case ShapeKind::box:
      return std::sqrt(dims[0] * dims[0] + dims[1] * dims[1] + dims[2] * dims[2]);
    case ShapeKind::cylinder_shell: return std::sqrt(dims[0] * dims[0] + dims[1] * dims[1]);
    case ShapeKind::planar_door: return std::sqrt(dims[0] * dims[0] + dims[1] * dims[1]);
    case ShapeKind::handle_bar: return std::sqrt(dims[0] * dims[0] + 2.0 * dims[1] * dims[1]);
    case ShapeKind::blob: return 2.5 * std::sqrt(dims[0] * dims[0] + dims[1] * dims[1] + dims[2] * dims[2]);
  }
  throw InvalidConfig("unknown shape kind");
}

// Smallest/largest singular values of the centered point matrix.
std::pair<double, double> spread_singular_values(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd m(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) m.row(i) = (pts[i] - mean).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return {sv(sv.size() - 1), sv(0)};
}

}  // namespace

Scene sample_scene(const SceneSpec& spec, const geom::CameraIntrinsics& k) {
  spec.validate();
  k.validate();
  Rng rng(spec.seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double scale = rng.uniform(spec.instance_scale_lo, spec.instance_scale_hi);
    const std::vector<double> dims = sample_dims(spec.object_shape, scale, rng);
    const Mat3 orient = geom::rotation_exp(random_unit(rng) * rng.uniform(0.0, std::numbers::pi * 0.9));
    const double extent = max_extent(spec.object_shape, dims);

    double z_lo = spec.depth_lo + extent;
    double z_hi = spec.depth_hi - extent;
    if (z_hi <= z_lo) z_lo = z_hi = 0.5 * (spec.depth_lo + spec.depth_hi);
    const double z = rng.uniform(z_lo, z_hi);
    // Aim the center projection at the central 40% of the frame.
    const double u0 = k.cx + rng.uniform(-0.2, 0.2) * k.width;
    const double v0 = k.cy + rng.uniform(-0.2, 0.2) * k.height;
    const Vec3 center = geom::backproject(k, {u0, v0}, z);

    std::vector<Vec3> local = shape_points(spec.object_shape, dims, spec.n_object_points, rng);
    std::vector<Vec3> object(local.size());
    for (size_t i = 0; i < local.size(); ++i) object[i] = center + orient * local[i];

    bool ok = true;
    for (const auto& p : object) {
      if (p.z() < spec.depth_lo || p.z() > spec.depth_hi) { ok = false; break; }
      if (!geom::in_frame(k, geom::project(k, p))) { ok = false; break; }
    }
    if (ok && spec.object_shape != ShapeKind::planar_door) {
      auto [smin, smax] = spread_singular_values(object);
      if (!(smin > 1e-6 * smax)) ok = false;
    }
    if (!ok) continue;

    Scene scene;
    scene.points3d = std::move(object);
    scene.object_mask.assign(scene.points3d.size(), 1);
    scene.object_center = center;
    scene.object_rotation = orient;
    scene.shape_dims = dims;
    for (const auto& p : scene.points3d)
      scene.object_radius = std::max(scene.object_radius, (p - center).norm());

    for (int i = 0; i < spec.n_background_points; ++i) {
      const Vec2 q{rng.uniform(1.0, k.width - 1.0), rng.uniform(1.0, k.height - 1.0)};
      scene.points3d.push_back(geom::backproject(k, q, rng.uniform(spec.depth_lo, spec.depth_hi)));
      scene.object_mask.push_back(0);
    }
    return scene;
  }
  throw DegenerateShape("sample_scene: no valid sample after 100 attempts (shape " +
                        to_string(spec.object_shape) + ")");
}

namespace {

struct MotionParams {
  Vec3 dir = Vec3::UnitX();       // translation direction
  Vec3 axis = Vec3::UnitY();      // rotation axis direction
  Vec3 axis_point = Vec3::Zero(); // point the axis passes through
  double magnitude = 0.0;         // length (translation) or signed angle (rotation)
  double pitch = 0.0;             // screw translation along the axis
};

MotionParams draw_params(const MotionFamily& f, Rng& rng) {
  double lo = f.magnitude_lo, hi = f.magnitude_hi;
  if (lo < 0.0 || hi < 0.0) {
    switch (f.kind) {
      case FamilyKind::translation_line: lo = 0.30; hi = 0.70; break;
      case FamilyKind::rotation_about_scene_axis: lo = 0.5236; hi = 1.3090; break;  // 30..75 deg
      case FamilyKind::screw: lo = 0.5236; hi = 1.3090; break;
      case FamilyKind::arc_pull: lo = 0.2618; hi = 0.5236; break;                   // 15..30 deg
      case FamilyKind::pour_tilt: lo = 0.70; hi = 1.40; break;
    }
  }
  MotionParams p;
  p.magnitude = rng.uniform(lo, hi);
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  switch (f.kind) {
    case FamilyKind::translation_line: {
      Vec3 d = random_unit(rng);
      d.z() *= 0.3;  // keep motion mostly lateral so depth stays safe
      p.dir = d.normalized();
      break;
    }
    case FamilyKind::rotation_about_scene_axis: {
      p.axis = random_unit(rng);
      Vec3 off = random_unit(rng);
      off -= off.dot(p.axis) * p.axis;
      if (off.norm() < 1e-6) off = p.axis.unitOrthogonal();
      p.axis_point = f.anchor + off.normalized() * (rng.uniform(0.8, 1.5) * f.anchor_radius);
      p.magnitude *= sign;
      break;
    }
    case FamilyKind::screw: {
      p.axis = random_unit(rng);
      p.axis_point = f.anchor;
      p.magnitude *= sign;
      p.pitch = rng.uniform(0.10, 0.25);
      break;
    }
    case FamilyKind::arc_pull: {
      Vec3 a{0.2 * rng.normal(), 1.0, 0.2 * rng.normal()};
      p.axis = a.normalized();
      Vec3 off = random_unit(rng);
      off -= off.dot(p.axis) * p.axis;
      if (off.norm() < 1e-6) off = p.axis.unitOrthogonal();
      p.axis_point = f.anchor + off.normalized() * rng.uniform(0.6, 1.2);
      p.magnitude *= sign;
      break;
    }
    case FamilyKind::pour_tilt: {
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      p.axis = Vec3{std::cos(phi), 0.0, std::sin(phi)};
      p.axis_point = f.anchor + Vec3{0.0, -1.0, 0.0} * (rng.uniform(0.8, 1.2) * f.anchor_radius);
      p.magnitude *= sign;
      break;
    }
  }
  return p;
}

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

std::vector<RigidTransform> build_trajectory(const MotionFamily& f, const MotionParams& p, int H,
                                             double shrink) {
  std::vector<RigidTransform> out;
  out.reserve(H);
  const double mag = p.magnitude * shrink;
  for (int t = 1; t <= H; ++t) {
    const double s = smoothstep(static_cast<double>(t) / H);
    switch (f.kind) {
      case FamilyKind::translation_line:
        out.push_back({geom::Rotation3::identity(), p.dir * (mag * s)});
        break;
      case FamilyKind::rotation_about_scene_axis:
      case FamilyKind::arc_pull:
      case FamilyKind::pour_tilt:
        out.push_back(geom::rotation_about_point(p.axis, mag * s, p.axis_point));
        break;
      case FamilyKind::screw: {
        RigidTransform r = geom::rotation_about_point(p.axis, mag * s, p.axis_point);
        r.translation += p.axis * (p.pitch * shrink * s);
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

double max_consecutive_twist(const std::vector<RigidTransform>& traj) {
  double m = 0.0;
  RigidTransform prev = RigidTransform::identity();
  for (const auto& t : traj) {
    m = std::max(m, geom::log_map(geom::compose(geom::invert(prev), t)).norm());
    prev = t;
  }
  return m;
}

}  // namespace

std::vector<RigidTransform> sample_motion(const MotionFamily& family, int H, std::uint64_t seed) {
  if (H < 2) throw InvalidConfig("sample_motion: H must be >= 2");
  Rng rng(seed);
  const MotionParams params = draw_params(family, rng);
  double shrink = 1.0;
  std::vector<RigidTransform> traj = build_trajectory(family, params, H, shrink);
  for (int iter = 0; iter < 16; ++iter) {
    const double worst = max_consecutive_twist(traj);
    if (worst <= family.step_bound) break;
    shrink *= 0.95 * family.step_bound / worst;
    traj = build_trajectory(family, params, H, shrink);
  }
  return traj;
}

TrackTensor render_tracks(const Scene& scene, const std::vector<RigidTransform>& transforms,
                          const geom::CameraIntrinsics& k) {
  const int p = static_cast<int>(scene.points3d.size());
  const int H = static_cast<int>(transforms.size());
  TrackTensor tracks = TrackTensor::zeros(p, H, CoordSpace::pixels);
  for (int i = 0; i < p; ++i) {
    if (scene.object_mask[i]) {
      for (int t = 0; t < H; ++t) {
        const Vec2 q = geom::project(k, geom::apply(transforms[t], scene.points3d[i]));
        tracks.set(i, t, q.x(), q.y());
        if (!geom::in_frame(k, q)) tracks.out_of_frame[i] = 1;
      }
    } else {
      const Vec2 q = geom::project(k, scene.points3d[i]);
      for (int t = 0; t < H; ++t) tracks.set(i, t, q.x(), q.y());
      if (!geom::in_frame(k, q)) tracks.out_of_frame[i] = 1;
    }
  }
  return tracks;
}

CorruptedTracks corrupt_tracks(const TrackTensor& tracks, double noise_sigma,
                               double outlier_fraction, std::uint64_t seed,
                               const geom::CameraIntrinsics& k) {
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 0.5))
    throw InvalidConfig("corrupt_tracks: outlier_fraction must be in [0, 0.5)");
  CorruptedTracks out;
  out.tracks = tracks;
  Rng rng(seed);
  const int n_out = static_cast<int>(std::llround(outlier_fraction * tracks.p));
  if (n_out > 0) {
    out.outlier_indices = rng.sample_indices(tracks.p, n_out);
    std::sort(out.outlier_indices.begin(), out.outlier_indices.end());
  }
  std::vector<std::uint8_t> is_outlier(tracks.p, 0);
  for (int i : out.outlier_indices) is_outlier[i] = 1;
  for (int i = 0; i < tracks.p; ++i) {
    if (is_outlier[i]) {
      for (int t = 0; t < tracks.H; ++t)
        out.tracks.set(i, t, rng.uniform(0.0, k.width), rng.uniform(0.0, k.height));
    } else if (noise_sigma > 0.0) {
      for (int t = 0; t < tracks.H; ++t)
        out.tracks.set(i, t, tracks.u(i, t) + rng.normal(0.0, noise_sigma),
                       tracks.v(i, t) + rng.normal(0.0, noise_sigma));
    }
  }
  return out;
}

std::vector<Vec2> Episode::first_frame_points2d() const {
  std::vector<Vec2> out;
  out.reserve(points3d_t0.size());
  for (const auto& p : points3d_t0) out.push_back(geom::project(intrinsics, p));
  return out;
}

std::vector<int> Episode::object_indices() const {
  std::vector<int> out;
  for (int i = 0; i < n_points(); ++i)
    if (object_mask[i]) out.push_back(i);
  return out;
}

Vec3 Episode::object_centroid() const {
  Vec3 c = Vec3::Zero();
  int n = 0;
  for (int i = 0; i < n_points(); ++i) {
    if (object_mask[i]) {
      c += points3d_t0[i];
      ++n;
    }
  }
  if (n == 0) throw EmptyPointSet("episode has no object points");
  return c / static_cast<double>(n);
}

namespace {

std::set<ShapeKind> shapes_of(const SplitConfig& s) {
  std::set<ShapeKind> out;
  for (const auto& pr : s.pairs) out.insert(pr.first);
  return out;
}

std::set<FamilyKind> families_of(const SplitConfig& s) {
  std::set<FamilyKind> out;
  for (const auto& pr : s.pairs) out.insert(pr.second);
  return out;
}

bool pair_in(const SplitConfig& s, const std::pair<ShapeKind, FamilyKind>& pr) {
  return std::find(s.pairs.begin(), s.pairs.end(), pr) != s.pairs.end();
}

}  // namespace

void DatasetConfig::validate() const {
  intrinsics.validate();
  if (horizon < 2) throw InvalidConfig("dataset: horizon must be >= 2");
  if (raster_resolution < 16) throw InvalidConfig("dataset: raster_resolution must be >= 16");
  if (points_min < 8 || points_max < points_min)
    throw InvalidConfig("dataset: bad points_min/points_max");
  if (!(background_fraction >= 0.0 && background_fraction <= 0.9))
    throw InvalidConfig("dataset: background_fraction must be in [0, 0.9]");
  if (splits.empty()) throw InvalidConfig("dataset: splits is empty");

  static const std::set<std::string> kAllowed{"train", "MG", "G", "CG", "TG"};
  for (const auto& [name, sc] : splits) {
    if (!kAllowed.count(name)) throw InvalidConfig("dataset: unknown split name " + name);
    if (sc.episodes < 0) throw InvalidConfig("dataset: negative episode count in split " + name);
    if (sc.episodes > 0 && sc.pairs.empty())
      throw InvalidConfig("dataset: split " + name + " has episodes but no (shape, family) pairs");
    if (!(sc.instance_scale_hi >= sc.instance_scale_lo) || !(sc.instance_scale_lo > 0))
      throw InvalidConfig("dataset: bad instance scale band in split " + name);
  }

  const bool has_eval = splits.count("MG") || splits.count("G") || splits.count("CG") || splits.count("TG");
  if (has_eval && !splits.count("train"))
    throw InvalidConfig("dataset: eval splits require a train split");
  if (!splits.count("train")) return;

  const SplitConfig& train = splits.at("train");
  const auto train_shapes = shapes_of(train);
  const auto train_families = families_of(train);

  if (auto it = splits.find("MG"); it != splits.end()) {
    for (const auto& pr : it->second.pairs)
      if (!pair_in(train, pr))
        throw InvalidConfig("dataset: MG pair not present in train: " + to_string(pr.first) +
                            " / " + to_string(pr.second));
  }
  if (auto it = splits.find("G"); it != splits.end()) {
    for (const auto& pr : it->second.pairs) {
      if (!train_shapes.count(pr.first) || !train_families.count(pr.second))
        throw InvalidConfig("dataset: G must use seen shapes and families");
    }
    const auto& g = it->second;
    const bool disjoint = g.instance_scale_lo > train.instance_scale_hi ||
                          g.instance_scale_hi < train.instance_scale_lo;
    if (!disjoint)
      throw InvalidConfig("dataset: G instance scale band must not overlap train's");
  }
  if (auto it = splits.find("CG"); it != splits.end()) {
    for (const auto& pr : it->second.pairs) {
      if (pair_in(train, pr))
        throw InvalidConfig("dataset: CG pair also present in train: " + to_string(pr.first) +
                            " / " + to_string(pr.second));
      if (!train_shapes.count(pr.first) || !train_families.count(pr.second))
        throw InvalidConfig("dataset: CG must pair seen shapes with seen families");
    }
  }
  if (auto it = splits.find("TG"); it != splits.end()) {
    for (const auto& pr : it->second.pairs) {
      if (train_shapes.count(pr.first))
        throw InvalidConfig("dataset: TG shape also present in train: " + to_string(pr.first));
      if (train_families.count(pr.second))
        throw InvalidConfig("dataset: TG family also present in train: " + to_string(pr.second));
    }
  }
}

Episode generate_episode(const DatasetConfig& cfg, const std::string& split_tag, int index) {
  const auto it = cfg.splits.find(split_tag);
  if (it == cfg.splits.end()) throw InvalidConfig("generate_episode: unknown split " + split_tag);
  const SplitConfig& sc = it->second;

  const std::uint64_t ep_seed = child_seed(cfg.seed, "episode-" + split_tag, index);
  Rng rng(ep_seed);
  const auto& pair = sc.pairs[rng.uniform_int(static_cast<int>(sc.pairs.size()))];
  const int p_total = cfg.points_min + rng.uniform_int(cfg.points_max - cfg.points_min + 1);
  const int n_bg = static_cast<int>(std::llround(cfg.background_fraction * p_total));
  const int n_obj = std::max(8, p_total - n_bg);

  SceneSpec spec;
  spec.object_shape = pair.first;
  spec.instance_scale_lo = sc.instance_scale_lo;
  spec.instance_scale_hi = sc.instance_scale_hi;
  spec.n_object_points = n_obj;
  spec.n_background_points = n_bg;
  spec.depth_lo = cfg.depth_lo;
  spec.depth_hi = cfg.depth_hi;
  spec.seed = child_seed(ep_seed, "scene");
  const Scene scene = sample_scene(spec, cfg.intrinsics);

  MotionFamily family;
  family.kind = pair.second;
  family.anchor = scene.object_center;
  family.anchor_radius = scene.object_radius;
  family.step_bound = cfg.step_bound;

  // Retry motion draws that push the object behind the camera, mostly out of
  // frame, or barely move it on screen (rotation axes can pass so close to a
  // small object that almost nothing shifts by a usable margin — downstream
  // transform recovery separates moving from static points at a 5 px
  // threshold and needs a solid inlier pool above it). Each attempt uses its
  // own child stream so retries stay reproducible.
  for (int attempt = 0; attempt < 50; ++attempt) {
    const auto transforms = sample_motion(family, cfg.horizon, child_seed(ep_seed, "motion", attempt));
    TrackTensor tracks;
    try {
      tracks = render_tracks(scene, transforms, cfg.intrinsics);
    } catch (const NonPositiveDepth&) {
      continue;
    }
    int oof = 0, n_object = 0, visible = 0;
    for (int i = 0; i < tracks.p; ++i) {
      if (!scene.object_mask[i]) continue;
      ++n_object;
      if (tracks.flagged(i)) {
        ++oof;
        continue;
      }
      const Vec2 p0 = geom::project(cfg.intrinsics, scene.points3d[i]);
      double peak = 0.0;
      for (int t = 0; t < cfg.horizon; ++t)
        peak = std::max(peak, std::hypot(tracks.u(i, t) - p0.x(), tracks.v(i, t) - p0.y()));
      if (peak > 8.0) ++visible;
    }
    if (oof * 2 > n_object) continue;
    if (visible < std::max(8, (n_object - oof) / 4)) continue;

    Episode ep;
    ep.intrinsics = cfg.intrinsics;
    ep.horizon = cfg.horizon;
    ep.points3d_t0 = scene.points3d;
    ep.object_mask = scene.object_mask;
    ep.gt_transforms = transforms;
    ep.gt_tracks = tracks;
    ep.split_tag = split_tag;
    ep.shape = pair.first;
    ep.family = pair.second;
    ep.seed = ep_seed;
    ep.index = index;

    std::vector<Vec2> first(ep.n_points()), last(ep.n_points());
    for (int i = 0; i < ep.n_points(); ++i) {
      first[i] = geom::project(cfg.intrinsics, scene.points3d[i]);
      last[i] = Vec2{tracks.u(i, cfg.horizon - 1), tracks.v(i, cfg.horizon - 1)};
    }
    ep.initial_raster = rasterize(first, cfg.intrinsics.width, cfg.intrinsics.height,
                                  cfg.raster_resolution);
    ep.goal_raster = rasterize(last, cfg.intrinsics.width, cfg.intrinsics.height,
                               cfg.raster_resolution);
    return ep;
  }
  throw InvalidConfig("generate_episode: split " + split_tag + " index " + std::to_string(index) +
                      ": no in-frustum, visibly moving motion found; loosen motion or depth "
                      "config");
}

int generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "episodes", ec);
  if (ec) throw IoError("generate_dataset: cannot create " + (root / "episodes").string());

  static const char* kOrder[] = {"train", "MG", "G", "CG", "TG"};
  std::vector<io::ManifestEntry> entries;
  for (const char* split : kOrder) {
    const auto it = cfg.splits.find(split);
    if (it == cfg.splits.end()) continue;
    for (int i = 0; i < it->second.episodes; ++i) {
      try {
        const Episode ep = generate_episode(cfg, split, i);
        char name[64];
        std::snprintf(name, sizeof(name), "ep_%s_%06d.json", split, i);
        io::write_episode(root / "episodes" / name, ep);
        entries.push_back({split, std::string("episodes/") + name});
      } catch (const Error& e) {
        throw Error("generate_dataset: split " + std::string(split) + " episode " +
                    std::to_string(i) + ": " + e.what());
      }
    }
  }
  io::write_manifest(root, cfg, entries);
  return static_cast<int>(entries.size());
}

Episode subsample_points(const Episode& ep, int n_points, std::uint64_t seed) {
  if (n_points < 1) throw InvalidConfig("subsample_points: need at least one point");
  const int p = ep.n_points();
  if (n_points >= p) return ep;
  Rng rng(child_seed(seed, "subsample"));
  std::vector<int> indices = rng.sample_indices(p, n_points);
  std::sort(indices.begin(), indices.end());  // keep the object-first layout
  Episode out = ep;
  out.gt_tracks = ep.gt_tracks.select(indices);
  out.points3d_t0.clear();
  out.object_mask.clear();
  out.points3d_t0.reserve(indices.size());
  out.object_mask.reserve(indices.size());
  for (int i : indices) {
    out.points3d_t0.push_back(ep.points3d_t0[static_cast<std::size_t>(i)]);
    out.object_mask.push_back(ep.object_mask[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace trackplan::synth
