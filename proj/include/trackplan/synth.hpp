#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trackplan/geometry.hpp"
#include "trackplan/raster.hpp"
#include "trackplan/track.hpp"

// Synthetic rigid-body episode generation: point-cloud shapes, smooth rigid
// motion trajectories, exact projected tracks, splat rasters, and the split
// taxonomy used for generalization experiments.
namespace trackplan::synth {

enum class ShapeKind { box, cylinder_shell, planar_door, handle_bar, blob };
enum class FamilyKind { translation_line, rotation_about_scene_axis, screw, arc_pull, pour_tilt };

std::string to_string(ShapeKind k);
std::string to_string(FamilyKind k);
ShapeKind shape_from_string(const std::string& s);
FamilyKind family_from_string(const std::string& s);

struct SceneSpec {
  ShapeKind object_shape = ShapeKind::box;
  // Multiplier band on the base shape dimensions; disjoint bands realize
  // "unseen instance" splits.
  double instance_scale_lo = 0.8;
  double instance_scale_hi = 1.2;
  int n_object_points = 64;
  int n_background_points = 16;
  double depth_lo = 1.6;
  double depth_hi = 2.6;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_object_points < 8) throw InvalidConfig("scene: n_object_points must be >= 8");
    if (!(depth_lo > 0) || !(depth_hi > depth_lo)) throw InvalidConfig("scene: bad depth_range");
    if (!(instance_scale_hi >= instance_scale_lo) || !(instance_scale_lo > 0))
      throw InvalidConfig("scene: bad instance scale band");
  }
};

struct Scene {
  std::vector<geom::Vec3> points3d;        // object points first, then background
  std::vector<std::uint8_t> object_mask;   // 1 = object, 0 = background
  geom::Vec3 object_center = geom::Vec3::Zero();
  geom::Mat3 object_rotation = geom::Mat3::Identity();
  std::vector<double> shape_dims;          // sampled base dimensions, per shape kind
  double object_radius = 0.0;              // max point distance from center
};

struct MotionFamily {
  FamilyKind kind = FamilyKind::translation_line;
  // Placement anchor (the object center) and its spatial extent; motions are
  // constructed relative to these.
  geom::Vec3 anchor = geom::Vec3::Zero();
  double anchor_radius = 0.2;
  // Primary magnitude range: trajectory length in scene units for
  // translation-line, total angle in radians for the rotational families.
  // Negative (the default) selects the per-kind default range; zero is a
  // legitimate request for null motion.
  double magnitude_lo = -1.0;
  double magnitude_hi = -1.0;
  // Hard bound on each consecutive relative twist norm.
  double step_bound = 0.2;
};

// Deterministic per spec.seed; throws DegenerateShape when 100 resampling
// attempts cannot satisfy the non-coplanarity / frame-visibility checks.
Scene sample_scene(const SceneSpec& spec, const geom::CameraIntrinsics& k);

// H transforms T_1..T_H relative to the first frame. T_1 stays near identity
// and consecutive relative twists respect family.step_bound.
std::vector<geom::RigidTransform> sample_motion(const MotionFamily& family, int H,
                                                std::uint64_t seed);

// Exact projected tracks: object points follow the transforms, background
// points repeat their first-frame projection. Points that leave the frame at
// any step are flagged, not dropped.
TrackTensor render_tracks(const Scene& scene, const std::vector<geom::RigidTransform>& transforms,
                          const geom::CameraIntrinsics& k);

struct CorruptedTracks {
  TrackTensor tracks;
  std::vector<int> outlier_indices;  // points whose tracks were replaced wholesale
};

// Gaussian per-coordinate noise on regular points; round(fraction * p) points
// replaced by uniform in-frame positions at every step.
CorruptedTracks corrupt_tracks(const TrackTensor& tracks, double noise_sigma,
                               double outlier_fraction, std::uint64_t seed,
                               const geom::CameraIntrinsics& k);

struct Episode {
  geom::CameraIntrinsics intrinsics;
  int horizon = 0;
  std::vector<geom::Vec3> points3d_t0;
  std::vector<std::uint8_t> object_mask;
  std::vector<geom::RigidTransform> gt_transforms;
  TrackTensor gt_tracks;
  Raster initial_raster;
  Raster goal_raster;
  std::string split_tag;  // train | MG | G | CG | TG
  ShapeKind shape = ShapeKind::box;
  FamilyKind family = FamilyKind::translation_line;
  std::uint64_t seed = 0;
  int index = 0;

  int n_points() const { return static_cast<int>(points3d_t0.size()); }
  std::vector<geom::Vec2> first_frame_points2d() const;
  std::vector<int> object_indices() const;
  geom::Vec3 object_centroid() const;
};

struct SplitConfig {
  int episodes = 0;
  std::vector<std::pair<ShapeKind, FamilyKind>> pairs;
  double instance_scale_lo = 0.8;
  double instance_scale_hi = 1.2;
};

struct DatasetConfig {
  std::string name = "dataset";
  std::uint64_t seed = 0;
  int horizon = 16;
  geom::CameraIntrinsics intrinsics{220.0, 220.0, 128.0, 128.0, 256, 256};
  int raster_resolution = 64;
  int points_min = 200;
  int points_max = 400;
  double background_fraction = 0.15;
  double depth_lo = 1.6;
  double depth_hi = 2.6;
  double step_bound = 0.2;
  // Split name -> config. Valid names: train, MG, G, CG, TG.
  std::map<std::string, SplitConfig> splits;

  // Enforces the split taxonomy: MG repeats train pairs; G uses seen shapes
  // and families with a disjoint instance-scale band; CG pairs seen shapes
  // with seen families in combinations absent from train; TG uses shapes and
  // families that never appear in train.
  void validate() const;
};

Episode generate_episode(const DatasetConfig& cfg, const std::string& split_tag, int index);

// Writes manifest + per-episode files through the dataset io contract.
// Returns the number of episodes written.
int generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

// Deterministic random subset of an episode's points (tracks, 3D points, and
// mask stay consistent; rasters and transforms are untouched). Returns the
// episode unchanged when it already has at most n_points points.
Episode subsample_points(const Episode& ep, int n_points, std::uint64_t seed);

}  // namespace trackplan::synth
