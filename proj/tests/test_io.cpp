#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "testsupport.hpp"
#include "trackplan/io.hpp"
#include "trackplan/rng.hpp"
#include "trackplan/synth.hpp"

using namespace trackplan;
namespace fs = std::filesystem;

TEST_CASE("json files round-trip doubles and 64-bit seeds exactly") {
  const fs::path dir = test::scratch_dir("io-json");
  const io::json j{{"a", 0.1},
                   {"b", 1e-300},
                   {"c", -3.141592653589793},
                   {"d", 0.30000000000000004},
                   {"seed", std::uint64_t{0xdeadbeefcafef00dull}}};
  io::write_json_file(dir / "x.json", j);
  const io::json back = io::read_json_file(dir / "x.json");
  CHECK(back.at("a").get<double>() == 0.1);
  CHECK(back.at("b").get<double>() == 1e-300);
  CHECK(back.at("c").get<double>() == -3.141592653589793);
  CHECK(back.at("d").get<double>() == 0.30000000000000004);
  CHECK(back.at("seed").get<std::uint64_t>() == 0xdeadbeefcafef00dull);
}

TEST_CASE("malformed json raises IoError with the path in the message") {
  const fs::path dir = test::scratch_dir("io-bad");
  io::write_text_file(dir / "broken.json", "{not json");
  CHECK_THROWS_AS(io::read_json_file(dir / "broken.json"), IoError);
  CHECK_THROWS_AS(io::read_json_file(dir / "missing.json"), IoError);
}

TEST_CASE("content hash matches the published fnv1a-64 vector") {
  const fs::path dir = test::scratch_dir("io-hash");
  io::write_text_file(dir / "abc.txt", "abc");
  CHECK(io::content_hash_file(dir / "abc.txt") == 0xe71fa2190541574bull);
  CHECK(io::hash_hex(0xe71fa2190541574bull) == "e71fa2190541574b");
}

TEST_CASE("transform json layout is row-major 3x4 with translation last") {
  geom::RigidTransform t = geom::RigidTransform::from_parts(
      geom::rotation_exp(geom::Vec3{0.0, 0.0, 0.5}), geom::Vec3{1.0, 2.0, 3.0});
  const io::json j = io::to_json(t);
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 12);
  CHECK(j[3].get<double>() == 1.0);
  CHECK(j[7].get<double>() == 2.0);
  CHECK(j[11].get<double>() == 3.0);
  const geom::RigidTransform back = io::transform_from_json(j);
  CHECK(back.rotation.m == t.rotation.m);
  CHECK(back.translation == t.translation);
}

TEST_CASE("track tensor json round-trips values, space, and flags exactly") {
  TrackTensor t = TrackTensor::zeros(3, 4, CoordSpace::normalized);
  Rng rng(5);
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 4; ++s) t.set(i, s, rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  t.out_of_frame[1] = 1;
  const TrackTensor back = io::tracks_from_json(io::to_json(t));
  CHECK(back.p == 3);
  CHECK(back.H == 4);
  CHECK(back.space == CoordSpace::normalized);
  CHECK(back.values == t.values);
  CHECK(back.out_of_frame == t.out_of_frame);
}

TEST_CASE("dataset config json round-trips including the split map") {
  synth::DatasetConfig cfg;
  cfg.name = "roundtrip";
  cfg.seed = 0xfeedface12345678ull;
  cfg.horizon = 9;
  synth::SplitConfig train;
  train.episodes = 3;
  train.pairs = {{synth::ShapeKind::handle_bar, synth::FamilyKind::arc_pull}};
  synth::SplitConfig mg = train;
  mg.episodes = 1;
  cfg.splits = {{"train", train}, {"MG", mg}};

  const synth::DatasetConfig back = io::dataset_config_from_json(io::to_json(cfg));
  CHECK(back.name == cfg.name);
  CHECK(back.seed == cfg.seed);
  CHECK(back.horizon == 9);
  CHECK(back.splits.size() == 2);
  CHECK(back.splits.at("train").pairs == cfg.splits.at("train").pairs);
  CHECK(back.splits.at("MG").episodes == 1);
  CHECK(back.intrinsics.fx == cfg.intrinsics.fx);
  CHECK(back.step_bound == cfg.step_bound);
}

namespace {

synth::DatasetConfig small_dataset_config(std::uint64_t seed) {
  synth::DatasetConfig cfg;
  cfg.name = "small";
  cfg.seed = seed;
  cfg.horizon = 5;
  cfg.raster_resolution = 32;
  cfg.points_min = 20;
  cfg.points_max = 30;
  synth::SplitConfig train;
  train.episodes = 6;
  train.pairs = {{synth::ShapeKind::box, synth::FamilyKind::translation_line},
                 {synth::ShapeKind::cylinder_shell, synth::FamilyKind::screw}};
  synth::SplitConfig mg;
  mg.episodes = 2;
  mg.pairs = train.pairs;
  synth::SplitConfig tg;
  tg.episodes = 2;
  tg.pairs = {{synth::ShapeKind::blob, synth::FamilyKind::pour_tilt}};
  cfg.splits = {{"train", train}, {"MG", mg}, {"TG", tg}};
  return cfg;
}

}  // namespace

TEST_CASE("generate_dataset writes a manifest of 10 episodes that parse back losslessly") {
  const fs::path dir = test::scratch_dir("io-dataset");
  const synth::DatasetConfig cfg = small_dataset_config(17);
  const int n = synth::generate_dataset(cfg, dir.string());
  CHECK(n == 10);

  const io::Dataset ds = io::open_dataset(dir);
  REQUIRE(ds.entries.size() == 10);
  CHECK(ds.count("train") == 6);
  CHECK(ds.count("MG") == 2);
  CHECK(ds.count("TG") == 2);
  CHECK(ds.config.seed == cfg.seed);

  for (const auto& entry : ds.entries) {
    const synth::Episode ep = io::load_episode(ds, entry);
    const synth::Episode fresh = synth::generate_episode(cfg, entry.split, ep.index);
    CHECK(ep.split_tag == entry.split);
    CHECK(ep.gt_tracks.values == fresh.gt_tracks.values);
    CHECK(ep.initial_raster == fresh.initial_raster);
    CHECK(ep.goal_raster == fresh.goal_raster);
    REQUIRE(ep.points3d_t0.size() == fresh.points3d_t0.size());
    for (size_t i = 0; i < ep.points3d_t0.size(); ++i)
      CHECK(ep.points3d_t0[i] == fresh.points3d_t0[i]);
    REQUIRE(ep.gt_transforms.size() == fresh.gt_transforms.size());
    for (size_t i = 0; i < ep.gt_transforms.size(); ++i) {
      CHECK(ep.gt_transforms[i].rotation.m == fresh.gt_transforms[i].rotation.m);
      CHECK(ep.gt_transforms[i].translation == fresh.gt_transforms[i].translation);
    }
  }

  const auto eps = io::load_split(ds, "MG");
  CHECK(eps.size() == 2);
  CHECK(eps[0].split_tag == "MG");
}

TEST_CASE("regenerating a dataset with the same config yields bitwise-identical files") {
  const fs::path a = test::scratch_dir("io-regen-a");
  const fs::path b = test::scratch_dir("io-regen-b");
  const synth::DatasetConfig cfg = small_dataset_config(29);
  synth::generate_dataset(cfg, a.string());
  synth::generate_dataset(cfg, b.string());

  CHECK(io::read_text_file(a / "manifest.json") == io::read_text_file(b / "manifest.json"));
  const io::Dataset ds = io::open_dataset(a);
  for (const auto& entry : ds.entries)
    CHECK(io::read_text_file(a / entry.file) == io::read_text_file(b / entry.file));
}

TEST_CASE("checkpoint round-trips kind, meta, and tensor bits") {
  const fs::path dir = test::scratch_dir("io-ckpt");
  io::Checkpoint ck;
  ck.kind = "demo";
  ck.meta = {{"steps", 12}, {"lr", 3e-4}, {"seed", std::uint64_t{0x8000000000000001ull}}};
  Rng rng(2);
  Eigen::MatrixXd m1(4, 7), m2(1, 3);
  for (Eigen::Index r = 0; r < m1.rows(); ++r)
    for (Eigen::Index c = 0; c < m1.cols(); ++c) m1(r, c) = rng.normal();
  m2 << 0.1, -1e-300, 3.0;
  ck.tensors.emplace_back("w1", m1);
  ck.tensors.emplace_back("b1", m2);
  io::write_checkpoint(dir / "model.ckpt", ck);

  const io::Checkpoint back = io::read_checkpoint(dir / "model.ckpt");
  CHECK(back.kind == "demo");
  CHECK(back.meta.at("steps").get<int>() == 12);
  CHECK(back.meta.at("lr").get<double>() == 3e-4);
  CHECK(back.meta.at("seed").get<std::uint64_t>() == 0x8000000000000001ull);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "w1");
  CHECK(back.tensors[0].second == m1);
  CHECK(back.tensors[1].second == m2);
}

TEST_CASE("checkpoint reader rejects bad magic and truncation") {
  const fs::path dir = test::scratch_dir("io-ckpt-bad");
  io::write_text_file(dir / "junk.ckpt", "NOTMAGICxxxxxxxxxxxxxxxx");
  CHECK_THROWS_AS(io::read_checkpoint(dir / "junk.ckpt"), IoError);

  io::Checkpoint ck;
  ck.kind = "demo";
  ck.meta = io::json::object();
  ck.tensors.emplace_back("w", Eigen::MatrixXd::Ones(8, 8));
  io::write_checkpoint(dir / "full.ckpt", ck);
  const std::string bytes = io::read_text_file(dir / "full.ckpt");
  io::write_text_file(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(io::read_checkpoint(dir / "cut.ckpt"), IoError);
}

TEST_CASE("run artifact records command, seed, and input hashes") {
  const fs::path dir = test::scratch_dir("io-artifact");
  io::write_text_file(dir / "input.json", "abc");
  io::write_run_artifact(dir, "gen-data", io::json{{"episodes", 10}}, 42,
                         {dir / "input.json"});
  const io::json j = io::read_json_file(dir / "artifact.json");
  CHECK(j.at("command").get<std::string>() == "gen-data");
  CHECK(j.at("master_seed").get<std::uint64_t>() == 42);
  CHECK(j.at("config").at("episodes").get<int>() == 10);
  REQUIRE(j.at("inputs").size() == 1);
  CHECK(j.at("inputs")[0].at("fnv1a64").get<std::string>() == "e71fa2190541574b");
}
