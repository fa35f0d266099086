#include "trackplan/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace trackplan::io {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write: " + path.string());
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw IoError("malformed json in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j, int indent) {
  write_text_file(path, j.dump(indent) + "\n");
}

std::uint64_t content_hash_file(const fs::path& path) {
  const std::string bytes = read_text_file(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json(const geom::CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
          {"width", k.width}, {"height", k.height}};
}

geom::CameraIntrinsics intrinsics_from_json(const json& j) {
  geom::CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

json to_json(const geom::RigidTransform& t) {
  return geom::to_row_major_3x4(t);
}

geom::RigidTransform transform_from_json(const json& j) {
  if (!j.is_array() || j.size() != 12) throw IoError("transform: expected 12-element array");
  std::array<double, 12> a{};
  for (int i = 0; i < 12; ++i) a[i] = j[i].get<double>();
  return geom::from_row_major_3x4(a);
}

json to_json(const TrackTensor& t) {
  json pts = json::array();
  for (int i = 0; i < t.p; ++i) {
    json steps = json::array();
    for (int s = 0; s < t.H; ++s) steps.push_back({t.u(i, s), t.v(i, s)});
    pts.push_back(std::move(steps));
  }
  json oof = json::array();
  for (int i = 0; i < t.p; ++i) oof.push_back(t.flagged(i) ? 1 : 0);
  return {{"space", t.space == CoordSpace::pixels ? "pixels" : "normalized"},
          {"points", std::move(pts)},
          {"out_of_frame", std::move(oof)}};
}

TrackTensor tracks_from_json(const json& j) {
  const auto& pts = j.at("points");
  const int p = static_cast<int>(pts.size());
  const int H = p == 0 ? 0 : static_cast<int>(pts[0].size());
  const std::string space = j.at("space").get<std::string>();
  TrackTensor t = TrackTensor::zeros(p, H,
      space == "pixels" ? CoordSpace::pixels : CoordSpace::normalized);
  for (int i = 0; i < p; ++i) {
    if (static_cast<int>(pts[i].size()) != H) throw IoError("tracks: ragged point array");
    for (int s = 0; s < H; ++s) t.set(i, s, pts[i][s][0].get<double>(), pts[i][s][1].get<double>());
  }
  if (j.contains("out_of_frame")) {
    const auto& oof = j.at("out_of_frame");
    if (static_cast<int>(oof.size()) != p) throw IoError("tracks: out_of_frame size mismatch");
    for (int i = 0; i < p; ++i) t.out_of_frame[i] = oof[i].get<int>() ? 1 : 0;
  }
  return t;
}

json to_json(const Raster& r) {
  json rows = json::array();
  for (int y = 0; y < r.resolution; ++y) {
    json row = json::array();
    for (int x = 0; x < r.resolution; ++x) row.push_back(r.cells(y, x));
    rows.push_back(std::move(row));
  }
  return {{"resolution", r.resolution}, {"cells", std::move(rows)}};
}

Raster raster_from_json(const json& j) {
  Raster r = Raster::zeros(j.at("resolution").get<int>());
  const auto& rows = j.at("cells");
  if (static_cast<int>(rows.size()) != r.resolution) throw IoError("raster: row count mismatch");
  for (int y = 0; y < r.resolution; ++y) {
    if (static_cast<int>(rows[y].size()) != r.resolution)
      throw IoError("raster: column count mismatch");
    for (int x = 0; x < r.resolution; ++x) r.cells(y, x) = rows[y][x].get<double>();
  }
  return r;
}

namespace {

json split_to_json(const synth::SplitConfig& s) {
  json pairs = json::array();
  for (const auto& pr : s.pairs)
    pairs.push_back({synth::to_string(pr.first), synth::to_string(pr.second)});
  return {{"episodes", s.episodes},
          {"pairs", std::move(pairs)},
          {"instance_scale_lo", s.instance_scale_lo},
          {"instance_scale_hi", s.instance_scale_hi}};
}

synth::SplitConfig split_from_json(const json& j) {
  synth::SplitConfig s;
  s.episodes = j.at("episodes").get<int>();
  for (const auto& pr : j.at("pairs"))
    s.pairs.emplace_back(synth::shape_from_string(pr[0].get<std::string>()),
                         synth::family_from_string(pr[1].get<std::string>()));
  s.instance_scale_lo = j.at("instance_scale_lo").get<double>();
  s.instance_scale_hi = j.at("instance_scale_hi").get<double>();
  return s;
}

}  // namespace

json to_json(const synth::DatasetConfig& cfg) {
  json splits = json::object();
  for (const auto& [name, sc] : cfg.splits) splits[name] = split_to_json(sc);
  return {{"name", cfg.name},
          {"seed", cfg.seed},
          {"horizon", cfg.horizon},
          {"intrinsics", to_json(cfg.intrinsics)},
          {"raster_resolution", cfg.raster_resolution},
          {"points_min", cfg.points_min},
          {"points_max", cfg.points_max},
          {"background_fraction", cfg.background_fraction},
          {"depth_lo", cfg.depth_lo},
          {"depth_hi", cfg.depth_hi},
          {"step_bound", cfg.step_bound},
          {"splits", std::move(splits)}};
}

synth::DatasetConfig dataset_config_from_json(const json& j) {
  synth::DatasetConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.horizon = j.at("horizon").get<int>();
  cfg.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  cfg.raster_resolution = j.at("raster_resolution").get<int>();
  cfg.points_min = j.at("points_min").get<int>();
  cfg.points_max = j.at("points_max").get<int>();
  cfg.background_fraction = j.at("background_fraction").get<double>();
  cfg.depth_lo = j.at("depth_lo").get<double>();
  cfg.depth_hi = j.at("depth_hi").get<double>();
  cfg.step_bound = j.at("step_bound").get<double>();
  cfg.splits.clear();
  for (const auto& [name, sc] : j.at("splits").items()) cfg.splits[name] = split_from_json(sc);
  return cfg;
}

void write_episode(const fs::path& path, const synth::Episode& ep) {
  json pts = json::array();
  for (const auto& p : ep.points3d_t0) pts.push_back({p.x(), p.y(), p.z()});
  json mask = json::array();
  for (auto m : ep.object_mask) mask.push_back(static_cast<int>(m));
  json transforms = json::array();
  for (const auto& t : ep.gt_transforms) transforms.push_back(to_json(t));
  const json j{{"intrinsics", to_json(ep.intrinsics)},
               {"horizon", ep.horizon},
               {"points3d_t0", std::move(pts)},
               {"object_mask", std::move(mask)},
               {"gt_transforms", std::move(transforms)},
               {"gt_tracks", to_json(ep.gt_tracks)},
               {"initial_raster", to_json(ep.initial_raster)},
               {"goal_raster", to_json(ep.goal_raster)},
               {"split", ep.split_tag},
               {"shape", synth::to_string(ep.shape)},
               {"family", synth::to_string(ep.family)},
               {"seed", ep.seed},
               {"index", ep.index}};
  write_json_file(path, j);
}

synth::Episode read_episode(const fs::path& path) {
  const json j = read_json_file(path);
  synth::Episode ep;
  ep.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  ep.horizon = j.at("horizon").get<int>();
  for (const auto& p : j.at("points3d_t0"))
    ep.points3d_t0.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  for (const auto& m : j.at("object_mask"))
    ep.object_mask.push_back(m.get<int>() ? 1 : 0);
  for (const auto& t : j.at("gt_transforms")) ep.gt_transforms.push_back(transform_from_json(t));
  ep.gt_tracks = tracks_from_json(j.at("gt_tracks"));
  ep.initial_raster = raster_from_json(j.at("initial_raster"));
  ep.goal_raster = raster_from_json(j.at("goal_raster"));
  ep.split_tag = j.at("split").get<std::string>();
  ep.shape = synth::shape_from_string(j.at("shape").get<std::string>());
  ep.family = synth::family_from_string(j.at("family").get<std::string>());
  ep.seed = j.at("seed").get<std::uint64_t>();
  ep.index = j.at("index").get<int>();
  if (static_cast<int>(ep.object_mask.size()) != ep.n_points())
    throw IoError("episode: object_mask size mismatch in " + path.string());
  return ep;
}

void write_manifest(const fs::path& dataset_dir, const synth::DatasetConfig& cfg,
                    const std::vector<ManifestEntry>& entries) {
  json ents = json::array();
  for (const auto& e : entries) ents.push_back({{"split", e.split}, {"file", e.file}});
  write_json_file(dataset_dir / "manifest.json",
                  {{"config", to_json(cfg)}, {"episodes", std::move(ents)}});
}

std::vector<std::string> Dataset::split_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (std::find(out.begin(), out.end(), e.split) == out.end()) out.push_back(e.split);
  return out;
}

int Dataset::count(const std::string& split) const {
  int n = 0;
  for (const auto& e : entries) n += (e.split == split);
  return n;
}

Dataset open_dataset(const fs::path& dataset_dir) {
  const json j = read_json_file(dataset_dir / "manifest.json");
  Dataset ds;
  ds.root = dataset_dir;
  ds.config = dataset_config_from_json(j.at("config"));
  for (const auto& e : j.at("episodes"))
    ds.entries.push_back({e.at("split").get<std::string>(), e.at("file").get<std::string>()});
  return ds;
}

synth::Episode load_episode(const Dataset& ds, const ManifestEntry& entry) {
  return read_episode(ds.root / entry.file);
}

std::vector<synth::Episode> load_split(const Dataset& ds, const std::string& split) {
  std::vector<synth::Episode> out;
  for (const auto& e : ds.entries)
    if (e.split == split) out.push_back(load_episode(ds, e));
  return out;
}

namespace {
constexpr char kMagic[8] = {'T', 'P', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64_le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void write_checkpoint(const fs::path& path, const Checkpoint& ck) {
  json tensors = json::array();
  for (const auto& [name, m] : ck.tensors)
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  const std::string header =
      json{{"kind", ck.kind}, {"meta", ck.meta}, {"tensors", std::move(tensors)}}.dump();

  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 8);
  put_u64_le(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, m] : ck.tensors) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double d = m(r, c);
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64_le(out, bits);
      }
    }
  }
  if (!out) throw IoError("short write: " + path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("bad checkpoint magic in " + path.string());
  const std::uint64_t hlen = get_u64_le(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated checkpoint header in " + path.string());
  json h;
  try {
    h = json::parse(header);
  } catch (const json::parse_error& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  Checkpoint ck;
  ck.kind = h.at("kind").get<std::string>();
  ck.meta = h.at("meta");
  for (const auto& t : h.at("tensors")) {
    Eigen::MatrixXd m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const std::uint64_t bits = get_u64_le(in);
        double d;
        std::memcpy(&d, &bits, 8);
        m(r, c) = d;
      }
    }
    ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  if (!in) throw IoError("truncated checkpoint payload in " + path.string());
  return ck;
}

void write_run_artifact(const fs::path& out_dir, const std::string& command,
                        const json& config_snapshot, std::uint64_t master_seed,
                        const std::vector<fs::path>& inputs) {
  json in_list = json::array();
  for (const auto& p : inputs)
    in_list.push_back({{"path", p.string()}, {"fnv1a64", hash_hex(content_hash_file(p))}});
  write_json_file(out_dir / "artifact.json", {{"command", command},
                                              {"config", config_snapshot},
                                              {"master_seed", master_seed},
                                              {"inputs", std::move(in_list)}});
}

}  // namespace trackplan::io
