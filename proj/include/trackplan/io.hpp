#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "trackplan/synth.hpp"

// Persistence contracts: JSON dataset (manifest + episode files), binary
// checkpoints (JSON header + little-endian float64 payload), run artifacts
// (config snapshot + input hashes), and small text/json helpers. All writers
// are deterministic: identical values produce identical bytes.
namespace trackplan::io {

using json = nlohmann::json;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j, int indent = 1);

// FNV-1a over the file bytes; the content-hash recorded in run artifacts.
std::uint64_t content_hash_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

json to_json(const geom::CameraIntrinsics& k);
geom::CameraIntrinsics intrinsics_from_json(const json& j);
json to_json(const geom::RigidTransform& t);  // row-major 3x4 array
geom::RigidTransform transform_from_json(const json& j);
json to_json(const TrackTensor& t);  // nested [p][H][2]
TrackTensor tracks_from_json(const json& j);
json to_json(const Raster& r);
Raster raster_from_json(const json& j);

json to_json(const synth::DatasetConfig& cfg);
synth::DatasetConfig dataset_config_from_json(const json& j);

void write_episode(const std::filesystem::path& path, const synth::Episode& ep);
synth::Episode read_episode(const std::filesystem::path& path);

struct ManifestEntry {
  std::string split;
  std::string file;  // relative to the dataset root
};

void write_manifest(const std::filesystem::path& dataset_dir, const synth::DatasetConfig& cfg,
                    const std::vector<ManifestEntry>& entries);

struct Dataset {
  std::filesystem::path root;
  synth::DatasetConfig config;
  std::vector<ManifestEntry> entries;

  std::vector<std::string> split_names() const;
  int count(const std::string& split) const;
};

Dataset open_dataset(const std::filesystem::path& dataset_dir);
synth::Episode load_episode(const Dataset& ds, const ManifestEntry& entry);
std::vector<synth::Episode> load_split(const Dataset& ds, const std::string& split);

// Self-describing binary checkpoint: 8-byte magic, u64 header length, JSON
// header (kind, meta, tensor names + shapes), then row-major float64 data in
// header order.
struct Checkpoint {
  std::string kind;
  json meta;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// artifact.json next to every command's outputs: exact config, master seed,
// and content hashes of the declared inputs.
void write_run_artifact(const std::filesystem::path& out_dir, const std::string& command,
                        const json& config_snapshot, std::uint64_t master_seed,
                        const std::vector<std::filesystem::path>& inputs);

}  // namespace trackplan::io
