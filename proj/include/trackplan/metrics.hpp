#pragma once

#include <string>
#include <vector>

#include "trackplan/io.hpp"
#include "trackplan/residual.hpp"
#include "trackplan/rigidfit.hpp"
#include "trackplan/simenv.hpp"
#include "trackplan/synth.hpp"
#include "trackplan/track.hpp"
#include "trackplan/trackdiff.hpp"

// Track-prediction quality metrics (per-threshold point accuracy and its
// area-under-curve aggregate) and the end-to-end benchmark: per split, sample
// tracks, fit transforms, plan, and roll out open- and closed-loop.
namespace trackplan::metrics {

struct MetricConfig {
  int n_thresholds = 10;  // accuracy thresholds 1..N px
  int horizon = 16;       // steps scored
  void validate() const;
};

// Fraction of points whose Euclidean pixel distance to ground truth at step t
// is <= x. Points out-of-frame-flagged in either tensor are excluded.
double delta_x_t(const TrackTensor& pred, const TrackTensor& gt, double x, int t);

// N x H table of delta_x_t over x in {1..N} (rows) and steps (columns).
Eigen::MatrixXd delta_table(const TrackTensor& pred, const TrackTensor& gt,
                            const MetricConfig& cfg);

// Mean of the table: mean over steps of mean over thresholds, in [0, 1].
double delta_auc(const TrackTensor& pred, const TrackTensor& gt, const MetricConfig& cfg);

// Points excluded from the metric (flagged in either tensor).
int flagged_count(const TrackTensor& pred, const TrackTensor& gt);

// The zero-motion baseline predictor: every point stays at its first-frame
// position for the whole horizon.
TrackTensor zero_motion_tracks(const synth::Episode& ep);

// Deterministic random row subset (ascending order); identity when the
// tensor already has exactly n rows.
TrackTensor subsample_tracks(const TrackTensor& tracks, int n, std::uint64_t seed);

enum class TrackSource { predicted, ground_truth };
std::string to_string(TrackSource s);
TrackSource track_source_from_string(const std::string& s);

struct BenchmarkConfig {
  MetricConfig metric;
  rigidfit::FitConfig fit;
  sim::ErrorModel error;  // per-episode seeds are derived from `seed`
  TrackSource track_source = TrackSource::predicted;
  int episodes_per_split = 100;
  int n_denoise_steps = 25;
  std::uint64_t seed = 0;
  void validate() const;
};

struct EpisodeResult {
  std::string split;
  int index = 0;
  std::uint64_t episode_seed = 0;
  double delta_auc = 0.0;
  bool open_loop_success = false;
  bool closed_loop_success = false;
  double fit_residual = 0.0;  // mean px reprojection error over steps
  int flagged_points = 0;
};

struct SplitReport {
  std::string split;
  int episodes = 0;
  double delta_auc = 0.0;
  Eigen::MatrixXd delta_table;  // N x H, mean over the split's episodes
  double open_loop_success_rate = 0.0;
  double closed_loop_success_rate = 0.0;
  double mean_fit_residual = 0.0;
  std::vector<EpisodeResult> rows;
};

struct MetricReport {
  MetricConfig metric;
  std::string track_source;
  std::string policy_mode;
  std::vector<SplitReport> splits;
  double delta_auc = 0.0;  // mean over every evaluated episode
  double open_loop_success_rate = 0.0;
  double closed_loop_success_rate = 0.0;
};

// Evaluates min(episodes_per_split, split size) episodes per listed split:
// tracks (predicted via the tracker, or ground truth), delta metrics, rigid
// fit, open-loop plan, and both rollouts. Component errors propagate with the
// split and episode index prepended. tracker may be null for ground_truth.
MetricReport run_benchmark(const synth::DatasetConfig& dataset,
                           const std::vector<std::string>& split_names,
                           const diff::Denoiser* tracker, const res::ResidualPolicy& policy,
                           const BenchmarkConfig& cfg);

io::json to_json(const MetricReport& report);
MetricReport report_from_json(const io::json& j);
// One row per episode: split,episode,delta_auc,open_loop_success,
// closed_loop_success,fit_residual.
std::string report_csv(const MetricReport& report);
// Aligned human-readable summary table.
std::string report_text(const MetricReport& report);

}  // namespace trackplan::metrics
