#include "trackplan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "trackplan/errors.hpp"
#include "trackplan/planner.hpp"
#include "trackplan/rng.hpp"

namespace trackplan::metrics {

namespace {

std::vector<int> scored_points(const TrackTensor& pred, const TrackTensor& gt) {
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(pred.p));
  for (int i = 0; i < pred.p; ++i)
    if (!pred.flagged(i) && !gt.flagged(i)) keep.push_back(i);
  return keep;
}

void check_pair(const TrackTensor& pred, const TrackTensor& gt) {
  check_same_shape(pred, gt);
  if (pred.space != gt.space) throw ShapeMismatch("delta: tensors live in different spaces");
  if (pred.space != CoordSpace::pixels)
    throw ShapeMismatch("delta: thresholds are in pixels; convert the tracks first");
}

Eigen::MatrixXd first_frame_matrix(const synth::Episode& ep) {
  const std::vector<geom::Vec2> pts = ep.first_frame_points2d();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = pts[i].x();
    m(static_cast<Eigen::Index>(i), 1) = pts[i].y();
  }
  return m;
}

EpisodeResult evaluate_episode(const synth::Episode& ep, const std::string& split, int index,
                               const diff::Denoiser* tracker, const res::ResidualPolicy& policy,
                               const BenchmarkConfig& cfg, std::uint64_t counter,
                               Eigen::MatrixXd& table_accum) {
  EpisodeResult row;
  row.split = split;
  row.index = index;
  row.episode_seed = ep.seed;

  TrackTensor tracks;
  if (cfg.track_source == TrackSource::ground_truth) {
    tracks = ep.gt_tracks;
  } else {
    const diff::Embedding z0 = diff::encode_raster(*tracker, ep.initial_raster);
    const diff::Embedding zg = diff::encode_raster(*tracker, ep.goal_raster);
    tracks = diff::sample_tracks(*tracker, z0, zg, first_frame_matrix(ep), ep.intrinsics.width,
                                 ep.intrinsics.height, cfg.n_denoise_steps,
                                 child_seed(cfg.seed, "sample", counter));
  }

  row.delta_auc = delta_auc(tracks, ep.gt_tracks, cfg.metric);
  row.flagged_points = flagged_count(tracks, ep.gt_tracks);
  table_accum += delta_table(tracks, ep.gt_tracks, cfg.metric);

  rigidfit::FitConfig fit_cfg = cfg.fit;
  fit_cfg.seed = child_seed(cfg.seed, "fit", counter);
  const rigidfit::TransformTrajectory traj =
      rigidfit::fit_trajectory(tracks, ep.points3d_t0, ep.intrinsics, fit_cfg);
  row.fit_residual =
      std::accumulate(traj.per_step_residual.begin(), traj.per_step_residual.end(), 0.0) /
      static_cast<double>(traj.per_step_residual.size());

  std::vector<geom::Vec3> moving3d;
  moving3d.reserve(traj.moving_indices.size());
  for (int idx : traj.moving_indices)
    moving3d.push_back(ep.points3d_t0[static_cast<std::size_t>(idx)]);
  const plan::Pose e1 = plan::initial_grasp_pose(sim::home_pose(ep), moving3d);
  const plan::EndEffectorPlan ee_plan = plan::open_loop_plan(traj.transforms, e1);

  sim::ErrorModel error = cfg.error;
  error.seed = child_seed(cfg.seed, "rollout", counter);
  const sim::GoalSpec goal = sim::default_goal(ep);

  const res::RolloutTrace open = res::rollout_open_loop(ep, ee_plan, error, goal);
  const TrackTensor policy_tracks = subsample_tracks(
      tracks, policy.config.p_tokens, child_seed(cfg.seed, "policy-tracks", counter));
  const res::RolloutTrace closed =
      res::rollout_closed_loop(policy, ep, policy_tracks, ee_plan, error, goal);

  row.open_loop_success = open.success;
  row.closed_loop_success = closed.success;
  return row;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%8.4f", v);
  return buf;
}

}  // namespace

void MetricConfig::validate() const {
  if (n_thresholds < 1) throw InvalidConfig("metric: n_thresholds must be >= 1");
  if (horizon < 1) throw InvalidConfig("metric: horizon must be >= 1");
}

double delta_x_t(const TrackTensor& pred, const TrackTensor& gt, double x, int t) {
  check_pair(pred, gt);
  if (t < 0 || t >= pred.H) throw InvalidConfig("delta: step index out of range");
  if (!(x >= 0)) throw InvalidConfig("delta: threshold must be non-negative");
  const std::vector<int> keep = scored_points(pred, gt);
  if (keep.empty()) throw EmptyPointSet("delta: every point is out-of-frame-flagged");
  int within = 0;
  for (int i : keep) {
    const double du = pred.u(i, t) - gt.u(i, t);
    const double dv = pred.v(i, t) - gt.v(i, t);
    if (std::hypot(du, dv) <= x) ++within;
  }
  return static_cast<double>(within) / static_cast<double>(keep.size());
}

Eigen::MatrixXd delta_table(const TrackTensor& pred, const TrackTensor& gt,
                            const MetricConfig& cfg) {
  cfg.validate();
  check_pair(pred, gt);
  if (pred.H != cfg.horizon) throw ShapeMismatch("delta: track horizon differs from the config");
  Eigen::MatrixXd table(cfg.n_thresholds, cfg.horizon);
  for (int x = 1; x <= cfg.n_thresholds; ++x)
    for (int t = 0; t < cfg.horizon; ++t)
      table(x - 1, t) = delta_x_t(pred, gt, static_cast<double>(x), t);
  return table;
}

double delta_auc(const TrackTensor& pred, const TrackTensor& gt, const MetricConfig& cfg) {
  return delta_table(pred, gt, cfg).mean();
}

int flagged_count(const TrackTensor& pred, const TrackTensor& gt) {
  check_same_shape(pred, gt);
  int n = 0;
  for (int i = 0; i < pred.p; ++i)
    if (pred.flagged(i) || gt.flagged(i)) ++n;
  return n;
}

TrackTensor zero_motion_tracks(const synth::Episode& ep) {
  TrackTensor t = TrackTensor::zeros(ep.n_points(), ep.horizon, CoordSpace::pixels);
  const std::vector<geom::Vec2> first = ep.first_frame_points2d();
  for (int i = 0; i < t.p; ++i)
    for (int s = 0; s < t.H; ++s) t.set(i, s, first[static_cast<std::size_t>(i)].x(),
                                        first[static_cast<std::size_t>(i)].y());
  return t;
}

TrackTensor subsample_tracks(const TrackTensor& tracks, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidConfig("subsample_tracks: need n >= 1");
  if (tracks.p < n)
    throw ShapeMismatch("subsample_tracks: tensor has fewer rows than requested");
  if (tracks.p == n) return tracks;
  Rng rng(child_seed(seed, "subsample"));
  std::vector<int> indices = rng.sample_indices(tracks.p, n);
  std::sort(indices.begin(), indices.end());
  return tracks.select(indices);
}

std::string to_string(TrackSource s) {
  return s == TrackSource::predicted ? "predicted" : "ground_truth";
}

TrackSource track_source_from_string(const std::string& s) {
  if (s == "predicted") return TrackSource::predicted;
  if (s == "ground_truth") return TrackSource::ground_truth;
  throw InvalidConfig("unknown track source: " + s);
}

void BenchmarkConfig::validate() const {
  metric.validate();
  fit.validate();
  error.validate();
  if (episodes_per_split < 1) throw InvalidConfig("benchmark: episodes_per_split must be >= 1");
  if (n_denoise_steps < 1) throw InvalidConfig("benchmark: n_denoise_steps must be >= 1");
}

MetricReport run_benchmark(const synth::DatasetConfig& dataset,
                           const std::vector<std::string>& split_names,
                           const diff::Denoiser* tracker, const res::ResidualPolicy& policy,
                           const BenchmarkConfig& cfg) {
  cfg.validate();
  if (cfg.track_source == TrackSource::predicted && tracker == nullptr)
    throw InvalidConfig("benchmark: predicted track source requires a tracker checkpoint");
  if (split_names.empty()) throw InvalidConfig("benchmark: no splits requested");
  if (cfg.metric.horizon != dataset.horizon)
    throw InvalidConfig("benchmark: metric horizon differs from the dataset horizon");

  MetricReport report;
  report.metric = cfg.metric;
  report.track_source = to_string(cfg.track_source);
  report.policy_mode = res::to_string(policy.config.mode);

  std::uint64_t counter = 0;
  double sum_delta = 0.0, sum_open = 0.0, sum_closed = 0.0;
  int total = 0;
  for (const std::string& split : split_names) {
    const auto it = dataset.splits.find(split);
    if (it == dataset.splits.end())
      throw InvalidConfig("benchmark: dataset has no split named " + split);
    const int n = std::min(cfg.episodes_per_split, it->second.episodes);
    if (n < 1) throw InvalidConfig("benchmark: split " + split + " has no episodes");

    SplitReport sr;
    sr.split = split;
    sr.episodes = n;
    sr.delta_table = Eigen::MatrixXd::Zero(cfg.metric.n_thresholds, cfg.metric.horizon);
    for (int i = 0; i < n; ++i, ++counter) {
      try {
        const synth::Episode ep = synth::generate_episode(dataset, split, i);
        const EpisodeResult row =
            evaluate_episode(ep, split, i, tracker, policy, cfg, counter, sr.delta_table);
        sr.delta_auc += row.delta_auc;
        sr.open_loop_success_rate += row.open_loop_success ? 1.0 : 0.0;
        sr.closed_loop_success_rate += row.closed_loop_success ? 1.0 : 0.0;
        sr.mean_fit_residual += row.fit_residual;
        sr.rows.push_back(row);
      } catch (const Error& e) {
        throw Error("benchmark: split " + split + " episode " + std::to_string(i) + ": " +
                    e.what());
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    sr.delta_auc *= inv;
    sr.open_loop_success_rate *= inv;
    sr.closed_loop_success_rate *= inv;
    sr.mean_fit_residual *= inv;
    sr.delta_table *= inv;
    sum_delta += std::accumulate(sr.rows.begin(), sr.rows.end(), 0.0,
                                 [](double a, const EpisodeResult& r) { return a + r.delta_auc; });
    sum_open += sr.open_loop_success_rate * n;
    sum_closed += sr.closed_loop_success_rate * n;
    total += n;
    report.splits.push_back(std::move(sr));
  }
  report.delta_auc = sum_delta / static_cast<double>(total);
  report.open_loop_success_rate = sum_open / static_cast<double>(total);
  report.closed_loop_success_rate = sum_closed / static_cast<double>(total);
  return report;
}

io::json to_json(const MetricReport& report) {
  io::json j;
  j["metric"] = {{"n_thresholds", report.metric.n_thresholds},
                 {"horizon", report.metric.horizon}};
  j["track_source"] = report.track_source;
  j["policy_mode"] = report.policy_mode;
  j["overall"] = {{"delta_auc", report.delta_auc},
                  {"open_loop_success_rate", report.open_loop_success_rate},
                  {"closed_loop_success_rate", report.closed_loop_success_rate}};
  j["splits"] = io::json::array();
  for (const SplitReport& sr : report.splits) {
    io::json js;
    js["split"] = sr.split;
    js["episodes"] = sr.episodes;
    js["delta_auc"] = sr.delta_auc;
    js["open_loop_success_rate"] = sr.open_loop_success_rate;
    js["closed_loop_success_rate"] = sr.closed_loop_success_rate;
    js["mean_fit_residual"] = sr.mean_fit_residual;
    io::json table = io::json::array();
    for (Eigen::Index r = 0; r < sr.delta_table.rows(); ++r) {
      io::json rowj = io::json::array();
      for (Eigen::Index c = 0; c < sr.delta_table.cols(); ++c) rowj.push_back(sr.delta_table(r, c));
      table.push_back(std::move(rowj));
    }
    js["delta_table"] = std::move(table);
    io::json rows = io::json::array();
    for (const EpisodeResult& r : sr.rows) {
      rows.push_back({{"split", r.split},
                      {"index", r.index},
                      {"episode_seed", r.episode_seed},
                      {"delta_auc", r.delta_auc},
                      {"open_loop_success", r.open_loop_success},
                      {"closed_loop_success", r.closed_loop_success},
                      {"fit_residual", r.fit_residual},
                      {"flagged_points", r.flagged_points}});
    }
    js["rows"] = std::move(rows);
    j["splits"].push_back(std::move(js));
  }
  return j;
}

MetricReport report_from_json(const io::json& j) {
  MetricReport report;
  report.metric.n_thresholds = j.at("metric").at("n_thresholds").get<int>();
  report.metric.horizon = j.at("metric").at("horizon").get<int>();
  report.track_source = j.at("track_source").get<std::string>();
  report.policy_mode = j.at("policy_mode").get<std::string>();
  report.delta_auc = j.at("overall").at("delta_auc").get<double>();
  report.open_loop_success_rate = j.at("overall").at("open_loop_success_rate").get<double>();
  report.closed_loop_success_rate = j.at("overall").at("closed_loop_success_rate").get<double>();
  for (const io::json& js : j.at("splits")) {
    SplitReport sr;
    sr.split = js.at("split").get<std::string>();
    sr.episodes = js.at("episodes").get<int>();
    sr.delta_auc = js.at("delta_auc").get<double>();
    sr.open_loop_success_rate = js.at("open_loop_success_rate").get<double>();
    sr.closed_loop_success_rate = js.at("closed_loop_success_rate").get<double>();
    sr.mean_fit_residual = js.at("mean_fit_residual").get<double>();
    const io::json& table = js.at("delta_table");
    sr.delta_table.resize(static_cast<Eigen::Index>(table.size()),
                          static_cast<Eigen::Index>(table.empty() ? 0 : table[0].size()));
    for (Eigen::Index r = 0; r < sr.delta_table.rows(); ++r)
      for (Eigen::Index c = 0; c < sr.delta_table.cols(); ++c)
        sr.delta_table(r, c) = table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                                   .get<double>();
    for (const io::json& jr : js.at("rows")) {
      EpisodeResult row;
      row.split = jr.at("split").get<std::string>();
      row.index = jr.at("index").get<int>();
      row.episode_seed = jr.at("episode_seed").get<std::uint64_t>();
      row.delta_auc = jr.at("delta_auc").get<double>();
      row.open_loop_success = jr.at("open_loop_success").get<bool>();
      row.closed_loop_success = jr.at("closed_loop_success").get<bool>();
      row.fit_residual = jr.at("fit_residual").get<double>();
      row.flagged_points = jr.at("flagged_points").get<int>();
      sr.rows.push_back(std::move(row));
    }
    report.splits.push_back(std::move(sr));
  }
  return report;
}

std::string report_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "split,episode,delta_auc,open_loop_success,closed_loop_success,fit_residual\n";
  for (const SplitReport& sr : report.splits)
    for (const EpisodeResult& r : sr.rows)
      out << r.split << ',' << r.index << ',' << format_double(r.delta_auc) << ','
          << (r.open_loop_success ? 1 : 0) << ',' << (r.closed_loop_success ? 1 : 0) << ','
          << format_double(r.fit_residual) << '\n';
  return out.str();
}

std::string report_text(const MetricReport& report) {
  std::ostringstream out;
  out << "track source: " << report.track_source << "   policy mode: " << report.policy_mode
      << "\n";
  out << "split        episodes  delta_auc  open-loop  closed-loop  fit px\n";
  for (const SplitReport& sr : report.splits) {
    out << sr.split;
    for (std::size_t i = sr.split.size(); i < 13; ++i) out << ' ';
    out << sr.episodes << (sr.episodes < 10 ? "       " : sr.episodes < 100 ? "      " : "     ")
        << format_fixed(sr.delta_auc) << "  " << format_fixed(sr.open_loop_success_rate) << "   "
        << format_fixed(sr.closed_loop_success_rate) << "  " << format_fixed(sr.mean_fit_residual)
        << "\n";
  }
  out << "overall      " << format_fixed(report.delta_auc) << " (delta), "
      << format_fixed(report.open_loop_success_rate) << " (open), "
      << format_fixed(report.closed_loop_success_rate) << " (closed)\n";
  return out.str();
}

}  // namespace trackplan::metrics
