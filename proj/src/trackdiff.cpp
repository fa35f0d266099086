#include "trackplan/trackdiff.hpp"

#include <cmath>
#include <numbers>

#include "trackplan/io.hpp"

namespace trackplan::diff {

namespace {

constexpr double kCosineShift = 0.002;
constexpr double kX0Clip = 1.5;  // normalized frame is [-1,1]; allow mild overshoot

nn::RasterEncoderConfig encoder_config(const DenoiserConfig& cfg) {
  nn::RasterEncoderConfig e;
  e.resolution = cfg.raster_resolution;
  e.c1 = cfg.enc_c1;
  e.c2 = cfg.enc_c2;
  e.embed_dim = cfg.embed_dim;
  return e;
}

Mat normalize_points(const Mat& p_pixels, int width, int height) {
  Mat out(p_pixels.rows(), 2);
  out.col(0) = 2.0 * p_pixels.col(0).array() / static_cast<double>(width) - 1.0;
  out.col(1) = 2.0 * p_pixels.col(1).array() / static_cast<double>(height) - 1.0;
  return out;
}

Mat points_to_matrix(const std::vector<geom::Vec2>& pts) {
  Mat out(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i];
  return out;
}

// Shared forward graph. noisy_values is p x 2H normalized; p0 is p x 2
// normalized. z0 / zg participate in the tape so encoder gradients flow.
nn::Var denoise_graph(nn::Tape& tape, nn::ParamStore& params, const DenoiserConfig& cfg,
                      const Mat& noisy_values, const Mat& p0, nn::Var z0, nn::Var zg, int k) {
  Mat feat(noisy_values.rows(), cfg.token_dim());
  feat << p0, noisy_values;
  nn::Var x = nn::linear(params, "in", tape.constant(std::move(feat)));
  nn::Var zk = nn::embed_timestep(tape, params, "temb", static_cast<double>(k), cfg.embed_dim);
  nn::Var cond_act = nn::silu(nn::add(nn::add(z0, zg), zk));
  for (int b = 0; b < cfg.n_blocks; ++b)
    x = nn::dit_block(params, "blk" + std::to_string(b), x, cond_act, cfg.n_heads);
  return nn::dit_final(params, "final", x, cond_act);
}

struct EpisodeDraw {
  int k = 0;
  Mat eps;  // p x 2H
};

EpisodeDraw draw_noise(const synth::Episode& ep, const NoiseSchedule& sched, std::uint64_t seed) {
  // Keyed on the episode's own generation seed, not its batch position, so a
  // duplicated batch entry contributes the identical term.
  Rng rng(child_seed(seed, "noise", ep.seed));
  EpisodeDraw d;
  d.k = rng.uniform_int(sched.k_steps);
  d.eps.resize(ep.n_points(), 2 * ep.horizon);
  for (Eigen::Index i = 0; i < d.eps.rows(); ++i)
    for (Eigen::Index j = 0; j < d.eps.cols(); ++j) d.eps(i, j) = rng.normal();
  return d;
}

void check_batch(const std::vector<const synth::Episode*>& batch, const DenoiserConfig& cfg) {
  if (batch.empty()) throw InvalidConfig("diffusion batch must be nonempty");
  for (const synth::Episode* ep : batch) {
    if (ep == nullptr) throw InvalidConfig("diffusion batch holds a null episode");
    if (ep->horizon != cfg.horizon)
      throw ShapeMismatch("episode horizon does not match the denoiser horizon");
    if (ep->n_points() > cfg.p_max)
      throw ShapeMismatch("episode has more points than the denoiser p_max");
    if (ep->initial_raster.resolution != cfg.raster_resolution)
      throw ShapeMismatch("episode raster resolution does not match the denoiser");
  }
}

// Forward + optional backward over one batch; returns the mean loss.
double batch_pass(Denoiser& den, const std::vector<const synth::Episode*>& batch,
                  std::uint64_t seed, bool with_grad) {
  check_batch(batch, den.config);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const nn::RasterEncoderConfig enc = encoder_config(den.config);
  double total = 0.0;
  for (const synth::Episode* ep : batch) {
    const EpisodeDraw draw = draw_noise(*ep, den.schedule, seed);
    const TrackTensor x0 =
        to_normalized(ep->gt_tracks, ep->intrinsics.width, ep->intrinsics.height);
    const double ab = den.schedule.alpha_bar[static_cast<std::size_t>(draw.k)];
    const Mat noisy = std::sqrt(ab) * x0.values + std::sqrt(1.0 - ab) * draw.eps;
    const Mat p0 = normalize_points(points_to_matrix(ep->first_frame_points2d()),
                                    ep->intrinsics.width, ep->intrinsics.height);
    nn::Tape tape;
    nn::Var z0 = nn::encode_raster(tape, den.params, "enc", enc, ep->initial_raster);
    nn::Var zg = nn::encode_raster(tape, den.params, "enc", enc, ep->goal_raster);
    nn::Var pred = denoise_graph(tape, den.params, den.config, noisy, p0, z0, zg, draw.k);
    nn::Var ep_loss = nn::mean_all(nn::square(nn::sub(pred, tape.constant(draw.eps))));
    total += ep_loss.val()(0, 0) * inv_b;
    if (with_grad) tape.backward(ep_loss, inv_b);
  }
  return total;
}

}  // namespace

NoiseSchedule NoiseSchedule::cosine(int k_steps) {
  if (k_steps < 1) throw InvalidConfig("noise schedule needs at least one step");
  auto f = [](double t) {
    const double u = (t + kCosineShift) / (1.0 + kCosineShift) * std::numbers::pi / 2.0;
    const double c = std::cos(u);
    return c * c;
  };
  NoiseSchedule s;
  s.k_steps = k_steps;
  s.alpha_bar.resize(static_cast<std::size_t>(k_steps));
  const double f0 = f(0.0);
  for (int k = 0; k < k_steps; ++k)
    s.alpha_bar[static_cast<std::size_t>(k)] =
        f(static_cast<double>(k + 1) / static_cast<double>(k_steps)) / f0;
  if (s.alpha_bar.front() < 0.9995) s.alpha_bar.front() = 0.9995;
  if (k_steps >= 2) {
    double& last = s.alpha_bar.back();
    const double floor_val =
        std::min(1e-5, 0.5 * s.alpha_bar[static_cast<std::size_t>(k_steps - 2)]);
    if (last < floor_val) last = floor_val;
  }
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  NoiseSchedule s;
  s.k_steps = static_cast<int>(alpha_bar.size());
  s.alpha_bar = std::move(alpha_bar);
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (k_steps < 1 || alpha_bar.size() != static_cast<std::size_t>(k_steps))
    throw InvalidConfig("noise schedule: size mismatch");
  for (double a : alpha_bar)
    if (!(a > 0.0) || a > 1.0 || !std::isfinite(a))
      throw InvalidConfig("noise schedule: alpha_bar must lie in (0, 1]");
  for (std::size_t i = 1; i < alpha_bar.size(); ++i)
    if (!(alpha_bar[i] < alpha_bar[i - 1]))
      throw InvalidConfig("noise schedule: alpha_bar must be strictly decreasing");
  if (alpha_bar.front() < 0.999)
    throw InvalidConfig("noise schedule: alpha_bar[0] must be at least 0.999");
}

void DenoiserConfig::validate() const {
  if (n_blocks < 1 || hidden_size < 1 || n_heads < 1 || p_max < 1 || horizon < 1 ||
      embed_dim < 1 || raster_resolution < 16 || enc_c1 < 1 || enc_c2 < 1)
    throw InvalidConfig("denoiser config: all sizes must be positive");
  if (hidden_size % n_heads != 0)
    throw InvalidConfig("denoiser config: hidden_size must be divisible by n_heads");
  if (embed_dim % 2 != 0)
    throw InvalidConfig("denoiser config: embed_dim must be even");
}

Denoiser Denoiser::init(const DenoiserConfig& config, const NoiseSchedule& schedule,
                        std::uint64_t seed) {
  config.validate();
  schedule.validate();
  Denoiser den;
  den.config = config;
  den.schedule = schedule;
  nn::ParamStore& s = den.params;
  nn::add_raster_encoder(s, "enc", encoder_config(config));
  nn::init_raster_encoder(s, "enc", seed);
  nn::add_timestep_embedder(s, "temb", config.embed_dim);
  nn::init_timestep_embedder(s, "temb", seed);
  nn::add_linear(s, "in", config.token_dim(), config.hidden_size);
  nn::init_linear_xavier(s, "in", seed);
  for (int b = 0; b < config.n_blocks; ++b) {
    const std::string prefix = "blk" + std::to_string(b);
    nn::add_dit_block(s, prefix, config.hidden_size, config.embed_dim);
    nn::init_dit_block(s, prefix, seed);
  }
  nn::add_dit_final(s, "final", config.hidden_size, config.embed_dim, 2 * config.horizon);
  return den;
}

Embedding encode_raster(const Denoiser& den, const Raster& raster) {
  // Inference-only pass: the tape is local and backward is never invoked, so
  // the parameter store is read, not written.
  nn::ParamStore& params = const_cast<nn::ParamStore&>(den.params);
  nn::Tape tape;
  nn::Var e = nn::encode_raster(tape, params, "enc", encoder_config(den.config), raster);
  return e.val().row(0);
}

TrackTensor forward_noise(const TrackTensor& x0, int k, const TrackTensor& eps,
                          const NoiseSchedule& sched) {
  if (x0.space != CoordSpace::normalized)
    throw ShapeMismatch("forward_noise: x0 must be in normalized space");
  check_same_shape(x0, eps);
  if (k < 0 || k >= sched.k_steps) throw InvalidConfig("forward_noise: step out of range");
  const double ab = sched.alpha_bar[static_cast<std::size_t>(k)];
  TrackTensor out = x0;
  out.values = std::sqrt(ab) * x0.values + std::sqrt(1.0 - ab) * eps.values;
  return out;
}

TrackTensor predict_noise(const Denoiser& den, const TrackTensor& noisy, const Embedding& z0,
                          const Embedding& zg, int k, const Mat& p0) {
  if (noisy.space != CoordSpace::normalized)
    throw ShapeMismatch("predict_noise: input must be in normalized space");
  if (noisy.H != den.config.horizon)
    throw ShapeMismatch("predict_noise: horizon does not match the denoiser");
  if (noisy.p > den.config.p_max) throw ShapeMismatch("predict_noise: too many points");
  if (p0.rows() != noisy.p || p0.cols() != 2)
    throw ShapeMismatch("predict_noise: p0 must be p x 2");
  if (z0.size() != den.config.embed_dim || zg.size() != den.config.embed_dim)
    throw ShapeMismatch("predict_noise: embedding length must equal embed_dim");
  if (k < 0 || k >= den.schedule.k_steps)
    throw InvalidConfig("predict_noise: step out of range");
  nn::ParamStore& params = const_cast<nn::ParamStore&>(den.params);
  nn::Tape tape;
  nn::Var pred = denoise_graph(tape, params, den.config, noisy.values, p0,
                               tape.constant(z0), tape.constant(zg), k);
  TrackTensor out = noisy;
  out.values = pred.val();
  return out;
}

double loss(const Denoiser& den, const std::vector<const synth::Episode*>& batch,
            std::uint64_t seed) {
  return batch_pass(const_cast<Denoiser&>(den), batch, seed, false);
}

double train_step(Denoiser& den, const std::vector<const synth::Episode*>& batch,
                  nn::AdamState& opt, const nn::AdamConfig& opt_cfg, std::uint64_t seed) {
  den.params.zero_grads();
  const double value = batch_pass(den, batch, seed, true);
  if (!std::isfinite(value))
    throw NonFiniteLoss("train_step: loss is not finite; parameters left unchanged");
  nn::adam_step(den.params, opt, opt_cfg);
  return value;
}

TrackTensor sample_tracks(const Denoiser& den, const Embedding& z0, const Embedding& zg,
                          const Mat& p0_pixels, int image_width, int image_height,
                          int n_denoise_steps, std::uint64_t seed) {
  if (p0_pixels.cols() != 2) throw ShapeMismatch("sample_tracks: p0 must be p x 2");
  if (image_width < 1 || image_height < 1)
    throw InvalidConfig("sample_tracks: image size must be positive");
  const int kk = den.schedule.k_steps;
  if (n_denoise_steps < 1 || n_denoise_steps > kk)
    throw InvalidConfig("sample_tracks: n_denoise_steps must lie in [1, K]");
  const int p = static_cast<int>(p0_pixels.rows());
  const int h = den.config.horizon;

  // Evenly strided subsequence of schedule indices, always ending at K-1.
  std::vector<int> ks(static_cast<std::size_t>(n_denoise_steps));
  for (int i = 0; i < n_denoise_steps; ++i)
    ks[static_cast<std::size_t>(i)] =
        n_denoise_steps == 1
            ? kk - 1
            : static_cast<int>(std::llround(static_cast<double>(i) *
                                            static_cast<double>(kk - 1) /
                                            static_cast<double>(n_denoise_steps - 1)));

  const Mat p0 = normalize_points(p0_pixels, image_width, image_height);
  Rng rng(child_seed(seed, "sample"));
  Mat x(p, 2 * h);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();

  TrackTensor state = TrackTensor::zeros(p, h, CoordSpace::normalized);
  for (int i = n_denoise_steps - 1; i >= 0; --i) {
    const int k = ks[static_cast<std::size_t>(i)];
    const double ab = den.schedule.alpha_bar[static_cast<std::size_t>(k)];
    const double ab_prev =
        i > 0 ? den.schedule.alpha_bar[static_cast<std::size_t>(ks[static_cast<std::size_t>(i - 1)])]
              : 1.0;
    const double a_eff = ab / ab_prev;
    state.values = x;
    const Mat eps_hat = predict_noise(den, state, z0, zg, k, p0).values;
    Mat x0_hat = (x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
    x0_hat = x0_hat.cwiseMax(-kX0Clip).cwiseMin(kX0Clip);
    const Mat mean = (std::sqrt(ab_prev) * (1.0 - a_eff) / (1.0 - ab)) * x0_hat +
                     (std::sqrt(a_eff) * (1.0 - ab_prev) / (1.0 - ab)) * x;
    if (i > 0) {
      const double var = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - a_eff);
      const double sigma = std::sqrt(std::max(0.0, var));
      Mat z(p, 2 * h);
      for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.normal();
      x = mean + sigma * z;
    } else {
      x = mean;
    }
  }
  state.values = x;
  return to_pixels(state, image_width, image_height);
}

void save_denoiser(const Denoiser& den, const std::string& path) {
  io::Checkpoint ck;
  ck.kind = "track-denoiser";
  ck.meta = {
      {"config",
       {{"n_blocks", den.config.n_blocks},
        {"hidden_size", den.config.hidden_size},
        {"n_heads", den.config.n_heads},
        {"p_max", den.config.p_max},
        {"horizon", den.config.horizon},
        {"embed_dim", den.config.embed_dim},
        {"raster_resolution", den.config.raster_resolution},
        {"enc_c1", den.config.enc_c1},
        {"enc_c2", den.config.enc_c2}}},
      {"schedule", {{"k_steps", den.schedule.k_steps}, {"alpha_bar", den.schedule.alpha_bar}}}};
  for (const auto& [name, value] : den.params.values) ck.tensors.emplace_back(name, value);
  io::write_checkpoint(path, ck);
}

Denoiser load_denoiser(const std::string& path) {
  const io::Checkpoint ck = io::read_checkpoint(path);
  if (ck.kind != "track-denoiser")
    throw IoError("checkpoint at " + path + " is not a track-denoiser");
  DenoiserConfig cfg;
  const auto& jc = ck.meta.at("config");
  cfg.n_blocks = jc.at("n_blocks").get<int>();
  cfg.hidden_size = jc.at("hidden_size").get<int>();
  cfg.n_heads = jc.at("n_heads").get<int>();
  cfg.p_max = jc.at("p_max").get<int>();
  cfg.horizon = jc.at("horizon").get<int>();
  cfg.embed_dim = jc.at("embed_dim").get<int>();
  cfg.raster_resolution = jc.at("raster_resolution").get<int>();
  cfg.enc_c1 = jc.at("enc_c1").get<int>();
  cfg.enc_c2 = jc.at("enc_c2").get<int>();
  const auto& js = ck.meta.at("schedule");
  NoiseSchedule sched =
      NoiseSchedule::from_alpha_bar(js.at("alpha_bar").get<std::vector<double>>());
  if (sched.k_steps != js.at("k_steps").get<int>())
    throw IoError("checkpoint schedule length disagrees with its k_steps field");
  Denoiser den = Denoiser::init(cfg, sched, 0);
  if (ck.tensors.size() != den.params.values.size())
    throw IoError("checkpoint tensor count does not match the architecture");
  for (const auto& [name, value] : ck.tensors) {
    Mat& dst = den.params.at(name);
    if (dst.rows() != value.rows() || dst.cols() != value.cols())
      throw IoError("checkpoint tensor shape mismatch for " + name);
    dst = value;
  }
  return den;
}

}  // namespace trackplan::diff
