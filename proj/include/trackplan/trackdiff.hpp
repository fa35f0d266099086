#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackplan/models.hpp"
#include "trackplan/nn.hpp"
#include "trackplan/raster.hpp"
#include "trackplan/synth.hpp"
#include "trackplan/track.hpp"

// Conditional denoising diffusion over future point tracks. Given the initial
// scene raster, the goal raster, and the first-frame point locations, the
// model learns to predict per-step noise on normalized track tensors; ancestral
// sampling then produces full pixel-space trajectories for every query point.
namespace trackplan::diff {

using Mat = Eigen::MatrixXd;
using Embedding = Eigen::RowVectorXd;

// Cumulative signal fractions for the forward corruption process, indexed by
// diffusion step k = 0..K-1. Strictly decreasing, in (0,1], near 1 at k=0.
struct NoiseSchedule {
  int k_steps = 0;
  std::vector<double> alpha_bar;

  // Squared-cosine schedule; the first entry is pinned up to 0.9995 and the
  // last is floored away from zero so every step stays usable.
  static NoiseSchedule cosine(int k_steps);
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);
  void validate() const;
};

struct DenoiserConfig {
  int n_blocks = 4;       // full-scale reference: 24
  int hidden_size = 128;  // full-scale reference: 1024
  int n_heads = 4;        // full-scale reference: 16
  int p_max = 512;
  int horizon = 16;
  int embed_dim = 128;    // full-scale reference: 512
  int raster_resolution = 64;
  int enc_c1 = 8;
  int enc_c2 = 16;
  void validate() const;
  int token_dim() const { return 2 + 2 * horizon; }
};

// Parameters, architecture, and schedule in one self-describing bundle.
struct Denoiser {
  DenoiserConfig config;
  NoiseSchedule schedule;
  nn::ParamStore params;

  static Denoiser init(const DenoiserConfig& config, const NoiseSchedule& schedule,
                       std::uint64_t seed);
};

// Deterministic embedding of a raster through the model's shared encoder.
Embedding encode_raster(const Denoiser& den, const Raster& raster);

// x_k = sqrt(alpha_bar[k]) * x0 + sqrt(1 - alpha_bar[k]) * eps, elementwise.
// x0 and eps must be normalized tensors of identical shape.
TrackTensor forward_noise(const TrackTensor& x0, int k, const TrackTensor& eps,
                          const NoiseSchedule& sched);

// One denoiser evaluation. noisy must be in normalized space; p0 is the p x 2
// matrix of normalized first-frame point coordinates. Output has the shape and
// space of noisy. One token per point; conditioning is z0 + zg + step-k
// embedding, injected through per-block adaptive layer norm.
TrackTensor predict_noise(const Denoiser& den, const TrackTensor& noisy, const Embedding& z0,
                          const Embedding& zg, int k, const Mat& p0);

// Mean squared error between predicted and sampled noise, averaged over
// episodes, points, steps, and coordinates. Noise draws are keyed on each
// episode's own seed, so duplicate batch entries do not change the value.
double loss(const Denoiser& den, const std::vector<const synth::Episode*>& batch,
            std::uint64_t seed);

// One Adam update on the same objective; returns the batch loss. A non-finite
// loss aborts before any parameter or optimizer-state change.
double train_step(Denoiser& den, const std::vector<const synth::Episode*>& batch,
                  nn::AdamState& opt, const nn::AdamConfig& opt_cfg, std::uint64_t seed);

// Ancestral sampling from unit Gaussian noise down to k=0, over an evenly
// strided subsequence of the schedule when n_denoise_steps < K. p0 is in
// pixels; the result is denormalized back to pixels.
TrackTensor sample_tracks(const Denoiser& den, const Embedding& z0, const Embedding& zg,
                          const Mat& p0_pixels, int image_width, int image_height,
                          int n_denoise_steps, std::uint64_t seed);

// Self-describing checkpoint: config + schedule + every parameter tensor.
void save_denoiser(const Denoiser& den, const std::string& path);
Denoiser load_denoiser(const std::string& path);

}  // namespace trackplan::diff
