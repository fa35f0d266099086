#pragma once

#include <string>

#include "trackplan/nn.hpp"
#include "trackplan/raster.hpp"

// Shared network components: linear layers, transformer blocks with adaptive
// layer-norm conditioning, a small strided-conv raster encoder, and the
// timestep embedder. Parameters live in a ParamStore under caller-chosen name
// prefixes; add_* registers shapes (zero-initialized), init_* overwrites with
// the working initialization (Xavier weights, zero biases, zero conditioning
// and output projections).
namespace trackplan::nn {

// prefix+".w" (in x out) and prefix+".b" (1 x out).
void add_linear(ParamStore& store, const std::string& prefix, int in, int out);
void init_linear_xavier(ParamStore& store, const std::string& prefix, std::uint64_t seed);
Var linear(ParamStore& store, const std::string& prefix, Var x);

// Pre-norm transformer block: attention and an MLP (4x width, gelu), each
// wrapped in modulate(layernorm(x), shift, scale) and a learned per-channel
// gate, with shifts/scales/gates produced by a zero-initialized linear read
// of the conditioning activation. cond_act is 1 x cond_dim (already silu'd);
// zero conditioning projections make the block an identity map at init.
void add_dit_block(ParamStore& store, const std::string& prefix, int hidden, int cond_dim);
void init_dit_block(ParamStore& store, const std::string& prefix, std::uint64_t seed);
Var dit_block(ParamStore& store, const std::string& prefix, Var x, Var cond_act, int n_heads);

// Final read-out: modulate(layernorm(x)) followed by a zero-initialized
// projection to out_dim, so the stack emits exactly zero before training.
void add_dit_final(ParamStore& store, const std::string& prefix, int hidden, int cond_dim,
                   int out_dim);
Var dit_final(ParamStore& store, const std::string& prefix, Var x, Var cond_act);

struct RasterEncoderConfig {
  int resolution = 64;
  int c1 = 8;
  int c2 = 16;
  int embed_dim = 128;
};

// Two stride-2 3x3 convolutions with silu, spatial mean pooling, then a
// linear head to embed_dim. All biases start (and stay, until trained) zero,
// so an all-zero raster maps to an all-zero embedding.
void add_raster_encoder(ParamStore& store, const std::string& prefix,
                        const RasterEncoderConfig& cfg);
void init_raster_encoder(ParamStore& store, const std::string& prefix, std::uint64_t seed);
Var encode_raster(Tape& tape, ParamStore& store, const std::string& prefix,
                  const RasterEncoderConfig& cfg, const Raster& raster);

// Sinusoidal features of t passed through a two-layer silu MLP; output 1 x dim.
void add_timestep_embedder(ParamStore& store, const std::string& prefix, int dim);
void init_timestep_embedder(ParamStore& store, const std::string& prefix, std::uint64_t seed);
Var embed_timestep(Tape& tape, ParamStore& store, const std::string& prefix, double t, int dim);

}  // namespace trackplan::nn
