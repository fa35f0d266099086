#include "trackplan/models.hpp"

namespace trackplan::nn {

void add_linear(ParamStore& store, const std::string& prefix, int in, int out) {
  store.create(prefix + ".w", in, out);
  store.create(prefix + ".b", 1, out);
}

void init_linear_xavier(ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  init_xavier(store, prefix + ".w", seed);
}

Var linear(ParamStore& store, const std::string& prefix, Var x) {
  Tape& t = *x.tape;
  return add_rowvec(matmul(x, t.param(store, prefix + ".w")), t.param(store, prefix + ".b"));
}

void add_dit_block(ParamStore& store, const std::string& prefix, int hidden, int cond_dim) {
  add_linear(store, prefix + ".ada", cond_dim, 6 * hidden);
  store.create(prefix + ".attn.wqkv", hidden, 3 * hidden);
  store.create(prefix + ".attn.bqkv", 1, 3 * hidden);
  store.create(prefix + ".attn.wo", hidden, hidden);
  store.create(prefix + ".attn.bo", 1, hidden);
  add_linear(store, prefix + ".mlp.fc1", hidden, 4 * hidden);
  add_linear(store, prefix + ".mlp.fc2", 4 * hidden, hidden);
}

void init_dit_block(ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  // The conditioning projection stays zero so shifts/scales/gates start at
  // zero and the block begins as an identity map.
  init_xavier(store, prefix + ".attn.wqkv", seed);
  init_xavier(store, prefix + ".attn.wo", seed);
  init_linear_xavier(store, prefix + ".mlp.fc1", seed);
  init_linear_xavier(store, prefix + ".mlp.fc2", seed);
}

namespace {

Var modulate(Var x, Var shift, Var scale_row) {
  return add_rowvec(mul_rowvec(x, add_scalar(scale_row, 1.0)), shift);
}

}  // namespace

Var dit_block(ParamStore& store, const std::string& prefix, Var x, Var cond_act, int n_heads) {
  Tape& t = *x.tape;
  const int hidden = static_cast<int>(x.val().cols());
  Var mod = linear(store, prefix + ".ada", cond_act);
  Var shift1 = slice_cols(mod, 0, hidden);
  Var scale1 = slice_cols(mod, hidden, hidden);
  Var gate1 = slice_cols(mod, 2 * hidden, hidden);
  Var shift2 = slice_cols(mod, 3 * hidden, hidden);
  Var scale2 = slice_cols(mod, 4 * hidden, hidden);
  Var gate2 = slice_cols(mod, 5 * hidden, hidden);

  Var h1 = modulate(layernorm_rows(x), shift1, scale1);
  Var attn = attention(h1, t.param(store, prefix + ".attn.wqkv"),
                       t.param(store, prefix + ".attn.bqkv"), t.param(store, prefix + ".attn.wo"),
                       t.param(store, prefix + ".attn.bo"), n_heads);
  x = add(x, mul_rowvec(attn, gate1));

  Var h2 = modulate(layernorm_rows(x), shift2, scale2);
  Var mlp = linear(store, prefix + ".mlp.fc2", gelu(linear(store, prefix + ".mlp.fc1", h2)));
  return add(x, mul_rowvec(mlp, gate2));
}

void add_dit_final(ParamStore& store, const std::string& prefix, int hidden, int cond_dim,
                   int out_dim) {
  add_linear(store, prefix + ".ada", cond_dim, 2 * hidden);
  add_linear(store, prefix + ".out", hidden, out_dim);
}

Var dit_final(ParamStore& store, const std::string& prefix, Var x, Var cond_act) {
  const int hidden = static_cast<int>(x.val().cols());
  Var mod = linear(store, prefix + ".ada", cond_act);
  Var shift = slice_cols(mod, 0, hidden);
  Var scale_row = slice_cols(mod, hidden, hidden);
  return linear(store, prefix + ".out", modulate(layernorm_rows(x), shift, scale_row));
}

void add_raster_encoder(ParamStore& store, const std::string& prefix,
                        const RasterEncoderConfig& cfg) {
  if (cfg.resolution < 16 || cfg.c1 < 1 || cfg.c2 < 1 || cfg.embed_dim < 1)
    throw InvalidConfig("raster encoder: invalid configuration");
  store.create(prefix + ".conv1.w", cfg.c1, 9);
  store.create(prefix + ".conv1.b", cfg.c1, 1);
  store.create(prefix + ".conv2.w", cfg.c2, 9 * cfg.c1);
  store.create(prefix + ".conv2.b", cfg.c2, 1);
  add_linear(store, prefix + ".head", cfg.c2, cfg.embed_dim);
}

void init_raster_encoder(ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  init_xavier(store, prefix + ".conv1.w", seed);
  init_xavier(store, prefix + ".conv2.w", seed);
  init_linear_xavier(store, prefix + ".head", seed);
}

Var encode_raster(Tape& tape, ParamStore& store, const std::string& prefix,
                  const RasterEncoderConfig& cfg, const Raster& raster) {
  if (raster.resolution != cfg.resolution)
    throw ShapeMismatch("encode_raster: raster resolution does not match encoder");
  const int r = cfg.resolution;
  Mat img(1, static_cast<Eigen::Index>(r) * r);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) img(0, y * r + x) = raster.cells(y, x);
  Var h = tape.constant(std::move(img));

  const int r1 = conv_out(r, 3, 2);
  Var c1 = silu(add_colvec(matmul(tape.param(store, prefix + ".conv1.w"), im2col(h, r, r, 3, 2)),
                           tape.param(store, prefix + ".conv1.b")));
  const int r2 = conv_out(r1, 3, 2);
  Var c2 = silu(
      add_colvec(matmul(tape.param(store, prefix + ".conv2.w"), im2col(c1, r1, r1, 3, 2)),
                 tape.param(store, prefix + ".conv2.b")));
  (void)r2;
  Var pooled = transpose(mean_cols(c2));  // 1 x c2
  return linear(store, prefix + ".head", pooled);
}

void add_timestep_embedder(ParamStore& store, const std::string& prefix, int dim) {
  add_linear(store, prefix + ".fc1", dim, dim);
  add_linear(store, prefix + ".fc2", dim, dim);
}

void init_timestep_embedder(ParamStore& store, const std::string& prefix, std::uint64_t seed) {
  init_linear_xavier(store, prefix + ".fc1", seed);
  init_linear_xavier(store, prefix + ".fc2", seed);
}

Var embed_timestep(Tape& tape, ParamStore& store, const std::string& prefix, double t, int dim) {
  Var feats = tape.constant(sinusoidal_embedding(t, dim));
  return linear(store, prefix + ".fc2", silu(linear(store, prefix + ".fc1", feats)));
}

}  // namespace trackplan::nn
