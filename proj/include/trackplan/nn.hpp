#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trackplan/errors.hpp"
#include "trackplan/rng.hpp"

// Reverse-mode autodiff over Eigen matrices, plus the parameter store, Adam,
// and deterministic initializers the models are built from. A Tape lives for
// one forward/backward pass; Vars are indices into it, so graphs are cheap to
// rebuild every step.
namespace trackplan::nn {

using Mat = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  const Mat& val() const;
};

// Named parameter tensors and their gradient accumulators. std::map keeps
// iteration order stable, which keeps optimizer updates and checkpoints
// deterministic.
struct ParamStore {
  std::map<std::string, Mat> values;
  std::map<std::string, Mat> grads;

  Mat& create(const std::string& name, int rows, int cols) {
    if (values.count(name)) throw InvalidConfig("parameter already exists: " + name);
    values[name] = Mat::Zero(rows, cols);
    grads[name] = Mat::Zero(rows, cols);
    return values[name];
  }
  Mat& at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw InvalidConfig("unknown parameter: " + name);
    return it->second;
  }
  const Mat& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw InvalidConfig("unknown parameter: " + name);
    return it->second;
  }
  void zero_grads() {
    for (auto& [name, g] : grads) g.setZero();
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : values) n += static_cast<std::size_t>(v.size());
    return n;
  }
};

// Per-tensor seeding by name makes initialization independent of creation
// order.
inline void init_xavier(ParamStore& s, const std::string& name, std::uint64_t seed) {
  Mat& m = s.at(name);
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  Rng rng(child_seed(seed, name));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
}

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> backward;  // accumulates this node's grad into parents
    bool requires_grad = false;
  };

  std::vector<Node> nodes;

  Var push(Mat value, bool requires_grad, std::function<void(Tape&)> backward) {
    nodes.push_back({std::move(value), Mat(), std::move(backward), requires_grad});
    return {this, static_cast<int>(nodes.size()) - 1};
  }

  Var constant(Mat value) { return push(std::move(value), false, nullptr); }

  // Leaf whose gradient sinks into store.grads[name] during backward().
  Var param(ParamStore& store, const std::string& name) {
    ParamStore* sp = &store;
    const int idx = static_cast<int>(nodes.size());
    return push(store.at(name), true, [sp, name, idx](Tape& t) {
      sp->grads.at(name) += t.nodes[idx].grad;
    });
  }

  Mat& grad(const Var& v) { return nodes[v.idx].grad; }

  // Seeds d(out)/d(out) = seed (out must be 1x1) and runs the reverse sweep.
  void backward(const Var& out, double seed = 1.0) {
    if (nodes[out.idx].value.size() != 1)
      throw ShapeMismatch("backward: output must be a 1x1 scalar");
    for (auto& n : nodes) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes[out.idx].grad(0, 0) = seed;
    for (int i = out.idx; i >= 0; --i)
      if (nodes[i].requires_grad && nodes[i].backward) nodes[i].backward(*this);
  }
};

inline const Mat& Var::val() const { return tape->nodes[idx].value; }

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var hadamard(Var a, Var b);
Var square(Var a);
Var mul_rowvec(Var x, Var r);  // x (n x m) scaled per column by r (1 x m)
Var add_rowvec(Var x, Var r);
Var add_colvec(Var x, Var c);  // x (n x m) shifted per row by c (n x 1)
Var layernorm_rows(Var x);     // per-row normalization, no affine, eps 1e-5
Var softmax_rows(Var x);
Var silu(Var x);
Var gelu(Var x);  // tanh approximation
Var relu(Var x);
Var transpose(Var x);
Var slice_rows(Var x, int r0, int n);
Var slice_cols(Var x, int c0, int n);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var mean_all(Var x);   // 1x1
Var mean_cols(Var x);  // n x 1 row means over columns
// Patch-gather for convolution: x holds C channels as rows, each row a
// row-major h x w image; output is (C*k*k) x (h_out * w_out).
Var im2col(Var x, int h, int w, int k, int stride);

inline int conv_out(int size, int k, int stride) { return (size - k) / stride + 1; }

// Multi-head self-attention over row-tokens; wqkv: d x 3d, wo: d x d, biases
// 1 x 3d / 1 x d. Scores scaled by 1/sqrt(d_head).
Var attention(Var x, Var wqkv, Var bqkv, Var wo, Var bo, int n_heads);

// ---- training ---------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t t = 0;
  std::map<std::string, Mat> m;
  std::map<std::string, Mat> v;
};

// One update from store.grads; lazily sizes the moment buffers on first use.
void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg);

// Central-difference check of d(loss)/d(param entry) on n randomly chosen
// entries. loss_fn must be a pure function of store values; grads must
// already hold the analytic gradient of the same loss. Returns the maximum
// relative error max(|a-f| / max(|a|, |f|, floor)).
double gradient_check(ParamStore& store, const std::function<double()>& loss_fn, int n_entries,
                      std::uint64_t seed, double fd_step = 1e-5, double floor = 1e-4);

// Sinusoidal position/timestep features: [sin(t*w_i), cos(t*w_i)] with
// geometric frequencies, as a 1 x dim row (dim must be even).
Mat sinusoidal_embedding(double t, int dim);

}  // namespace trackplan::nn
