#include "trackplan/nn.hpp"

#include <cmath>
#include <numbers>

namespace trackplan::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

bool needs_grad(const Var& v) { return v.tape->nodes[v.idx].requires_grad; }

}  // namespace

Var matmul(Var a, Var b) {
  require(a.val().cols() == b.val().rows(), "matmul: inner dimensions differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  Mat out = a.val() * b.val();
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [ai, bi, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[ai].requires_grad) tp.nodes[ai].grad.noalias() += g * tp.nodes[bi].value.transpose();
    if (tp.nodes[bi].requires_grad) tp.nodes[bi].grad.noalias() += tp.nodes[ai].value.transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.val().cols() == b.val().cols(), "matmul_nt: inner dimensions differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  Mat out = a.val() * b.val().transpose();
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [ai, bi, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[ai].requires_grad) tp.nodes[ai].grad.noalias() += g * tp.nodes[bi].value;
    if (tp.nodes[bi].requires_grad) tp.nodes[bi].grad.noalias() += g.transpose() * tp.nodes[ai].value;
  });
}

Var add(Var a, Var b) {
  require(a.val().rows() == b.val().rows() && a.val().cols() == b.val().cols(),
          "add: shapes differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(a.val() + b.val(), req, !req ? std::function<void(Tape&)>() : [ai, bi, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[ai].requires_grad) tp.nodes[ai].grad += g;
    if (tp.nodes[bi].requires_grad) tp.nodes[bi].grad += g;
  });
}

Var sub(Var a, Var b) {
  require(a.val().rows() == b.val().rows() && a.val().cols() == b.val().cols(),
          "sub: shapes differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(a.val() - b.val(), req, !req ? std::function<void(Tape&)>() : [ai, bi, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[ai].requires_grad) tp.nodes[ai].grad += g;
    if (tp.nodes[bi].requires_grad) tp.nodes[bi].grad -= g;
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const int ai = a.idx;
  const bool req = needs_grad(a);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(a.val() * s, req, !req ? std::function<void(Tape&)>() : [ai, oi, s](Tape& tp) {
    tp.nodes[ai].grad += tp.nodes[oi].grad * s;
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  const int ai = a.idx;
  const bool req = needs_grad(a);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(a.val().array() + s, req, !req ? std::function<void(Tape&)>() : [ai, oi](Tape& tp) {
    tp.nodes[ai].grad += tp.nodes[oi].grad;
  });
}

Var hadamard(Var a, Var b) {
  require(a.val().rows() == b.val().rows() && a.val().cols() == b.val().cols(),
          "hadamard: shapes differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(a.val().cwiseProduct(b.val()), req,
                !req ? std::function<void(Tape&)>() : [ai, bi, oi](Tape& tp) {
                  const Mat& g = tp.nodes[oi].grad;
                  if (tp.nodes[ai].requires_grad)
                    tp.nodes[ai].grad += g.cwiseProduct(tp.nodes[bi].value);
                  if (tp.nodes[bi].requires_grad)
                    tp.nodes[bi].grad += g.cwiseProduct(tp.nodes[ai].value);
                });
}

Var square(Var a) {
  Tape& t = *a.tape;
  const int ai = a.idx;
  const bool req = needs_grad(a);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(a.val().cwiseProduct(a.val()), req,
                !req ? std::function<void(Tape&)>() : [ai, oi](Tape& tp) {
                  tp.nodes[ai].grad +=
                      2.0 * tp.nodes[oi].grad.cwiseProduct(tp.nodes[ai].value);
                });
}

Var mul_rowvec(Var x, Var r) {
  require(r.val().rows() == 1 && r.val().cols() == x.val().cols(),
          "mul_rowvec: r must be 1 x cols(x)");
  Tape& t = *x.tape;
  const int xi = x.idx, ri = r.idx;
  const bool req = needs_grad(x) || needs_grad(r);
  Mat out = x.val().array().rowwise() * r.val().row(0).array();
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [xi, ri, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[xi].requires_grad)
      tp.nodes[xi].grad += (g.array().rowwise() * tp.nodes[ri].value.row(0).array()).matrix();
    if (tp.nodes[ri].requires_grad)
      tp.nodes[ri].grad += g.cwiseProduct(tp.nodes[xi].value).colwise().sum();
  });
}

Var add_rowvec(Var x, Var r) {
  require(r.val().rows() == 1 && r.val().cols() == x.val().cols(),
          "add_rowvec: r must be 1 x cols(x)");
  Tape& t = *x.tape;
  const int xi = x.idx, ri = r.idx;
  const bool req = needs_grad(x) || needs_grad(r);
  Mat out = x.val().array().rowwise() + r.val().row(0).array();
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [xi, ri, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[xi].requires_grad) tp.nodes[xi].grad += g;
    if (tp.nodes[ri].requires_grad) tp.nodes[ri].grad += g.colwise().sum();
  });
}

Var add_colvec(Var x, Var c) {
  require(c.val().cols() == 1 && c.val().rows() == x.val().rows(),
          "add_colvec: c must be rows(x) x 1");
  Tape& t = *x.tape;
  const int xi = x.idx, ci = c.idx;
  const bool req = needs_grad(x) || needs_grad(c);
  Mat out = x.val().array().colwise() + c.val().col(0).array();
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [xi, ci, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[xi].requires_grad) tp.nodes[xi].grad += g;
    if (tp.nodes[ci].requires_grad) tp.nodes[ci].grad += g.rowwise().sum();
  });
}

Var layernorm_rows(Var x) {
  constexpr double kEps = 1e-5;
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const Mat& v = x.val();
  const Eigen::Index m = v.cols();
  Mat out(v.rows(), m);
  Eigen::VectorXd inv_sigma(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double mu = v.row(i).mean();
    const double var = (v.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_sigma(i) = is;
    out.row(i) = (v.row(i).array() - mu) * is;
  }
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, inv_sigma, m](Tape& tp) {
                  const Mat& g = tp.nodes[oi].grad;
                  const Mat& y = tp.nodes[oi].value;
                  Mat& gx = tp.nodes[xi].grad;
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const double gm = g.row(i).mean();
                    const double gym = g.row(i).cwiseProduct(y.row(i)).mean();
                    gx.row(i) +=
                        inv_sigma(i) * (g.row(i).array() - gm - y.row(i).array() * gym).matrix();
                  }
                  (void)m;
                });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const Mat& v = x.val();
  Mat out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Eigen::ArrayXd e = (v.row(i).array() - v.row(i).maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [xi, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    const Mat& y = tp.nodes[oi].value;
    Mat& gx = tp.nodes[xi].grad;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double dot = g.row(i).cwiseProduct(y.row(i)).sum();
      gx.row(i) += (g.row(i).array() - dot).matrix().cwiseProduct(y.row(i));
    }
  });
}

Var silu(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const Eigen::ArrayXXd a = x.val().array();
  const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-a).exp());
  const int oi = static_cast<int>(t.nodes.size());
  return t.push((a * sig).matrix(), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, sig](Tape& tp) {
                  const Eigen::ArrayXXd a2 = tp.nodes[xi].value.array();
                  tp.nodes[xi].grad +=
                      (tp.nodes[oi].grad.array() * (sig * (1.0 + a2 * (1.0 - sig)))).matrix();
                });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const Eigen::ArrayXXd a = x.val().array();
  const Eigen::ArrayXXd inner = kGeluC * (a + kGeluA * a.cube());
  const Eigen::ArrayXXd th = inner.tanh();
  const int oi = static_cast<int>(t.nodes.size());
  return t.push((0.5 * a * (1.0 + th)).matrix(), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, th](Tape& tp) {
                  const Eigen::ArrayXXd a2 = tp.nodes[xi].value.array();
                  const Eigen::ArrayXXd sech2 = 1.0 - th.square();
                  const Eigen::ArrayXXd dinner = kGeluC * (1.0 + 3.0 * kGeluA * a2.square());
                  const Eigen::ArrayXXd d = 0.5 * (1.0 + th) + 0.5 * a2 * sech2 * dinner;
                  tp.nodes[xi].grad += (tp.nodes[oi].grad.array() * d).matrix();
                });
}

Var relu(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(x.val().cwiseMax(0.0), req,
                !req ? std::function<void(Tape&)>() : [xi, oi](Tape& tp) {
                  const Mat mask = (tp.nodes[xi].value.array() > 0.0).cast<double>();
                  tp.nodes[xi].grad += tp.nodes[oi].grad.cwiseProduct(mask);
                });
}

Var transpose(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(x.val().transpose(), req,
                !req ? std::function<void(Tape&)>() : [xi, oi](Tape& tp) {
                  tp.nodes[xi].grad += tp.nodes[oi].grad.transpose();
                });
}

Var slice_rows(Var x, int r0, int n) {
  require(r0 >= 0 && n >= 0 && r0 + n <= x.val().rows(), "slice_rows: out of range");
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(x.val().middleRows(r0, n), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, r0, n](Tape& tp) {
                  tp.nodes[xi].grad.middleRows(r0, n) += tp.nodes[oi].grad;
                });
}

Var slice_cols(Var x, int c0, int n) {
  require(c0 >= 0 && n >= 0 && c0 + n <= x.val().cols(), "slice_cols: out of range");
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(x.val().middleCols(c0, n), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, c0, n](Tape& tp) {
                  tp.nodes[xi].grad.middleCols(c0, n) += tp.nodes[oi].grad;
                });
}

Var concat_rows(Var a, Var b) {
  require(a.val().cols() == b.val().cols(), "concat_rows: column counts differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  Mat out(a.val().rows() + b.val().rows(), a.val().cols());
  out << a.val(), b.val();
  const int na = static_cast<int>(a.val().rows());
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [ai, bi, na, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[ai].requires_grad) tp.nodes[ai].grad += g.topRows(na);
    if (tp.nodes[bi].requires_grad) tp.nodes[bi].grad += g.bottomRows(g.rows() - na);
  });
}

Var concat_cols(Var a, Var b) {
  require(a.val().rows() == b.val().rows(), "concat_cols: row counts differ");
  Tape& t = *a.tape;
  const int ai = a.idx, bi = b.idx;
  const bool req = needs_grad(a) || needs_grad(b);
  Mat out(a.val().rows(), a.val().cols() + b.val().cols());
  out << a.val(), b.val();
  const int na = static_cast<int>(a.val().cols());
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req, !req ? std::function<void(Tape&)>() : [ai, bi, na, oi](Tape& tp) {
    const Mat& g = tp.nodes[oi].grad;
    if (tp.nodes[ai].requires_grad) tp.nodes[ai].grad += g.leftCols(na);
    if (tp.nodes[bi].requires_grad) tp.nodes[bi].grad += g.rightCols(g.cols() - na);
  });
}

Var mean_all(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  Mat out(1, 1);
  out(0, 0) = x.val().mean();
  const double inv_n = 1.0 / static_cast<double>(x.val().size());
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, inv_n](Tape& tp) {
                  tp.nodes[xi].grad.array() += tp.nodes[oi].grad(0, 0) * inv_n;
                });
}

Var mean_cols(Var x) {
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const double inv_m = 1.0 / static_cast<double>(x.val().cols());
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(x.val().rowwise().mean(), req,
                !req ? std::function<void(Tape&)>() : [xi, oi, inv_m](Tape& tp) {
                  const Mat& g = tp.nodes[oi].grad;
                  tp.nodes[xi].grad +=
                      (g * inv_m).replicate(1, tp.nodes[xi].value.cols());
                });
}

Var im2col(Var x, int h, int w, int k, int stride) {
  require(x.val().cols() == static_cast<Eigen::Index>(h) * w, "im2col: cols(x) != h*w");
  require(k >= 1 && stride >= 1 && h >= k && w >= k, "im2col: bad geometry");
  Tape& t = *x.tape;
  const int xi = x.idx;
  const bool req = needs_grad(x);
  const int channels = static_cast<int>(x.val().rows());
  const int ho = conv_out(h, k, stride);
  const int wo = conv_out(w, k, stride);
  Mat out(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(ho) * wo);
  const Mat& v = x.val();
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox)
            out(row, oy * wo + ox) = v(c, (oy * stride + ky) * w + (ox * stride + kx));
      }
  const int oi = static_cast<int>(t.nodes.size());
  return t.push(std::move(out), req,
                !req ? std::function<void(Tape&)>()
                     : [xi, oi, channels, h, w, k, stride, ho, wo](Tape& tp) {
                         const Mat& g = tp.nodes[oi].grad;
                         Mat& gx = tp.nodes[xi].grad;
                         for (int c = 0; c < channels; ++c)
                           for (int ky = 0; ky < k; ++ky)
                             for (int kx = 0; kx < k; ++kx) {
                               const int row = (c * k + ky) * k + kx;
                               for (int oy = 0; oy < ho; ++oy)
                                 for (int ox = 0; ox < wo; ++ox)
                                   gx(c, (oy * stride + ky) * w + (ox * stride + kx)) +=
                                       g(row, oy * wo + ox);
                             }
                         (void)h;
                       });
}

Var attention(Var x, Var wqkv, Var bqkv, Var wo, Var bo, int n_heads) {
  const int d = static_cast<int>(x.val().cols());
  require(wqkv.val().rows() == d && wqkv.val().cols() == 3 * d, "attention: wqkv must be d x 3d");
  require(n_heads >= 1 && d % n_heads == 0, "attention: heads must divide width");
  const int dh = d / n_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qkv = add_rowvec(matmul(x, wqkv), bqkv);
  Var q = slice_cols(qkv, 0, d);
  Var kk = slice_cols(qkv, d, d);
  Var v = slice_cols(qkv, 2 * d, d);
  Var heads;  // filled on first head
  for (int hI = 0; hI < n_heads; ++hI) {
    Var qh = slice_cols(q, hI * dh, dh);
    Var kh = slice_cols(kk, hI * dh, dh);
    Var vh = slice_cols(v, hI * dh, dh);
    Var probs = softmax_rows(scale(matmul_nt(qh, kh), sc));
    Var oh = matmul(probs, vh);
    heads = (hI == 0) ? oh : concat_cols(heads, oh);
  }
  return add_rowvec(matmul(heads, wo), bo);
}

void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr >= 0.0) || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0 || !(cfg.eps > 0.0))
    throw InvalidConfig("adam_step: invalid hyperparameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, value] : store.values) {
    const Mat& g = store.grads.at(name);
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      state.m[name] = Mat::Zero(value.rows(), value.cols());
      state.v[name] = Mat::Zero(value.rows(), value.cols());
    }
    Mat& m = state.m.at(name);
    Mat& v = state.v.at(name);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    if (cfg.lr == 0.0) continue;  // exact no-op; avoids rewriting values with +-0 artifacts
    const Eigen::ArrayXXd mhat = m.array() / bc1;
    const Eigen::ArrayXXd vhat = v.array() / bc2;
    value.array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
  }
}

double gradient_check(ParamStore& store, const std::function<double()>& loss_fn, int n_entries,
                      std::uint64_t seed, double fd_step, double floor) {
  std::vector<std::string> names;
  for (const auto& [name, v] : store.values)
    if (v.size() > 0) names.push_back(name);
  if (names.empty()) throw InvalidConfig("gradient_check: empty parameter store");
  Rng rng(child_seed(seed, "gradcheck"));
  double worst = 0.0;
  for (int s = 0; s < n_entries; ++s) {
    const std::string& name =
        names[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(names.size())))];
    Mat& p = store.values.at(name);
    const Eigen::Index flat = rng.uniform_int(static_cast<int>(p.size()));
    const double saved = p.data()[flat];
    p.data()[flat] = saved + fd_step;
    const double lp = loss_fn();
    p.data()[flat] = saved - fd_step;
    const double lm = loss_fn();
    p.data()[flat] = saved;
    const double fd = (lp - lm) / (2.0 * fd_step);
    const double an = store.grads.at(name).data()[flat];
    const double denom = std::max({std::abs(an), std::abs(fd), floor});
    worst = std::max(worst, std::abs(an - fd) / denom);
  }
  return worst;
}

Mat sinusoidal_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw InvalidConfig("sinusoidal_embedding: dim must be even, >= 2");
  Mat out(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out(0, 2 * i) = std::sin(t * freq);
    out(0, 2 * i + 1) = std::cos(t * freq);
  }
  return out;
}

}  // namespace trackplan::nn
