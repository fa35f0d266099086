#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "trackplan/errors.hpp"

namespace trackplan {

enum class CoordSpace { pixels, normalized };

// p x H x 2 tensor of 2D point tracks, stored as a p x 2H matrix with steps
// interleaved along the row: row i = [u_1 v_1 u_2 v_2 ... u_H v_H].
// Step t is 0-based here and refers to frame t+1 (frame 0 positions live
// elsewhere; tracks hold the H future steps).
struct TrackTensor {
  int p = 0;
  int H = 0;
  CoordSpace space = CoordSpace::pixels;
  Eigen::MatrixXd values;
  // Per-point flag: the point left the image bounds at some step. Flagged
  // points keep their values but are excluded from fitting and metrics.
  std::vector<std::uint8_t> out_of_frame;

  static TrackTensor zeros(int p, int H, CoordSpace space = CoordSpace::pixels) {
    TrackTensor t;
    t.p = p;
    t.H = H;
    t.space = space;
    t.values = Eigen::MatrixXd::Zero(p, 2 * H);
    t.out_of_frame.assign(p, 0);
    return t;
  }

  double u(int i, int t) const { return values(i, 2 * t); }
  double v(int i, int t) const { return values(i, 2 * t + 1); }
  void set(int i, int t, double uu, double vv) {
    values(i, 2 * t) = uu;
    values(i, 2 * t + 1) = vv;
  }
  bool flagged(int i) const { return !out_of_frame.empty() && out_of_frame[i] != 0; }

  TrackTensor select(const std::vector<int>& indices) const {
    TrackTensor out = zeros(static_cast<int>(indices.size()), H, space);
    for (int r = 0; r < out.p; ++r) {
      out.values.row(r) = values.row(indices[r]);
      out.out_of_frame[r] = out_of_frame.empty() ? 0 : out_of_frame[indices[r]];
    }
    return out;
  }
};

inline void check_same_shape(const TrackTensor& a, const TrackTensor& b) {
  if (a.p != b.p || a.H != b.H) throw ShapeMismatch("track tensors differ in p or H");
}

// Pixel -> [-1, 1] and back; u' = 2u/W - 1. The pair is a bijection for a
// fixed image size, exact to rounding.
inline TrackTensor to_normalized(const TrackTensor& t, int width, int height) {
  TrackTensor out = t;
  out.space = CoordSpace::normalized;
  for (int i = 0; i < t.p; ++i)
    for (int s = 0; s < t.H; ++s)
      out.set(i, s, 2.0 * t.u(i, s) / width - 1.0, 2.0 * t.v(i, s) / height - 1.0);
  return out;
}

inline TrackTensor to_pixels(const TrackTensor& t, int width, int height) {
  TrackTensor out = t;
  out.space = CoordSpace::pixels;
  for (int i = 0; i < t.p; ++i)
    for (int s = 0; s < t.H; ++s)
      out.set(i, s, (t.u(i, s) + 1.0) * width / 2.0, (t.v(i, s) + 1.0) * height / 2.0);
  return out;
}

}  // namespace trackplan
