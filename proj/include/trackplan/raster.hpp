#pragma once

#include <Eigen/Dense>
#include <vector>

#include "trackplan/errors.hpp"
#include "trackplan/geometry.hpp"

namespace trackplan {

// Grayscale r x r grid with values in [0, 1]; cells(y, x).
struct Raster {
  int resolution = 0;
  Eigen::MatrixXd cells;

  static Raster zeros(int resolution) {
    Raster r;
    r.resolution = resolution;
    r.cells = Eigen::MatrixXd::Zero(resolution, resolution);
    return r;
  }

  bool operator==(const Raster& o) const {
    return resolution == o.resolution && cells == o.cells;
  }
};

// Splats each in-frame point with a fixed 3x3 kernel onto an r x r grid
// covering the full image frame, then clips to [0, 1]. Out-of-frame points
// contribute nothing.
Raster rasterize(const std::vector<geom::Vec2>& points2d, int image_width, int image_height,
                 int resolution);

}  // namespace trackplan
