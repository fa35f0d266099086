#include "trackplan/raster.hpp"

#include <cmath>

namespace trackplan {

namespace {
// Center / edge / corner weights of the splat kernel.
constexpr double kKernel[3][3] = {
    {0.25, 0.5, 0.25},
    {0.5, 1.0, 0.5},
    {0.25, 0.5, 0.25},
};
}  // namespace

Raster rasterize(const std::vector<geom::Vec2>& points2d, int image_width, int image_height,
                 int resolution) {
  if (resolution < 16) throw InvalidConfig("raster resolution must be >= 16");
  Raster r = Raster::zeros(resolution);
  for (const auto& q : points2d) {
    if (!(q.x() >= 0 && q.x() < image_width && q.y() >= 0 && q.y() < image_height)) continue;
    const int gx = static_cast<int>(q.x() * resolution / image_width);
    const int gy = static_cast<int>(q.y() * resolution / image_height);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = gx + dx;
        const int y = gy + dy;
        if (x < 0 || x >= resolution || y < 0 || y >= resolution) continue;
        r.cells(y, x) += kKernel[dy + 1][dx + 1];
      }
    }
  }
  r.cells = r.cells.cwiseMin(1.0);
  return r;
}

}  // namespace trackplan
