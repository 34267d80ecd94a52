#include "rmvs/image.h"

#include <algorithm>
#include <cmath>

#include "rmvs/parallel.h"

namespace rmvs {

Image::Image(int width, int height, int channels, double fill)
    : Grid<double>(width, height, channels, fill) {
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("image: channels must be 1 or 3");
  }
}

Image::Image(int width, int height, int channels, std::vector<double> data)
    : Grid<double>(width, height, channels, std::move(data)) {
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("image: channels must be 1 or 3");
  }
}

void Image::ValidateIntensities() const {
  for (double v : data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw std::invalid_argument("image: intensities must be finite in [0, 1]");
    }
  }
}

int64_t ValidityMask::CountValid() const {
  int64_t n = 0;
  for (uint8_t v : data()) n += v != 0;
  return n;
}

namespace {

struct Cell {
  int x0, y0;
  double fx, fy;
};

// Returns false when the coordinate is outside [0, w-1] x [0, h-1] by more
// than the boundary tolerance; coordinates inside the slack are clamped.
bool Locate(const Grid<double>& img, const PixelCoord& coord, Cell* cell) {
  if (!coord.valid) return false;
  const int w = img.width();
  const int h = img.height();
  if (!(coord.x >= -kBoundaryTolerance && coord.y >= -kBoundaryTolerance &&
        coord.x <= w - 1 + kBoundaryTolerance &&
        coord.y <= h - 1 + kBoundaryTolerance)) {
    return false;
  }
  const double x = std::clamp(coord.x, 0.0, w - 1.0);
  const double y = std::clamp(coord.y, 0.0, h - 1.0);
  // Single-pixel axes degenerate to nearest sampling.
  cell->x0 = w > 1 ? std::min(static_cast<int>(std::floor(x)), w - 2) : 0;
  cell->y0 = h > 1 ? std::min(static_cast<int>(std::floor(y)), h - 2) : 0;
  cell->fx = w > 1 ? x - cell->x0 : 0.0;
  cell->fy = h > 1 ? y - cell->y0 : 0.0;
  return true;
}

}  // namespace

Sample BilinearSample(const Grid<double>& img, const PixelCoord& coord) {
  Sample s;
  Cell cell;
  if (!Locate(img, coord, &cell)) return s;
  const int x1 = std::min(cell.x0 + 1, img.width() - 1);
  const int y1 = std::min(cell.y0 + 1, img.height() - 1);
  for (int c = 0; c < img.channels(); ++c) {
    const double v00 = img(cell.x0, cell.y0, c);
    const double v01 = img(cell.x0, y1, c);
    const double top = v00 + cell.fx * (img(x1, cell.y0, c) - v00);
    const double bottom = v01 + cell.fx * (img(x1, y1, c) - v01);
    s.value[c] = top + cell.fy * (bottom - top);
  }
  s.valid = true;
  return s;
}

SampleDerivative BilinearSampleDerivative(const Grid<double>& img,
                                          const PixelCoord& coord) {
  SampleDerivative s;
  Cell cell;
  if (!Locate(img, coord, &cell)) return s;
  const int x1 = std::min(cell.x0 + 1, img.width() - 1);
  const int y1 = std::min(cell.y0 + 1, img.height() - 1);
  for (int c = 0; c < img.channels(); ++c) {
    const double v00 = img(cell.x0, cell.y0, c);
    const double v10 = img(x1, cell.y0, c);
    const double v01 = img(cell.x0, y1, c);
    const double v11 = img(x1, y1, c);
    const double top = v00 + cell.fx * (v10 - v00);
    const double bottom = v01 + cell.fx * (v11 - v01);
    s.value[c] = top + cell.fy * (bottom - top);
    s.dx[c] = (1.0 - cell.fy) * (v10 - v00) + cell.fy * (v11 - v01);
    s.dy[c] = bottom - top;
  }
  s.valid = true;
  return s;
}

GradientImage ImageGradient(const Grid<double>& img) {
  const int w = img.width();
  const int h = img.height();
  if (w < 2 || h < 2) {
    throw std::invalid_argument("image_gradient: image must be at least 2x2");
  }
  const int nc = img.channels();
  GradientImage g{Grid<double>(w, h, nc), Grid<double>(w, h, nc)};
  for (int y = 0; y < h; ++y) {
    const Stencil sy = GradientStencil(y, h);
    for (int x = 0; x < w; ++x) {
      const Stencil sx = GradientStencil(x, w);
      for (int c = 0; c < nc; ++c) {
        g.gx(x, y, c) = sx.weight * (img(sx.hi, y, c) - img(sx.lo, y, c));
        g.gy(x, y, c) = sy.weight * (img(x, sy.hi, c) - img(x, sy.lo, c));
      }
    }
  }
  return g;
}

WarpedImage InverseWarp(const DepthMap& depth, const Image& img_view,
                        const Camera& cam_src, const Camera& cam_view) {
  if (!depth.SameShape(cam_src.width, cam_src.height)) {
    throw std::invalid_argument(
        "inverse_warp: depth map shape does not match source camera");
  }
  if (!img_view.SameShape(cam_view.width, cam_view.height)) {
    throw std::invalid_argument(
        "inverse_warp: view image shape does not match view camera");
  }
  const int w = depth.width();
  const int h = depth.height();
  const int nc = img_view.channels();
  WarpedImage out{Image(w, h, nc), ValidityMask(w, h)};
  const PixelWarper warper(cam_src, cam_view);
  ParallelFor(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth(x, y);
      if (!DepthMap::IsValid(d)) continue;
      const PixelCoord p = warper.Warp(x, y, d).coord;
      const Sample s = BilinearSample(img_view, p);
      if (!s.valid) continue;
      out.mask(x, y) = 1;
      for (int c = 0; c < nc; ++c) out.image(x, y, c) = s.value[c];
    }
  });
  return out;
}

WarpedImage WarpByHomography(const Eigen::Matrix3d& H, const Image& img_view,
                             int width, int height, const Camera& cam_view) {
  const int nc = img_view.channels();
  WarpedImage out{Image(width, height, nc), ValidityMask(width, height)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const PixelCoord p = ApplyHomography(H, x, y, cam_view);
      const Sample s = BilinearSample(img_view, p);
      if (!s.valid) continue;
      out.mask(x, y) = 1;
      for (int c = 0; c < nc; ++c) out.image(x, y, c) = s.value[c];
    }
  }
  return out;
}

}  // namespace rmvs
