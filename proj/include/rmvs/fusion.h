#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rmvs/geometry.h"
#include "rmvs/image.h"
#include "rmvs/ply.h"

namespace rmvs {

struct FusionConfig {
  double depth_tolerance = 0.01;       // relative
  double reprojection_tolerance = 1.0; // pixels
  int min_consistent_views = 3;

  void Validate() const;
};

struct FusionView {
  Camera camera;
  Image image;
  DepthMap depth;
  // 1 where the depth was rejected by the confidence filter. May be empty.
  ValidityMask filtered;
};

enum class PixelStatus : uint8_t {
  kFused = 0,         // produced a point
  kMerged = 1,        // absorbed into a point of another view
  kInvalidDepth = 2,
  kFiltered = 3,      // removed by the confidence filter
  kInconsistent = 4,  // too few agreeing views
};

struct FusionStats {
  int64_t input_pixels = 0;
  int64_t fused = 0;
  int64_t merged = 0;
  int64_t invalid_depth = 0;
  int64_t filtered = 0;
  int64_t inconsistent = 0;
};

struct FusionResult {
  PointCloud cloud;
  FusionStats stats;
  // Per input view (in input order), one PixelStatus per pixel.
  std::vector<Grid<uint8_t>> status;
};

// 1 where the reference pixel's depth is confirmed by depth_view: the warped
// pixel lands inside the view, the view's depth at the nearest pixel
// reprojects within the pixel tolerance, and the reprojected depth differs by
// less than the relative tolerance.
ValidityMask ConsistencyCheck(const DepthMap& depth_ref, const Camera& cam_ref,
                              const DepthMap& depth_view,
                              const Camera& cam_view, const FusionConfig& cfg);

// World points of every valid pixel, colored from `image`.
PointCloud Backproject(const DepthMap& depth, const Camera& cam,
                       const Image& image);

// Views are processed in a canonical order derived from their cameras so the
// result does not depend on the input order. A single view with
// min_consistent_views = 1 is plain back-projection of unfiltered pixels.
FusionResult Fuse(std::span<const FusionView> views, const FusionConfig& cfg);

std::string FormatFusionStats(const FusionResult& result);

}  // namespace rmvs
