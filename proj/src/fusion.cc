#include "rmvs/fusion.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rmvs/parallel.h"

namespace rmvs {
namespace {

std::array<uint8_t, 3> PixelColor(const Image& image, int x, int y) {
  auto to_byte = [](double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  if (image.channels() == 3) {
    return {to_byte(image(x, y, 0)), to_byte(image(x, y, 1)), to_byte(image(x, y, 2))};
  }
  const uint8_t g = to_byte(image(x, y, 0));
  return {g, g, g};
}

bool IsFiltered(const ValidityMask& filtered, int x, int y) {
  return !filtered.empty() && filtered.valid(x, y);
}

struct Match {
  bool consistent = false;
  int pixel = -1;  // linear index of the matched view pixel
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

// Tests reference pixel (x, y) at depth d against one view.
Match MatchPixel(int x, int y, double d, const PixelWarper& warper,
                 const Camera& cam_ref, const Camera& cam_view,
                 const DepthMap& depth_view, const ValidityMask& filtered_view,
                 const FusionConfig& cfg) {
  Match m;
  const ViewProjection proj = warper.Warp(x, y, d);
  if (!proj.coord.valid) return m;
  const int qx = static_cast<int>(std::lround(proj.coord.x));
  const int qy = static_cast<int>(std::lround(proj.coord.y));
  const double dv = depth_view(qx, qy);
  if (!DepthMap::IsValid(dv) || IsFiltered(filtered_view, qx, qy)) return m;
  const Eigen::Vector3d point = BackprojectToWorld(cam_view, qx, qy, dv);
  const ViewProjection back = ProjectWorldPoint(cam_ref, point);
  if (!(back.depth > kMinProjectionDepth)) return m;
  const double reproj = std::hypot(back.coord.x - x, back.coord.y - y);
  const double rel = std::abs(back.depth - d) / d;
  if (reproj < cfg.reprojection_tolerance && rel < cfg.depth_tolerance) {
    m.consistent = true;
    m.pixel = qy * depth_view.width() + qx;
    m.point = point;
  }
  return m;
}

bool CameraLess(const FusionView& a, const FusionView& b) {
  const Camera& ca = a.camera;
  const Camera& cb = b.camera;
  auto less_range = [](const auto& l, const auto& r) {
    return std::lexicographical_compare(l.data(), l.data() + l.size(), r.data(),
                                        r.data() + r.size());
  };
  if (ca.T != cb.T) return less_range(ca.T, cb.T);
  if (ca.K != cb.K) return less_range(ca.K, cb.K);
  const std::array<double, 4> ka{double(ca.width), double(ca.height), ca.depth_min,
                                 ca.depth_max};
  const std::array<double, 4> kb{double(cb.width), double(cb.height), cb.depth_min,
                                 cb.depth_max};
  if (ka != kb) return ka < kb;
  if (a.depth.vec() != b.depth.vec()) return a.depth.vec() < b.depth.vec();
  return a.image.vec() < b.image.vec();
}

}  // namespace

void FusionConfig::Validate() const {
  if (!(depth_tolerance > 0.0) || !(reprojection_tolerance > 0.0)) {
    throw std::invalid_argument("fusion: tolerances must be positive");
  }
  if (min_consistent_views < 1) {
    throw std::invalid_argument("fusion: min_consistent_views must be >= 1");
  }
}

ValidityMask ConsistencyCheck(const DepthMap& depth_ref, const Camera& cam_ref,
                              const DepthMap& depth_view,
                              const Camera& cam_view, const FusionConfig& cfg) {
  cfg.Validate();
  if (!depth_ref.SameShape(cam_ref.width, cam_ref.height) ||
      !depth_view.SameShape(cam_view.width, cam_view.height)) {
    throw std::invalid_argument("consistency_check: depth map/camera shape mismatch");
  }
  const PixelWarper warper(cam_ref, cam_view);
  const ValidityMask none;
  ValidityMask out(depth_ref.width(), depth_ref.height());
  ParallelFor(0, depth_ref.height(), [&](int y) {
    for (int x = 0; x < depth_ref.width(); ++x) {
      const double d = depth_ref(x, y);
      if (!DepthMap::IsValid(d)) continue;
      out(x, y) = MatchPixel(x, y, d, warper, cam_ref, cam_view, depth_view, none, cfg)
                      .consistent;
    }
  });
  return out;
}

PointCloud Backproject(const DepthMap& depth, const Camera& cam,
                       const Image& image) {
  if (!depth.SameShape(cam.width, cam.height) || !image.SameShape(depth)) {
    throw std::invalid_argument("backproject: depth/camera/image shape mismatch");
  }
  PointCloud cloud;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      cloud.Add(BackprojectToWorld(cam, x, y, depth(x, y)), PixelColor(image, x, y), 1);
    }
  }
  return cloud;
}

FusionResult Fuse(std::span<const FusionView> views, const FusionConfig& cfg) {
  cfg.Validate();
  const int num_views = static_cast<int>(views.size());
  if (num_views == 0) throw std::invalid_argument("fuse: no depth maps");
  for (const FusionView& v : views) {
    v.camera.Validate();
    if (!v.depth.SameShape(v.camera.width, v.camera.height) ||
        !v.image.SameShape(v.depth) ||
        (!v.filtered.empty() && !v.filtered.SameShape(v.depth))) {
      throw std::invalid_argument("fuse: view depth/image/mask/camera shape mismatch");
    }
  }
  const bool single = num_views == 1 && cfg.min_consistent_views == 1;
  if (!single && num_views < cfg.min_consistent_views + 1) {
    throw std::invalid_argument("fuse: need at least min_consistent_views + 1 depth maps, got " +
                                std::to_string(num_views));
  }

  std::vector<int> order(num_views);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return CameraLess(views[a], views[b]);
  });

  FusionResult result;
  result.status.reserve(num_views);
  std::vector<std::vector<uint8_t>> consumed(num_views);
  for (const FusionView& v : views) {
    result.status.emplace_back(v.depth.width(), v.depth.height(), 1,
                               static_cast<uint8_t>(PixelStatus::kInconsistent));
    consumed[&v - views.data()].assign(v.depth.size(), 0);
  }

  std::vector<uint8_t> processed(num_views, 0);
  for (int r : order) {
    processed[r] = 1;
    const FusionView& ref = views[r];
    const int w = ref.depth.width();
    const int h = ref.depth.height();
    Grid<uint8_t>& status = result.status[r];
    result.stats.input_pixels += static_cast<int64_t>(w) * h;

    std::vector<int> others;
    for (int v : order) {
      if (v != r) others.push_back(v);
    }
    std::vector<PixelWarper> warpers;
    for (int v : others) warpers.emplace_back(ref.camera, views[v].camera);

    const int num_others = static_cast<int>(others.size());
    std::vector<Match> matches(static_cast<size_t>(w) * h * num_others);
    ParallelFor(0, h, [&](int y) {
      for (int x = 0; x < w; ++x) {
        const double d = ref.depth(x, y);
        if (!DepthMap::IsValid(d) || IsFiltered(ref.filtered, x, y)) continue;
        for (int j = 0; j < num_others; ++j) {
          const FusionView& view = views[others[j]];
          matches[(static_cast<size_t>(y) * w + x) * num_others + j] =
              MatchPixel(x, y, d, warpers[j], ref.camera, view.camera, view.depth,
                         view.filtered, cfg);
        }
      }
    });

    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t p = static_cast<size_t>(y) * w + x;
        const double d = ref.depth(x, y);
        if (!DepthMap::IsValid(d)) {
          status(x, y) = static_cast<uint8_t>(PixelStatus::kInvalidDepth);
          ++result.stats.invalid_depth;
          continue;
        }
        if (IsFiltered(ref.filtered, x, y)) {
          status(x, y) = static_cast<uint8_t>(PixelStatus::kFiltered);
          ++result.stats.filtered;
          continue;
        }
        if (consumed[r][p]) {
          status(x, y) = static_cast<uint8_t>(PixelStatus::kMerged);
          ++result.stats.merged;
          continue;
        }
        Eigen::Vector3d sum = BackprojectToWorld(ref.camera, x, y, d);
        int support = 0;
        for (int j = 0; j < num_others; ++j) {
          const Match& m = matches[p * num_others + j];
          if (!m.consistent) continue;
          sum += m.point;
          ++support;
        }
        if (!single && support < cfg.min_consistent_views) {
          ++result.stats.inconsistent;
          continue;
        }
        for (int j = 0; j < num_others; ++j) {
          const Match& m = matches[p * num_others + j];
          if (!m.consistent) continue;
          const int v = others[j];
          if (processed[v] && !consumed[v][m.pixel]) {
            // A pixel of an already processed view now supports this point.
            uint8_t& st = result.status[v].vec()[m.pixel];
            if (st == static_cast<uint8_t>(PixelStatus::kInconsistent)) {
              st = static_cast<uint8_t>(PixelStatus::kMerged);
              --result.stats.inconsistent;
              ++result.stats.merged;
            }
          }
          consumed[v][m.pixel] = 1;
        }
        consumed[r][p] = 1;
        status(x, y) = static_cast<uint8_t>(PixelStatus::kFused);
        ++result.stats.fused;
        result.cloud.Add(sum / (support + 1), PixelColor(ref.image, x, y),
                         static_cast<uint8_t>(std::min(support + 1, 255)));
      }
    }
  }
  return result;
}

std::string FormatFusionStats(const FusionResult& result) {
  const FusionStats& s = result.stats;
  std::ostringstream out;
  out << "input_pixels " << s.input_pixels << "\n"
      << "points " << result.cloud.size() << "\n"
      << "fused " << s.fused << "\n"
      << "merged " << s.merged << "\n"
      << "rejected.invalid_depth " << s.invalid_depth << "\n"
      << "rejected.confidence " << s.filtered << "\n"
      << "rejected.inconsistent " << s.inconsistent << "\n";
  return out.str();
}

}  // namespace rmvs
