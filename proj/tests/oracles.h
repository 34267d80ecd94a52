#pragma once

// Straightforward scalar-loop reference implementations used as oracles. They
// deliberately avoid the library's helpers (stencils, window masks, shared
// warpers) so an error in one is not mirrored in the other.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rmvs/geometry.h"
#include "rmvs/image.h"

namespace rmvs::oracle {

inline double Pix(const Grid<double>& g, int x, int y, int c) { return g(x, y, c); }

inline double Huber(double r, double delta) {
  return std::abs(r) <= delta ? r * r / (2.0 * delta) : std::abs(r) - delta / 2.0;
}

inline double GradX(const Grid<double>& g, int x, int y, int c) {
  const int w = g.width();
  if (x == 0) return g(1, y, c) - g(0, y, c);
  if (x == w - 1) return g(w - 1, y, c) - g(w - 2, y, c);
  return (g(x + 1, y, c) - g(x - 1, y, c)) / 2.0;
}

inline double GradY(const Grid<double>& g, int x, int y, int c) {
  const int h = g.height();
  if (y == 0) return g(x, 1, c) - g(x, 0, c);
  if (y == h - 1) return g(x, h - 1, c) - g(x, h - 2, c);
  return (g(x, y + 1, c) - g(x, y - 1, c)) / 2.0;
}

// Sum over views of the per-view masked mean absolute difference.
inline double NaivePhoto(const Image& src, const std::vector<Image>& warped,
                         const std::vector<ValidityMask>& masks) {
  double total = 0.0;
  for (size_t m = 0; m < warped.size(); ++m) {
    double s = 0.0;
    int n = 0;
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < src.width(); ++x) {
        if (!masks[m](x, y)) continue;
        double px = 0.0;
        for (int c = 0; c < src.channels(); ++c) px += std::abs(src(x, y, c) - warped[m](x, y, c));
        s += px / src.channels();
        ++n;
      }
    }
    if (n > 0) total += s / n;
  }
  return total;
}

inline double FirstOrderAt(const Image& src, const Image& warped, int x, int y,
                           double delta) {
  double v = 0.0;
  for (int c = 0; c < src.channels(); ++c) {
    v += Huber(src(x, y, c) - warped(x, y, c), delta) +
         std::abs(GradX(src, x, y, c) - GradX(warped, x, y, c)) +
         std::abs(GradY(src, x, y, c) - GradY(warped, x, y, c));
  }
  return v / src.channels();
}

inline double NaiveAt(const Image& src, const Image& warped, int x, int y) {
  double v = 0.0;
  for (int c = 0; c < src.channels(); ++c) v += std::abs(src(x, y, c) - warped(x, y, c));
  return v / src.channels();
}

// Per pixel: sort the valid losses and add up the k smallest. Normalized by the
// number of pixels with at least one valid view.
inline double TopK(const std::vector<std::vector<double>>& loss,
                   const std::vector<std::vector<bool>>& valid, int k) {
  const size_t n = loss[0].size();
  double sum = 0.0;
  int pixels = 0;
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> v;
    for (size_t m = 0; m < loss.size(); ++m) {
      if (valid[m][i]) v.push_back(loss[m][i]);
    }
    if (v.empty()) continue;
    ++pixels;
    std::sort(v.begin(), v.end());
    for (int j = 0; j < k && j < static_cast<int>(v.size()); ++j) sum += v[j];
  }
  return pixels > 0 ? sum / pixels : 0.0;
}

// Two-pass population statistics.
inline double Ssim(const std::vector<double>& a, const std::vector<double>& b,
                   double c1, double c2) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    cov += (a[i] - ma) * (b[i] - mb);
  }
  va /= n;
  vb /= n;
  cov /= n;
  return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

// Mean of 1 - SSIM over every fully valid window of the given views.
inline double SsimLoss(const Image& src, const std::vector<Image>& warped,
                       const std::vector<ValidityMask>& masks, int window,
                       double c1, double c2) {
  const int r = window / 2;
  double sum = 0.0;
  int n = 0;
  for (size_t m = 0; m < warped.size(); ++m) {
    for (int y = r; y + r < src.height(); ++y) {
      for (int x = r; x + r < src.width(); ++x) {
        bool ok = true;
        for (int j = -r; j <= r; ++j) {
          for (int i = -r; i <= r; ++i) ok = ok && masks[m](x + i, y + j);
        }
        if (!ok) continue;
        double s = 0.0;
        for (int c = 0; c < src.channels(); ++c) {
          std::vector<double> a, b;
          for (int j = -r; j <= r; ++j) {
            for (int i = -r; i <= r; ++i) {
              a.push_back(src(x + i, y + j, c));
              b.push_back(warped[m](x + i, y + j, c));
            }
          }
          s += Ssim(a, b, c1, c2);
        }
        sum += 1.0 - s / src.channels();
        ++n;
      }
    }
  }
  return n > 0 ? sum / n : 0.0;
}

inline double Smoothness(const DepthMap& d, const Image& img) {
  auto ok = [&](int x, int y) { return d(x, y) > 0.0; };
  auto weight = [&](int x0, int y0, int x1, int y1) {
    double g = 0.0;
    for (int c = 0; c < img.channels(); ++c) g += std::abs(img(x1, y1, c) - img(x0, y0, c));
    return std::exp(-g / img.channels());
  };
  double sx = 0, sy = 0;
  int nx = 0, ny = 0;
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x + 1 < d.width(); ++x) {
      if (ok(x, y) && ok(x + 1, y)) {
        sx += std::abs(d(x + 1, y) - d(x, y)) * weight(x, y, x + 1, y);
        ++nx;
      }
    }
  }
  for (int y = 0; y + 1 < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      if (ok(x, y) && ok(x, y + 1)) {
        sy += std::abs(d(x, y + 1) - d(x, y)) * weight(x, y, x, y + 1);
        ++ny;
      }
    }
  }
  return (nx ? sx / nx : 0.0) + (ny ? sy / ny : 0.0);
}

// Back-project through the source camera and project into the view.
inline Eigen::Vector2d Warp(const Camera& src, const Camera& view, double x,
                            double y, double depth, bool* in_front) {
  const Eigen::Vector3d ray = src.K.inverse() * Eigen::Vector3d(x, y, 1.0);
  const Eigen::Vector3d pc = ray * depth;
  const Eigen::Matrix3d Rs = src.T.topLeftCorner<3, 3>();
  const Eigen::Vector3d ts = src.T.topRightCorner<3, 1>();
  const Eigen::Vector3d pw = Rs.transpose() * (pc - ts);
  const Eigen::Vector3d pv =
      view.T.topLeftCorner<3, 3>() * pw + view.T.topRightCorner<3, 1>();
  *in_front = pv.z() > 1e-9;
  const Eigen::Vector3d q = view.K * pv;
  return q.head<2>() / q.z();
}

// Four-weight bilinear sample; false outside [0, w-1] x [0, h-1].
inline bool Bilinear(const Image& img, double x, double y, std::vector<double>* out) {
  const int w = img.width(), h = img.height();
  // Same 1e-9 px boundary slack as the library convention, then clamp.
  const double e = 1e-9;
  if (!(x >= -e && y >= -e && x <= w - 1 + e && y <= h - 1 + e)) return false;
  x = std::clamp(x, 0.0, w - 1.0);
  y = std::clamp(y, 0.0, h - 1.0);
  int x0 = std::min(static_cast<int>(std::floor(x)), w - 2);
  int y0 = std::min(static_cast<int>(std::floor(y)), h - 2);
  const double ax = x - x0, ay = y - y0;
  out->assign(img.channels(), 0.0);
  for (int c = 0; c < img.channels(); ++c) {
    (*out)[c] = (1 - ax) * (1 - ay) * img(x0, y0, c) + ax * (1 - ay) * img(x0 + 1, y0, c) +
                (1 - ax) * ay * img(x0, y0 + 1, c) + ax * ay * img(x0 + 1, y0 + 1, c);
  }
  return true;
}

inline void InverseWarp(const DepthMap& depth, const Image& img, const Camera& src,
                        const Camera& view, Image* warped, ValidityMask* mask) {
  *warped = Image(depth.width(), depth.height(), img.channels());
  *mask = ValidityMask(depth.width(), depth.height());
  std::vector<double> s;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!(depth(x, y) > 0)) continue;
      bool front;
      const Eigen::Vector2d p = Warp(src, view, x, y, depth(x, y), &front);
      if (!front || !Bilinear(img, p.x(), p.y(), &s)) continue;
      (*mask)(x, y) = 1;
      for (int c = 0; c < img.channels(); ++c) (*warped)(x, y, c) = s[c];
    }
  }
}

struct TotalTerms {
  double photo, ssim, smooth, total;
};

// Weighted total from already-warped views (views ordered by rank).
inline TotalTerms Total(const Image& src, const std::vector<Image>& warped,
                        const std::vector<ValidityMask>& masks, const DepthMap& depth,
                        int k, bool first_order, double delta, double alpha,
                        double beta, double gamma, int window = 3,
                        double c1 = 1e-4, double c2 = 9e-4) {
  const size_t M = warped.size();
  std::vector<std::vector<double>> loss(M);
  std::vector<std::vector<bool>> valid(M);
  for (size_t m = 0; m < M; ++m) {
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < src.width(); ++x) {
        const bool v = masks[m](x, y) != 0;
        valid[m].push_back(v);
        loss[m].push_back(!v ? 0.0
                          : first_order ? FirstOrderAt(src, warped[m], x, y, delta)
                                        : NaiveAt(src, warped[m], x, y));
      }
    }
  }
  TotalTerms t;
  t.photo = TopK(loss, valid, k);
  const size_t ns = std::min<size_t>(2, M);
  t.ssim = SsimLoss(src, {warped.begin(), warped.begin() + ns},
                    {masks.begin(), masks.begin() + ns}, window, c1, c2);
  t.smooth = Smoothness(depth, src);
  t.total = alpha * t.photo + beta * t.ssim + gamma * t.smooth;
  return t;
}

}  // namespace rmvs::oracle
