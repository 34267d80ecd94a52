#include "rmvs/loss.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "rmvs/parallel.h"

namespace rmvs {
namespace {

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double HuberDerivative(double r, double delta) {
  if (std::abs(r) <= delta) return r / delta;
  return Sign(r);
}

// Sums per-row partials in row order so the result is independent of the
// worker count.
template <typename Fn>
double RowSum(int rows, Fn&& fn) {
  std::vector<double> partial(rows, 0.0);
  ParallelFor(0, rows, [&](int y) { partial[y] = fn(y); });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

void CheckSameShape(const Grid<double>& a, const Grid<double>& b,
                    const char* what) {
  if (!a.SameShape(b) || a.channels() != b.channels()) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
  }
}

// Window statistics shared by the SSIM value and its derivative.
struct SsimStats {
  double mu_x, mu_y, var_x, var_y, cov;
};

SsimStats WindowStats(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  SsimStats s;
  s.mu_x = sx / n;
  s.mu_y = sy / n;
  s.var_x = sxx / n - s.mu_x * s.mu_x;
  s.var_y = syy / n - s.mu_y * s.mu_y;
  s.cov = sxy / n - s.mu_x * s.mu_y;
  return s;
}

double SsimFromStats(const SsimStats& s, double c1, double c2) {
  return (2.0 * s.mu_x * s.mu_y + c1) * (2.0 * s.cov + c2) /
         ((s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1) * (s.var_x + s.var_y + c2));
}

// Window mask for SSIM: the full window is inside the image and valid.
ValidityMask SsimWindowMask(const ValidityMask& mask, int radius) {
  const int w = mask.width();
  const int h = mask.height();
  ValidityMask out(w, h);
  for (int y = radius; y < h - radius; ++y) {
    for (int x = radius; x < w - radius; ++x) {
      bool ok = true;
      for (int dy = -radius; dy <= radius && ok; ++dy) {
        for (int dx = -radius; dx <= radius && ok; ++dx) {
          ok = mask.valid(x + dx, y + dy);
        }
      }
      out(x, y) = ok;
    }
  }
  return out;
}

// Gathers the window around (x, y) for channel c.
void GatherWindow(const Grid<double>& img, int x, int y, int c, int radius,
                  std::vector<double>* out) {
  out->clear();
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) out->push_back(img(x + dx, y + dy, c));
  }
}

// Warped view plus the derivative of every warped channel w.r.t. the source
// depth of that pixel.
struct WarpJacobian {
  WarpedImage warped;
  Grid<double> d_depth;
};

WarpJacobian WarpWithJacobian(const DepthMap& depth, const View& view,
                              const Camera& cam_src) {
  const int w = depth.width();
  const int h = depth.height();
  const int nc = view.image.channels();
  WarpJacobian out{{Image(w, h, nc), ValidityMask(w, h)}, Grid<double>(w, h, nc)};
  const PixelWarper warper(cam_src, view.camera);
  ParallelFor(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth(x, y);
      if (!DepthMap::IsValid(d)) continue;
      const PixelCoord p = warper.Warp(x, y, d).coord;
      const SampleDerivative s = BilinearSampleDerivative(view.image, p);
      if (!s.valid) continue;
      const Eigen::Vector2d dp = warper.DepthDerivative(x, y, d);
      out.warped.mask(x, y) = 1;
      for (int c = 0; c < nc; ++c) {
        out.warped.image(x, y, c) = s.value[c];
        out.d_depth(x, y, c) = s.dx[c] * dp.x() + s.dy[c] * dp.y();
      }
    }
  });
  return out;
}

Grid<double> PhotometricMap(const Image& img_src, const WarpedImage& warped,
                            const LossConfig& cfg) {
  return cfg.cost == PhotometricCost::kFirstOrder
             ? FirstOrderLossMap(img_src, warped.image, warped.mask, cfg)
             : NaiveLossMap(img_src, warped.image, warped.mask);
}

void ValidateViews(const Image& img_src, const Camera& cam_src,
                   std::span<const View> views, const DepthMap& depth,
                   const LossConfig& cfg) {
  cfg.Validate();
  if (views.empty()) throw std::invalid_argument("total_loss: no views");
  if (cfg.top_k > static_cast<int>(views.size())) {
    throw std::invalid_argument("total_loss: top_k exceeds the number of views");
  }
  if (!img_src.SameShape(cam_src.width, cam_src.height) ||
      !depth.SameShape(img_src)) {
    throw std::invalid_argument(
        "total_loss: source image, camera and depth shapes differ");
  }
  for (const View& v : views) {
    if (!v.image.SameShape(v.camera.width, v.camera.height)) {
      throw std::invalid_argument("total_loss: view image/camera shape mismatch");
    }
    if (v.image.channels() != img_src.channels()) {
      throw std::invalid_argument("total_loss: channel count mismatch");
    }
  }
}

}  // namespace

void LossConfig::Validate() const {
  if (num_views < 1) throw std::invalid_argument("loss config: M must be >= 1");
  if (top_k < 1 || top_k > num_views) {
    throw std::invalid_argument("loss config: require 1 <= K <= M");
  }
  if (alpha < 0 || beta < 0 || gamma < 0) {
    throw std::invalid_argument("loss config: weights must be non-negative");
  }
  if (!(huber_delta > 0)) {
    throw std::invalid_argument("loss config: huber_delta must be positive");
  }
  if (ssim_window < 1 || ssim_window % 2 == 0) {
    throw std::invalid_argument("loss config: ssim_window must be odd");
  }
  if (ssim_c1 < 0 || ssim_c2 < 0) {
    throw std::invalid_argument("loss config: SSIM constants must be >= 0");
  }
}

LossVolume::LossVolume(int width, int height, int num_views)
    : width(width), height(height), num_views(num_views) {
  if (num_views < 1) throw std::invalid_argument("loss volume: M must be >= 1");
  const size_t n = static_cast<size_t>(width) * height * num_views;
  loss.assign(n, 0.0);
  valid.assign(n, 0);
}

void LossVolume::SetView(int m, const Grid<double>& map,
                         const ValidityMask& mask) {
  if (!map.SameShape(width, height) || !mask.SameShape(width, height)) {
    throw std::invalid_argument("loss volume: map shape mismatch");
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t i = index(x, y, m);
      valid[i] = mask.valid(x, y);
      loss[i] = valid[i] ? map(x, y) : 0.0;
    }
  }
}

double Huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r / delta : a - 0.5 * delta;
}

LossTerm NaivePhotometricLoss(const Image& img_src,
                              std::span<const WarpedImage> warped) {
  LossTerm term;
  const int nc = img_src.channels();
  for (const WarpedImage& wv : warped) {
    CheckSameShape(img_src, wv.image, "naive_photometric_loss");
    double view_sum = 0.0;
    int64_t view_count = 0;
    for (int y = 0; y < img_src.height(); ++y) {
      for (int x = 0; x < img_src.width(); ++x) {
        if (!wv.mask.valid(x, y)) continue;
        double px = 0.0;
        for (int c = 0; c < nc; ++c) px += std::abs(img_src(x, y, c) - wv.image(x, y, c));
        view_sum += px / nc;
        ++view_count;
      }
    }
    term.sum += view_sum;
    term.count += view_count;
    if (view_count > 0) term.value += view_sum / view_count;
  }
  term.no_signal = term.count == 0;
  return term;
}

Grid<double> FirstOrderLossMap(const Image& img_src, const Image& warped_img,
                               const ValidityMask& mask, const LossConfig& cfg) {
  CheckSameShape(img_src, warped_img, "first_order_loss_map");
  if (!mask.SameShape(img_src)) {
    throw std::invalid_argument("first_order_loss_map: mask shape differs");
  }
  const GradientImage gs = ImageGradient(img_src);
  const GradientImage gw = ImageGradient(warped_img);
  const int nc = img_src.channels();
  Grid<double> map(img_src.width(), img_src.height(), 1);
  ParallelFor(0, img_src.height(), [&](int y) {
    for (int x = 0; x < img_src.width(); ++x) {
      if (!mask.valid(x, y)) continue;
      double v = 0.0;
      for (int c = 0; c < nc; ++c) {
        v += Huber(img_src(x, y, c) - warped_img(x, y, c), cfg.huber_delta) +
             std::abs(gs.gx(x, y, c) - gw.gx(x, y, c)) +
             std::abs(gs.gy(x, y, c) - gw.gy(x, y, c));
      }
      map(x, y) = v / nc;
    }
  });
  return map;
}

Grid<double> NaiveLossMap(const Image& img_src, const Image& warped_img,
                          const ValidityMask& mask) {
  CheckSameShape(img_src, warped_img, "naive_loss_map");
  const int nc = img_src.channels();
  Grid<double> map(img_src.width(), img_src.height(), 1);
  for (int y = 0; y < img_src.height(); ++y) {
    for (int x = 0; x < img_src.width(); ++x) {
      if (!mask.valid(x, y)) continue;
      double v = 0.0;
      for (int c = 0; c < nc; ++c) v += std::abs(img_src(x, y, c) - warped_img(x, y, c));
      map(x, y) = v / nc;
    }
  }
  return map;
}

TopKResult RobustTopKLoss(const LossVolume& volume, int k) {
  const int M = volume.num_views;
  if (k < 1 || k > M) throw std::invalid_argument("robust_topk_loss: require 1 <= K <= M");
  TopKResult result;
  result.selection.assign(volume.loss.size(), 0);
  std::vector<int64_t> row_pixels(volume.height, 0);
  const double sum = RowSum(volume.height, [&](int y) {
    std::vector<std::pair<double, int>> candidates;
    candidates.reserve(M);
    double row = 0.0;
    for (int x = 0; x < volume.width; ++x) {
      candidates.clear();
      for (int m = 0; m < M; ++m) {
        const size_t i = volume.index(x, y, m);
        if (volume.valid[i]) candidates.emplace_back(volume.loss[i], m);
      }
      if (candidates.empty()) continue;
      ++row_pixels[y];
      const int take = std::min<int>(k, static_cast<int>(candidates.size()));
      std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end());
      for (int j = 0; j < take; ++j) {
        row += candidates[j].first;
        result.selection[volume.index(x, y, candidates[j].second)] = 1;
      }
    }
    return row;
  });
  for (int64_t n : row_pixels) result.term.count += n;
  result.term.sum = sum;
  result.term.no_signal = result.term.count == 0;
  result.term.value = result.term.count > 0 ? sum / result.term.count : 0.0;
  return result;
}

double Ssim(std::span<const double> x, std::span<const double> y, double c1,
            double c2) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("ssim: windows must be non-empty and equal-sized");
  }
  return SsimFromStats(WindowStats(x, y), c1, c2);
}

LossTerm SsimLoss(const Image& img_src, std::span<const WarpedImage> warped,
                  const LossConfig& cfg) {
  if (warped.empty() || warped.size() > 2) {
    throw std::invalid_argument("ssim_loss: expected one or two warped views");
  }
  const int r = cfg.ssim_window / 2;
  const int nc = img_src.channels();
  LossTerm term;
  for (const WarpedImage& wv : warped) {
    CheckSameShape(img_src, wv.image, "ssim_loss");
    const ValidityMask window_mask = SsimWindowMask(wv.mask, r);
    std::vector<int64_t> row_count(img_src.height(), 0);
    term.sum += RowSum(img_src.height(), [&](int y) {
      std::vector<double> wx, wy;
      double row = 0.0;
      for (int x = 0; x < img_src.width(); ++x) {
        if (!window_mask.valid(x, y)) continue;
        double s = 0.0;
        for (int c = 0; c < nc; ++c) {
          GatherWindow(img_src, x, y, c, r, &wx);
          GatherWindow(wv.image, x, y, c, r, &wy);
          s += Ssim(wx, wy, cfg.ssim_c1, cfg.ssim_c2);
        }
        row += 1.0 - s / nc;
        ++row_count[y];
      }
      return row;
    });
    for (int64_t n : row_count) term.count += n;
  }
  term.no_signal = term.count == 0;
  term.value = term.count > 0 ? term.sum / term.count : 0.0;
  return term;
}

LossTerm SmoothnessLoss(const DepthMap& depth, const Image& img) {
  if (!depth.SameShape(img)) {
    throw std::invalid_argument("smoothness_loss: depth and image shapes differ");
  }
  const int w = depth.width();
  const int h = depth.height();
  const int nc = img.channels();
  auto edge_weight = [&](int x0, int y0, int x1, int y1) {
    double g = 0.0;
    for (int c = 0; c < nc; ++c) g += std::abs(img(x1, y1, c) - img(x0, y0, c));
    return std::exp(-g / nc);
  };
  double sum_x = 0.0, sum_y = 0.0;
  int64_t n_x = 0, n_y = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.valid(x, y)) continue;
      if (x + 1 < w && depth.valid(x + 1, y)) {
        sum_x += std::abs(depth(x + 1, y) - depth(x, y)) * edge_weight(x, y, x + 1, y);
        ++n_x;
      }
      if (y + 1 < h && depth.valid(x, y + 1)) {
        sum_y += std::abs(depth(x, y + 1) - depth(x, y)) * edge_weight(x, y, x, y + 1);
        ++n_y;
      }
    }
  }
  LossTerm term;
  term.sum = sum_x + sum_y;
  term.count = n_x + n_y;
  term.no_signal = term.count == 0;
  term.value = (n_x > 0 ? sum_x / n_x : 0.0) + (n_y > 0 ? sum_y / n_y : 0.0);
  return term;
}

LossBreakdown TotalLoss(const Image& img_src, const Camera& cam_src,
                        std::span<const View> views, const DepthMap& depth,
                        const LossConfig& cfg) {
  ValidateViews(img_src, cam_src, views, depth, cfg);
  const int M = static_cast<int>(views.size());
  std::vector<WarpedImage> warped;
  warped.reserve(M);
  for (const View& v : views) {
    warped.push_back(InverseWarp(depth, v.image, cam_src, v.camera));
  }

  LossBreakdown out;
  out.volume = LossVolume(img_src.width(), img_src.height(), M);
  for (int m = 0; m < M; ++m) {
    out.volume.SetView(m, PhotometricMap(img_src, warped[m], cfg), warped[m].mask);
  }
  out.topk = RobustTopKLoss(out.volume, cfg.top_k);
  out.photo = out.topk.term;
  const size_t n_ssim = std::min<size_t>(2, warped.size());
  out.ssim = SsimLoss(img_src, std::span(warped).first(n_ssim), cfg);
  out.smooth = SmoothnessLoss(depth, img_src);
  out.total = cfg.alpha * out.photo.value + cfg.beta * out.ssim.value +
              cfg.gamma * out.smooth.value;
  return out;
}

Grid<double> LossGradient(const Image& img_src, const Camera& cam_src,
                          std::span<const View> views, const DepthMap& depth,
                          const LossConfig& cfg) {
  ValidateViews(img_src, cam_src, views, depth, cfg);
  const int M = static_cast<int>(views.size());
  const int w = img_src.width();
  const int h = img_src.height();
  const int nc = img_src.channels();

  std::vector<WarpJacobian> jac;
  jac.reserve(M);
  for (const View& v : views) jac.push_back(WarpWithJacobian(depth, v, cam_src));

  LossVolume volume(w, h, M);
  for (int m = 0; m < M; ++m) {
    volume.SetView(m, PhotometricMap(img_src, jac[m].warped, cfg), jac[m].warped.mask);
  }
  const TopKResult topk = RobustTopKLoss(volume, cfg.top_k);

  // adjoint[m](v, c) = d(total without smoothness) / d(warped_m(v, c)).
  std::vector<Grid<double>> adjoint(M, Grid<double>(w, h, nc));

  if (cfg.alpha > 0.0 && topk.term.count > 0) {
    const double scale = cfg.alpha / static_cast<double>(topk.term.count) / nc;
    const GradientImage gs = ImageGradient(img_src);
    for (int m = 0; m < M; ++m) {
      const Image& warped = jac[m].warped.image;
      const GradientImage gw = ImageGradient(warped);
      Grid<double>& adj = adjoint[m];
      // Serial: stencil terms scatter into neighboring rows.
      for (int y = 0; y < h; ++y) {
        const Stencil sy = GradientStencil(y, h);
        for (int x = 0; x < w; ++x) {
          if (!topk.selection[volume.index(x, y, m)]) continue;
          const Stencil sx = GradientStencil(x, w);
          for (int c = 0; c < nc; ++c) {
            const double r = img_src(x, y, c) - warped(x, y, c);
            if (cfg.cost == PhotometricCost::kNaive) {
              adj(x, y, c) -= scale * Sign(r);
              continue;
            }
            adj(x, y, c) -= scale * HuberDerivative(r, cfg.huber_delta);
            const double sgx = Sign(gs.gx(x, y, c) - gw.gx(x, y, c));
            adj(sx.hi, y, c) -= scale * sgx * sx.weight;
            adj(sx.lo, y, c) += scale * sgx * sx.weight;
            const double sgy = Sign(gs.gy(x, y, c) - gw.gy(x, y, c));
            adj(x, sy.hi, c) -= scale * sgy * sy.weight;
            adj(x, sy.lo, c) += scale * sgy * sy.weight;
          }
        }
      }
    }
  }

  const int n_ssim = std::min(2, M);
  if (cfg.beta > 0.0) {
    const int r = cfg.ssim_window / 2;
    std::vector<ValidityMask> window_masks;
    int64_t count = 0;
    for (int m = 0; m < n_ssim; ++m) {
      window_masks.push_back(SsimWindowMask(jac[m].warped.mask, r));
      count += window_masks.back().CountValid();
    }
    if (count > 0) {
      const double scale = cfg.beta / static_cast<double>(count) / nc;
      const int n = cfg.ssim_window * cfg.ssim_window;
      std::vector<double> wx, wy;
      for (int m = 0; m < n_ssim; ++m) {
        const Image& warped = jac[m].warped.image;
        Grid<double>& adj = adjoint[m];
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            if (!window_masks[m].valid(x, y)) continue;
            for (int c = 0; c < nc; ++c) {
              GatherWindow(img_src, x, y, c, r, &wx);
              GatherWindow(warped, x, y, c, r, &wy);
              const SsimStats s = WindowStats(wx, wy);
              const double a1 = 2.0 * s.mu_x * s.mu_y + cfg.ssim_c1;
              const double a2 = 2.0 * s.cov + cfg.ssim_c2;
              const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.ssim_c1;
              const double b2 = s.var_x + s.var_y + cfg.ssim_c2;
              const double denom = b1 * b2;
              const double ssim = a1 * a2 / denom;
              int j = 0;
              for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx, ++j) {
                  const double da1 = 2.0 * s.mu_x / n;
                  const double da2 = 2.0 * (wx[j] - s.mu_x) / n;
                  const double db1 = 2.0 * s.mu_y / n;
                  const double db2 = 2.0 * (wy[j] - s.mu_y) / n;
                  const double dssim =
                      (da1 * a2 + a1 * da2 - ssim * (db1 * b2 + b1 * db2)) / denom;
                  adj(x + dx, y + dy, c) -= scale * dssim;
                }
              }
            }
          }
        }
      }
    }
  }

  Grid<double> grad(w, h, 1);
  ParallelFor(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double g = 0.0;
      for (int m = 0; m < M; ++m) {
        for (int c = 0; c < nc; ++c) g += adjoint[m](x, y, c) * jac[m].d_depth(x, y, c);
      }
      grad(x, y) = g;
    }
  });

  if (cfg.gamma > 0.0) {
    auto edge_weight = [&](int x0, int y0, int x1, int y1) {
      double g = 0.0;
      for (int c = 0; c < nc; ++c) g += std::abs(img_src(x1, y1, c) - img_src(x0, y0, c));
      return std::exp(-g / nc);
    };
    int64_t n_x = 0, n_y = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!depth.valid(x, y)) continue;
        n_x += x + 1 < w && depth.valid(x + 1, y);
        n_y += y + 1 < h && depth.valid(x, y + 1);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!depth.valid(x, y)) continue;
        if (x + 1 < w && depth.valid(x + 1, y)) {
          const double g = cfg.gamma / n_x * edge_weight(x, y, x + 1, y) *
                           Sign(depth(x + 1, y) - depth(x, y));
          grad(x + 1, y) += g;
          grad(x, y) -= g;
        }
        if (y + 1 < h && depth.valid(x, y + 1)) {
          const double g = cfg.gamma / n_y * edge_weight(x, y, x, y + 1) *
                           Sign(depth(x, y + 1) - depth(x, y));
          grad(x, y + 1) += g;
          grad(x, y) -= g;
        }
      }
    }
  }
  return grad;
}

std::vector<int64_t> TopKSelectionFrequency(
    std::span<const std::vector<uint8_t>> selections, int num_views,
    std::span<const int> ranking) {
  if (num_views < 1 || static_cast<int>(ranking.size()) != num_views) {
    throw std::invalid_argument("selection_frequency: ranking must cover every view");
  }
  std::vector<int64_t> hist(num_views, 0);
  for (const auto& sel : selections) {
    if (sel.size() % num_views != 0) {
      throw std::invalid_argument("selection_frequency: tensor size is not a multiple of M");
    }
    for (size_t i = 0; i < sel.size(); ++i) {
      if (sel[i]) ++hist[ranking[i % num_views]];
    }
  }
  return hist;
}

std::string FormatLossReport(const LossBreakdown& b) {
  std::ostringstream out;
  out << std::setprecision(17);
  auto term = [&](const char* name, const LossTerm& t) {
    out << name << ".sum = " << t.sum << '\n'
        << name << ".mean = " << t.value << '\n'
        << name << ".count = " << t.count << '\n'
        << name << ".no_signal = " << (t.no_signal ? 1 : 0) << '\n';
  };
  term("photo", b.photo);
  term("ssim", b.ssim);
  term("smooth", b.smooth);
  out << "total = " << b.total << '\n';
  return out.str();
}

}  // namespace rmvs
