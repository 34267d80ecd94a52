#include "rmvs/sweep.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rmvs/parallel.h"

namespace rmvs {
namespace {

// Mean of `map` over the valid pixels of a (2r+1)^2 window; pixels whose
// center is invalid stay invalid.
Grid<double> WindowMean(const Grid<double>& map, const ValidityMask& mask,
                        int radius) {
  if (radius == 0) return map;
  const int w = map.width();
  const int h = map.height();
  Grid<double> out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.valid(x, y)) continue;
      double sum = 0.0;
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || !mask.valid(xx, yy)) continue;
          sum += map(xx, yy);
          ++n;
        }
      }
      out(x, y) = sum / n;
    }
  }
  return out;
}

}  // namespace

ViewSelection SelectViews(std::span<const Camera> cameras, int reference, int n,
                          double target_angle_deg) {
  const int num = static_cast<int>(cameras.size());
  if (reference < 0 || reference >= num) {
    throw std::invalid_argument("select_views: reference index out of range");
  }
  if (n < 0) throw std::invalid_argument("select_views: n must be >= 0");
  const Camera& ref = cameras[reference];
  const Eigen::Vector3d c_ref = ref.Center();
  const Eigen::Vector3d target =
      c_ref + 0.5 * (ref.depth_min + ref.depth_max) * ref.ViewingDirection();
  const double target_rad = target_angle_deg * M_PI / 180.0;

  struct Candidate {
    double score;
    double baseline;
    int index;
  };
  std::vector<Candidate> candidates;
  for (int i = 0; i < num; ++i) {
    if (i == reference) continue;
    const Eigen::Vector3d c = cameras[i].Center();
    const Eigen::Vector3d a = (c_ref - target).normalized();
    const Eigen::Vector3d b = (c - target).normalized();
    const double angle = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
    candidates.push_back({std::abs(angle - target_rad), (c - c_ref).norm(), i});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& l, const Candidate& r) {
                     if (l.score != r.score) return l.score < r.score;
                     return l.baseline < r.baseline;
                   });
  ViewSelection out;
  out.truncated = static_cast<int>(candidates.size()) < n;
  const int take = std::min<int>(n, static_cast<int>(candidates.size()));
  for (int i = 0; i < take; ++i) out.views.push_back(candidates[i].index);
  return out;
}

std::vector<double> UniformDepthHypotheses(double depth_min, double depth_max,
                                           int num_depths) {
  if (num_depths < 2 || !(depth_min > 0.0) || !(depth_min < depth_max)) {
    throw std::invalid_argument(
        "depth hypotheses: require D >= 2 and 0 < depth_min < depth_max");
  }
  std::vector<double> depths(num_depths);
  const double step = (depth_max - depth_min) / (num_depths - 1);
  for (int d = 0; d < num_depths; ++d) depths[d] = depth_min + d * step;
  depths.back() = depth_max;
  return depths;
}

CostVolume BuildCostVolume(const Image& ref, const Camera& cam_ref,
                           std::span<const View> views,
                           std::span<const double> hypotheses,
                           const LossConfig& cfg, const SweepOptions& options) {
  cfg.Validate();
  const int M = static_cast<int>(views.size());
  const int D = static_cast<int>(hypotheses.size());
  if (D < 2) throw std::invalid_argument("cost volume: need at least 2 hypotheses");
  for (int d = 0; d < D; ++d) {
    if (!(hypotheses[d] > 0.0) || (d > 0 && !(hypotheses[d] > hypotheses[d - 1]))) {
      throw std::invalid_argument("cost volume: hypotheses must be positive and increasing");
    }
  }
  if (M < 1) throw std::invalid_argument("cost volume: no views");
  if (options.aggregation == Aggregation::kTopK && cfg.top_k > M) {
    throw std::invalid_argument("cost volume: top_k exceeds the number of views");
  }
  if (options.window < 1 || options.window % 2 == 0) {
    throw std::invalid_argument("cost volume: window must be odd");
  }
  if (!ref.SameShape(cam_ref.width, cam_ref.height)) {
    throw std::invalid_argument("cost volume: reference image/camera shape mismatch");
  }
  for (const View& v : views) {
    if (!v.image.SameShape(v.camera.width, v.camera.height) ||
        v.image.channels() != ref.channels()) {
      throw std::invalid_argument("cost volume: view image/camera mismatch");
    }
  }

  const int w = ref.width();
  const int h = ref.height();
  const int nc = ref.channels();
  const int radius = options.window / 2;
  CostVolume volume;
  volume.width = w;
  volume.height = h;
  volume.depths.assign(hypotheses.begin(), hypotheses.end());
  volume.cost.assign(static_cast<size_t>(w) * h * D, CostVolume::kNoSignal);

  ParallelFor(0, D, [&](int d) {
    std::vector<WarpedImage> warped;
    warped.reserve(M);
    for (const View& v : views) {
      const Eigen::Matrix3d H = HomographyForDepth(cam_ref, v.camera, hypotheses[d]);
      warped.push_back(WarpByHomography(H, v.image, w, h, v.camera));
    }

    if (options.aggregation == Aggregation::kVariance) {
      Grid<double> var(w, h, 1);
      ValidityMask any(w, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          int n = 1;
          for (int m = 0; m < M; ++m) n += warped[m].mask.valid(x, y);
          if (n == 1) continue;
          any(x, y) = 1;
          double v = 0.0;
          for (int c = 0; c < nc; ++c) {
            double mean = ref(x, y, c);
            for (int m = 0; m < M; ++m) {
              if (warped[m].mask.valid(x, y)) mean += warped[m].image(x, y, c);
            }
            mean /= n;
            double ss = (ref(x, y, c) - mean) * (ref(x, y, c) - mean);
            for (int m = 0; m < M; ++m) {
              if (!warped[m].mask.valid(x, y)) continue;
              const double e = warped[m].image(x, y, c) - mean;
              ss += e * e;
            }
            v += ss / n;
          }
          var(x, y) = v / nc;
        }
      }
      const Grid<double> smoothed = WindowMean(var, any, radius);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (any.valid(x, y)) volume.cost[volume.index(x, y, d)] = smoothed(x, y);
        }
      }
      return;
    }

    std::vector<Grid<double>> maps;
    maps.reserve(M);
    for (int m = 0; m < M; ++m) {
      const Grid<double> raw =
          cfg.cost == PhotometricCost::kFirstOrder
              ? FirstOrderLossMap(ref, warped[m].image, warped[m].mask, cfg)
              : NaiveLossMap(ref, warped[m].image, warped[m].mask);
      maps.push_back(WindowMean(raw, warped[m].mask, radius));
    }
    std::vector<std::pair<double, int>> candidates;
    candidates.reserve(M);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        candidates.clear();
        for (int m = 0; m < M; ++m) {
          if (warped[m].mask.valid(x, y)) candidates.emplace_back(maps[m](x, y), m);
        }
        if (candidates.empty()) continue;
        const int take = std::min<int>(cfg.top_k, static_cast<int>(candidates.size()));
        std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end());
        double sum = 0.0;
        for (int j = 0; j < take; ++j) sum += candidates[j].first;
        volume.cost[volume.index(x, y, d)] = sum / take;
      }
    }
  });
  return volume;
}

double MedianPositiveCost(const CostVolume& volume) {
  std::vector<double> values;
  values.reserve(volume.cost.size());
  for (double c : volume.cost) {
    if (c > 0.0 && c < CostVolume::kNoSignal) values.push_back(c);
  }
  if (values.empty()) return 1.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  return values[mid];
}

SoftArgminResult SoftArgminDepth(const CostVolume& volume, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("soft_argmin: temperature must be positive");
  }
  const int w = volume.width;
  const int h = volume.height;
  const int D = volume.num_depths();
  SoftArgminResult out;
  out.depth = DepthMap(w, h);
  out.probability.width = w;
  out.probability.height = h;
  out.probability.depths = volume.depths;
  out.probability.prob.assign(volume.cost.size(), 0.0);
  const double lo = volume.depths.front();
  const double hi = volume.depths.back();

  ParallelFor(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const size_t base = volume.index(x, y, 0);
      double best = std::numeric_limits<double>::infinity();
      for (int d = 0; d < D; ++d) {
        const double c = volume.cost[base + d];
        if (c < CostVolume::kNoSignal) best = std::min(best, c);
      }
      if (!std::isfinite(best)) continue;
      double z = 0.0;
      for (int d = 0; d < D; ++d) {
        const double c = volume.cost[base + d];
        const double p = c < CostVolume::kNoSignal ? std::exp(-(c - best) / temperature) : 0.0;
        out.probability.prob[base + d] = p;
        z += p;
      }
      double depth = 0.0;
      for (int d = 0; d < D; ++d) {
        double& p = out.probability.prob[base + d];
        p /= z;
        depth += p * volume.depths[d];
      }
      out.depth(x, y) = std::clamp(depth, lo, hi);
    }
  });
  return out;
}

DepthMap HardArgminDepth(const CostVolume& volume) {
  DepthMap depth(volume.width, volume.height);
  for (int y = 0; y < volume.height; ++y) {
    for (int x = 0; x < volume.width; ++x) {
      const size_t base = volume.index(x, y, 0);
      int best = -1;
      for (int d = 0; d < volume.num_depths(); ++d) {
        const double c = volume.cost[base + d];
        if (c < CostVolume::kNoSignal && (best < 0 || c < volume.cost[base + best])) best = d;
      }
      if (best >= 0) depth(x, y) = volume.depths[best];
    }
  }
  return depth;
}

ConfidenceMap ComputeConfidence(const ProbabilityVolume& probability,
                                const DepthMap& depth, double threshold) {
  const int w = probability.width;
  const int h = probability.height;
  const int D = probability.num_depths();
  if (!depth.SameShape(w, h)) {
    throw std::invalid_argument("confidence: depth map shape mismatch");
  }
  ConfidenceMap out{Grid<double>(w, h, 1), ValidityMask(w, h, 1)};
  const int window = std::min(4, D);
  ParallelFor(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double est = depth(x, y);
      if (!DepthMap::IsValid(est)) continue;
      const auto& dv = probability.depths;
      // First index whose hypothesis is >= est; the nearest is it or its
      // left neighbor, ties going left.
      int right = static_cast<int>(std::lower_bound(dv.begin(), dv.end(), est) - dv.begin());
      int left = right - 1;
      const size_t base = probability.index(x, y, 0);
      double sum = 0.0;
      for (int taken = 0; taken < window; ++taken) {
        const bool has_left = left >= 0;
        const bool has_right = right < D;
        bool take_left = has_left;
        if (has_left && has_right) {
          take_left = std::abs(dv[left] - est) <= std::abs(dv[right] - est);
        }
        if (take_left) {
          sum += probability.prob[base + left--];
        } else {
          sum += probability.prob[base + right++];
        }
      }
      const double conf = std::clamp(sum, 0.0, 1.0);
      out.confidence(x, y) = conf;
      out.filtered(x, y) = conf < threshold;
    }
  });
  return out;
}

DepthMap RefineDepthDescent(const Image& ref, const Camera& cam_ref,
                            std::span<const View> views,
                            const DepthMap& initial, const LossConfig& cfg,
                            int steps, double step_size) {
  if (steps < 0 || !(step_size > 0.0)) {
    throw std::invalid_argument("refine: steps must be >= 0 and step_size > 0");
  }
  DepthMap depth = initial;
  if (steps == 0) return depth;
  double loss = TotalLoss(ref, cam_ref, views, depth, cfg).total;
  double step = step_size;
  constexpr int kMaxBacktracks = 30;
  for (int it = 0; it < steps; ++it) {
    const Grid<double> grad = LossGradient(ref, cam_ref, views, depth, cfg);
    double gmax = 0.0;
    for (size_t i = 0; i < grad.size(); ++i) {
      if (DepthMap::IsValid(depth.data()[i])) gmax = std::max(gmax, std::abs(grad.data()[i]));
    }
    if (gmax == 0.0) break;

    bool accepted = false;
    for (int b = 0; b < kMaxBacktracks && !accepted; ++b) {
      DepthMap trial = depth;
      for (size_t i = 0; i < trial.size(); ++i) {
        double& d = trial.vec()[i];
        if (!DepthMap::IsValid(d)) continue;
        d = std::clamp(d - step * grad.data()[i] / gmax, cam_ref.depth_min,
                       cam_ref.depth_max);
      }
      const double trial_loss = TotalLoss(ref, cam_ref, views, trial, cfg).total;
      if (trial_loss < loss) {
        depth = std::move(trial);
        loss = trial_loss;
        accepted = true;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return depth;
}

}  // namespace rmvs
