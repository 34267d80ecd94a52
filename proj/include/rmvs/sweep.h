#pragma once

#include <span>
#include <vector>

#include "rmvs/geometry.h"
#include "rmvs/image.h"
#include "rmvs/loss.h"

namespace rmvs {

enum class Aggregation {
  kTopK,      // mean of the K lowest per-view costs among valid views
  kVariance,  // intensity variance over the reference and all valid views
};

struct SweepOptions {
  int num_depths = 128;
  Aggregation aggregation = Aggregation::kTopK;
  // Odd side length of the square window the per-view cost is averaged over.
  int window = 1;
};

struct CostVolume {
  // Cost of a cell no view could observe.
  static constexpr double kNoSignal = 1e9;

  int width = 0;
  int height = 0;
  std::vector<double> depths;  // strictly increasing hypotheses
  std::vector<double> cost;    // (y * width + x) * D + d

  int num_depths() const { return static_cast<int>(depths.size()); }
  size_t index(int x, int y, int d) const {
    return (static_cast<size_t>(y) * width + x) * depths.size() + d;
  }
};

struct ProbabilityVolume {
  int width = 0;
  int height = 0;
  std::vector<double> depths;
  std::vector<double> prob;  // same layout as CostVolume::cost

  int num_depths() const { return static_cast<int>(depths.size()); }
  size_t index(int x, int y, int d) const {
    return (static_cast<size_t>(y) * width + x) * depths.size() + d;
  }
};

struct SoftArgminResult {
  DepthMap depth;
  ProbabilityVolume probability;
};

struct ConfidenceMap {
  Grid<double> confidence;
  // 1 where the confidence is below the threshold (or the depth is invalid).
  ValidityMask filtered;
};

struct ViewSelection {
  std::vector<int> views;
  // Set when fewer than the requested number of other cameras exist.
  bool truncated = false;
};

// Ranks the other cameras by how close the triangulation angle at the
// reference's mid-range point is to `target_angle_deg`, breaking ties by the
// shorter baseline, and returns the best n.
ViewSelection SelectViews(std::span<const Camera> cameras, int reference, int n,
                          double target_angle_deg = 10.0);

// num_depths values evenly spaced over [depth_min, depth_max].
std::vector<double> UniformDepthHypotheses(double depth_min, double depth_max,
                                           int num_depths);

// Plane-sweep cost volume over `hypotheses` (fronto-parallel planes of the
// reference camera). `views` must hold at least cfg.top_k entries for top-K
// aggregation.
CostVolume BuildCostVolume(const Image& ref, const Camera& cam_ref,
                           std::span<const View> views,
                           std::span<const double> hypotheses,
                           const LossConfig& cfg, const SweepOptions& options);

// Median of the costs in (0, kNoSignal), or 1 if there are none.
double MedianPositiveCost(const CostVolume& volume);

// p_d proportional to exp(-cost_d / temperature); depth = sum_d p_d depth_d.
// Pixels without any observed hypothesis get depth 0 (invalid) and all-zero
// probabilities.
SoftArgminResult SoftArgminDepth(const CostVolume& volume, double temperature);

// Per-pixel winner-take-all depth.
DepthMap HardArgminDepth(const CostVolume& volume);

// Sum of probabilities over the four hypotheses nearest the estimated depth
// (ties toward the smaller index); pixels below `threshold` are filtered.
ConfidenceMap ComputeConfidence(const ProbabilityVolume& probability,
                                const DepthMap& depth, double threshold = 0.8);

// Projected gradient descent on TotalLoss with a backtracking line search.
// Each step moves pixel p by step_size * g(p) / max|g| before clamping to the
// camera depth range, and is only accepted if the total loss decreases.
DepthMap RefineDepthDescent(const Image& ref, const Camera& cam_ref,
                            std::span<const View> views,
                            const DepthMap& initial, const LossConfig& cfg,
                            int steps, double step_size);

}  // namespace rmvs
