#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rmvs/image.h"
#include "rmvs/ply.h"

namespace rmvs {

// Exact nearest-neighbor queries over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::span<const Eigen::Vector3d> points);

  // Index of a point at minimum Euclidean distance (lowest index on ties)
  // and that distance.
  std::pair<int, double> Nearest(const Eigen::Vector3d& query) const;

 private:
  struct Node {
    int begin, end;  // range in index_
    int axis = -1;   // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };
  int Build(int begin, int end, int depth);
  void Search(int node, const Eigen::Vector3d& q, int& best,
              double& best_sq) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
};

struct ThresholdMetrics {
  double threshold = 0.0;
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  double f_score = 0.0;    // percent
};

struct CloudMetrics {
  double accuracy_mean = 0.0;
  double accuracy_median = 0.0;
  double completeness_mean = 0.0;
  double completeness_median = 0.0;
  double overall = 0.0;
  std::vector<ThresholdMetrics> thresholds;
};

// Nearest-neighbor distances from reconstruction to reference (accuracy) and
// back (completeness). Throws naming the empty side.
CloudMetrics CloudDistanceMetrics(const PointCloud& reconstruction,
                                  const PointCloud& reference,
                                  std::span<const double> thresholds);

// Pointwise nearest distances from every query point to `target`.
std::vector<double> NearestDistances(std::span<const Eigen::Vector3d> query,
                                     std::span<const Eigen::Vector3d> target);

struct DepthValidation {
  // Mean |predicted - truth| over pixels where both are valid.
  double l1 = 0.0;
  // Percentages over truth-valid pixels; an invalid prediction is a miss.
  double within_1 = 0.0;
  double within_3 = 0.0;
  double within_3_percent = 0.0;
  int64_t evaluated = 0;
};

DepthValidation DepthValidationMetrics(const DepthMap& predicted,
                                       const DepthMap& truth);

// Flat "key value" lines.
std::string FormatCloudMetrics(const CloudMetrics& metrics);
std::string FormatDepthValidation(const DepthValidation& metrics);

}  // namespace rmvs
