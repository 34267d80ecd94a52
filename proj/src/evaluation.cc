#include "rmvs/evaluation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rmvs/parallel.h"

namespace rmvs {
namespace {

constexpr int kLeafSize = 8;

double Median(std::vector<double> v) {
  const size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double PercentWithin(const std::vector<double>& v, double t) {
  const auto n = std::count_if(v.begin(), v.end(), [t](double d) { return d <= t; });
  return 100.0 * n / v.size();
}

}  // namespace

KdTree::KdTree(std::span<const Eigen::Vector3d> points)
    : points_(points.begin(), points.end()), index_(points.size()) {
  std::iota(index_.begin(), index_.end(), 0);
  if (!points_.empty()) Build(0, static_cast<int>(points_.size()), 0);
}

int KdTree::Build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[index_[i]]);
    hi = hi.cwiseMax(points_[index_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide
  const int mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis]) {
                       return points_[a][axis] < points_[b][axis];
                     }
                     return a < b;
                   });
  const double split = points_[index_[mid]][axis];
  const int left = Build(begin, mid, depth + 1);
  const int right = Build(mid, end, depth + 1);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::Search(int node_id, const Eigen::Vector3d& q, int& best,
                    double& best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = index_[i];
      const double d = (points_[idx] - q).squaredNorm();
      if (d < best_sq || (d == best_sq && idx < best)) {
        best_sq = d;
        best = idx;
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds coordinates >= split.
  const double diff = q[node.axis] - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  Search(near, q, best, best_sq);
  if (diff * diff <= best_sq) Search(far, q, best, best_sq);
}

std::pair<int, double> KdTree::Nearest(const Eigen::Vector3d& query) const {
  if (points_.empty()) throw std::logic_error("kd-tree: query on empty tree");
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  Search(0, query, best, best_sq);
  return {best, std::sqrt(best_sq)};
}

std::vector<double> NearestDistances(std::span<const Eigen::Vector3d> query,
                                     std::span<const Eigen::Vector3d> target) {
  const KdTree tree(target);
  std::vector<double> out(query.size());
  ParallelFor(0, static_cast<int>(query.size()),
              [&](int i) { out[i] = tree.Nearest(query[i]).second; });
  return out;
}

CloudMetrics CloudDistanceMetrics(const PointCloud& reconstruction,
                                  const PointCloud& reference,
                                  std::span<const double> thresholds) {
  if (reconstruction.empty()) {
    throw std::invalid_argument("cloud metrics: reconstruction cloud is empty");
  }
  if (reference.empty()) {
    throw std::invalid_argument("cloud metrics: reference cloud is empty");
  }
  for (double t : thresholds) {
    if (!(t > 0.0)) throw std::invalid_argument("cloud metrics: thresholds must be positive");
  }
  const std::vector<double> acc = NearestDistances(reconstruction.points, reference.points);
  const std::vector<double> comp = NearestDistances(reference.points, reconstruction.points);
  CloudMetrics m;
  m.accuracy_mean = Mean(acc);
  m.accuracy_median = Median(acc);
  m.completeness_mean = Mean(comp);
  m.completeness_median = Median(comp);
  m.overall = 0.5 * (m.accuracy_mean + m.completeness_mean);
  for (double t : thresholds) {
    ThresholdMetrics tm;
    tm.threshold = t;
    tm.precision = PercentWithin(acc, t);
    tm.recall = PercentWithin(comp, t);
    const double s = tm.precision + tm.recall;
    tm.f_score = s > 0.0 ? 2.0 * tm.precision * tm.recall / s : 0.0;
    m.thresholds.push_back(tm);
  }
  return m;
}

DepthValidation DepthValidationMetrics(const DepthMap& predicted,
                                       const DepthMap& truth) {
  if (!predicted.SameShape(truth)) {
    throw std::invalid_argument("depth validation: shape mismatch");
  }
  DepthValidation out;
  double l1 = 0.0;
  int64_t both = 0, w1 = 0, w3 = 0, w3p = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const double t = truth.data()[i];
    if (!DepthMap::IsValid(t)) continue;
    ++out.evaluated;
    const double p = predicted.data()[i];
    if (!DepthMap::IsValid(p)) continue;
    const double e = std::abs(p - t);
    l1 += e;
    ++both;
    w1 += e <= 1.0;
    w3 += e <= 3.0;
    w3p += e <= 0.03 * t;
  }
  if (out.evaluated == 0) {
    throw std::invalid_argument("depth validation: ground truth has no valid pixels");
  }
  const double n = static_cast<double>(out.evaluated);
  out.l1 = both > 0 ? l1 / both : 0.0;
  out.within_1 = 100.0 * w1 / n;
  out.within_3 = 100.0 * w3 / n;
  out.within_3_percent = 100.0 * w3p / n;
  return out;
}

std::string FormatCloudMetrics(const CloudMetrics& m) {
  std::ostringstream out;
  out.precision(10);
  out << "accuracy_mean " << m.accuracy_mean << "\n"
      << "accuracy_median " << m.accuracy_median << "\n"
      << "completeness_mean " << m.completeness_mean << "\n"
      << "completeness_median " << m.completeness_median << "\n"
      << "overall " << m.overall << "\n";
  for (const ThresholdMetrics& t : m.thresholds) {
    out << "precision@" << t.threshold << " " << t.precision << "\n"
        << "recall@" << t.threshold << " " << t.recall << "\n"
        << "f_score@" << t.threshold << " " << t.f_score << "\n";
  }
  return out.str();
}

std::string FormatDepthValidation(const DepthValidation& m) {
  std::ostringstream out;
  out.precision(10);
  out << "l1 " << m.l1 << "\n"
      << "within_1 " << m.within_1 << "\n"
      << "within_3 " << m.within_3 << "\n"
      << "within_3_percent " << m.within_3_percent << "\n"
      << "evaluated " << m.evaluated << "\n";
  return out.str();
}

}  // namespace rmvs
