#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rmvs {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<uint8_t, 3>> colors;
  // Number of views that agreed on the point, reference included.
  std::vector<uint8_t> support;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void Add(const Eigen::Vector3d& point, const std::array<uint8_t, 3>& color,
           uint8_t support_count) {
    points.push_back(point);
    colors.push_back(color);
    support.push_back(support_count);
  }
};

// Vertex-only PLY with x y z (float32), red green blue (uint8) and support
// (uint8). Binary little-endian by default.
void WritePly(const std::string& path, const PointCloud& cloud,
              bool ascii = false);

// Reads the vertex element of an ASCII or binary PLY. x, y and z are
// required; colors and support default to 0 when absent. Other vertex
// properties are skipped and later elements ignored.
PointCloud ReadPly(const std::string& path);

}  // namespace rmvs
