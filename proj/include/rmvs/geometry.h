#pragma once

#include <string>

#include <Eigen/Core>

namespace rmvs {

// Pinhole camera. Pixel centers sit on integer coordinates, so pixel (0, 0)
// is the point (0.0, 0.0). Depth is the z coordinate in the camera frame.
struct Camera {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  // World-to-camera rigid transform.
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  double depth_min = 1.0;
  double depth_max = 2.0;
  int width = 0;
  int height = 0;

  // Throws std::invalid_argument describing the first violated invariant.
  void Validate() const;

  Eigen::Matrix3d Rotation() const { return T.topLeftCorner<3, 3>(); }
  Eigen::Vector3d Translation() const { return T.topRightCorner<3, 1>(); }
  // Camera center in world coordinates.
  Eigen::Vector3d Center() const;
  // Unit principal axis in world coordinates.
  Eigen::Vector3d ViewingDirection() const;

  // Inside [0, width-1] x [0, height-1], allowing kBoundaryTolerance of
  // rounding slack so exact warps onto the border stay valid.
  bool Contains(double x, double y) const;
};

// Slack, in pixels, for coordinates that round just outside the image.
inline constexpr double kBoundaryTolerance = 1e-9;

inline bool Camera::Contains(double x, double y) const {
  return x >= -kBoundaryTolerance && y >= -kBoundaryTolerance &&
         x <= width - 1 + kBoundaryTolerance && y <= height - 1 + kBoundaryTolerance;
}

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
  bool valid = false;
};

// Warp result together with the depth of the point in the target frame.
struct ViewProjection {
  PixelCoord coord;
  double depth = 0.0;
};

// Points whose depth in the target camera is at or below this are treated as
// degenerate projections.
inline constexpr double kMinProjectionDepth = 1e-9;

// Precomputed source-to-view warp. WarpPixel, InverseWarp and the loss stack
// all go through this so they share one floating-point path.
class PixelWarper {
 public:
  PixelWarper(const Camera& cam_src, const Camera& cam_view);

  ViewProjection Warp(double x, double y, double depth) const;
  // d(x', y')/d(depth) of the warped coordinate; meaningful only where the
  // projected point is in front of the view camera.
  Eigen::Vector2d DepthDerivative(double x, double y, double depth) const;

 private:
  const Camera* view_;
  Eigen::Matrix3d K_src_inv_;
  Eigen::Matrix3d R_rel_;
  Eigen::Vector3d t_rel_;
};

// T_view * T_src^-1: maps source camera coordinates to view camera coordinates.
Eigen::Matrix4d RelativeTransform(const Camera& cam_src, const Camera& cam_view);

// Back-projects u at `depth` in the source frame and projects it into the
// view camera. Back-projection uses K_src^-1 and projection uses K_view.
PixelCoord WarpPixel(const PixelCoord& u, double depth, const Camera& cam_src,
                     const Camera& cam_view);
ViewProjection WarpPixelWithDepth(const PixelCoord& u, double depth,
                                  const Camera& cam_src,
                                  const Camera& cam_view);

// Homography induced by the fronto-parallel plane z = depth of the source
// camera, mapping homogeneous source pixels to view pixels.
Eigen::Matrix3d HomographyForDepth(const Camera& cam_src,
                                   const Camera& cam_view, double depth);

// Applies a homography and marks the result valid when it lies inside
// `target` and the homogeneous scale is positive.
PixelCoord ApplyHomography(const Eigen::Matrix3d& H, double x, double y,
                           const Camera& target);

Eigen::Vector3d BackprojectToWorld(const Camera& cam, double x, double y,
                                   double depth);
ViewProjection ProjectWorldPoint(const Camera& cam,
                                 const Eigen::Vector3d& point);

// MVSNet-style camera text file:
//   extrinsic / 4x4 rows / intrinsic / 3x3 rows / depth_min depth_interval
// depth_max = depth_min + depth_interval * (num_depths - 1). Rotations read
// from disk are re-orthonormalized when they are within 1e-4 of a rotation,
// since published camera files are usually printed with ~6 digits.
Camera ReadCameraFile(const std::string& path, int width, int height,
                      int num_depths = 128);
void WriteCameraFile(const std::string& path, const Camera& cam,
                     int num_depths = 128);

}  // namespace rmvs
