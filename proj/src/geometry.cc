#include "rmvs/geometry.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace rmvs {

void Camera::Validate() const {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("camera: image size must be positive");
  }
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw std::invalid_argument(
        "camera: intrinsics must be upper-triangular with K[2][2] = 1");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) {
    throw std::invalid_argument("camera: focal lengths must be positive");
  }
  if (!K.allFinite() || !T.allFinite()) {
    throw std::invalid_argument("camera: non-finite matrix entry");
  }
  if (T(3, 0) != 0.0 || T(3, 1) != 0.0 || T(3, 2) != 0.0 || T(3, 3) != 1.0) {
    throw std::invalid_argument("camera: extrinsic bottom row must be 0 0 0 1");
  }
  const Eigen::Matrix3d R = Rotation();
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      1e-9) {
    throw std::invalid_argument("camera: rotation is not orthonormal");
  }
  if (R.determinant() <= 0.0) {
    throw std::invalid_argument("camera: rotation has negative determinant");
  }
  if (!(depth_min > 0.0) || !(depth_min < depth_max)) {
    throw std::invalid_argument("camera: require 0 < depth_min < depth_max");
  }
}

Eigen::Vector3d Camera::Center() const {
  return -Rotation().transpose() * Translation();
}

Eigen::Vector3d Camera::ViewingDirection() const {
  return Rotation().row(2).transpose();
}

Eigen::Matrix4d RelativeTransform(const Camera& cam_src,
                                  const Camera& cam_view) {
  Eigen::Matrix4d src_inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d Rt = cam_src.Rotation().transpose();
  src_inv.topLeftCorner<3, 3>() = Rt;
  src_inv.topRightCorner<3, 1>() = -Rt * cam_src.Translation();
  return cam_view.T * src_inv;
}

PixelWarper::PixelWarper(const Camera& cam_src, const Camera& cam_view)
    : view_(&cam_view), K_src_inv_(cam_src.K.inverse()) {
  const Eigen::Matrix4d rel = RelativeTransform(cam_src, cam_view);
  R_rel_ = rel.topLeftCorner<3, 3>();
  t_rel_ = rel.topRightCorner<3, 1>();
}

ViewProjection PixelWarper::Warp(double x, double y, double depth) const {
  const Eigen::Vector3d ray = K_src_inv_ * Eigen::Vector3d(x, y, 1.0);
  const Eigen::Vector3d point_view = R_rel_ * (depth * ray) + t_rel_;
  ViewProjection out;
  out.depth = point_view.z();
  if (!(depth > 0.0) || !(point_view.z() > kMinProjectionDepth)) {
    out.coord.x = std::numeric_limits<double>::quiet_NaN();
    out.coord.y = std::numeric_limits<double>::quiet_NaN();
    out.coord.valid = false;
    return out;
  }
  const Eigen::Vector3d p = view_->K * point_view;
  out.coord.x = p.x() / p.z();
  out.coord.y = p.y() / p.z();
  out.coord.valid = view_->Contains(out.coord.x, out.coord.y);
  return out;
}

Eigen::Vector2d PixelWarper::DepthDerivative(double x, double y,
                                             double depth) const {
  const Eigen::Vector3d ray = K_src_inv_ * Eigen::Vector3d(x, y, 1.0);
  const Eigen::Vector3d a = view_->K * (R_rel_ * ray);
  const Eigen::Vector3d q = depth * a + view_->K * t_rel_;
  const double inv = 1.0 / (q.z() * q.z());
  return Eigen::Vector2d((a.x() * q.z() - q.x() * a.z()) * inv,
                         (a.y() * q.z() - q.y() * a.z()) * inv);
}

ViewProjection WarpPixelWithDepth(const PixelCoord& u, double depth,
                                  const Camera& cam_src,
                                  const Camera& cam_view) {
  return PixelWarper(cam_src, cam_view).Warp(u.x, u.y, depth);
}

PixelCoord WarpPixel(const PixelCoord& u, double depth, const Camera& cam_src,
                     const Camera& cam_view) {
  return WarpPixelWithDepth(u, depth, cam_src, cam_view).coord;
}

Eigen::Matrix3d HomographyForDepth(const Camera& cam_src,
                                   const Camera& cam_view, double depth) {
  if (!(depth > 0.0)) {
    throw std::invalid_argument("homography: depth must be positive");
  }
  // X_view = R X + t and n^T X = depth with n = (0, 0, 1), so
  // X_view = (R + t n^T / depth) X.
  const Eigen::Matrix4d rel = RelativeTransform(cam_src, cam_view);
  Eigen::Matrix3d plane = rel.topLeftCorner<3, 3>();
  plane.col(2) += rel.topRightCorner<3, 1>() / depth;
  const Eigen::Matrix3d K_src_inv = cam_src.K.inverse();
  return cam_view.K * plane * K_src_inv;
}

PixelCoord ApplyHomography(const Eigen::Matrix3d& H, double x, double y,
                           const Camera& target) {
  const Eigen::Vector3d p = H * Eigen::Vector3d(x, y, 1.0);
  PixelCoord out;
  out.x = p.x() / p.z();
  out.y = p.y() / p.z();
  out.valid = p.z() > 0.0 && std::isfinite(out.x) && std::isfinite(out.y) &&
              target.Contains(out.x, out.y);
  return out;
}

Eigen::Vector3d BackprojectToWorld(const Camera& cam, double x, double y,
                                   double depth) {
  const Eigen::Vector3d ray = cam.K.triangularView<Eigen::Upper>().solve(
      Eigen::Vector3d(x, y, 1.0));
  const Eigen::Vector3d point_cam = depth * ray;
  return cam.Rotation().transpose() * (point_cam - cam.Translation());
}

ViewProjection ProjectWorldPoint(const Camera& cam,
                                 const Eigen::Vector3d& point) {
  const Eigen::Vector3d point_cam = cam.Rotation() * point + cam.Translation();
  ViewProjection out;
  out.depth = point_cam.z();
  if (!(point_cam.z() > kMinProjectionDepth)) {
    out.coord.x = std::numeric_limits<double>::quiet_NaN();
    out.coord.y = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Eigen::Vector3d p = cam.K * point_cam;
  out.coord.x = p.x() / p.z();
  out.coord.y = p.y() / p.z();
  out.coord.valid = cam.Contains(out.coord.x, out.coord.y);
  return out;
}

namespace {

// Reads whitespace-separated tokens while tracking the 1-based line number of
// the last token, so parse errors can name their location.
class TokenReader {
 public:
  explicit TokenReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw std::runtime_error(path + ": cannot open camera file");
  }

  bool Next(std::string* token) {
    while (true) {
      if (line_stream_ >> *token) return true;
      std::string line;
      if (!std::getline(in_, line)) return false;
      ++line_no_;
      line_stream_.clear();
      line_stream_.str(line);
    }
  }

  std::string Expect(const char* what) {
    std::string token;
    if (!Next(&token)) Fail(std::string("unexpected end of file, expected ") + what);
    return token;
  }

  double ExpectNumber(const char* what) {
    const std::string token = Expect(what);
    try {
      size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size() || !std::isfinite(v)) throw std::exception();
      return v;
    } catch (...) {
      Fail(std::string("expected ") + what + ", got '" + token + "'");
    }
    return 0.0;
  }

  // Optional trailing numbers on the current line only.
  bool TryNumberOnLine(double* value) {
    std::string token;
    if (!(line_stream_ >> token)) return false;
    try {
      *value = std::stod(token);
      return true;
    } catch (...) {
      Fail("expected number, got '" + token + "'");
    }
    return false;
  }

  [[noreturn]] void Fail(const std::string& msg) const {
    throw std::runtime_error(path_ + ":" + std::to_string(line_no_) + ": " +
                             msg);
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::istringstream line_stream_;
  int line_no_ = 0;
};

}  // namespace

Camera ReadCameraFile(const std::string& path, int width, int height,
                      int num_depths) {
  if (num_depths < 2) {
    throw std::invalid_argument("camera file: num_depths must be >= 2");
  }
  TokenReader reader(path);
  Camera cam;
  cam.width = width;
  cam.height = height;

  if (reader.Expect("'extrinsic'") != "extrinsic") {
    reader.Fail("expected 'extrinsic' header");
  }
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) cam.T(r, c) = reader.ExpectNumber("extrinsic entry");
  }
  if (reader.Expect("'intrinsic'") != "intrinsic") {
    reader.Fail("expected 'intrinsic' header");
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.K(r, c) = reader.ExpectNumber("intrinsic entry");
  }
  cam.depth_min = reader.ExpectNumber("depth_min");
  const double interval = reader.ExpectNumber("depth_interval");
  double extra = 0.0;
  if (reader.TryNumberOnLine(&extra)) {
    // MVSNet variants append the number of planes and optionally depth_max.
    num_depths = static_cast<int>(extra);
    if (num_depths < 2) reader.Fail("number of depth planes must be >= 2");
  }
  double depth_max = cam.depth_min + interval * (num_depths - 1);
  if (reader.TryNumberOnLine(&extra)) depth_max = extra;
  cam.depth_max = depth_max;

  Eigen::Matrix3d R = cam.T.topLeftCorner<3, 3>();
  const double ortho_err =
      (R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-4) reader.Fail("extrinsic rotation is not orthonormal");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  cam.T.topLeftCorner<3, 3>() = svd.matrixU() * svd.matrixV().transpose();
  if (cam.K(1, 0) == 0.0 && cam.K(2, 0) == 0.0 && cam.K(2, 1) == 0.0 &&
      cam.K(2, 2) != 0.0 && cam.K(2, 2) != 1.0) {
    cam.K /= cam.K(2, 2);
  }

  try {
    cam.Validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return cam;
}

void WriteCameraFile(const std::string& path, const Camera& cam,
                     int num_depths) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write camera file");
  out << std::setprecision(17);
  out << "extrinsic\n";
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out << cam.T(r, c) << (c == 3 ? '\n' : ' ');
  }
  out << "\nintrinsic\n";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << cam.K(r, c) << (c == 2 ? '\n' : ' ');
  }
  out << "\n"
      << cam.depth_min << ' '
      << (cam.depth_max - cam.depth_min) / (num_depths - 1) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace rmvs
