#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rmvs/geometry.h"
#include "rmvs/image.h"

namespace rmvs {

// Band-limited 3D value noise evaluated at world points, so every view sees
// the same albedo. Regions inside `flat_radius` of `flat_center` have the
// constant albedo `base`.
struct Texture {
  double base = 0.5;
  double amplitude = 0.3;
  double cell_size = 16.0;  // scene units per lattice cell of the first octave
  int octaves = 2;
  uint64_t seed = 0;
  Eigen::Vector3d flat_center = Eigen::Vector3d::Zero();
  double flat_radius = 0.0;

  // Channels use independent noise fields.
  double Albedo(const Eigen::Vector3d& p, int channel = 0) const;
};

enum class SurfaceKind {
  kPlane,      // infinite plane through `center` with `normal`
  kRectangle,  // plane patch spanned by axis_u/axis_v with half extents
  kSphere,
};

struct Surface {
  SurfaceKind kind = SurfaceKind::kPlane;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double half_u = 0.0;
  double half_v = 0.0;
  double radius = 0.0;
  Texture texture;

  // Smallest ray parameter t > t_min with origin + t * dir on the surface.
  std::optional<double> Intersect(const Eigen::Vector3d& origin,
                                  const Eigen::Vector3d& dir,
                                  double t_min) const;
  Eigen::Vector3d NormalAt(const Eigen::Vector3d& p) const;
};

struct ViewLighting {
  double gain = 1.0;
  double offset = 0.0;
  double noise_sigma = 0.0;  // additive Gaussian sensor noise
};

struct Scene {
  std::vector<Surface> surfaces;
  std::vector<Camera> cameras;
  std::vector<ViewLighting> lights;  // one per camera
  Eigen::Vector3d light_direction = Eigen::Vector3d(0.3, -0.4, -1.0);
  double ambient = 0.3;
  int channels = 3;  // 1 renders grayscale
  uint64_t seed = 0;

  void Validate() const;
};

enum class Covisibility : uint8_t {
  kCovisible = 0,
  kOccluded = 1,    // another surface blocks the other camera's line of sight
  kOutOfView = 2,   // projects outside the other image or behind its camera
  kNoSurface = 3,   // the pixel's ray hits nothing
};

struct Render {
  Image image;
  DepthMap depth;  // 0 where no surface is hit
  // labels[j] classifies each pixel of this view against camera j; the entry
  // for the view itself is all co-visible (or no-surface).
  std::vector<Grid<uint8_t>> labels;
};

// First surface hit by the ray through pixel (x, y); returns the depth and
// the surface index, or nullopt.
struct Hit {
  double depth = 0.0;
  int surface = -1;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};
std::optional<Hit> CastRay(const Scene& scene, const Camera& cam, double x,
                           double y);

Render RenderView(const Scene& scene, int view);

enum class SceneKind { kTexturedPlane, kLightingShift, kOcclusion, kTexturelessPatch };

SceneKind ParseSceneKind(const std::string& name);
std::string SceneKindName(SceneKind kind);

// Seven cameras (reference 0 plus six views) looking at a fronto-parallel
// textured plane, with the named stressor added.
Scene MakeAblationScene(SceneKind kind, uint64_t seed);

// Dense surface samples of the scene restricted to points visible from at
// least one camera; used as the evaluation reference cloud.
std::vector<Eigen::Vector3d> SampleVisibleSurface(const Scene& scene,
                                                  int stride = 1);

}  // namespace rmvs
