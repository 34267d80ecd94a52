#include "rmvs/synth.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Geometry>

#include "rmvs/parallel.h"

namespace rmvs {
namespace {

constexpr double kRayEpsilon = 1e-9;

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double LatticeValue(int64_t i, int64_t j, int64_t k, uint64_t seed) {
  uint64_t h = SplitMix64(seed);
  h = SplitMix64(h ^ static_cast<uint64_t>(i));
  h = SplitMix64(h ^ static_cast<uint64_t>(j));
  h = SplitMix64(h ^ static_cast<uint64_t>(k));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double Fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Value noise in [0, 1] with C2 quintic interpolation between lattice values.
double ValueNoise(const Eigen::Vector3d& p, uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const int64_t ix = static_cast<int64_t>(fx);
  const int64_t iy = static_cast<int64_t>(fy);
  const int64_t iz = static_cast<int64_t>(fz);
  const double tx = Fade(p.x() - fx), ty = Fade(p.y() - fy), tz = Fade(p.z() - fz);
  double v = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
    v += w * LatticeValue(ix + dx, iy + dy, iz + dz, seed);
  }
  return v;
}

Camera LookAtCamera(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                    const Eigen::Matrix3d& K, int width, int height,
                    double depth_min, double depth_max) {
  const Eigen::Vector3d z = (target - center).normalized();
  const Eigen::Vector3d down = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d x = down.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  Camera cam;
  cam.K = K;
  cam.T.setIdentity();
  cam.T.topLeftCorner<3, 3>() = R;
  cam.T.topRightCorner<3, 1>() = -R * center;
  cam.width = width;
  cam.height = height;
  cam.depth_min = depth_min;
  cam.depth_max = depth_max;
  return cam;
}

Eigen::Vector3d RayDirection(const Camera& cam, double x, double y) {
  // Camera-frame direction with unit z, so the ray parameter is the depth.
  const Eigen::Vector3d d_cam = cam.K.inverse() * Eigen::Vector3d(x, y, 1.0);
  return cam.Rotation().transpose() * (d_cam / d_cam.z());
}

}  // namespace

double Texture::Albedo(const Eigen::Vector3d& p, int channel) const {
  if (flat_radius > 0.0 && (p - flat_center).norm() < flat_radius) return base;
  double sum = 0.0;
  double norm = 0.0;
  double cell = cell_size;
  double weight = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += weight * (2.0 * ValueNoise(p / cell, seed + 0x1000 * o + 0x100000 * channel) - 1.0);
    norm += weight;
    cell *= 0.5;
    weight *= 0.5;
  }
  return std::clamp(base + amplitude * sum / norm, 0.0, 1.0);
}

std::optional<double> Surface::Intersect(const Eigen::Vector3d& origin,
                                         const Eigen::Vector3d& dir,
                                         double t_min) const {
  if (kind == SurfaceKind::kSphere) {
    const Eigen::Vector3d oc = origin - center;
    const double a = dir.squaredNorm();
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = (-b - s) / a;
    const double t1 = (-b + s) / a;
    if (t0 > t_min) return t0;
    if (t1 > t_min) return t1;
    return std::nullopt;
  }
  const double denom = normal.dot(dir);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = normal.dot(center - origin) / denom;
  if (!(t > t_min)) return std::nullopt;
  if (kind == SurfaceKind::kRectangle) {
    const Eigen::Vector3d q = origin + t * dir - center;
    if (std::abs(q.dot(axis_u)) > half_u || std::abs(q.dot(axis_v)) > half_v) {
      return std::nullopt;
    }
  }
  return t;
}

Eigen::Vector3d Surface::NormalAt(const Eigen::Vector3d& p) const {
  if (kind == SurfaceKind::kSphere) return (p - center).normalized();
  return normal.normalized();
}

void Scene::Validate() const {
  if (channels != 1 && channels != 3) throw std::invalid_argument("scene: channels must be 1 or 3");
  if (cameras.empty()) throw std::invalid_argument("scene: no cameras");
  if (lights.size() != cameras.size()) {
    throw std::invalid_argument("scene: need one lighting entry per camera");
  }
  for (const Camera& cam : cameras) cam.Validate();
  for (const Surface& s : surfaces) {
    if (s.kind == SurfaceKind::kSphere && !(s.radius > 0.0)) {
      throw std::invalid_argument("scene: sphere radius must be positive");
    }
    if (s.kind == SurfaceKind::kRectangle && !(s.half_u > 0.0 && s.half_v > 0.0)) {
      throw std::invalid_argument("scene: rectangle extents must be positive");
    }
  }
}

std::optional<Hit> CastRay(const Scene& scene, const Camera& cam, double x,
                           double y) {
  const Eigen::Vector3d origin = cam.Center();
  const Eigen::Vector3d dir = RayDirection(cam, x, y);
  std::optional<Hit> best;
  for (size_t s = 0; s < scene.surfaces.size(); ++s) {
    const auto t = scene.surfaces[s].Intersect(origin, dir, kRayEpsilon);
    if (t && (!best || *t < best->depth)) {
      best = Hit{*t, static_cast<int>(s), origin + *t * dir};
    }
  }
  return best;
}

Render RenderView(const Scene& scene, int view) {
  scene.Validate();
  if (view < 0 || view >= static_cast<int>(scene.cameras.size())) {
    throw std::invalid_argument("render: view index out of range");
  }
  const Camera& cam = scene.cameras[view];
  const ViewLighting& light = scene.lights[view];
  const int w = cam.width;
  const int h = cam.height;
  const int num_cams = static_cast<int>(scene.cameras.size());
  const Eigen::Vector3d to_light = -scene.light_direction.normalized();

  Render out;
  out.image = Image(w, h, scene.channels);
  out.depth = DepthMap(w, h);
  out.labels.assign(num_cams, Grid<uint8_t>(w, h, 1));
  std::vector<double> clean(static_cast<size_t>(w) * h * scene.channels, 0.0);

  ParallelFor(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const auto hit = CastRay(scene, cam, x, y);
      if (!hit) {
        for (int j = 0; j < num_cams; ++j) {
          out.labels[j](x, y) = static_cast<uint8_t>(Covisibility::kNoSurface);
        }
        continue;
      }
      const Surface& surface = scene.surfaces[hit->surface];
      const double shade =
          scene.ambient +
          (1.0 - scene.ambient) * std::max(0.0, surface.NormalAt(hit->point).dot(to_light));
      for (int c = 0; c < scene.channels; ++c) {
        clean[(static_cast<size_t>(y) * w + x) * scene.channels + c] =
            surface.texture.Albedo(hit->point, c) * shade;
      }
      out.depth(x, y) = hit->depth;

      for (int j = 0; j < num_cams; ++j) {
        if (j == view) continue;
        const Camera& other = scene.cameras[j];
        const ViewProjection proj = ProjectWorldPoint(other, hit->point);
        Covisibility label = Covisibility::kCovisible;
        if (!(proj.depth > kMinProjectionDepth) || !proj.coord.valid) {
          label = Covisibility::kOutOfView;
        } else {
          // Segment from the other camera to the point, parameterized on [0, 1].
          const Eigen::Vector3d origin = other.Center();
          const Eigen::Vector3d dir = hit->point - origin;
          for (const Surface& s : scene.surfaces) {
            const auto t = s.Intersect(origin, dir, kRayEpsilon);
            if (t && *t < 1.0 - 1e-9) {
              label = Covisibility::kOccluded;
              break;
            }
          }
        }
        out.labels[j](x, y) = static_cast<uint8_t>(label);
      }
    }
  });

  // Noise is drawn sequentially so the image does not depend on threading.
  std::mt19937_64 rng(SplitMix64(scene.seed ^ (0x5bd1e995ULL * (view + 1))));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < scene.channels; ++c) {
        double v = light.gain * clean[(static_cast<size_t>(y) * w + x) * scene.channels + c] +
                   light.offset;
        if (light.noise_sigma > 0.0) v += light.noise_sigma * noise(rng);
        out.image(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

SceneKind ParseSceneKind(const std::string& name) {
  if (name == "textured_plane") return SceneKind::kTexturedPlane;
  if (name == "lighting_shift") return SceneKind::kLightingShift;
  if (name == "occlusion") return SceneKind::kOcclusion;
  if (name == "textureless_patch") return SceneKind::kTexturelessPatch;
  throw std::invalid_argument("unknown scene kind '" + name + "'");
}

std::string SceneKindName(SceneKind kind) {
  switch (kind) {
    case SceneKind::kTexturedPlane: return "textured_plane";
    case SceneKind::kLightingShift: return "lighting_shift";
    case SceneKind::kOcclusion: return "occlusion";
    case SceneKind::kTexturelessPatch: return "textureless_patch";
  }
  return "unknown";
}

Scene MakeAblationScene(SceneKind kind, uint64_t seed) {
  constexpr int kWidth = 128;
  constexpr int kHeight = 96;
  constexpr double kFocal = 200.0;
  constexpr double kPlaneDepth = 650.0;
  constexpr double kDepthMin = 425.0;
  constexpr double kDepthInterval = 4.0;
  constexpr double kDepthMax = kDepthMin + kDepthInterval * 127;

  Eigen::Matrix3d K;
  K << kFocal, 0.0, (kWidth - 1) / 2.0,
       0.0, kFocal, (kHeight - 1) / 2.0,
       0.0, 0.0, 1.0;

  Scene scene;
  scene.seed = seed;

  Surface plane;
  plane.kind = SurfaceKind::kPlane;
  plane.center = Eigen::Vector3d(0.0, 0.0, kPlaneDepth);
  plane.normal = -Eigen::Vector3d::UnitZ();
  plane.texture.seed = SplitMix64(seed);
  plane.texture.base = 0.5;
  plane.texture.amplitude = 0.35;
  plane.texture.cell_size = 20.0;
  plane.texture.octaves = 2;
  if (kind == SceneKind::kTexturelessPatch) {
    plane.texture.flat_center = plane.center;
    plane.texture.flat_radius = 80.0;
  }
  scene.surfaces.push_back(plane);

  const Eigen::Vector3d target(0.0, 0.0, kPlaneDepth);
  scene.cameras.push_back(LookAtCamera(Eigen::Vector3d::Zero(), target, K, kWidth,
                                       kHeight, kDepthMin, kDepthMax));
  // Views 1-3 sit on the +x side of the reference, 4-6 on the -x side.
  const double angles_deg[6] = {-25.0, 0.0, 25.0, 155.0, 180.0, 205.0};
  const double radii[6] = {80.0, 140.0, 110.0, 95.0, 125.0, 65.0};
  for (int k = 0; k < 6; ++k) {
    const double a = angles_deg[k] * M_PI / 180.0;
    const Eigen::Vector3d c(radii[k] * std::cos(a), radii[k] * std::sin(a), 0.0);
    scene.cameras.push_back(LookAtCamera(c, target, K, kWidth, kHeight, kDepthMin, kDepthMax));
  }
  scene.lights.assign(scene.cameras.size(), ViewLighting{});

  if (kind == SceneKind::kLightingShift) {
    for (int k = 1; k <= 6; ++k) scene.lights[k].offset = (k % 2 == 1) ? 0.1 : -0.1;
  }
  if (kind == SceneKind::kOcclusion) {
    Surface slab;
    slab.kind = SurfaceKind::kRectangle;
    slab.center = Eigen::Vector3d(185, 0.0, 200);
    slab.normal = -Eigen::Vector3d::UnitZ();
    slab.half_u = 115;
    slab.half_v = 200.0;
    slab.texture = plane.texture;
    slab.texture.seed = SplitMix64(seed ^ 0xabcdefULL);
    slab.texture.flat_radius = 0.0;
    scene.surfaces.push_back(slab);
    for (ViewLighting& l : scene.lights) l.noise_sigma = 0.005;
  }
  return scene;
}

std::vector<Eigen::Vector3d> SampleVisibleSurface(const Scene& scene, int stride) {
  if (stride < 1) throw std::invalid_argument("sample_surface: stride must be >= 1");
  std::vector<Eigen::Vector3d> points;
  for (const Camera& cam : scene.cameras) {
    for (int y = 0; y < cam.height; y += stride) {
      for (int x = 0; x < cam.width; x += stride) {
        if (const auto hit = CastRay(scene, cam, x, y)) points.push_back(hit->point);
      }
    }
  }
  return points;
}

}  // namespace rmvs
