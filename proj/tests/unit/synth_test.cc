#include "rmvs/synth.h"

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.h"
#include "test_util.h"

namespace rmvs {
namespace {

using testing::MakeCamera;

const Render& OcclusionRender(int view) {
  static const std::vector<Render> renders = [] {
    const Scene s = MakeAblationScene(SceneKind::kOcclusion, 0);
    std::vector<Render> r;
    for (size_t i = 0; i < s.cameras.size(); ++i) r.push_back(RenderView(s, static_cast<int>(i)));
    return r;
  }();
  return renders[view];
}

TEST(Synth, SameSeedIsBitIdentical) {
  for (SceneKind kind : {SceneKind::kTexturedPlane, SceneKind::kOcclusion}) {
    const Scene a = MakeAblationScene(kind, 7);
    const Scene b = MakeAblationScene(kind, 7);
    for (int v : {0, 3}) {
      const Render ra = RenderView(a, v);
      const Render rb = RenderView(b, v);
      EXPECT_EQ(ra.image, rb.image);
      EXPECT_EQ(ra.depth, rb.depth);
      EXPECT_EQ(ra.labels, rb.labels);
    }
  }
  EXPECT_NE(RenderView(MakeAblationScene(SceneKind::kTexturedPlane, 1), 0).image,
            RenderView(MakeAblationScene(SceneKind::kTexturedPlane, 2), 0).image);
}

Scene SinglePlaneScene(const std::vector<Camera>& cams, double depth) {
  Scene s;
  Surface plane;
  plane.center = Eigen::Vector3d(0, 0, depth);
  plane.normal = -Eigen::Vector3d::UnitZ();
  plane.texture.cell_size = 2.0;
  s.surfaces.push_back(plane);
  s.cameras = cams;
  s.lights.assign(cams.size(), ViewLighting{});
  return s;
}

TEST(Synth, FrontoParallelPlaneHasConstantDepth) {
  const Camera cam = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
  const Render r = RenderView(SinglePlaneScene({cam}, 12.5), 0);
  for (double d : r.depth.vec()) EXPECT_NEAR(d, 12.5, 1e-12);
  r.image.ValidateIntensities();
}

TEST(Synth, IdenticalCamerasRenderIdentically) {
  const Camera cam = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.2, 0.1, 0));
  const Scene s = SinglePlaneScene({cam, cam}, 9.0);
  const Render a = RenderView(s, 0);
  const Render b = RenderView(s, 1);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.depth, b.depth);
}

TEST(Synth, TexturedPlaneHasNoOcclusion) {
  const Scene s = MakeAblationScene(SceneKind::kTexturedPlane, 0);
  ASSERT_EQ(s.cameras.size(), 7u);
  const Render r = RenderView(s, 0);
  for (const Grid<uint8_t>& l : r.labels) {
    for (uint8_t v : l.vec()) EXPECT_NE(v, static_cast<uint8_t>(Covisibility::kOccluded));
  }
  for (double d : r.depth.vec()) EXPECT_NEAR(d, 650.0, 1e-9);
}

TEST(Synth, OcclusionSceneOccludesExactlyThreeViews) {
  const Render& r = OcclusionRender(0);
  int occluded_views = 0;
  for (int j = 1; j < 7; ++j) {
    int n = 0;
    for (uint8_t v : r.labels[j].vec()) n += v == static_cast<uint8_t>(Covisibility::kOccluded);
    occluded_views += n > 0;
  }
  EXPECT_EQ(occluded_views, 3);
  // The occluder stays outside the reference frustum.
  for (double d : r.depth.vec()) EXPECT_NEAR(d, 650.0, 1e-9);
}

// Independent oracle: intersect the reference ray with z = 650 analytically,
// then test the segment to camera j against the slab rectangle z = 200,
// |x - 185| <= 115, |y| <= 200.
TEST(Synth, OcclusionLabelsMatchIntersectionOracle) {
  const Scene s = MakeAblationScene(SceneKind::kOcclusion, 0);
  const Render& r = OcclusionRender(0);
  const Camera& ref = s.cameras[0];
  int mismatches = 0, occluded = 0;
  for (int y = 0; y < ref.height; ++y) {
    for (int x = 0; x < ref.width; ++x) {
      const Eigen::Vector3d dir =
          ref.Rotation().transpose() * (ref.K.inverse() * Eigen::Vector3d(x, y, 1.0));
      const Eigen::Vector3d c0 = ref.Center();
      const Eigen::Vector3d p = c0 + dir * ((650.0 - c0.z()) / dir.z());
      for (int j = 1; j < 7; ++j) {
        const Camera& cam = s.cameras[j];
        bool front;
        const Eigen::Vector2d q = oracle::Warp(ref, cam, x, y, (p - c0).dot(ref.ViewingDirection()), &front);
        uint8_t expect;
        if (!front || !cam.Contains(q.x(), q.y())) {
          expect = static_cast<uint8_t>(Covisibility::kOutOfView);
        } else {
          const Eigen::Vector3d o = cam.Center();
          const double t = (200.0 - o.z()) / (p.z() - o.z());
          const Eigen::Vector3d h = o + t * (p - o);
          const bool blocked = t > 0 && t < 1 && std::abs(h.x() - 185.0) <= 115.0 &&
                               std::abs(h.y()) <= 200.0;
          expect = static_cast<uint8_t>(blocked ? Covisibility::kOccluded : Covisibility::kCovisible);
          occluded += blocked;
        }
        mismatches += r.labels[j](x, y) != expect;
      }
    }
  }
  EXPECT_GT(occluded, 1000);
  EXPECT_EQ(mismatches, 0);
}

TEST(Synth, RenderAndWarpAreConsistent) {
  const Scene s = MakeAblationScene(SceneKind::kOcclusion, 0);
  const Render& r0 = OcclusionRender(0);
  for (int j = 1; j < 7; ++j) {
    const Render& rj = OcclusionRender(j);
    const WarpedImage w = InverseWarp(r0.depth, rj.image, s.cameras[0], s.cameras[j]);
    double sum = 0.0;
    int n = 0;
    for (int y = 0; y < r0.depth.height(); ++y) {
      for (int x = 0; x < r0.depth.width(); ++x) {
        if (r0.labels[j](x, y) != static_cast<uint8_t>(Covisibility::kCovisible) || !w.mask(x, y)) {
          continue;
        }
        for (int c = 0; c < 3; ++c) sum += std::abs(w.image(x, y, c) - r0.image(x, y, c));
        n += 3;
      }
    }
    ASSERT_GT(n, 0);
    EXPECT_LT(sum / n, 2e-2) << "view " << j;
  }
}

TEST(Synth, CovisibilityIsSymmetricAtThePointLevel) {
  const Scene s = MakeAblationScene(SceneKind::kOcclusion, 0);
  const Render& r0 = OcclusionRender(0);
  for (int j = 1; j < 7; ++j) {
    const Render& rj = OcclusionRender(j);
    int checked = 0, disagree = 0;
    for (int y = 0; y < r0.depth.height(); ++y) {
      for (int x = 0; x < r0.depth.width(); ++x) {
        if (r0.labels[j](x, y) != static_cast<uint8_t>(Covisibility::kCovisible)) continue;
        const Eigen::Vector3d p = BackprojectToWorld(s.cameras[0], x, y, r0.depth(x, y));
        const ViewProjection q = ProjectWorldPoint(s.cameras[j], p);
        const int qx = static_cast<int>(std::lround(q.coord.x));
        const int qy = static_cast<int>(std::lround(q.coord.y));
        if (qx < 1 || qy < 1 || qx >= s.cameras[j].width - 1 || qy >= s.cameras[j].height - 1) {
          continue;
        }
        // Rounding to the nearest pixel is only meaningful away from label
        // boundaries.
        bool uniform = true;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            uniform = uniform && rj.labels[0](qx + dx, qy + dy) == rj.labels[0](qx, qy);
          }
        }
        if (!uniform) continue;
        ++checked;
        disagree += rj.labels[0](qx, qy) != static_cast<uint8_t>(Covisibility::kCovisible);
      }
    }
    ASSERT_GT(checked, 1000);
    EXPECT_EQ(disagree, 0) << "view " << j;
  }
}

TEST(Synth, LightingChangesOnlyTheImage) {
  const Scene plain = MakeAblationScene(SceneKind::kTexturedPlane, 3);
  const Scene lit = MakeAblationScene(SceneKind::kLightingShift, 3);
  for (int v : {0, 1, 2}) {
    const Render a = RenderView(plain, v);
    const Render b = RenderView(lit, v);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.labels, b.labels);
    if (v == 0) {
      EXPECT_EQ(a.image, b.image);
    } else {
      EXPECT_NE(a.image, b.image);
    }
  }
}

TEST(Synth, TexturelessPatchIsExactlyConstant) {
  const Scene s = MakeAblationScene(SceneKind::kTexturelessPatch, 0);
  const Render r = RenderView(s, 0);
  const Camera& cam = s.cameras[0];
  double first = -1.0;
  int inside = 0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d p = BackprojectToWorld(cam, x, y, r.depth(x, y));
      if ((p - Eigen::Vector3d(0, 0, 650)).norm() >= 79.0) continue;
      if (first < 0) first = r.image(x, y, 0);
      EXPECT_EQ(r.image(x, y, 0), first);
      ++inside;
    }
  }
  EXPECT_GT(inside, 100);
}

TEST(Synth, TextureHasGradients) {
  Texture t;
  t.seed = 5;
  double lo = 1, hi = 0;
  for (int i = 0; i < 200; ++i) {
    const double v = t.Albedo(Eigen::Vector3d(i * 1.7, i * 0.3, 0), 0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GT(hi - lo, 0.1);
  EXPECT_NE(t.Albedo({3, 4, 5}, 0), t.Albedo({3, 4, 5}, 1));
}

TEST(Synth, SceneKindNames) {
  for (SceneKind k : {SceneKind::kTexturedPlane, SceneKind::kLightingShift, SceneKind::kOcclusion,
                      SceneKind::kTexturelessPatch}) {
    EXPECT_EQ(ParseSceneKind(SceneKindName(k)), k);
  }
  EXPECT_THROW(ParseSceneKind("mystery"), std::invalid_argument);
}

TEST(Synth, SphereIntersection) {
  Surface s;
  s.kind = SurfaceKind::kSphere;
  s.center = Eigen::Vector3d(0, 0, 10);
  s.radius = 2.0;
  const auto t = s.Intersect(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), 1e-9);
  ASSERT_TRUE(t.has_value());
  EXPECT_NEAR(*t, 8.0, 1e-12);
  EXPECT_FALSE(s.Intersect(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), 1e-9).has_value());
  EXPECT_NEAR((s.NormalAt({0, 0, 8}) - Eigen::Vector3d(0, 0, -1)).norm(), 0.0, 1e-12);
}

TEST(Synth, VisibleSurfaceSamplesLieOnThePlane) {
  const Scene s = MakeAblationScene(SceneKind::kTexturedPlane, 0);
  const std::vector<Eigen::Vector3d> pts = SampleVisibleSurface(s, 4);
  ASSERT_GT(pts.size(), 100u);
  for (const Eigen::Vector3d& p : pts) EXPECT_NEAR(p.z(), 650.0, 1e-9);
}

TEST(Synth, RejectsBadInput) {
  Scene s = MakeAblationScene(SceneKind::kTexturedPlane, 0);
  EXPECT_THROW(RenderView(s, 7), std::invalid_argument);
  s.lights.pop_back();
  EXPECT_THROW(RenderView(s, 0), std::invalid_argument);
}

}  // namespace
}  // namespace rmvs
