#include "rmvs/image.h"

#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "rmvs/image_io.h"
#include "test_util.h"

namespace rmvs {
namespace {

using testing::MakeCamera;
using testing::RandomCamera;
using testing::RandomImage;
using testing::TempDir;

// Textbook four-weight bilinear interpolation.
double BilinearOracle(const Image& img, double x, double y, int c) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 == img.width() - 1) --x0;
  if (y0 == img.height() - 1) --y0;
  const double ax = x - x0, ay = y - y0;
  return (1 - ax) * (1 - ay) * img(x0, y0, c) + ax * (1 - ay) * img(x0 + 1, y0, c) +
         (1 - ax) * ay * img(x0, y0 + 1, c) + ax * ay * img(x0 + 1, y0 + 1, c);
}

TEST(Bilinear, MatchesFourWeightOracle) {
  std::mt19937_64 rng(1);
  const Image img = RandomImage(rng, 9, 7, 3);
  std::uniform_real_distribution<double> ux(0.0, 8.0), uy(0.0, 6.0);
  for (int i = 0; i < 500; ++i) {
    const double x = ux(rng), y = uy(rng);
    const Sample s = BilinearSample(img, {x, y, true});
    ASSERT_TRUE(s.valid);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(s.value[c], BilinearOracle(img, x, y, c), 1e-14);
  }
}

TEST(Bilinear, IntegerCoordinatesReturnPixels) {
  std::mt19937_64 rng(2);
  const Image img = RandomImage(rng, 5, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      const Sample s = BilinearSample(img, {double(x), double(y), true});
      ASSERT_TRUE(s.valid);
      EXPECT_DOUBLE_EQ(s.value[0], img(x, y));
    }
  }
}

TEST(Bilinear, ValidityBoundary) {
  const Image img(5, 4, 1, 0.5);
  EXPECT_TRUE(BilinearSample(img, {4.0, 3.0, true}).valid);
  EXPECT_TRUE(BilinearSample(img, {0.0, 0.0, true}).valid);
  EXPECT_TRUE(BilinearSample(img, {4.0 + 1e-12, 1.0, true}).valid);
  EXPECT_TRUE(BilinearSample(img, {-1e-12, 1.0, true}).valid);
  EXPECT_FALSE(BilinearSample(img, {4.0 + 1e-8, 1.0, true}).valid);
  EXPECT_FALSE(BilinearSample(img, {-1e-8, 1.0, true}).valid);
  EXPECT_FALSE(BilinearSample(img, {1.0, 1.0, false}).valid);
  EXPECT_FALSE(BilinearSample(img, {std::nan(""), 1.0, true}).valid);
  EXPECT_EQ(BilinearSample(img, {9.0, 1.0, true}).value[0], 0.0);
}

TEST(Bilinear, DerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  const Image img = RandomImage(rng, 8, 8, 3);
  std::uniform_real_distribution<double> u(0.1, 6.9);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng), y = u(rng);
    // Keep the stencil inside one cell.
    if (std::floor(x - 1e-6) != std::floor(x + 1e-6) ||
        std::floor(y - 1e-6) != std::floor(y + 1e-6)) {
      continue;
    }
    const SampleDerivative d = BilinearSampleDerivative(img, {x, y, true});
    const Sample s = BilinearSample(img, {x, y, true});
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(d.value[c], s.value[c]);
      const double fx = (BilinearSample(img, {x + 1e-6, y, true}).value[c] -
                         BilinearSample(img, {x - 1e-6, y, true}).value[c]) / 2e-6;
      const double fy = (BilinearSample(img, {x, y + 1e-6, true}).value[c] -
                         BilinearSample(img, {x, y - 1e-6, true}).value[c]) / 2e-6;
      EXPECT_NEAR(d.dx[c], fx, 1e-8);
      EXPECT_NEAR(d.dy[c], fy, 1e-8);
    }
  }
}

TEST(ImageGradient, CentralInsideOneSidedAtBorder) {
  Image img(4, 3, 1);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) img(x, y) = x * x + 10.0 * y;
  }
  const GradientImage g = ImageGradient(img);
  EXPECT_DOUBLE_EQ(g.gx(0, 0), 1.0);   // 1 - 0
  EXPECT_DOUBLE_EQ(g.gx(1, 0), 2.0);   // (4 - 0) / 2
  EXPECT_DOUBLE_EQ(g.gx(2, 1), 4.0);   // (9 - 1) / 2
  EXPECT_DOUBLE_EQ(g.gx(3, 2), 5.0);   // 9 - 4
  EXPECT_DOUBLE_EQ(g.gy(1, 0), 10.0);
  EXPECT_DOUBLE_EQ(g.gy(1, 1), 10.0);
  EXPECT_DOUBLE_EQ(g.gy(1, 2), 10.0);
  EXPECT_THROW(ImageGradient(Image(1, 5, 1)), std::invalid_argument);
}

TEST(InverseWarp, IdentityReproducesImage) {
  std::mt19937_64 rng(4);
  const Camera cam = RandomCamera(rng, 20, 15);
  const Image img = RandomImage(rng, 20, 15, 3);
  const WarpedImage w = InverseWarp(DepthMap(20, 15, 10.0), img, cam, cam);
  EXPECT_EQ(w.mask.CountValid(), 20 * 15);
  for (size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(w.image.vec()[i], img.vec()[i], 1e-12);
}

TEST(InverseWarp, InvalidDepthAndShapeChecks) {
  const Camera cam = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 6, 5);
  const Image img(6, 5, 1, 0.7);
  DepthMap d(6, 5, 8.0);
  d(2, 2) = 0.0;
  d(3, 3) = -1.0;
  const WarpedImage w = InverseWarp(d, img, cam, cam);
  EXPECT_EQ(w.mask(2, 2), 0);
  EXPECT_EQ(w.mask(3, 3), 0);
  EXPECT_EQ(w.image(2, 2), 0.0);
  EXPECT_EQ(w.mask.CountValid(), 28);
  EXPECT_THROW(InverseWarp(DepthMap(5, 5, 1.0), img, cam, cam), std::invalid_argument);
}

TEST(WarpByHomography, MatchesInverseWarpAtConstantDepth) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 5; ++t) {
    const Camera a = RandomCamera(rng, 24, 18);
    const Camera b = RandomCamera(rng, 24, 18);
    const Image img = RandomImage(rng, 24, 18, 1);
    const double d = 12.0;
    const WarpedImage iw = InverseWarp(DepthMap(24, 18, d), img, a, b);
    const WarpedImage hw = WarpByHomography(HomographyForDepth(a, b, d), img, 24, 18, b);
    for (size_t i = 0; i < iw.image.size(); ++i) {
      EXPECT_NEAR(iw.image.vec()[i], hw.image.vec()[i], 1e-9);
    }
  }
}

TEST(ImageIo, PngRoundTrip16Bit) {
  TempDir dir("png");
  std::mt19937_64 rng(6);
  for (int channels : {1, 3}) {
    const Image img = RandomImage(rng, 7, 5, channels);
    WriteImagePng(dir / "a.png", img, 16);
    const Image back = ReadImagePng(dir / "a.png");
    ASSERT_EQ(back.channels(), channels);
    for (size_t i = 0; i < img.size(); ++i) {
      EXPECT_NEAR(back.vec()[i], img.vec()[i], 0.5 / 65535 + 1e-12);
    }
    WriteImagePng(dir / "b.png", img, 8);
    const Image back8 = ReadImagePng(dir / "b.png");
    for (size_t i = 0; i < img.size(); ++i) {
      EXPECT_NEAR(back8.vec()[i], img.vec()[i], 0.5 / 255 + 1e-12);
    }
  }
  EXPECT_THROW(ReadImagePng(dir / "missing.png"), std::runtime_error);
}

TEST(ImageIo, PfmRoundTripIsFloatExact) {
  TempDir dir("pfm");
  Grid<double> g(5, 3, 1);
  for (int i = 0; i < 15; ++i) g.vec()[i] = 650.0 + i * 0.25 - (i == 7 ? 650.0 : 0.0);
  WritePfm(dir / "d.pfm", g);
  const Grid<double> back = ReadPfm(dir / "d.pfm");
  EXPECT_EQ(back, g);
  // Rows are stored bottom-up: the first float in the file is the last row.
  std::ifstream in(dir / "d.pfm", std::ios::binary);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(l1, "Pf");
  EXPECT_EQ(l2, "5 3");
  float first;
  in.read(reinterpret_cast<char*>(&first), 4);
  EXPECT_EQ(first, static_cast<float>(g(0, 2)));
}

TEST(ImageIo, MaskRoundTrip) {
  TempDir dir("mask");
  std::mt19937_64 rng(7);
  const ValidityMask m = testing::RandomMask(rng, 9, 4, 0.5);
  WriteMaskPng(dir / "m.png", m);
  const Grid<uint8_t> back = ReadMaskPng(dir / "m.png");
  for (size_t i = 0; i < m.size(); ++i) EXPECT_EQ(back.vec()[i] != 0, m.vec()[i] != 0);
}

TEST(ImageIo, AtomicWriteLeavesNothingOnFailure) {
  TempDir dir("atomic");
  const std::string target = dir / "out.txt";
  EXPECT_THROW(WriteFileAtomically(target,
                                   [](const std::string& tmp) {
                                     std::ofstream(tmp) << "partial";
                                     throw std::runtime_error("boom");
                                   }),
               std::runtime_error);
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
  WriteFileAtomically(target, [](const std::string& tmp) { std::ofstream(tmp) << "ok"; });
  EXPECT_TRUE(std::filesystem::exists(target));
}

}  // namespace
}  // namespace rmvs
