#include "rmvs/sweep.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "test_util.h"

namespace rmvs {
namespace {

using testing::MakeCamera;
using testing::RandomImage;

Camera RingCamera(double angle_deg) {
  // Center on a circle of radius 12.5 around the reference mid-range point
  // (0, 0, 12.5), so the triangulation angle equals angle_deg.
  const double a = angle_deg * M_PI / 180.0;
  const Eigen::Vector3d center(12.5 * std::sin(a), 0.0, 12.5 - 12.5 * std::cos(a));
  return MakeCamera(Eigen::Matrix3d::Identity(), -center);
}

TEST(SelectViews, RanksByDistanceToTargetAngle) {
  const std::vector<Camera> cams = {
      MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()),
      RingCamera(2.0), RingCamera(40.0), RingCamera(10.0), RingCamera(12.0)};
  const ViewSelection s = SelectViews(cams, 0, 3, 10.0);
  EXPECT_EQ(s.views, (std::vector<int>{3, 4, 1}));
  EXPECT_FALSE(s.truncated);
  const ViewSelection all = SelectViews(cams, 0, 6, 10.0);
  EXPECT_EQ(all.views, (std::vector<int>{3, 4, 1, 2}));
  EXPECT_TRUE(all.truncated);
  EXPECT_THROW(SelectViews(cams, 5, 1), std::invalid_argument);
}

TEST(SelectViews, TieBreaksOnShorterBaseline) {
  // Mirror images tie on angle and baseline, so index order decides.
  const std::vector<Camera> cams = {
      MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()),
      RingCamera(10.0), RingCamera(-10.0)};
  EXPECT_EQ(SelectViews(cams, 0, 2).views, (std::vector<int>{1, 2}));
}

TEST(Hypotheses, EvenlySpacedWithExactEnds) {
  const std::vector<double> d = UniformDepthHypotheses(425.0, 933.0, 128);
  ASSERT_EQ(d.size(), 128u);
  EXPECT_EQ(d.front(), 425.0);
  EXPECT_EQ(d.back(), 933.0);
  for (int i = 1; i < 128; ++i) EXPECT_NEAR(d[i] - d[i - 1], 4.0, 1e-12);
  EXPECT_THROW(UniformDepthHypotheses(5.0, 5.0, 10), std::invalid_argument);
  EXPECT_THROW(UniformDepthHypotheses(1.0, 5.0, 1), std::invalid_argument);
}

struct Rig {
  Camera ref;
  Image ref_img;
  std::vector<View> views;
  std::vector<double> hyps;
};

Rig RandomRig(std::mt19937_64& rng, int M, int channels = 1) {
  Rig r;
  r.ref = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 16, 12, 15.0);
  r.ref_img = RandomImage(rng, 16, 12, channels);
  for (int m = 0; m < M; ++m) {
    const Eigen::Vector3d t(0.3 * (m - M / 2.0), 0.1 * m, 0.0);
    r.views.push_back({RandomImage(rng, 16, 12, channels),
                       MakeCamera(Eigen::Matrix3d::Identity(), t, 16, 12, 15.0)});
  }
  r.hyps = UniformDepthHypotheses(5.0, 20.0, 8);
  return r;
}

TEST(CostVolume, SingleViewMatchesWarpOracle) {
  std::mt19937_64 rng(20);
  const Rig r = RandomRig(rng, 1, 3);
  for (PhotometricCost cost : {PhotometricCost::kNaive, PhotometricCost::kFirstOrder}) {
    LossConfig cfg;
    cfg.cost = cost;
    cfg.num_views = 1;
    cfg.top_k = 1;
    const CostVolume v = BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, {});
    for (int d = 0; d < 8; ++d) {
      Image warped;
      ValidityMask mask;
      oracle::InverseWarp(DepthMap(16, 12, r.hyps[d]), r.views[0].image, r.ref,
                          r.views[0].camera, &warped, &mask);
      for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 16; ++x) {
          const double c = v.cost[v.index(x, y, d)];
          if (!mask(x, y)) {
            EXPECT_EQ(c, CostVolume::kNoSignal);
            continue;
          }
          const double o = cost == PhotometricCost::kNaive
                               ? oracle::NaiveAt(r.ref_img, warped, x, y)
                               : oracle::FirstOrderAt(r.ref_img, warped, x, y, 0.2);
          EXPECT_NEAR(c, o, 1e-9);
        }
      }
    }
  }
}

TEST(CostVolume, TopKIsMeanOfSmallestPerViewCosts) {
  std::mt19937_64 rng(21);
  const Rig r = RandomRig(rng, 3);
  LossConfig single;
  single.num_views = 1;
  single.top_k = 1;
  std::vector<CostVolume> per_view;
  for (int m = 0; m < 3; ++m) {
    per_view.push_back(BuildCostVolume(r.ref_img, r.ref, std::span(r.views).subspan(m, 1),
                                       r.hyps, single, {}));
  }
  for (int k = 1; k <= 3; ++k) {
    LossConfig cfg;
    cfg.num_views = 3;
    cfg.top_k = k;
    const CostVolume v = BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, {});
    for (size_t i = 0; i < v.cost.size(); ++i) {
      std::vector<double> c;
      for (const CostVolume& p : per_view) {
        if (p.cost[i] < CostVolume::kNoSignal) c.push_back(p.cost[i]);
      }
      if (c.empty()) {
        EXPECT_EQ(v.cost[i], CostVolume::kNoSignal);
        continue;
      }
      std::sort(c.begin(), c.end());
      const int take = std::min<int>(k, c.size());
      double s = 0.0;
      for (int j = 0; j < take; ++j) s += c[j];
      EXPECT_NEAR(v.cost[i], s / take, 1e-12);
    }
  }
}

TEST(CostVolume, ViewOrderDoesNotMatter) {
  std::mt19937_64 rng(22);
  Rig r = RandomRig(rng, 4);
  LossConfig cfg;
  cfg.num_views = 4;
  cfg.top_k = 2;
  const CostVolume a = BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, {});
  std::reverse(r.views.begin(), r.views.end());
  std::swap(r.views[0], r.views[2]);
  const CostVolume b = BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, {});
  for (size_t i = 0; i < a.cost.size(); ++i) EXPECT_NEAR(a.cost[i], b.cost[i], 1e-12);
}

TEST(CostVolume, VarianceIsZeroForConstantImages) {
  std::mt19937_64 rng(23);
  Rig r = RandomRig(rng, 3);
  r.ref_img = Image(16, 12, 1, 0.3);
  for (View& v : r.views) v.image = Image(16, 12, 1, 0.3);
  LossConfig cfg;
  SweepOptions opt;
  opt.aggregation = Aggregation::kVariance;
  opt.window = 3;
  const CostVolume v = BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, opt);
  int observed = 0;
  for (double c : v.cost) {
    if (c == CostVolume::kNoSignal) continue;
    EXPECT_NEAR(c, 0.0, 1e-15);
    ++observed;
  }
  EXPECT_GT(observed, 0);
}

TEST(CostVolume, VarianceMatchesHandComputation) {
  // Identity cameras: every view samples the same pixel.
  const Camera cam = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 4, 3);
  const std::vector<View> views = {{Image(4, 3, 1, 0.2), cam}, {Image(4, 3, 1, 0.6), cam}};
  SweepOptions opt;
  opt.aggregation = Aggregation::kVariance;
  const CostVolume v = BuildCostVolume(Image(4, 3, 1, 0.4), cam, views,
                                       std::vector<double>{6.0, 9.0}, LossConfig(), opt);
  // Values 0.4, 0.2, 0.6: mean 0.4, population variance 0.08 / 3.
  for (double c : v.cost) EXPECT_NEAR(c, 0.08 / 3.0, 1e-15);
}

TEST(CostVolume, Errors) {
  std::mt19937_64 rng(24);
  const Rig r = RandomRig(rng, 2);
  LossConfig cfg;
  cfg.num_views = 3;
  cfg.top_k = 3;
  EXPECT_THROW(BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, {}), std::invalid_argument);
  cfg.top_k = 1;
  SweepOptions opt;
  opt.window = 2;
  EXPECT_THROW(BuildCostVolume(r.ref_img, r.ref, r.views, r.hyps, cfg, opt), std::invalid_argument);
  EXPECT_THROW(BuildCostVolume(r.ref_img, r.ref, r.views, std::vector<double>{5.0, 4.0}, cfg, {}),
               std::invalid_argument);
}

CostVolume OnePixelVolume(std::vector<double> depths, std::vector<double> cost) {
  CostVolume v;
  v.width = 1;
  v.height = 1;
  v.depths = std::move(depths);
  v.cost = std::move(cost);
  return v;
}

TEST(SoftArgmin, MatchesDirectFormula) {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> cost(16);
  for (double& c : cost) c = u(rng);
  const CostVolume v = OnePixelVolume(UniformDepthHypotheses(2.0, 8.0, 16), cost);
  const double t = 0.3;
  double z = 0.0, e = 0.0;
  for (int d = 0; d < 16; ++d) {
    z += std::exp(-cost[d] / t);
    e += std::exp(-cost[d] / t) * v.depths[d];
  }
  const SoftArgminResult r = SoftArgminDepth(v, t);
  EXPECT_NEAR(r.depth(0, 0), e / z, 1e-12);
  double total = 0.0;
  for (int d = 0; d < 16; ++d) {
    EXPECT_NEAR(r.probability.prob[d], std::exp(-cost[d] / t) / z, 1e-12);
    total += r.probability.prob[d];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(SoftArgmin, SubStepAccuracyOnQuadraticCost) {
  // Cost (d - d*)^2 sampled on a coarse grid; the soft-argmin lands between
  // hypotheses, close to a dense-grid oracle.
  const double target = 7.3;
  auto expectation = [&](const std::vector<double>& depths, double t) {
    double z = 0.0, e = 0.0;
    for (double d : depths) {
      const double w = std::exp(-(d - target) * (d - target) / t);
      z += w;
      e += w * d;
    }
    return e / z;
  };
  const std::vector<double> coarse = UniformDepthHypotheses(5.0, 10.0, 11);
  std::vector<double> cost;
  for (double d : coarse) cost.push_back((d - target) * (d - target));
  const SoftArgminResult r = SoftArgminDepth(OnePixelVolume(coarse, cost), 0.5);
  EXPECT_NEAR(r.depth(0, 0), expectation(coarse, 0.5), 1e-12);
  const double dense = expectation(UniformDepthHypotheses(5.0, 10.0, 4096), 0.5);
  EXPECT_NEAR(r.depth(0, 0), dense, 1e-3);
  EXPECT_NEAR(r.depth(0, 0), target, 0.05);
}

TEST(SoftArgmin, ApproachesHardArgminAtLowTemperature) {
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CostVolume v;
  v.width = 5;
  v.height = 4;
  v.depths = UniformDepthHypotheses(1.0, 4.0, 32);
  v.cost.resize(5 * 4 * 32);
  for (double& c : v.cost) c = u(rng);
  const DepthMap hard = HardArgminDepth(v);
  const SoftArgminResult soft = SoftArgminDepth(v, 1e-9);
  for (size_t i = 0; i < hard.size(); ++i) EXPECT_NEAR(soft.depth.vec()[i], hard.vec()[i], 1e-6);
}

TEST(SoftArgmin, SentinelCellsAndEmptyPixels) {
  CostVolume v = OnePixelVolume({1.0, 2.0, 3.0}, {CostVolume::kNoSignal, 0.5, 0.5});
  const SoftArgminResult r = SoftArgminDepth(v, 1.0);
  EXPECT_EQ(r.probability.prob[0], 0.0);
  EXPECT_NEAR(r.depth(0, 0), 2.5, 1e-15);
  v.cost = {CostVolume::kNoSignal, CostVolume::kNoSignal, CostVolume::kNoSignal};
  EXPECT_EQ(SoftArgminDepth(v, 1.0).depth(0, 0), 0.0);
  EXPECT_EQ(HardArgminDepth(v)(0, 0), 0.0);
  EXPECT_THROW(SoftArgminDepth(v, 0.0), std::invalid_argument);
}

TEST(SoftArgmin, LargeCostsDoNotUnderflow) {
  const SoftArgminResult r =
      SoftArgminDepth(OnePixelVolume({1.0, 2.0}, {5000.0, 5001.0}), 1.0);
  EXPECT_NEAR(r.depth(0, 0), 1.0 + 1.0 / (1.0 + std::exp(1.0)), 1e-12);
}

TEST(MedianCost, IgnoresZerosAndSentinels) {
  const CostVolume v = OnePixelVolume({1, 2, 3, 4, 5},
                                      {0.0, 3.0, 1.0, CostVolume::kNoSignal, 2.0});
  EXPECT_EQ(MedianPositiveCost(v), 2.0);
  EXPECT_EQ(MedianPositiveCost(OnePixelVolume({1, 2}, {0.0, 0.0})), 1.0);
}

ProbabilityVolume OnePixelProbability(std::vector<double> prob) {
  ProbabilityVolume p;
  p.width = 1;
  p.height = 1;
  p.depths = UniformDepthHypotheses(10.0, 10.0 + prob.size() - 1, prob.size());
  p.prob = std::move(prob);
  return p;
}

TEST(Confidence, UniformIsFourOverD) {
  const ProbabilityVolume p = OnePixelProbability(std::vector<double>(128, 1.0 / 128));
  const ConfidenceMap c = ComputeConfidence(p, DepthMap(1, 1, 10.0 + 63.5), 0.8);
  EXPECT_NEAR(c.confidence(0, 0), 4.0 / 128, 1e-15);
  EXPECT_EQ(c.filtered(0, 0), 1);
}

TEST(Confidence, OneHotPassesEverywhere) {
  for (int hot : {0, 5, 127}) {
    std::vector<double> prob(128, 0.0);
    prob[hot] = 1.0;
    const ConfidenceMap c =
        ComputeConfidence(OnePixelProbability(prob), DepthMap(1, 1, 10.0 + hot), 0.8);
    EXPECT_EQ(c.confidence(0, 0), 1.0);
    EXPECT_EQ(c.filtered(0, 0), 0);
  }
}

TEST(Confidence, NearestFourWithLeftTies) {
  std::vector<double> prob(8, 0.0);
  for (int i = 0; i < 8; ++i) prob[i] = (i + 1) / 36.0;
  // Estimate 12.5 is halfway between indices 2 and 3: picks 2 (tie goes
  // left), 3, then 1 (tie with 4 at distance 1.5), then 4.
  const ConfidenceMap c = ComputeConfidence(OnePixelProbability(prob), DepthMap(1, 1, 12.5), 0.5);
  EXPECT_NEAR(c.confidence(0, 0), (2 + 3 + 4 + 5) / 36.0, 1e-15);
  EXPECT_EQ(c.filtered(0, 0), 1);
  // At the right end the window shifts inward.
  const ConfidenceMap e = ComputeConfidence(OnePixelProbability(prob), DepthMap(1, 1, 17.0), 0.5);
  EXPECT_NEAR(e.confidence(0, 0), (5 + 6 + 7 + 8) / 36.0, 1e-15);
  EXPECT_EQ(e.filtered(0, 0), 0);
}

TEST(Confidence, InvalidDepthIsFiltered) {
  const ConfidenceMap c =
      ComputeConfidence(OnePixelProbability({0.5, 0.5}), DepthMap(1, 1, 0.0), 0.1);
  EXPECT_EQ(c.confidence(0, 0), 0.0);
  EXPECT_EQ(c.filtered(0, 0), 1);
}

TEST(Refine, ZeroStepsIsIdentityAndLossNeverIncreases) {
  // Fronto-parallel plane with a smooth texture seen by two shifted cameras.
  const int w = 24, h = 18;
  const Camera ref = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), w, h, 20.0);
  auto render = [&](const Camera& cam) {
    Image img(w, h, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double X = (x - cam.K(0, 2)) / cam.K(0, 0) * 10.0 + cam.Center().x();
        const double Y = (y - cam.K(1, 2)) / cam.K(1, 1) * 10.0 + cam.Center().y();
        img(x, y) = 0.5 + 0.3 * std::sin(1.3 * X) * std::cos(1.1 * Y);
      }
    }
    return img;
  };
  ref.Validate();
  std::vector<View> views;
  for (double dx : {-0.5, 0.5}) {
    const Camera cam = MakeCamera(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-dx, 0, 0), w, h, 20.0);
    views.push_back({render(cam), cam});
  }
  const Image src = render(ref);
  LossConfig cfg;
  cfg.num_views = 2;
  cfg.top_k = 1;
  const DepthMap init(w, h, 10.6);
  EXPECT_EQ(RefineDepthDescent(src, ref, views, init, cfg, 0, 0.1), init);
  const double before = TotalLoss(src, ref, views, init, cfg).total;
  const DepthMap refined = RefineDepthDescent(src, ref, views, init, cfg, 15, 0.1);
  const double after = TotalLoss(src, ref, views, refined, cfg).total;
  EXPECT_LT(after, before);
  double err_before = 0.0, err_after = 0.0;
  for (size_t i = 0; i < init.size(); ++i) {
    err_before += std::abs(init.vec()[i] - 10.0);
    err_after += std::abs(refined.vec()[i] - 10.0);
    EXPECT_GE(refined.vec()[i], ref.depth_min);
    EXPECT_LE(refined.vec()[i], ref.depth_max);
  }
  EXPECT_LT(err_after, err_before);
  EXPECT_THROW(RefineDepthDescent(src, ref, views, init, cfg, -1, 0.1), std::invalid_argument);
}

}  // namespace
}  // namespace rmvs
