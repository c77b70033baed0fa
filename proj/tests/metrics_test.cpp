#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "support.hpp"

using namespace corrmvs;
using namespace testing_support;

namespace
{

DepthMap random_depth(SplitMix64 & rng, std::size_t h, std::size_t w)
{
  DepthMap d(h, w);
  for (auto & v : d.data()) { v = rng.uniform(0.5, 10.0); }
  return d;
}

TEST(Metrics, PerfectPrediction)
{
  SplitMix64 rng(1);
  const DepthMap gt = random_depth(rng, 7, 9);
  const MetricsRecord m = compute_metrics(gt, gt);
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(m.abs, 0.0);
  EXPECT_EQ(m.sq_rel, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.delta_125, 100.0);
  EXPECT_EQ(m.valid_count, 63u);
}

TEST(Metrics, DoubledPrediction)
{
  // gt = 1, 2, 4, 8; pred = 2 gt. |e| = gt, so abs_rel = 1, abs = 15/4,
  // sq_rel = mean gt = 15/4, rmse = sqrt(85/4), no inliers.
  DepthMap gt(2, 2), pred(2, 2);
  const double g[] = {1, 2, 4, 8};
  for (std::size_t i = 0; i < 4; ++i) {
    gt[i] = g[i];
    pred[i] = 2 * g[i];
  }
  const MetricsRecord m = compute_metrics(pred, gt);
  EXPECT_DOUBLE_EQ(m.abs_rel, 1.0);
  EXPECT_DOUBLE_EQ(m.abs, 3.75);
  EXPECT_DOUBLE_EQ(m.sq_rel, 3.75);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(21.25));
  EXPECT_EQ(m.delta_125, 0.0);
}

TEST(Metrics, InlierThresholdIsStrict)
{
  DepthMap gt(1, 4, 1.0), pred(1, 4);
  pred[0] = 1.25;
  pred[1] = 0.8;  // 1 / 0.8 = 1.25
  pred[2] = 1.2;
  pred[3] = 1.0 / 1.2;
  EXPECT_DOUBLE_EQ(compute_metrics(pred, gt).delta_125, 50.0);
}

TEST(Metrics, OnlyJointlyValidPixelsCount)
{
  DepthMap gt(2, 2, 2.0), pred(2, 2, 2.0);
  gt[0] = 0.0;
  pred[1] = -1.0;
  pred[2] = 3.0;
  const MetricsRecord m = compute_metrics(pred, gt);
  EXPECT_EQ(m.valid_count, 2u);
  EXPECT_DOUBLE_EQ(m.abs_rel, 0.25);
  EXPECT_DOUBLE_EQ(m.delta_125, 50.0);
}

TEST(Metrics, ScaleInvariantRatios)
{
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const DepthMap gt = random_depth(rng, 5, 6), pred = random_depth(rng, 5, 6);
    const double s = rng.uniform(0.1, 10.0);
    DepthMap gs = gt, ps = pred;
    for (auto & v : gs.data()) { v *= s; }
    for (auto & v : ps.data()) { v *= s; }
    const MetricsRecord a = compute_metrics(pred, gt), b = compute_metrics(ps, gs);
    EXPECT_NEAR(a.abs_rel, b.abs_rel, 1e-12);
    EXPECT_EQ(a.delta_125, b.delta_125);
    EXPECT_NEAR(a.abs * s, b.abs, 1e-9 * b.abs);
    EXPECT_NEAR(a.rmse * s, b.rmse, 1e-9 * b.rmse);
    EXPECT_NEAR(a.sq_rel * s, b.sq_rel, 1e-9 * b.sq_rel);
  }
}

TEST(Metrics, PixelOrderDoesNotMatter)
{
  SplitMix64 rng(3);
  const DepthMap gt = random_depth(rng, 6, 6), pred = random_depth(rng, 6, 6);
  std::vector<std::size_t> perm(36);
  for (std::size_t i = 0; i < 36; ++i) { perm[i] = i; }
  for (std::size_t i = 35; i > 0; --i) { std::swap(perm[i], perm[rng.next() % (i + 1)]); }
  DepthMap gp(6, 6), pp(6, 6);
  for (std::size_t i = 0; i < 36; ++i) {
    gp[i] = gt[perm[i]];
    pp[i] = pred[perm[i]];
  }
  const MetricsRecord a = compute_metrics(pred, gt), b = compute_metrics(pp, gp);
  EXPECT_NEAR(a.abs_rel, b.abs_rel, 1e-12);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
  EXPECT_EQ(a.delta_125, b.delta_125);
}

TEST(Metrics, EmptyMaskAndShapeErrors)
{
  try {
    compute_metrics(DepthMap(2, 2, 1.0), DepthMap(2, 2, 0.0));
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyMask);
  }
  try {
    compute_metrics(DepthMap(2, 2, 1.0), DepthMap(2, 3, 1.0));
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(IterateWeight, FirstOfTwelve)
{
  EXPECT_NEAR(iterate_weight(1, 12, 0.8), 0.08589934592, 1e-12);
  EXPECT_EQ(iterate_weight(12, 12, 0.8), 1.0);
  for (int t = 1; t < 12; ++t) { EXPECT_LT(iterate_weight(t, 12, 0.8), iterate_weight(t + 1, 12, 0.8)); }
}

TEST(SequenceLoss, ExactIteratesGiveZero)
{
  SplitMix64 rng(4);
  const DepthMap gt_low = random_depth(rng, 3, 4), gt = random_depth(rng, 24, 32);
  const std::vector<DepthMap> its(12, gt_low);
  EXPECT_EQ(sequence_loss(its, gt_low, gt, gt, LossConfig{}), 0.0);
}

TEST(SequenceLoss, SingleIterateHandValue)
{
  const DepthMap gt(2, 2, 2.0);
  const std::vector<DepthMap> its{DepthMap(2, 2, 2.5)};
  LossConfig cfg;
  cfg.iterations = 1;
  EXPECT_DOUBLE_EQ(sequence_loss(its, gt, gt, gt, cfg), 0.5);
  // Two iterates off by 1 and 0.5 with gamma 0.5: 0.5 * 1 + 1 * 0.5 + final 0.25.
  cfg.iterations = 2;
  cfg.gamma = 0.5;
  const std::vector<DepthMap> two{DepthMap(2, 2, 3.0), DepthMap(2, 2, 1.5)};
  EXPECT_DOUBLE_EQ(sequence_loss(two, gt, DepthMap(2, 2, 2.25), gt, cfg), 1.25);
}

TEST(SequenceLoss, GrowsWithIterateError)
{
  SplitMix64 rng(5);
  const DepthMap gt = random_depth(rng, 4, 4);
  double prev = -1.0;
  for (double off : {0.0, 0.1, 0.2, 0.4, 0.8}) {
    std::vector<DepthMap> its(12, gt);
    for (auto & d : its) {
      for (auto & v : d.data()) { v += off; }
    }
    const double l = sequence_loss(its, gt, gt, gt, LossConfig{});
    EXPECT_GT(l, prev);
    prev = l;
  }
}

TEST(SequenceLoss, ConfigErrors)
{
  const DepthMap gt(2, 2, 1.0);
  const std::vector<DepthMap> its(3, gt);
  auto kind_of = [&](const LossConfig & cfg) {
    try {
      sequence_loss(its, gt, gt, gt, cfg);
    } catch (const Error & e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  EXPECT_EQ(kind_of(LossConfig{}), ErrorKind::kConfig);
  LossConfig bad;
  bad.iterations = 3;
  bad.gamma = 1.5;
  EXPECT_EQ(kind_of(bad), ErrorKind::kConfig);
  bad.gamma = 0.9;
  EXPECT_NO_THROW(sequence_loss(its, gt, gt, gt, bad));
}

}  // namespace
