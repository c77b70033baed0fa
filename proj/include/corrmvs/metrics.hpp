#ifndef CORRMVS_METRICS_HPP_
#define CORRMVS_METRICS_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "corrmvs/error.hpp"
#include "corrmvs/grid.hpp"

namespace corrmvs
{

inline constexpr double kInlierRatio = 1.25;

struct MetricsRecord
{
  double abs_rel = 0.0;
  double abs = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double delta_125 = 0.0;  // percent
  std::size_t valid_count = 0;
};

/**
 * Depth metrics over the M pixels valid in both maps:
 *   abs_rel = mean |gt - d| / gt        abs  = mean |gt - d|
 *   sq_rel  = mean |gt - d|^2 / gt      rmse = sqrt(mean |gt - d|^2)
 *   delta   = 100 * fraction with max(gt / d, d / gt) < 1.25
 */
inline MetricsRecord compute_metrics(const DepthMap & pred, const DepthMap & gt)
{
  if (!pred.same_shape(gt)) { fail(ErrorKind::kShape, "prediction and ground truth differ in size"); }
  double abs_rel = 0.0, abs = 0.0, sq_rel = 0.0, sq = 0.0;
  std::size_t inliers = 0, m = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    if (!gt.valid(i) || !pred.valid(i)) { continue; }
    const double g = gt[i], d = pred[i];
    const double e = std::abs(g - d);
    abs_rel += e / g;
    abs += e;
    sq_rel += e * e / g;
    sq += e * e;
    if (std::max(g / d, d / g) < kInlierRatio) { ++inliers; }
    ++m;
  }
  if (m == 0) { fail(ErrorKind::kEmptyMask, "no pixel is valid in both prediction and ground truth"); }
  const double n = double(m);
  return {abs_rel / n, abs / n, sq_rel / n, std::sqrt(sq / n), 100.0 * double(inliers) / n, m};
}

/// Mean absolute error over pixels valid in both maps.
inline double mean_l1(const DepthMap & pred, const DepthMap & gt)
{
  if (!pred.same_shape(gt)) { fail(ErrorKind::kShape, "prediction and ground truth differ in size"); }
  double s = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    if (!gt.valid(i) || !pred.valid(i)) { continue; }
    s += std::abs(gt[i] - pred[i]);
    ++m;
  }
  if (m == 0) { fail(ErrorKind::kEmptyMask, "no pixel is valid in both prediction and ground truth"); }
  return s / double(m);
}

struct LossConfig
{
  double gamma = 0.8;
  int iterations = 12;

  void validate() const
  {
    if (!(gamma > 0.0 && gamma <= 1.0)) { fail(ErrorKind::kConfig, "gamma must lie in (0, 1]"); }
    if (iterations < 1) { fail(ErrorKind::kConfig, "loss needs at least one iteration"); }
  }
};

/// Weight of iterate t (1-based) among N: gamma^(N - t), so the last iterate weighs 1.
inline double iterate_weight(int t, int n, double gamma) { return std::pow(gamma, double(n - t)); }

/// sum_t gamma^(N-t) * L1(D_t^low, D_gt^low) + L1(D, D_gt), with L1 a mean over valid pixels.
inline double sequence_loss(
  std::span<const DepthMap> iterates_low, const DepthMap & gt_low, const DepthMap & final_depth, const DepthMap & gt,
  const LossConfig & cfg)
{
  cfg.validate();
  if (iterates_low.size() != std::size_t(cfg.iterations)) {
    fail(ErrorKind::kConfig, "expected " + std::to_string(cfg.iterations) + " iterates, got " +
                               std::to_string(iterates_low.size()));
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < iterates_low.size(); ++t) {
    loss += iterate_weight(int(t) + 1, cfg.iterations, cfg.gamma) * mean_l1(iterates_low[t], gt_low);
  }
  return loss + mean_l1(final_depth, gt);
}

}  // namespace corrmvs

#endif  // CORRMVS_METRICS_HPP_
