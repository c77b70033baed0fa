#ifndef CORRMVS_UPSAMPLE_HPP_
#define CORRMVS_UPSAMPLE_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "corrmvs/error.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/nn.hpp"
#include "corrmvs/random.hpp"
#include "corrmvs/refine.hpp"

namespace corrmvs
{

namespace detail
{
/// Source tap pair and weight for output index `o` of a half-pixel-centred 2x
/// upsampling of an axis of length n: src = (o + 0.5) / 2 - 0.5, clamped.
struct Taps
{
  std::size_t lo, hi;
  double frac;
};

inline Taps upsample_taps(std::size_t o, std::size_t n)
{
  double s = (double(o) + 0.5) * 0.5 - 0.5;
  s = std::clamp(s, 0.0, double(n - 1));
  const auto lo = std::size_t(std::floor(s));
  const std::size_t hi = std::min(lo + 1, n - 1);
  return {lo, hi, s - double(lo)};
}
}  // namespace detail

inline DepthMap bilinear_upsample2x(const DepthMap & d)
{
  const std::size_t h = d.height(), w = d.width();
  DepthMap out(2 * h, 2 * w);
  for (std::size_t y = 0; y < 2 * h; ++y) {
    const auto ty = detail::upsample_taps(y, h);
    for (std::size_t x = 0; x < 2 * w; ++x) {
      const auto tx = detail::upsample_taps(x, w);
      const double top = (1.0 - tx.frac) * d(ty.lo, tx.lo) + tx.frac * d(ty.lo, tx.hi);
      const double bot = (1.0 - tx.frac) * d(ty.hi, tx.lo) + tx.frac * d(ty.hi, tx.hi);
      out(y, x) = (1.0 - ty.frac) * top + ty.frac * bot;
    }
  }
  return out;
}

inline FeatureMap bilinear_upsample2x(const FeatureMap & f)
{
  const std::size_t h = f.height(), w = f.width(), c = f.channels();
  FeatureMap out(2 * h, 2 * w, c);
  for (std::size_t y = 0; y < 2 * h; ++y) {
    const auto ty = detail::upsample_taps(y, h);
    for (std::size_t x = 0; x < 2 * w; ++x) {
      const auto tx = detail::upsample_taps(x, w);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1.0 - tx.frac) * f(ty.lo, tx.lo, k) + tx.frac * f(ty.lo, tx.hi, k);
        const double bot = (1.0 - tx.frac) * f(ty.hi, tx.lo, k) + tx.frac * f(ty.hi, tx.hi, k);
        out(y, x, k) = float((1.0 - ty.frac) * top + ty.frac * bot);
      }
    }
  }
  return out;
}

/// Three chained 2x stages; what the upsampler reduces to with zero weights.
inline DepthMap bilinear_upsample8x(const DepthMap & d)
{
  return bilinear_upsample2x(bilinear_upsample2x(bilinear_upsample2x(d)));
}

/// Context features at 1/2, 1/4 and 1/8 of the output resolution.
struct ContextPyramid
{
  FeatureMap half;     // F1
  FeatureMap quarter;  // F2
  FeatureMap eighth;   // F3

  void validate() const
  {
    if (quarter.height() != 2 * eighth.height() || quarter.width() != 2 * eighth.width() ||
        half.height() != 2 * quarter.height() || half.width() != 2 * quarter.width())
    {
      fail(ErrorKind::kShape, "context pyramid resolutions must halve consecutively");
    }
  }
};

struct DffmConfig
{
  int context_half = 32;     // C1
  int context_quarter = 48;  // C2
  int context_eighth = 64;   // C3
  int fused = 32;
  int head_hidden = 16;
};

/// One 2x stage: two fusion convolutions and a two-layer depth head.
struct DffmStage
{
  Conv2d fuse1;
  Conv2d fuse2;
  Conv2d head1;
  Conv2d head2;

  static DffmStage zeros(std::size_t feat_in, std::size_t ctx_in, const DffmConfig & c)
  {
    return {Conv2d(1 + feat_in + ctx_in, std::size_t(c.fused)), Conv2d(std::size_t(c.fused), std::size_t(c.fused)),
            Conv2d(std::size_t(c.fused), std::size_t(c.head_hidden)), Conv2d(std::size_t(c.head_hidden), 1)};
  }
};

struct DffmWeights
{
  DffmConfig config;
  std::array<DffmStage, 3> stages;  // applied in order: 1/8->1/4, 1/4->1/2, 1/2->1

  static DffmWeights zeros(const DffmConfig & c = {})
  {
    DffmWeights w;
    w.config = c;
    w.stages[0] = DffmStage::zeros(std::size_t(c.context_eighth), std::size_t(c.context_quarter), c);
    w.stages[1] = DffmStage::zeros(std::size_t(c.fused), std::size_t(c.context_half), c);
    w.stages[2] = DffmStage::zeros(std::size_t(c.fused), 0, c);
    return w;
  }

  static DffmWeights random(const DffmConfig & c, std::uint64_t seed, double head_scale = 0.01)
  {
    DffmWeights w = zeros(c);
    SplitMix64 rng(seed);
    for (auto & s : w.stages) {
      s.fuse1.randomize(rng);
      s.fuse2.randomize(rng);
      s.head1.randomize(rng);
      s.head2.randomize(rng, head_scale);
    }
    return w;
  }

  static std::string stage_name(std::size_t i) { return "dffm.stage" + std::to_string(i); }

  NamedTensors to_named() const
  {
    NamedTensors n;
    set_config_value(n, "dffm.context_half", config.context_half);
    set_config_value(n, "dffm.context_quarter", config.context_quarter);
    set_config_value(n, "dffm.context_eighth", config.context_eighth);
    set_config_value(n, "dffm.fused", config.fused);
    set_config_value(n, "dffm.head_hidden", config.head_hidden);
    for (std::size_t i = 0; i < stages.size(); ++i) {
      stages[i].fuse1.store(n, stage_name(i) + ".fuse1");
      stages[i].fuse2.store(n, stage_name(i) + ".fuse2");
      stages[i].head1.store(n, stage_name(i) + ".head1");
      stages[i].head2.store(n, stage_name(i) + ".head2");
    }
    return n;
  }

  static DffmWeights from_named(const NamedTensors & n)
  {
    DffmConfig c;
    c.context_half = config_value(n, "dffm.context_half");
    c.context_quarter = config_value(n, "dffm.context_quarter");
    c.context_eighth = config_value(n, "dffm.context_eighth");
    c.fused = config_value(n, "dffm.fused");
    c.head_hidden = config_value(n, "dffm.head_hidden");
    DffmWeights w = zeros(c);
    for (std::size_t i = 0; i < w.stages.size(); ++i) {
      auto load = [&](Conv2d & dst, const char * part) {
        Conv2d loaded = Conv2d::from_weights(n, stage_name(i) + "." + part);
        if (loaded.in_channels() != dst.in_channels() || loaded.out_channels() != dst.out_channels() ||
            loaded.kernel() != dst.kernel())
        {
          fail(ErrorKind::kShape, stage_name(i) + "." + part + " has inconsistent channel sizes");
        }
        dst = std::move(loaded);
      };
      load(w.stages[i].fuse1, "fuse1");
      load(w.stages[i].fuse2, "fuse2");
      load(w.stages[i].head1, "head1");
      load(w.stages[i].head2, "head2");
    }
    return w;
  }
};

struct DffmOutput
{
  FeatureMap fused;
  DepthMap depth;
};

/**
 * Upsamples depth and feature 2x, concatenates [depth, feature, context],
 * runs the fusion convolutions and adds the head's residual to the
 * upsampled depth. `context_hi` may be null for the last stage.
 */
inline DffmOutput dffm(
  const DepthMap & depth_lo, const FeatureMap & feat_lo, const FeatureMap * context_hi, const DffmStage & stage)
{
  if (feat_lo.height() != depth_lo.height() || feat_lo.width() != depth_lo.width()) {
    fail(ErrorKind::kShape, "feature and depth differ in resolution");
  }
  if (context_hi && (context_hi->height() != 2 * depth_lo.height() || context_hi->width() != 2 * depth_lo.width())) {
    fail(ErrorKind::kShape, "context feature must be exactly twice the depth resolution");
  }
  DffmOutput out;
  out.depth = bilinear_upsample2x(depth_lo);
  const FeatureMap feat = bilinear_upsample2x(feat_lo);
  const FeatureMap d = depth_to_feature(out.depth);
  const FeatureMap x = context_hi ? concat_channels({&d, &feat, context_hi}) : concat_channels({&d, &feat});
  out.fused = relu(stage.fuse2.forward(relu(stage.fuse1.forward(x))));
  const FeatureMap residual = stage.head2.forward(relu(stage.head1.forward(out.fused)));
  for (std::size_t i = 0; i < out.depth.pixels(); ++i) { out.depth[i] += double(residual.data()[i]); }
  return out;
}

/// 1/8 -> full resolution through three DFFM stages; output floored at d_min.
inline DepthMap upsample_depth(
  const DepthMap & depth, const ContextPyramid & ctx, const DffmWeights & w, double min_depth = kMinDepth)
{
  ctx.validate();
  if (ctx.eighth.height() != depth.height() || ctx.eighth.width() != depth.width()) {
    fail(ErrorKind::kShape, "1/8 context does not match the depth resolution");
  }
  auto s2 = dffm(depth, ctx.eighth, &ctx.quarter, w.stages[0]);
  auto s1 = dffm(s2.depth, s2.fused, &ctx.half, w.stages[1]);
  auto s0 = dffm(s1.depth, s1.fused, nullptr, w.stages[2]);
  for (auto & v : s0.depth.data()) {
    if (!(v >= min_depth)) { v = min_depth; }
  }
  return std::move(s0.depth);
}

}  // namespace corrmvs

#endif  // CORRMVS_UPSAMPLE_HPP_
