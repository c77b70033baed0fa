#ifndef CORRMVS_CORRELATION_HPP_
#define CORRMVS_CORRELATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corrmvs/error.hpp"
#include "corrmvs/geometry.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/parallel.hpp"

namespace corrmvs
{

inline constexpr int kMaxPyramidLevels = 4;

/**
 * @brief All-pairs similarity between reference pixels and (pooled) source pixels.
 *
 * Shape H x W x h x w where h = ceil(H / 2^level), w = ceil(W / 2^level).
 * The h*w block for reference pixel index p = y*W + x is contiguous.
 */
class CorrelationVolume
{
public:
  CorrelationVolume() = default;
  CorrelationVolume(int level, std::size_t ref_h, std::size_t ref_w, std::size_t src_h, std::size_t src_w)
  : level_(level), ref_h_(ref_h), ref_w_(ref_w), src_h_(src_h), src_w_(src_w),
    data_(ref_h * ref_w * src_h * src_w, 0.0f)
  {}

  int level() const noexcept { return level_; }
  std::size_t ref_height() const noexcept { return ref_h_; }
  std::size_t ref_width() const noexcept { return ref_w_; }
  std::size_t src_height() const noexcept { return src_h_; }
  std::size_t src_width() const noexcept { return src_w_; }
  std::size_t slice_size() const noexcept { return src_h_ * src_w_; }

  std::span<const float> slice(std::size_t p) const { return {data_.data() + p * slice_size(), slice_size()}; }
  std::span<float> slice(std::size_t p) { return {data_.data() + p * slice_size(), slice_size()}; }

  float operator()(std::size_t py, std::size_t px, std::size_t qy, std::size_t qx) const
  {
    return data_[((py * ref_w_ + px) * src_h_ + qy) * src_w_ + qx];
  }

  std::vector<float> & data() noexcept { return data_; }
  const std::vector<float> & data() const noexcept { return data_; }

  friend bool operator==(const CorrelationVolume &, const CorrelationVolume &) = default;

private:
  int level_ = 0;
  std::size_t ref_h_ = 0, ref_w_ = 0, src_h_ = 0, src_w_ = 0;
  std::vector<float> data_;
};

struct CorrelationOptions
{
  /// L2-normalize every feature vector before taking dot products.
  bool normalize = false;
};

namespace detail
{
inline std::vector<float> normalized_copy(const FeatureMap & f)
{
  std::vector<float> out = f.data();
  const std::size_t d = f.channels();
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) { n2 += double(out[i * d + c]) * out[i * d + c]; }
    if (n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      for (std::size_t c = 0; c < d; ++c) { out[i * d + c] = float(out[i * d + c] * inv); }
    }
  }
  return out;
}
}  // namespace detail

/**
 * C(p, q) = E(p) . E_k(q), accumulated in 32-bit floats over channels in
 * ascending order. The source map is transposed so the inner loop runs over
 * q; the per-element summation order is unchanged.
 */
inline CorrelationVolume build_correlation_volume(
  const FeatureMap & ref, const FeatureMap & src, const CorrelationOptions & opts = {})
{
  if (ref.empty() || src.empty()) { fail(ErrorKind::kShape, "feature maps must be non-empty"); }
  if (ref.channels() != src.channels()) {
    fail(ErrorKind::kShape, "feature dims differ: " + std::to_string(ref.channels()) + " vs " +
                              std::to_string(src.channels()));
  }
  if (ref.height() != src.height() || ref.width() != src.width()) {
    fail(ErrorKind::kShape, "reference and source feature maps differ in size");
  }

  const std::size_t d = ref.channels();
  const std::size_t n = ref.pixels();
  const std::vector<float> ref_data = opts.normalize ? detail::normalized_copy(ref) : ref.data();
  const std::vector<float> src_data = opts.normalize ? detail::normalized_copy(src) : src.data();

  std::vector<float> src_t(d * n);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t c = 0; c < d; ++c) { src_t[c * n + q] = src_data[q * d + c]; }
  }

  CorrelationVolume vol(0, ref.height(), ref.width(), src.height(), src.width());
  parallel_for(0, n, [&](std::size_t p) {
    float * row = vol.slice(p).data();
    const float * e = ref_data.data() + p * d;
    for (std::size_t c = 0; c < d; ++c) {
      const float a = e[c];
      const float * col = src_t.data() + c * n;
      for (std::size_t q = 0; q < n; ++q) { row[q] += a * col[q]; }
    }
  });
  return vol;
}

/// 2x2 average pooling over the source dimensions; odd sizes are padded by
/// replicating the last row/column.
inline CorrelationVolume pool_correlation(const CorrelationVolume & in)
{
  const std::size_t h = in.src_height(), w = in.src_width();
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  CorrelationVolume out(in.level() + 1, in.ref_height(), in.ref_width(), oh, ow);
  parallel_for(0, in.ref_height() * in.ref_width(), [&](std::size_t p) {
    const auto src = in.slice(p);
    auto dst = out.slice(p);
    for (std::size_t i = 0; i < oh; ++i) {
      const std::size_t y0 = 2 * i, y1 = std::min(2 * i + 1, h - 1);
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t x0 = 2 * j, x1 = std::min(2 * j + 1, w - 1);
        const float s = src[y0 * w + x0] + src[y0 * w + x1] + src[y1 * w + x0] + src[y1 * w + x1];
        dst[i * ow + j] = s * 0.25f;
      }
    }
  });
  return out;
}

struct CorrelationPyramid
{
  std::vector<CorrelationVolume> levels;

  std::size_t size() const noexcept { return levels.size(); }
  const CorrelationVolume & operator[](std::size_t l) const { return levels.at(l); }
  std::size_t ref_height() const { return levels.front().ref_height(); }
  std::size_t ref_width() const { return levels.front().ref_width(); }
};

inline CorrelationPyramid build_pyramid(CorrelationVolume c0, int levels = kMaxPyramidLevels)
{
  if (levels < 1 || levels > kMaxPyramidLevels) {
    fail(ErrorKind::kConfig, "pyramid levels must lie in [1, 4], got " + std::to_string(levels));
  }
  if (c0.level() != 0) { fail(ErrorKind::kConfig, "pyramid must start from a level-0 volume"); }
  const std::size_t need = std::size_t{1} << (levels - 1);
  if (c0.src_height() < need || c0.src_width() < need) {
    fail(ErrorKind::kShape, "source grid too small for " + std::to_string(levels) + " pyramid levels");
  }
  CorrelationPyramid pyr;
  pyr.levels.reserve(levels);
  pyr.levels.push_back(std::move(c0));
  for (int l = 1; l < levels; ++l) { pyr.levels.push_back(pool_correlation(pyr.levels.back())); }
  return pyr;
}

struct LookupConfig
{
  int radius = 3;
  int levels = kMaxPyramidLevels;

  void validate() const
  {
    if (radius < 0) { fail(ErrorKind::kConfig, "lookup radius must be >= 0"); }
    if (levels < 1) { fail(ErrorKind::kConfig, "lookup levels must be >= 1"); }
  }
  std::size_t window() const { return std::size_t(2 * radius + 1) * std::size_t(2 * radius + 1); }
  std::size_t length() const { return std::size_t(levels) * window(); }
};

struct PixelIndex
{
  std::ptrdiff_t x = 0;
  std::ptrdiff_t y = 0;
};

/// Bilinear sample of an h x w slice; taps outside the grid read as zero.
inline float sample_bilinear_zero(std::span<const float> slice, std::size_t h, std::size_t w, double sx, double sy)
{
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const double ax = sx - fx0, ay = sy - fy0;
  const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
  auto tap = [&](std::ptrdiff_t y, std::ptrdiff_t x) -> double {
    if (x < 0 || y < 0 || x >= std::ptrdiff_t(w) || y >= std::ptrdiff_t(h)) { return 0.0; }
    return slice[std::size_t(y) * w + std::size_t(x)];
  };
  const double top = (1.0 - ax) * tap(y0, x0) + ax * tap(y0, x0 + 1);
  const double bottom = (1.0 - ax) * tap(y0 + 1, x0) + ax * tap(y0 + 1, x0 + 1);
  return static_cast<float>((1.0 - ay) * top + ay * bottom);
}

/**
 * Writes levels x (2r+1)^2 correlations for reference pixel p around the
 * continuous source location p_k. Level l is sampled at p_k / 2^l + (dx, dy),
 * dy outer, dx inner.
 */
inline void lookup_into(
  const CorrelationPyramid & pyr, PixelIndex p, const Pixel & pk, const LookupConfig & cfg,
  std::span<float> out)
{
  if (cfg.levels > int(pyr.size())) { fail(ErrorKind::kConfig, "lookup asks for more levels than the pyramid has"); }
  if (out.size() != cfg.length()) { fail(ErrorKind::kShape, "lookup output has the wrong length"); }
  if (p.x < 0 || p.y < 0 || p.x >= std::ptrdiff_t(pyr.ref_width()) || p.y >= std::ptrdiff_t(pyr.ref_height())) {
    fail(ErrorKind::kIndex, "reference pixel (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside grid");
  }
  const std::size_t pi = std::size_t(p.y) * pyr.ref_width() + std::size_t(p.x);
  std::size_t o = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    const auto & vol = pyr[l];
    const auto slice = vol.slice(pi);
    const double scale = 1.0 / double(1 << l);
    const double cx = pk.x * scale, cy = pk.y * scale;
    for (int dy = -cfg.radius; dy <= cfg.radius; ++dy) {
      for (int dx = -cfg.radius; dx <= cfg.radius; ++dx) {
        out[o++] = sample_bilinear_zero(slice, vol.src_height(), vol.src_width(), cx + dx, cy + dy);
      }
    }
  }
}

inline std::vector<float> lookup(
  const CorrelationPyramid & pyr, PixelIndex p, const Pixel & pk, const LookupConfig & cfg)
{
  cfg.validate();
  std::vector<float> out(cfg.length());
  lookup_into(pyr, p, pk, cfg, out);
  return out;
}

/// Per-pixel correlation vectors plus a validity flag (cleared for behind-camera samples).
struct CorrelationFeatureMap
{
  Grid<float> values;
  std::vector<std::uint8_t> valid;

  CorrelationFeatureMap() = default;
  CorrelationFeatureMap(std::size_t h, std::size_t w, std::size_t length)
  : values(h, w, length, 0.0f), valid(h * w, 1)
  {}

  std::size_t height() const { return values.height(); }
  std::size_t width() const { return values.width(); }
  std::size_t length() const { return values.channels(); }

  friend bool operator==(const CorrelationFeatureMap &, const CorrelationFeatureMap &) = default;
};

enum class FusionStrategy { kAveraging, kMax, kVariance };

inline FusionStrategy parse_fusion(std::string_view s)
{
  if (s == "averaging" || s == "mean" || s == "average") { return FusionStrategy::kAveraging; }
  if (s == "max" || s == "max-pooling") { return FusionStrategy::kMax; }
  if (s == "variance") { return FusionStrategy::kVariance; }
  fail(ErrorKind::kConfig, "unknown fusion strategy '" + std::string(s) + "'");
}

inline const char * to_string(FusionStrategy s)
{
  switch (s) {
    case FusionStrategy::kAveraging: return "averaging";
    case FusionStrategy::kMax: return "max";
    case FusionStrategy::kVariance: return "variance";
  }
  return "?";
}

/**
 * Element-wise reduction across views. Views flagged invalid at a pixel are
 * skipped there. Per element, the contributing values are sorted before
 * reduction so the result does not depend on view order.
 */
inline CorrelationFeatureMap fuse_views(
  std::span<const CorrelationFeatureMap> maps, FusionStrategy strategy = FusionStrategy::kAveraging)
{
  if (maps.empty()) { fail(ErrorKind::kConfig, "fusion needs at least one view"); }
  if (strategy == FusionStrategy::kVariance && maps.size() == 1) {
    fail(ErrorKind::kConfig, "variance fusion is undefined for a single source view");
  }
  const auto & first = maps.front();
  for (const auto & m : maps) {
    if (!m.values.same_shape(first.values)) { fail(ErrorKind::kShape, "correlation maps differ in shape"); }
  }

  CorrelationFeatureMap out(first.height(), first.width(), first.length());
  const std::size_t len = first.length();
  parallel_for(0, first.values.pixels(), [&](std::size_t i) {
    std::vector<std::size_t> views;
    for (std::size_t k = 0; k < maps.size(); ++k) {
      if (maps[k].valid[i]) { views.push_back(k); }
    }
    auto dst = out.values.pixel(i);
    if (views.empty()) {
      out.valid[i] = 0;
      return;
    }
    std::vector<float> vals(views.size());
    for (std::size_t c = 0; c < len; ++c) {
      for (std::size_t j = 0; j < views.size(); ++j) { vals[j] = maps[views[j]].values.pixel(i)[c]; }
      std::sort(vals.begin(), vals.end());
      if (strategy == FusionStrategy::kMax) {
        dst[c] = vals.back();
        continue;
      }
      double sum = 0.0;
      for (float v : vals) { sum += v; }
      const double mean = sum / double(vals.size());
      if (strategy == FusionStrategy::kAveraging) {
        dst[c] = float(mean);
      } else {
        double ss = 0.0;
        for (float v : vals) { ss += (v - mean) * (v - mean); }
        dst[c] = float(ss / double(vals.size()));
      }
    }
  });
  return out;
}

}  // namespace corrmvs

#endif  // CORRMVS_CORRELATION_HPP_
