#ifndef CORRMVS_REFINE_HPP_
#define CORRMVS_REFINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corrmvs/correlation.hpp"
#include "corrmvs/error.hpp"
#include "corrmvs/geometry.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/nn.hpp"
#include "corrmvs/parallel.hpp"
#include "corrmvs/random.hpp"
#include "corrmvs/triangulation.hpp"

namespace corrmvs
{

/// Floor applied to every updated depth so iterates stay positive.
inline constexpr double kMinDepth = 1e-3;

using GruState = FeatureMap;

/// Per-view correlation maps for the current depth; pixels whose reprojection
/// is behind view k, or whose depth is invalid, are flagged invalid in map k.
inline std::vector<CorrelationFeatureMap> correlation_maps(
  const DepthMap & depth, std::span<const CorrelationPyramid> pyramids, const CameraRig & rig,
  const LookupConfig & cfg)
{
  cfg.validate();
  if (pyramids.empty()) { fail(ErrorKind::kConfig, "correlation fusion needs at least one source view"); }
  if (pyramids.size() != rig.source_count()) {
    fail(ErrorKind::kShape, "one correlation pyramid per source view is required");
  }
  const std::size_t h = depth.height(), w = depth.width();
  for (const auto & pyr : pyramids) {
    if (pyr.ref_height() != h || pyr.ref_width() != w) {
      fail(ErrorKind::kShape, "depth map and correlation pyramid differ in size");
    }
  }

  std::vector<CorrelationFeatureMap> maps;
  maps.reserve(pyramids.size());
  for (std::size_t k = 0; k < pyramids.size(); ++k) {
    CorrelationFeatureMap m(h, w, cfg.length());
    const auto & rel = rig.relative(k);
    const auto & src_k = rig.source(k).intrinsics;
    parallel_for(0, h, [&](std::size_t y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const Pixel p{double(x), double(y)};
        const auto rep = depth.valid(i) ? try_reproject(p, depth[i], rig.intrinsics(), src_k, rel) : std::nullopt;
        if (!rep) {
          m.valid[i] = 0;
          continue;
        }
        lookup_into(pyramids[k], PixelIndex{std::ptrdiff_t(x), std::ptrdiff_t(y)}, rep->pixel, cfg, m.values.pixel(i));
      }
    });
    maps.push_back(std::move(m));
  }
  return maps;
}

/// Reproject with the current depth, look up each view's pyramid, and fuse across views.
inline CorrelationFeatureMap fuse_correlation_step(
  const DepthMap & depth, std::span<const CorrelationPyramid> pyramids, const CameraRig & rig,
  const LookupConfig & cfg, FusionStrategy strategy = FusionStrategy::kAveraging)
{
  const auto maps = correlation_maps(depth, pyramids, rig, cfg);
  return fuse_views(maps, strategy);
}

struct GruConfig
{
  int hidden = 64;
  int corr_in = 196;
  int corr_out = 64;
  int depth_out = 16;
  int context = 16;
  int head_hidden = 32;

  int input_channels() const { return corr_out + depth_out + context; }

  void validate() const
  {
    if (hidden < 1 || corr_in < 1 || corr_out < 1 || depth_out < 1 || context < 0 || head_hidden < 1) {
      fail(ErrorKind::kConfig, "GRU channel sizes must be positive");
    }
  }
};

/**
 * @brief Parameters of the recurrent depth updater.
 *
 * Correlation and depth pre-convolutions (3x3), the three gate convolutions
 * over [hidden, input], a two-layer 3x3 depth head and an optional 1x1
 * projection from the context feature to the initial hidden state.
 */
struct GruWeights
{
  GruConfig config;
  Conv2d corr_pre;
  Conv2d depth_pre;
  Conv2d update_gate;
  Conv2d reset_gate;
  Conv2d candidate;
  Conv2d head1;
  Conv2d head2;
  std::optional<Conv2d> hidden_init;

  static GruWeights zeros(const GruConfig & c, bool with_hidden_init = true)
  {
    c.validate();
    GruWeights w;
    w.config = c;
    const auto hx = std::size_t(c.hidden + c.input_channels());
    w.corr_pre = Conv2d(c.corr_in, c.corr_out);
    w.depth_pre = Conv2d(1, c.depth_out);
    w.update_gate = Conv2d(hx, c.hidden);
    w.reset_gate = Conv2d(hx, c.hidden);
    w.candidate = Conv2d(hx, c.hidden);
    w.head1 = Conv2d(c.hidden, c.head_hidden);
    w.head2 = Conv2d(c.head_hidden, 1);
    if (with_hidden_init && c.context > 0) { w.hidden_init = Conv2d(c.context, c.hidden, 1); }
    return w;
  }

  /// Seeded random initialisation; the depth head output is scaled by
  /// `head_scale` so random residuals stay small.
  static GruWeights random(const GruConfig & c, std::uint64_t seed, double head_scale = 0.01)
  {
    GruWeights w = zeros(c);
    SplitMix64 rng(seed);
    for (Conv2d * conv : {&w.corr_pre, &w.depth_pre, &w.update_gate, &w.reset_gate, &w.candidate, &w.head1}) {
      conv->randomize(rng);
    }
    w.head2.randomize(rng, head_scale);
    if (w.hidden_init) { w.hidden_init->randomize(rng); }
    return w;
  }

  NamedTensors to_named() const
  {
    NamedTensors n;
    set_config_value(n, "gru.hidden", config.hidden);
    set_config_value(n, "gru.corr_in", config.corr_in);
    set_config_value(n, "gru.corr_out", config.corr_out);
    set_config_value(n, "gru.depth_out", config.depth_out);
    set_config_value(n, "gru.context", config.context);
    set_config_value(n, "gru.head_hidden", config.head_hidden);
    corr_pre.store(n, "gru.corr_pre");
    depth_pre.store(n, "gru.depth_pre");
    update_gate.store(n, "gru.update_gate");
    reset_gate.store(n, "gru.reset_gate");
    candidate.store(n, "gru.candidate");
    head1.store(n, "gru.head1");
    head2.store(n, "gru.head2");
    if (hidden_init) { hidden_init->store(n, "gru.hidden_init"); }
    return n;
  }

  static GruWeights from_named(const NamedTensors & n)
  {
    GruConfig c;
    c.hidden = config_value(n, "gru.hidden");
    c.corr_in = config_value(n, "gru.corr_in");
    c.corr_out = config_value(n, "gru.corr_out");
    c.depth_out = config_value(n, "gru.depth_out");
    c.context = config_value(n, "gru.context");
    c.head_hidden = config_value(n, "gru.head_hidden");
    c.validate();
    GruWeights w;
    w.config = c;
    w.corr_pre = Conv2d::from_weights(n, "gru.corr_pre");
    w.depth_pre = Conv2d::from_weights(n, "gru.depth_pre");
    w.update_gate = Conv2d::from_weights(n, "gru.update_gate");
    w.reset_gate = Conv2d::from_weights(n, "gru.reset_gate");
    w.candidate = Conv2d::from_weights(n, "gru.candidate");
    w.head1 = Conv2d::from_weights(n, "gru.head1");
    w.head2 = Conv2d::from_weights(n, "gru.head2");
    if (n.count("gru.hidden_init.weight")) { w.hidden_init = Conv2d::from_weights(n, "gru.hidden_init"); }
    w.validate();
    return w;
  }

  void validate() const
  {
    const auto hx = std::size_t(config.hidden + config.input_channels());
    auto expect = [](const Conv2d & conv, std::size_t in, std::size_t out, const char * name) {
      if (conv.in_channels() != in || conv.out_channels() != out) {
        fail(ErrorKind::kShape, std::string("GRU weight '") + name + "' has inconsistent channel sizes");
      }
    };
    expect(corr_pre, std::size_t(config.corr_in), std::size_t(config.corr_out), "corr_pre");
    expect(depth_pre, 1, std::size_t(config.depth_out), "depth_pre");
    expect(update_gate, hx, std::size_t(config.hidden), "update_gate");
    expect(reset_gate, hx, std::size_t(config.hidden), "reset_gate");
    expect(candidate, hx, std::size_t(config.hidden), "candidate");
    expect(head1, std::size_t(config.hidden), std::size_t(config.head_hidden), "head1");
    expect(head2, std::size_t(config.head_hidden), 1, "head2");
    if (hidden_init) { expect(*hidden_init, std::size_t(config.context), std::size_t(config.hidden), "hidden_init"); }
  }
};

/**
 * z = sigmoid(conv([h, x])), r = sigmoid(conv([h, x])),
 * q = tanh(conv([r * h, x])), h' = (1 - z) * h + z * q.
 */
inline GruState gru_cell(const GruState & h, const FeatureMap & x, const GruWeights & w)
{
  if (h.channels() != std::size_t(w.config.hidden)) { fail(ErrorKind::kShape, "hidden state width mismatch"); }
  if (x.channels() != std::size_t(w.config.input_channels())) { fail(ErrorKind::kShape, "GRU input width mismatch"); }
  if (h.height() != x.height() || h.width() != x.width()) { fail(ErrorKind::kShape, "GRU state and input differ in size"); }

  const FeatureMap hx = concat_channels({&h, &x});
  const FeatureMap z = map_values(w.update_gate.forward(hx), sigmoid);
  const FeatureMap r = map_values(w.reset_gate.forward(hx), sigmoid);
  FeatureMap rh = h;
  for (std::size_t i = 0; i < rh.data().size(); ++i) { rh.data()[i] *= r.data()[i]; }
  const FeatureMap rhx = concat_channels({&rh, &x});
  const FeatureMap q = map_values(w.candidate.forward(rhx), [](float v) { return std::tanh(v); });

  GruState out = h;
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    const float zi = z.data()[i];
    out.data()[i] = (1.0f - zi) * h.data()[i] + zi * q.data()[i];
  }
  return out;
}

inline FeatureMap depth_to_feature(const DepthMap & d)
{
  FeatureMap f(d.height(), d.width(), 1);
  for (std::size_t i = 0; i < d.pixels(); ++i) { f.data()[i] = float(d[i]); }
  return f;
}

inline GruState initial_hidden_state(const FeatureMap * context, const GruWeights & w, std::size_t h, std::size_t wd)
{
  if (context && w.hidden_init) {
    return map_values(w.hidden_init->forward(*context), [](float v) { return std::tanh(v); });
  }
  return GruState(h, wd, std::size_t(w.config.hidden), 0.0f);
}

struct DepthUpdate
{
  DepthMap depth;
  GruState state;
};

/// One GRU step: D_t = max(D_{t-1} + head(h'), d_min) on valid pixels.
inline DepthUpdate depth_update_step(
  const DepthMap & d_prev, const CorrelationFeatureMap & corr, const FeatureMap * context,
  const GruState & state, const GruWeights & w, double min_depth = kMinDepth)
{
  const std::size_t h = d_prev.height(), wd = d_prev.width();
  if (corr.height() != h || corr.width() != wd) { fail(ErrorKind::kShape, "correlation map and depth differ in size"); }
  if (corr.length() != std::size_t(w.config.corr_in)) {
    fail(ErrorKind::kShape, "correlation length " + std::to_string(corr.length()) + " does not match GRU weights (" +
                              std::to_string(w.config.corr_in) + ")");
  }
  FeatureMap ctx;
  if (context) {
    if (context->height() != h || context->width() != wd || context->channels() != std::size_t(w.config.context)) {
      fail(ErrorKind::kShape, "context feature does not match GRU weights");
    }
    ctx = *context;
  } else {
    ctx = FeatureMap(h, wd, std::size_t(w.config.context), 0.0f);
  }

  const FeatureMap v = relu(w.corr_pre.forward(corr.values));
  const FeatureMap dp = relu(w.depth_pre.forward(depth_to_feature(d_prev)));
  const FeatureMap x = concat_channels({&v, &dp, &ctx});
  DepthUpdate out{d_prev, gru_cell(state, x, w)};
  const FeatureMap delta = w.head2.forward(relu(w.head1.forward(out.state)));
  for (std::size_t i = 0; i < out.depth.pixels(); ++i) {
    if (!d_prev.valid(i)) { continue; }
    const double next = d_prev[i] + double(delta.data()[i]);
    out.depth[i] = next < min_depth ? min_depth : next;
  }
  return out;
}

/// Everything an updater may consult during one refinement run.
struct RefineInputs
{
  std::span<const CorrelationPyramid> pyramids;
  const CameraRig * rig = nullptr;
  const FeatureMap * context = nullptr;
  LookupConfig lookup;
  FusionStrategy fusion = FusionStrategy::kAveraging;
};

/// Strategy producing D_t from D_{t-1}; stateful across one refinement run.
class DepthUpdater
{
public:
  virtual ~DepthUpdater() = default;
  virtual void reset(const DepthMap & initial, const RefineInputs & in) = 0;
  virtual DepthMap step(const DepthMap & previous, const RefineInputs & in) = 0;
};

class GruUpdater final : public DepthUpdater
{
public:
  explicit GruUpdater(GruWeights weights, double min_depth = kMinDepth)
  : weights_(std::move(weights)), min_depth_(min_depth)
  {
    weights_.validate();
  }

  void reset(const DepthMap & initial, const RefineInputs & in) override
  {
    state_ = initial_hidden_state(in.context, weights_, initial.height(), initial.width());
  }

  DepthMap step(const DepthMap & previous, const RefineInputs & in) override
  {
    const auto corr = fuse_correlation_step(previous, in.pyramids, *in.rig, in.lookup, in.fusion);
    auto up = depth_update_step(previous, corr, in.context, state_, weights_, min_depth_);
    state_ = std::move(up.state);
    return std::move(up.depth);
  }

  const GruState & state() const noexcept { return state_; }

private:
  GruWeights weights_;
  double min_depth_;
  GruState state_;
};

struct OracleConfig
{
  double converged_shift = 1e-3;  // px; smaller peak shifts leave the pixel alone
  double peak_ratio = 0.7;        // drop views whose peak is below this fraction of the best view's
  double min_peak = 0.6;          // absolute peak floor; assumes unit-norm (cosine-like) features
  double outlier_px = 0.5;        // drop views whose target misses the triangulated point by more
  double min_depth = kMinDepth;
};

/**
 * @brief Geometric stand-in for a trained updater.
 *
 * For every view the level-0 window is sampled at the integer-rounded
 * reprojection, so its entries are raw correlation volume values. The window
 * argmax plus a three-point Gaussian (log-parabola) fit per axis gives the
 * corrected correspondence. A view is used only if its peak is an interior
 * local maximum backed by real samples and passes both peak gates. The kept
 * correspondences are triangulated, and the view with the worst reprojection
 * error is dropped while it exceeds `outlier_px`.
 *
 * A pixel whose proposed move reverses the direction of its previous move is
 * frozen for the rest of the run; with fixed targets the update is idempotent
 * so converged pixels stop changing exactly.
 */
class OracleUpdater final : public DepthUpdater
{
public:
  explicit OracleUpdater(OracleConfig cfg = {}) : cfg_(cfg) {}

  const OracleConfig & config() const noexcept { return cfg_; }

  void reset(const DepthMap & d0, const RefineInputs &) override
  {
    last_move_.assign(d0.pixels(), 0.0);
    frozen_.assign(d0.pixels(), 0);
  }

  DepthMap step(const DepthMap & previous, const RefineInputs & in) override
  {
    if (last_move_.size() != previous.pixels()) { reset(previous, in); }
    const CameraRig & rig = *in.rig;
    LookupConfig level0 = in.lookup;
    level0.levels = 1;
    level0.validate();
    const int r = level0.radius;
    const int side = 2 * r + 1;
    const std::size_t h = previous.height(), w = previous.width();
    DepthMap next = previous;

    parallel_for(0, h, [&](std::size_t y) {
      std::vector<float> window(level0.length());
      std::vector<Match> matches;
      std::vector<Correspondence> obs;
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        if (!previous.valid(i) || frozen_[i]) { continue; }
        const Pixel p{double(x), double(y)};
        matches.clear();
        for (std::size_t k = 0; k < rig.source_count(); ++k) {
          const auto rep = try_reproject(p, previous[i], rig.intrinsics(), rig.source(k).intrinsics, rig.relative(k));
          if (!rep) { continue; }
          const CorrelationVolume & c0 = in.pyramids[k].levels.front();
          const Pixel anchor{std::round(rep->pixel.x), std::round(rep->pixel.y)};
          lookup_into(in.pyramids[k], PixelIndex{std::ptrdiff_t(x), std::ptrdiff_t(y)}, anchor, level0, window);
          const auto best = std::size_t(std::max_element(window.begin(), window.end()) - window.begin());
          const int by = int(best) / side, bx = int(best) % side;
          const Pixel peak_at{anchor.x + double(bx - r), anchor.y + double(by - r)};
          if (bx == 0 || by == 0 || bx == side - 1 || by == side - 1 ||
              !inside(c0, Pixel{peak_at.x - 1.0, peak_at.y - 1.0}) || !inside(c0, Pixel{peak_at.x + 1.0, peak_at.y + 1.0}))
          {
            continue;
          }
          auto at = [&](int yy, int xx) { return double(window[std::size_t(yy * side + xx)]); };
          const double sx = peak_offset(at(by, bx - 1), at(by, bx), at(by, bx + 1));
          const double sy = peak_offset(at(by - 1, bx), at(by, bx), at(by + 1, bx));
          // Integer peak first so the target does not depend on the anchor.
          const Pixel target{peak_at.x + sx, peak_at.y + sy};
          matches.push_back({k, target, at(by, bx), std::hypot(target.x - rep->pixel.x, target.y - rep->pixel.y)});
        }
        if (matches.empty()) { continue; }

        double top = 0.0;
        for (const auto & m : matches) { top = std::max(top, m.peak); }
        std::erase_if(matches, [&](const Match & m) { return m.peak < cfg_.peak_ratio * top || m.peak < cfg_.min_peak; });
        double max_shift = 0.0;
        obs.clear();
        for (const auto & m : matches) {
          max_shift = std::max(max_shift, m.shift);
          obs.push_back({m.target, rig.relative(m.view), rig.source(m.view).intrinsics});
        }
        if (obs.empty() || max_shift < cfg_.converged_shift) { continue; }

        auto t = try_triangulate_pixel(p, rig.intrinsics(), obs);
        while (t.ok() && obs.size() > 1) {
          std::size_t worst = 0;
          double worst_err = -1.0;
          for (std::size_t j = 0; j < obs.size(); ++j) {
            const double e = reprojection_error(p, t.depth, rig.intrinsics(), obs[j]);
            if (e > worst_err) {
              worst_err = e;
              worst = j;
            }
          }
          if (worst_err <= cfg_.outlier_px) { break; }
          obs.erase(obs.begin() + std::ptrdiff_t(worst));
          t = try_triangulate_pixel(p, rig.intrinsics(), obs);
        }
        if (!t.ok()) { continue; }

        const double move = t.depth - previous[i];
        if (move * last_move_[i] < 0.0) {
          frozen_[i] = 1;
          continue;
        }
        last_move_[i] = move;
        next[i] = std::max(t.depth, cfg_.min_depth);
      }
    });
    return next;
  }

private:
  struct Match
  {
    std::size_t view;
    Pixel target;
    double peak;
    double shift;
  };

  static bool inside(const CorrelationVolume & c, const Pixel & q)
  {
    return q.x >= 0.0 && q.y >= 0.0 && q.x <= double(c.src_width() - 1) && q.y <= double(c.src_height() - 1);
  }

  static double reprojection_error(const Pixel & p, double depth, const Intrinsics & ref_k, const Correspondence & o)
  {
    const auto rep = try_reproject(p, depth, ref_k, o.source_intrinsics, o.relative);
    if (!rep) { return std::numeric_limits<double>::infinity(); }
    return std::hypot(rep->pixel.x - o.source_pixel.x, rep->pixel.y - o.source_pixel.y);
  }

  /// Vertex of the parabola through three samples, in log space when all are positive.
  static double peak_offset(double left, double centre, double right)
  {
    if (left > 0.0 && centre > 0.0 && right > 0.0) {
      left = std::log(left);
      centre = std::log(centre);
      right = std::log(right);
    }
    const double curvature = left - 2.0 * centre + right;
    if (!(curvature < 0.0)) { return 0.0; }
    return std::clamp(0.5 * (left - right) / curvature, -0.5, 0.5);
  }

  OracleConfig cfg_;
  std::vector<double> last_move_;
  std::vector<std::uint8_t> frozen_;
};

struct RefineConfig
{
  int iterations = 12;
  LookupConfig lookup{3, kMaxPyramidLevels};
  FusionStrategy fusion = FusionStrategy::kAveraging;

  void validate() const
  {
    if (iterations < 0) { fail(ErrorKind::kConfig, "iteration count must be >= 0"); }
    lookup.validate();
  }
};

/**
 * Runs N updates from D_0 and returns D_1..D_N. Invalid pixels of D_0 are
 * seeded with the median valid depth first.
 */
inline std::vector<DepthMap> refine_loop(
  const DepthMap & d0, std::span<const CorrelationPyramid> pyramids, const CameraRig & rig,
  const FeatureMap * context, DepthUpdater & updater, const RefineConfig & cfg)
{
  cfg.validate();
  std::vector<DepthMap> iterates;
  if (cfg.iterations == 0) { return iterates; }
  if (pyramids.empty()) { fail(ErrorKind::kConfig, "refinement needs at least one source view"); }
  RefineInputs in{pyramids, &rig, context, cfg.lookup, cfg.fusion};
  DepthMap current = fill_invalid_with_median(d0);
  updater.reset(current, in);
  iterates.reserve(std::size_t(cfg.iterations));
  for (int t = 0; t < cfg.iterations; ++t) {
    current = updater.step(current, in);
    iterates.push_back(current);
  }
  return iterates;
}

inline std::vector<DepthMap> refine_loop(
  const DepthMap & d0, std::span<const CorrelationPyramid> pyramids, const CameraRig & rig,
  const FeatureMap * context, const GruWeights & weights, const RefineConfig & cfg)
{
  GruUpdater updater(weights);
  return refine_loop(d0, pyramids, rig, context, updater, cfg);
}

}  // namespace corrmvs

#endif  // CORRMVS_REFINE_HPP_
