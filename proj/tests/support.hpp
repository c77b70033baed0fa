#ifndef CORRMVS_TESTS_SUPPORT_HPP_
#define CORRMVS_TESTS_SUPPORT_HPP_

// Hand-rolled generators and scalar reference implementations. The references
// are written loop-by-loop from the defining formulas and share no code with
// the library beyond the container types.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "corrmvs/corrmvs.hpp"

namespace testing_support
{

using namespace corrmvs;

inline FeatureMap random_features(SplitMix64 & rng, std::size_t h, std::size_t w, std::size_t d, double lo = -1.0,
                                  double hi = 1.0)
{
  FeatureMap f(h, w, d);
  for (auto & v : f.data()) { v = float(rng.uniform(lo, hi)); }
  return f;
}

inline Eigen::Matrix3d random_rotation(SplitMix64 & rng, double max_angle = 3.14159)
{
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  return Eigen::AngleAxisd(rng.uniform(0.0, max_angle), axis.normalized()).toRotationMatrix();
}

inline Pose random_pose(SplitMix64 & rng, double max_angle = 3.14159, double max_t = 2.0)
{
  Pose p;
  p.rotation = random_rotation(rng, max_angle);
  p.translation = {rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t)};
  return p;
}

inline Intrinsics random_intrinsics(SplitMix64 & rng)
{
  return {rng.uniform(40.0, 120.0), rng.uniform(40.0, 120.0), rng.uniform(20.0, 40.0), rng.uniform(15.0, 30.0)};
}

inline CorrelationVolume random_volume(SplitMix64 & rng, std::size_t h, std::size_t w, std::size_t sh, std::size_t sw)
{
  CorrelationVolume v(0, h, w, sh, sw);
  for (auto & x : v.data()) { x = float(rng.uniform(-1.0, 1.0)); }
  return v;
}

/// C(p, q) = sum_c ref(p)[c] * src(q)[c], accumulated in float from c = 0 upwards.
inline std::vector<float> correlation_reference(const FeatureMap & ref, const FeatureMap & src)
{
  std::vector<float> out;
  for (std::size_t py = 0; py < ref.height(); ++py) {
    for (std::size_t px = 0; px < ref.width(); ++px) {
      for (std::size_t qy = 0; qy < src.height(); ++qy) {
        for (std::size_t qx = 0; qx < src.width(); ++qx) {
          float s = 0.0f;
          for (std::size_t c = 0; c < ref.channels(); ++c) { s += ref(py, px, c) * src(qy, qx, c); }
          out.push_back(s);
        }
      }
    }
  }
  return out;
}

/// 2x2 mean over the source grid of one slice, edge cells replicated at odd sizes.
inline std::vector<double> avg_pool_reference(const std::vector<double> & s, std::size_t h, std::size_t w,
                                              std::size_t & oh, std::size_t & ow)
{
  oh = (h + 1) / 2;
  ow = (w + 1) / 2;
  std::vector<double> out(oh * ow);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double sum = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) { sum += s[std::min(2 * i + a, h - 1) * w + std::min(2 * j + b, w - 1)]; }
      }
      out[i * ow + j] = sum / 4.0;
    }
  }
  return out;
}

/// Bilinear value of a grid at a continuous point; taps outside the grid read 0.
inline double bilinear_reference(const std::vector<double> & g, std::size_t h, std::size_t w, double x, double y)
{
  const double x0 = std::floor(x), y0 = std::floor(y);
  double v = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const double tx = x0 + dx, ty = y0 + dy;
      const double wgt = (dx ? x - x0 : 1.0 - (x - x0)) * (dy ? y - y0 : 1.0 - (y - y0));
      if (tx < 0 || ty < 0 || tx >= double(w) || ty >= double(h)) { continue; }
      v += wgt * g[std::size_t(ty) * w + std::size_t(tx)];
    }
  }
  return v;
}

/// Level slices for reference pixel p, rebuilt by repeated scalar pooling of the level-0 slice.
inline std::vector<double> lookup_reference(const CorrelationVolume & c0, std::size_t py, std::size_t px, double qx,
                                            double qy, int radius, int levels)
{
  std::vector<double> slice;
  const auto s0 = c0.slice(py * c0.ref_width() + px);
  slice.assign(s0.begin(), s0.end());
  std::size_t h = c0.src_height(), w = c0.src_width();
  std::vector<double> out;
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      std::size_t oh = 0, ow = 0;
      slice = avg_pool_reference(slice, h, w, oh, ow);
      h = oh;
      w = ow;
    }
    const double scale = std::pow(2.0, l);
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        out.push_back(bilinear_reference(slice, h, w, qx / scale + dx, qy / scale + dy));
      }
    }
  }
  return out;
}

/// 'Same' convolution with zero padding, evaluated pixel by pixel in double.
inline std::vector<double> conv_reference(const std::vector<double> & x, std::size_t h, std::size_t w, std::size_t cin,
                                          const Conv2d & conv)
{
  const std::size_t k = conv.kernel(), cout = conv.out_channels();
  const int half = int(k / 2);
  std::vector<double> y(h * w * cout);
  for (std::size_t yy = 0; yy < h; ++yy) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      for (std::size_t o = 0; o < cout; ++o) {
        double s = conv.bias(o);
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const int sy = int(yy) + int(ky) - half, sx = int(xx) + int(kx) - half;
            if (sy < 0 || sx < 0 || sy >= int(h) || sx >= int(w)) { continue; }
            for (std::size_t i = 0; i < cin; ++i) {
              s += double(conv.weight(o, ky, kx, i)) * x[(std::size_t(sy) * w + std::size_t(sx)) * cin + i];
            }
          }
        }
        y[(yy * w + xx) * cout + o] = s;
      }
    }
  }
  return y;
}

inline std::vector<double> concat_reference(const std::vector<double> & a, std::size_t ca, const std::vector<double> & b,
                                            std::size_t cb, std::size_t n)
{
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < ca; ++c) { out.push_back(a[i * ca + c]); }
    for (std::size_t c = 0; c < cb; ++c) { out.push_back(b[i * cb + c]); }
  }
  return out;
}

inline std::vector<double> as_double(const FeatureMap & f) { return {f.data().begin(), f.data().end()}; }

/// One recurrent cell step from the gate equations.
inline std::vector<double> gru_reference(const FeatureMap & h, const FeatureMap & x, const GruWeights & w)
{
  const std::size_t hh = h.height(), ww = h.width(), n = hh * ww, ch = h.channels(), cx = x.channels();
  const auto hv = as_double(h), xv = as_double(x);
  const auto hx = concat_reference(hv, ch, xv, cx, n);
  auto z = conv_reference(hx, hh, ww, ch + cx, w.update_gate);
  auto r = conv_reference(hx, hh, ww, ch + cx, w.reset_gate);
  for (auto & v : z) { v = 1.0 / (1.0 + std::exp(-v)); }
  for (auto & v : r) { v = 1.0 / (1.0 + std::exp(-v)); }
  std::vector<double> rh(hv.size());
  for (std::size_t i = 0; i < rh.size(); ++i) { rh[i] = r[i] * hv[i]; }
  auto q = conv_reference(concat_reference(rh, ch, xv, cx, n), hh, ww, ch + cx, w.candidate);
  for (auto & v : q) { v = std::tanh(v); }
  std::vector<double> out(hv.size());
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] = (1.0 - z[i]) * hv[i] + z[i] * q[i]; }
  return out;
}

/// 2x upsampling with output sample o reading source position (o + 0.5) / 2 - 0.5, clamped to the grid.
inline std::vector<double> upsample_reference(const std::vector<double> & g, std::size_t h, std::size_t w, std::size_t c)
{
  std::vector<double> out(4 * h * w * c);
  auto axis = [](std::size_t o, std::size_t n, std::size_t & lo, std::size_t & hi, double & f) {
    double s = std::min(std::max((double(o) + 0.5) / 2.0 - 0.5, 0.0), double(n - 1));
    lo = std::size_t(s);
    hi = lo + 1 < n ? lo + 1 : lo;
    f = s - double(lo);
  };
  for (std::size_t y = 0; y < 2 * h; ++y) {
    std::size_t y0, y1;
    double fy;
    axis(y, h, y0, y1, fy);
    for (std::size_t x = 0; x < 2 * w; ++x) {
      std::size_t x0, x1;
      double fx;
      axis(x, w, x0, x1, fx);
      for (std::size_t k = 0; k < c; ++k) {
        auto at = [&](std::size_t yy, std::size_t xx) { return g[(yy * w + xx) * c + k]; };
        out[(y * 2 * w + x) * c + k] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                                       fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
      }
    }
  }
  return out;
}

/// E(d) = sum_k ||(K_k^-1 p_k) x (R_k K^-1 p d + t_k)||^2 written with explicit matrices.
inline double energy_reference(const Pixel & p, const Intrinsics & k, const std::vector<Correspondence> & obs, double d)
{
  const Eigen::Vector3d ray = k.matrix().inverse() * Eigen::Vector3d(p.x, p.y, 1.0);
  double e = 0.0;
  for (const auto & o : obs) {
    const Eigen::Vector3d a =
      o.source_intrinsics.matrix().inverse() * Eigen::Vector3d(o.source_pixel.x, o.source_pixel.y, 1.0);
    e += a.cross(o.relative.rotation * ray * d + o.relative.translation).squaredNorm();
  }
  return e;
}

/// Grid minimiser of the energy over [lo, hi] with the given step.
inline double grid_search_depth(const Pixel & p, const Intrinsics & k, const std::vector<Correspondence> & obs,
                                double lo = 0.1, double hi = 10.0, double step = 1e-4)
{
  double best = lo, best_e = energy_reference(p, k, obs, lo);
  const auto n = std::size_t(std::llround((hi - lo) / step));
  for (std::size_t i = 1; i <= n; ++i) {
    const double d = lo + double(i) * step;
    const double e = energy_reference(p, k, obs, d);
    if (e < best_e) {
      best_e = e;
      best = d;
    }
  }
  return best;
}

}  // namespace testing_support

#endif  // CORRMVS_TESTS_SUPPORT_HPP_
