#ifndef CORRMVS_NN_HPP_
#define CORRMVS_NN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "corrmvs/error.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/parallel.hpp"
#include "corrmvs/random.hpp"

namespace corrmvs
{

/// Rank-n float tensor, row-major with the last dimension fastest.
struct Tensor
{
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> dims, float fill = 0.0f)
  : shape(std::move(dims)), data(element_count(shape), fill)
  {}

  static std::size_t element_count(const std::vector<std::uint32_t> & dims)
  {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }
  std::size_t rank() const noexcept { return shape.size(); }

  static Tensor scalar(float v)
  {
    Tensor t(std::vector<std::uint32_t>{});
    t.data[0] = v;
    return t;
  }

  friend bool operator==(const Tensor &, const Tensor &) = default;
};

inline Tensor to_tensor(const FeatureMap & f)
{
  Tensor t({std::uint32_t(f.height()), std::uint32_t(f.width()), std::uint32_t(f.channels())});
  t.data = f.data();
  return t;
}

inline FeatureMap to_feature_map(const Tensor & t)
{
  if (t.rank() != 3 && t.rank() != 2) { fail(ErrorKind::kShape, "feature tensor must have rank 2 or 3"); }
  const std::size_t c = t.rank() == 3 ? t.shape[2] : 1;
  FeatureMap f(t.shape[0], t.shape[1], c);
  f.data() = t.data;
  return f;
}

/// Ordered name -> tensor map; the in-memory form of a weight file.
using NamedTensors = std::map<std::string, Tensor>;

inline const Tensor & require_entry(const NamedTensors & w, const std::string & name)
{
  auto it = w.find(name);
  if (it == w.end()) { fail(ErrorKind::kConfig, "weight entry '" + name + "' missing"); }
  return it->second;
}

/// Integer hyper-parameters are stored as rank-0 entries under "config.<key>".
inline int config_value(const NamedTensors & w, const std::string & key)
{
  const Tensor & t = require_entry(w, "config." + key);
  if (t.data.size() != 1) { fail(ErrorKind::kConfig, "config entry '" + key + "' is not a scalar"); }
  return static_cast<int>(t.data[0]);
}

inline void set_config_value(NamedTensors & w, const std::string & key, int value)
{
  w["config." + key] = Tensor::scalar(float(value));
}

/**
 * @brief 2D convolution, stride 1, zero "same" padding, odd square kernel.
 *
 * Weight layout (out, k, k, in), bias (out). Each output is accumulated in
 * double in (ky, kx, in) order then cast to float.
 */
class Conv2d
{
public:
  Conv2d() = default;

  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3)
  : in_(in_channels), out_(out_channels), k_(kernel),
    weight_(out_channels * kernel * kernel * in_channels, 0.0f), bias_(out_channels, 0.0f)
  {
    if (kernel % 2 == 0) { fail(ErrorKind::kConfig, "convolution kernel size must be odd"); }
  }

  static Conv2d from_weights(const NamedTensors & w, const std::string & prefix)
  {
    const Tensor & wt = require_entry(w, prefix + ".weight");
    const Tensor & b = require_entry(w, prefix + ".bias");
    if (wt.rank() != 4 || wt.shape[1] != wt.shape[2] || b.rank() != 1 || b.shape[0] != wt.shape[0]) {
      fail(ErrorKind::kShape, "malformed convolution '" + prefix + "'");
    }
    Conv2d c(wt.shape[3], wt.shape[0], wt.shape[1]);
    c.weight_ = wt.data;
    c.bias_ = b.data;
    c.refresh();
    return c;
  }

  void store(NamedTensors & w, const std::string & prefix) const
  {
    Tensor wt({std::uint32_t(out_), std::uint32_t(k_), std::uint32_t(k_), std::uint32_t(in_)});
    wt.data = weight_;
    Tensor b({std::uint32_t(out_)});
    b.data = bias_;
    w[prefix + ".weight"] = std::move(wt);
    w[prefix + ".bias"] = std::move(b);
  }

  /// Uniform(-s, s) weights with s = scale / sqrt(fan_in); zero bias.
  void randomize(SplitMix64 & rng, double scale = 1.0)
  {
    const double s = scale / std::sqrt(double(in_ * k_ * k_));
    for (auto & v : weight_) { v = float(rng.uniform(-s, s)); }
    std::fill(bias_.begin(), bias_.end(), 0.0f);
    refresh();
  }

  std::size_t in_channels() const noexcept { return in_; }
  std::size_t out_channels() const noexcept { return out_; }
  std::size_t kernel() const noexcept { return k_; }

  float & weight(std::size_t o, std::size_t ky, std::size_t kx, std::size_t i)
  {
    zero_weights_ = false;
    return weight_[((o * k_ + ky) * k_ + kx) * in_ + i];
  }
  float weight(std::size_t o, std::size_t ky, std::size_t kx, std::size_t i) const
  {
    return weight_[((o * k_ + ky) * k_ + kx) * in_ + i];
  }
  float & bias(std::size_t o) { return bias_[o]; }
  float bias(std::size_t o) const { return bias_[o]; }

  /// Recompute the all-zero flag after writing weights through the raw accessors.
  void refresh()
  {
    zero_weights_ = std::all_of(weight_.begin(), weight_.end(), [](float v) { return v == 0.0f; });
  }

  FeatureMap forward(const FeatureMap & x) const
  {
    if (x.channels() != in_) {
      fail(ErrorKind::kShape, "convolution expects " + std::to_string(in_) + " input channels, got " +
                                std::to_string(x.channels()));
    }
    const std::size_t h = x.height(), w = x.width();
    FeatureMap y(h, w, out_);
    if (zero_weights_) {
      for (std::size_t i = 0; i < h * w; ++i) { std::copy(bias_.begin(), bias_.end(), y.pixel(i).begin()); }
      return y;
    }
    const auto half = std::ptrdiff_t(k_ / 2);
    parallel_for(0, h, [&](std::size_t yy) {
      std::vector<double> acc(out_);
      for (std::size_t xx = 0; xx < w; ++xx) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t ky = 0; ky < k_; ++ky) {
          const std::ptrdiff_t sy = std::ptrdiff_t(yy) + std::ptrdiff_t(ky) - half;
          if (sy < 0 || sy >= std::ptrdiff_t(h)) { continue; }
          for (std::size_t kx = 0; kx < k_; ++kx) {
            const std::ptrdiff_t sx = std::ptrdiff_t(xx) + std::ptrdiff_t(kx) - half;
            if (sx < 0 || sx >= std::ptrdiff_t(w)) { continue; }
            const float * in = x.pixel(std::size_t(sy), std::size_t(sx)).data();
            for (std::size_t o = 0; o < out_; ++o) {
              const float * wr = weight_.data() + ((o * k_ + ky) * k_ + kx) * in_;
              double s = 0.0;
              for (std::size_t i = 0; i < in_; ++i) { s += double(wr[i]) * in[i]; }
              acc[o] += s;
            }
          }
        }
        auto dst = y.pixel(yy, xx);
        for (std::size_t o = 0; o < out_; ++o) { dst[o] = float(acc[o] + bias_[o]); }
      }
    });
    return y;
  }

private:
  std::size_t in_ = 0, out_ = 0, k_ = 3;
  std::vector<float> weight_;
  std::vector<float> bias_;
  bool zero_weights_ = true;
};

inline float sigmoid(float v) { return float(1.0 / (1.0 + std::exp(-double(v)))); }

template<typename F>
FeatureMap map_values(FeatureMap x, F && f)
{
  for (auto & v : x.data()) { v = f(v); }
  return x;
}

inline FeatureMap relu(FeatureMap x)
{
  return map_values(std::move(x), [](float v) { return v > 0.0f ? v : 0.0f; });
}

/// Channel-wise concatenation of equally sized maps, in argument order.
inline FeatureMap concat_channels(std::initializer_list<const FeatureMap *> parts)
{
  const FeatureMap & first = **parts.begin();
  std::size_t c = 0;
  for (const auto * p : parts) {
    if (p->height() != first.height() || p->width() != first.width()) {
      fail(ErrorKind::kShape, "cannot concatenate maps of different spatial size");
    }
    c += p->channels();
  }
  FeatureMap out(first.height(), first.width(), c);
  for (std::size_t i = 0; i < first.pixels(); ++i) {
    auto dst = out.pixel(i);
    std::size_t o = 0;
    for (const auto * p : parts) {
      const auto src = p->pixel(i);
      std::copy(src.begin(), src.end(), dst.begin() + std::ptrdiff_t(o));
      o += src.size();
    }
  }
  return out;
}

inline FeatureMap slice_channels(const FeatureMap & x, std::size_t begin, std::size_t count)
{
  if (begin + count > x.channels()) { fail(ErrorKind::kShape, "channel slice out of range"); }
  FeatureMap out(x.height(), x.width(), count);
  for (std::size_t i = 0; i < x.pixels(); ++i) {
    const auto src = x.pixel(i);
    std::copy(src.begin() + std::ptrdiff_t(begin), src.begin() + std::ptrdiff_t(begin + count), out.pixel(i).begin());
  }
  return out;
}

}  // namespace corrmvs

#endif  // CORRMVS_NN_HPP_
