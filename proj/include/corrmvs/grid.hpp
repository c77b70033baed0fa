#ifndef CORRMVS_GRID_HPP_
#define CORRMVS_GRID_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corrmvs/error.hpp"

namespace corrmvs
{

/**
 * @brief Dense H x W x C grid, channels-last, row-major.
 *
 * Element (y, x, c) lives at ((y * W) + x) * C + c.
 */
template<typename T>
class Grid
{
public:
  using value_type = T;

  Grid() = default;

  Grid(std::size_t height, std::size_t width, std::size_t channels, T fill = T{})
  : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill)
  {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  bool empty() const noexcept { return data_.empty(); }

  T & operator()(std::size_t y, std::size_t x, std::size_t c = 0)
  {
    return data_[(y * width_ + x) * channels_ + c];
  }
  const T & operator()(std::size_t y, std::size_t x, std::size_t c = 0) const
  {
    return data_[(y * width_ + x) * channels_ + c];
  }

  std::span<T> pixel(std::size_t y, std::size_t x)
  {
    return {data_.data() + (y * width_ + x) * channels_, channels_};
  }
  std::span<const T> pixel(std::size_t y, std::size_t x) const
  {
    return {data_.data() + (y * width_ + x) * channels_, channels_};
  }
  std::span<const T> pixel(std::size_t index) const
  {
    return {data_.data() + index * channels_, channels_};
  }
  std::span<T> pixel(std::size_t index) { return {data_.data() + index * channels_, channels_}; }

  std::vector<T> & data() noexcept { return data_; }
  const std::vector<T> & data() const noexcept { return data_; }

  bool same_shape(const Grid & other) const noexcept
  {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Grid &, const Grid &) = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

/// 32-bit feature map; image features, context features and GRU tensors.
using FeatureMap = Grid<float>;

inline void require_finite(const FeatureMap & f, const char * what)
{
  for (float v : f.data()) {
    if (!std::isfinite(v)) { fail(ErrorKind::kShape, std::string(what) + " contains non-finite values"); }
  }
}

/**
 * @brief Per-pixel depth in scene units. A value of 0 marks an invalid pixel.
 */
class DepthMap
{
public:
  DepthMap() = default;
  DepthMap(std::size_t height, std::size_t width, double fill = 0.0)
  : height_(height), width_(width), data_(height * width, fill)
  {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return data_.size(); }

  double & operator()(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  double operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  double & operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool valid(std::size_t i) const noexcept { return data_[i] > 0.0 && std::isfinite(data_[i]); }
  bool valid(std::size_t y, std::size_t x) const noexcept { return valid(y * width_ + x); }

  std::size_t valid_count() const noexcept
  {
    std::size_t n = 0;
    for (std::size_t i = 0; i < data_.size(); ++i) { n += valid(i) ? 1 : 0; }
    return n;
  }

  bool same_shape(const DepthMap & o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

  std::vector<double> & data() noexcept { return data_; }
  const std::vector<double> & data() const noexcept { return data_; }

  friend bool operator==(const DepthMap &, const DepthMap &) = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/**
 * @brief Displacements mapping reference pixel p to source pixel p + O(p).
 */
class FlowField
{
public:
  FlowField() = default;
  FlowField(std::size_t height, std::size_t width)
  : height_(height), width_(width), flow_(height * width * 2, 0.0), valid_(height * width, 1)
  {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return valid_.size(); }

  double dx(std::size_t i) const { return flow_[2 * i]; }
  double dy(std::size_t i) const { return flow_[2 * i + 1]; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }

  void set(std::size_t i, double dx, double dy, bool valid = true)
  {
    flow_[2 * i] = dx;
    flow_[2 * i + 1] = dy;
    valid_[i] = valid ? 1 : 0;
  }
  void invalidate(std::size_t i) { set(i, 0.0, 0.0, false); }

  bool all_valid() const
  {
    return std::all_of(valid_.begin(), valid_.end(), [](std::uint8_t v) { return v != 0; });
  }

  bool same_shape(const FlowField & o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

  friend bool operator==(const FlowField &, const FlowField &) = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> flow_;
  std::vector<std::uint8_t> valid_;
};

}  // namespace corrmvs

#endif  // CORRMVS_GRID_HPP_
