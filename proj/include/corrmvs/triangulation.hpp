#ifndef CORRMVS_TRIANGULATION_HPP_
#define CORRMVS_TRIANGULATION_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "corrmvs/correlation.hpp"
#include "corrmvs/error.hpp"
#include "corrmvs/geometry.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/parallel.hpp"

namespace corrmvs
{

/// Below this value of sum ||a_k x b_k||^2 (or of sum ||a_k x t_k||^2) the
/// depth is unobservable.
inline constexpr double kDegenerateDenominator = 1e-12;

/// One source-view observation of a reference pixel.
struct Correspondence
{
  Pixel source_pixel;
  RelativePose relative;
  Intrinsics source_intrinsics;
};

struct Triangulation
{
  enum class Status { kOk, kDegenerate, kNegativeDepth };

  Status status = Status::kDegenerate;
  double depth = 0.0;
  double residual = 0.0;  // E_proj at `depth`

  bool ok() const noexcept { return status == Status::kOk; }
};

/// E_proj(d) = sum_k || (K^-1 p_k) x (R_k K^-1 p d + t_k) ||^2
inline double projection_energy(
  const Pixel & p, const Intrinsics & ref_k, std::span<const Correspondence> obs, double depth)
{
  const Eigen::Vector3d ray = ref_k.back_project(p);
  double e = 0.0;
  for (const auto & o : obs) {
    const Eigen::Vector3d a = o.source_intrinsics.back_project(o.source_pixel);
    e += a.cross(o.relative.rotation * ray * depth + o.relative.translation).squaredNorm();
  }
  return e;
}

/**
 * Closed-form minimiser of the cross-product projection energy. With
 * a_k = K^-1 p_k, b_k = R_k K^-1 p and c_k = t_k the energy is
 * sum_k ||(a_k x b_k) d + a_k x c_k||^2, a scalar quadratic in d, so
 * d* = -sum (a_k x b_k).(a_k x c_k) / sum ||a_k x b_k||^2.
 */
inline Triangulation try_triangulate_pixel(
  const Pixel & p, const Intrinsics & ref_k, std::span<const Correspondence> obs)
{
  Triangulation result;
  if (obs.empty()) { return result; }
  const Eigen::Vector3d ray = ref_k.back_project(p);
  double num = 0.0, den = 0.0, cc = 0.0;
  for (const auto & o : obs) {
    const Eigen::Vector3d a = o.source_intrinsics.back_project(o.source_pixel);
    const Eigen::Vector3d ab = a.cross(o.relative.rotation * ray);
    const Eigen::Vector3d ac = a.cross(o.relative.translation);
    num += ab.dot(ac);
    den += ab.squaredNorm();
    cc += ac.squaredNorm();
  }
  // cc vanishes when every baseline is zero or points along its ray (epipole).
  if (den < kDegenerateDenominator || cc < kDegenerateDenominator) { return result; }
  const double d = -num / den;
  result.residual = projection_energy(p, ref_k, obs, d);
  result.depth = d;
  result.status = d > 0.0 ? Triangulation::Status::kOk : Triangulation::Status::kNegativeDepth;
  return result;
}

inline Triangulation triangulate_pixel(
  const Pixel & p, const Intrinsics & ref_k, std::span<const Correspondence> obs)
{
  if (obs.empty()) { fail(ErrorKind::kConfig, "triangulation needs at least one correspondence"); }
  auto r = try_triangulate_pixel(p, ref_k, obs);
  if (r.status == Triangulation::Status::kDegenerate) {
    fail(ErrorKind::kDegenerateGeometry, "no parallax: rays are parallel (pure rotation or zero baseline)");
  }
  if (r.status == Triangulation::Status::kNegativeDepth) {
    fail(ErrorKind::kNegativeDepth, "triangulated depth " + std::to_string(r.depth) + " is not positive");
  }
  return r;
}

struct InitStats
{
  std::size_t triangulated = 0;
  std::size_t degenerate = 0;
  std::size_t negative = 0;
  std::size_t no_view = 0;
};

/**
 * Triangulates every reference pixel from p_k = p + O_k(p) over the views
 * whose flow is valid there. Degenerate or non-positive results leave the
 * pixel invalid (0).
 */
inline DepthMap init_depth_from_flows(
  std::span<const FlowField> flows, const CameraRig & rig, InitStats * stats = nullptr)
{
  if (flows.empty()) { fail(ErrorKind::kConfig, "no flow fields given"); }
  if (flows.size() != rig.source_count()) {
    fail(ErrorKind::kShape, std::to_string(flows.size()) + " flows for " + std::to_string(rig.source_count()) +
                              " source views");
  }
  for (const auto & f : flows) {
    if (!f.same_shape(flows.front())) { fail(ErrorKind::kShape, "flow fields differ in size"); }
  }

  const std::size_t h = flows.front().height(), w = flows.front().width();
  DepthMap depth(h, w, 0.0);
  std::vector<Triangulation::Status> status(h * w, Triangulation::Status::kDegenerate);
  std::vector<std::uint8_t> had_view(h * w, 0);

  parallel_for(0, h, [&](std::size_t y) {
    std::vector<Correspondence> obs;
    obs.reserve(flows.size());
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      obs.clear();
      for (std::size_t k = 0; k < flows.size(); ++k) {
        if (!flows[k].valid(i)) { continue; }
        obs.push_back({Pixel{double(x) + flows[k].dx(i), double(y) + flows[k].dy(i)}, rig.relative(k),
                       rig.source(k).intrinsics});
      }
      if (obs.empty()) { continue; }
      had_view[i] = 1;
      const auto t = try_triangulate_pixel(Pixel{double(x), double(y)}, rig.intrinsics(), obs);
      status[i] = t.status;
      if (t.ok()) { depth[i] = t.depth; }
    }
  });

  InitStats s;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!had_view[i]) {
      ++s.no_view;
    } else if (status[i] == Triangulation::Status::kOk) {
      ++s.triangulated;
    } else if (status[i] == Triangulation::Status::kNegativeDepth) {
      ++s.negative;
    } else {
      ++s.degenerate;
    }
  }
  if (s.no_view == h * w) { fail(ErrorKind::kEmptyResult, "no pixel has a valid flow in any view"); }
  if (stats) { *stats = s; }
  return depth;
}

/// O(p) = argmax_q C(p, q) - p; ties go to the smallest row-major q.
inline FlowField flow_from_correlation(const CorrelationVolume & vol)
{
  if (vol.level() != 0) { fail(ErrorKind::kConfig, "flow needs the level-0 correlation volume"); }
  const std::size_t h = vol.ref_height(), w = vol.ref_width(), sw = vol.src_width();
  FlowField flow(h, w);
  parallel_for(0, h * w, [&](std::size_t p) {
    const auto s = vol.slice(p);
    std::size_t best = 0;
    for (std::size_t q = 1; q < s.size(); ++q) {
      if (s[q] > s[best]) { best = q; }
    }
    const double qx = double(best % sw), qy = double(best / sw);
    flow.set(p, qx - double(p % w), qy - double(p / w));
  });
  return flow;
}

/// Median of the valid entries; used to seed invalid pixels before refinement.
inline double median_valid_depth(const DepthMap & d)
{
  std::vector<double> v;
  v.reserve(d.pixels());
  for (std::size_t i = 0; i < d.pixels(); ++i) {
    if (d.valid(i)) { v.push_back(d[i]); }
  }
  if (v.empty()) { fail(ErrorKind::kEmptyResult, "depth map has no valid pixels"); }
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) { return v[mid]; }
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline DepthMap fill_invalid_with_median(const DepthMap & d)
{
  const double m = median_valid_depth(d);
  DepthMap out = d;
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    if (!out.valid(i)) { out[i] = m; }
  }
  return out;
}

}  // namespace corrmvs

#endif  // CORRMVS_TRIANGULATION_HPP_
