#ifndef CORRMVS_SYNTHSCENE_HPP_
#define CORRMVS_SYNTHSCENE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "corrmvs/error.hpp"
#include "corrmvs/geometry.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/random.hpp"

namespace corrmvs
{

enum class SurfaceKind { kPlane, kTiltedPlane, kSphere, kStep };

inline SurfaceKind parse_surface(std::string_view s)
{
  if (s == "plane") { return SurfaceKind::kPlane; }
  if (s == "tilted") { return SurfaceKind::kTiltedPlane; }
  if (s == "sphere") { return SurfaceKind::kSphere; }
  if (s == "step") { return SurfaceKind::kStep; }
  fail(ErrorKind::kConfig, "unknown surface '" + std::string(s) + "' (plane|tilted|sphere|step)");
}

inline const char * to_string(SurfaceKind k)
{
  switch (k) {
    case SurfaceKind::kPlane: return "plane";
    case SurfaceKind::kTiltedPlane: return "tilted";
    case SurfaceKind::kSphere: return "sphere";
    case SurfaceKind::kStep: return "step";
  }
  return "?";
}

inline constexpr double kSceneMinDepth = 0.5;
inline constexpr double kSceneMaxDepth = 20.0;

/// Surface and camera parameters. Surfaces are expressed in world coordinates.
struct SceneParams
{
  SurfaceKind kind = SurfaceKind::kPlane;
  std::size_t height = 48;
  std::size_t width = 64;
  double focal = 57.6;  // pixels at feature resolution

  double plane_depth = 4.0;  // fronto-parallel plane z = plane_depth

  Eigen::Vector3d tilt_normal{0.0, 0.2, 1.0};
  Eigen::Vector3d tilt_point{0.0, 0.0, 4.0};

  Eigen::Vector3d sphere_center{0.0, 0.0, 4.0};
  double sphere_radius = 1.2;
  double background_depth = 6.0;

  double step_near = 3.0;  // x < 0
  double step_far = 5.0;   // x >= 0

  double baseline_min = 0.15;
  double baseline_max = 0.35;
  double max_rotation_deg = 2.0;

  Pose reference_pose = Pose::identity();
};

/**
 * @brief Analytic scene with a fully known camera rig and per-view depth.
 *
 * View index 0 is the reference view; view k + 1 is source k.
 */
class Scene
{
public:
  const SceneParams & params() const noexcept { return params_; }
  const CameraRig & rig() const noexcept { return rig_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t view_count() const noexcept { return depths_.size(); }
  const DepthMap & depth(std::size_t view) const { return depths_.at(view); }
  const DepthMap & reference_depth() const { return depths_.front(); }

  const View & view(std::size_t v) const { return v == 0 ? rig_.reference() : rig_.source(v - 1); }

  /// Camera-frame depth of the first surface hit along the ray through `p`.
  std::optional<double> cast(const View & view, const Pixel & p) const
  {
    const Eigen::Vector3d origin = view.pose.center();
    const Eigen::Vector3d dir = view.pose.rotation.transpose() * view.intrinsics.back_project(p);
    return first_hit(origin, dir);
  }

  /// World point observed by view `v` at pixel `p` (nullopt if the ray misses).
  std::optional<Eigen::Vector3d> world_point(std::size_t v, const Pixel & p) const
  {
    const View & vw = view(v);
    const auto s = cast(vw, p);
    if (!s) { return std::nullopt; }
    return vw.pose.center() + *s * (vw.pose.rotation.transpose() * vw.intrinsics.back_project(p));
  }

  /// Ground-truth depth of view `v` at `factor` times the feature resolution.
  DepthMap depth_at_scale(std::size_t v, std::size_t factor) const
  {
    View vw = view(v);
    vw.intrinsics = vw.intrinsics.scaled(double(factor));
    DepthMap d(params_.height * factor, params_.width * factor);
    for (std::size_t y = 0; y < d.height(); ++y) {
      for (std::size_t x = 0; x < d.width(); ++x) {
        d(y, x) = cast(vw, Pixel{double(x), double(y)}).value_or(0.0);
      }
    }
    return d;
  }

  friend Scene make_scene(const SceneParams & params, std::size_t views, std::uint64_t seed);

private:
  std::optional<double> first_hit(const Eigen::Vector3d & o, const Eigen::Vector3d & dir) const
  {
    double best = std::numeric_limits<double>::infinity();
    auto plane = [&](const Eigen::Vector3d & n, double offset) -> std::optional<double> {
      const double denom = n.dot(dir);
      if (std::abs(denom) < 1e-15) { return std::nullopt; }
      const double s = (offset - n.dot(o)) / denom;
      if (!(s > 0.0)) { return std::nullopt; }
      return s;
    };
    auto consider = [&](std::optional<double> s) {
      if (s && *s < best) { best = *s; }
    };
    const auto & p = params_;
    switch (p.kind) {
      case SurfaceKind::kPlane:
        consider(plane(Eigen::Vector3d::UnitZ(), p.plane_depth));
        break;
      case SurfaceKind::kTiltedPlane: {
        const Eigen::Vector3d n = p.tilt_normal.normalized();
        consider(plane(n, n.dot(p.tilt_point)));
        break;
      }
      case SurfaceKind::kSphere: {
        consider(plane(Eigen::Vector3d::UnitZ(), p.background_depth));
        const Eigen::Vector3d oc = o - p.sphere_center;
        const double a = dir.squaredNorm(), b = 2.0 * oc.dot(dir), c = oc.squaredNorm() - p.sphere_radius * p.sphere_radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double s0 = (-b - sq) / (2.0 * a), s1 = (-b + sq) / (2.0 * a);
          if (s0 > 0.0) {
            consider(s0);
          } else if (s1 > 0.0) {
            consider(s1);
          }
        }
        break;
      }
      case SurfaceKind::kStep: {
        auto region = [&](std::optional<double> s, auto && inside) -> std::optional<double> {
          if (!s) { return std::nullopt; }
          const Eigen::Vector3d x = o + *s * dir;
          return inside(x) ? s : std::nullopt;
        };
        consider(region(plane(Eigen::Vector3d::UnitZ(), p.step_near), [](const Eigen::Vector3d & x) { return x.x() < 0.0; }));
        consider(region(plane(Eigen::Vector3d::UnitZ(), p.step_far), [](const Eigen::Vector3d & x) { return x.x() >= 0.0; }));
        // Riser joining the two levels.
        consider(region(plane(Eigen::Vector3d::UnitX(), 0.0), [&](const Eigen::Vector3d & x) {
          return x.z() >= std::min(p.step_near, p.step_far) && x.z() <= std::max(p.step_near, p.step_far);
        }));
        break;
      }
    }
    // Camera-frame z equals the ray parameter because K^-1 p has unit z.
    if (!std::isfinite(best)) { return std::nullopt; }
    return best;
  }

  SceneParams params_;
  CameraRig rig_;
  std::uint64_t seed_ = 0;
  std::vector<DepthMap> depths_;
};

/// Default intrinsics: square pixels, principal point at the grid centre.
inline Intrinsics scene_intrinsics(const SceneParams & p)
{
  return {p.focal, p.focal, (double(p.width) - 1.0) * 0.5, (double(p.height) - 1.0) * 0.5};
}

/**
 * Builds a scene with `views` source cameras. Each source camera centre is
 * displaced from the reference centre by a random baseline in
 * [baseline_min, baseline_max] (mostly sideways) and rotated by at most
 * max_rotation_deg about a random axis.
 */
inline Scene make_scene(const SceneParams & params, std::size_t views, std::uint64_t seed)
{
  if (views < 1) { fail(ErrorKind::kConfig, "a scene needs at least one source view"); }
  if (params.height < 1 || params.width < 1 || !(params.focal > 0.0)) {
    fail(ErrorKind::kConfig, "scene resolution and focal length must be positive");
  }
  if (params.baseline_min < 0.0 || params.baseline_max < params.baseline_min) {
    fail(ErrorKind::kConfig, "baseline range is empty");
  }
  params.reference_pose.validate();

  Scene scene;
  scene.params_ = params;
  scene.seed_ = seed;
  SplitMix64 rng(seed);
  const Intrinsics k = scene_intrinsics(params);
  const Eigen::Vector3d ref_center = params.reference_pose.center();
  const Eigen::Matrix3d ref_r = params.reference_pose.rotation;

  std::vector<View> sources;
  for (std::size_t v = 0; v < views; ++v) {
    Eigen::Vector3d dir(rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2));
    if (dir.norm() < 1e-6) { dir = Eigen::Vector3d::UnitX(); }
    const double baseline = rng.uniform(params.baseline_min, params.baseline_max);
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    if (axis.norm() < 1e-9) { axis = Eigen::Vector3d::UnitY(); }
    const double angle = rng.uniform(0.0, params.max_rotation_deg) * std::numbers::pi / 180.0;
    const Eigen::Matrix3d delta = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();

    // Offsets are expressed in the reference camera frame.
    const Eigen::Vector3d center = ref_center + ref_r.transpose() * (dir.normalized() * baseline);
    Pose pose;
    pose.rotation = delta * ref_r;
    pose.translation = -(pose.rotation * center);
    sources.push_back({k, pose});
  }
  scene.rig_ = CameraRig({k, params.reference_pose}, std::move(sources));

  for (std::size_t v = 0; v <= views; ++v) {
    DepthMap d = scene.depth_at_scale(v, 1);
    for (std::size_t i = 0; i < d.pixels(); ++i) {
      if (!(d[i] >= kSceneMinDepth && d[i] <= kSceneMaxDepth)) {
        fail(ErrorKind::kConfig, "surface parameters put depth " + std::to_string(d[i]) + " outside [0.5, 20] in view " +
                                   std::to_string(v));
      }
    }
    scene.depths_.push_back(std::move(d));
  }
  return scene;
}

/// Exact flow of reference pixels into source view k. Pixels reprojecting
/// behind the camera or outside [0, W-1] x [0, H-1] are invalid.
inline FlowField gt_flow(const Scene & scene, std::size_t k)
{
  const CameraRig & rig = scene.rig();
  if (k >= rig.source_count()) { fail(ErrorKind::kIndex, "source index out of range"); }
  const DepthMap & d = scene.reference_depth();
  const double max_x = double(d.width()) - 1.0, max_y = double(d.height()) - 1.0;
  FlowField flow(d.height(), d.width());
  for (std::size_t y = 0; y < d.height(); ++y) {
    for (std::size_t x = 0; x < d.width(); ++x) {
      const std::size_t i = y * d.width() + x;
      const Pixel p{double(x), double(y)};
      const auto rep = try_reproject(p, d[i], rig.intrinsics(), rig.source(k).intrinsics, rig.relative(k));
      if (!rep || rep->pixel.x < 0.0 || rep->pixel.y < 0.0 || rep->pixel.x > max_x || rep->pixel.y > max_y) {
        flow.invalidate(i);
        continue;
      }
      flow.set(i, rep->pixel.x - p.x, rep->pixel.y - p.y);
    }
  }
  return flow;
}

/// gt_flow validity further restricted to points not occluded in source k.
inline std::vector<std::uint8_t> visibility_mask(const Scene & scene, std::size_t k)
{
  const FlowField flow = gt_flow(scene, k);
  const CameraRig & rig = scene.rig();
  const DepthMap & d = scene.reference_depth();
  std::vector<std::uint8_t> mask(d.pixels(), 0);
  for (std::size_t i = 0; i < d.pixels(); ++i) {
    if (!flow.valid(i)) { continue; }
    const Pixel p{double(i % d.width()), double(i / d.width())};
    const auto rep = try_reproject(p, d[i], rig.intrinsics(), rig.source(k).intrinsics, rig.relative(k));
    const Pixel q{p.x + flow.dx(i), p.y + flow.dy(i)};
    const auto hit = scene.cast(rig.source(k), q);
    mask[i] = hit && std::abs(*hit - rep->z) <= 1e-6 * rep->z ? 1 : 0;
  }
  return mask;
}

/**
 * Pixel-level mutual visibility with source view k: the point is visible
 * there, and the source pixel nearest to its projection sees a surface point
 * that projects back within one pixel of the reference pixel.
 */
inline std::vector<std::uint8_t> pixel_correspondence_mask(const Scene & scene, std::size_t k)
{
  const FlowField flow = gt_flow(scene, k);
  std::vector<std::uint8_t> mask = visibility_mask(scene, k);
  const std::size_t w = scene.reference_depth().width();
  const std::size_t sw = scene.params().width, sh = scene.params().height;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) { continue; }
    const Pixel p{double(i % w), double(i / w)};
    const Pixel q{std::round(p.x + flow.dx(i)), std::round(p.y + flow.dy(i))};
    mask[i] = 0;
    if (q.x < 0.0 || q.y < 0.0 || q.x > double(sw - 1) || q.y > double(sh - 1)) { continue; }
    const auto x = scene.world_point(k + 1, q);
    if (!x) { continue; }
    const auto back = try_project(scene.rig().reference().pose.transform(*x), scene.rig().intrinsics());
    if (back && std::hypot(back->x - p.x, back->y - p.y) < 1.0) { mask[i] = 1; }
  }
  return mask;
}

/// Pixels visible (in frame and unoccluded) in every source view.
inline std::vector<std::uint8_t> mutual_visibility(const Scene & scene)
{
  std::vector<std::uint8_t> all(scene.reference_depth().pixels(), 1);
  for (std::size_t k = 0; k < scene.rig().source_count(); ++k) {
    const auto m = visibility_mask(scene, k);
    for (std::size_t i = 0; i < all.size(); ++i) { all[i] &= m[i]; }
  }
  return all;
}

/**
 * @brief Random-Fourier encoding of world points.
 *
 * phi(X) = [cos(w_j . X), sin(w_j . X)]_j / sqrt(D / 2), each w_j marginally
 * N(0, I / s^2). phi(X) . phi(Y) = (2 / D) sum_j cos(w_j . (X - Y)), which is
 * 1 at X = Y and decays like a Gaussian kernel of bandwidth s.
 */
class FourierEncoder
{
public:
  FourierEncoder(std::size_t dim, double bandwidth, std::uint64_t seed) : dim_(dim)
  {
    if (dim < 16 || dim % 2 != 0) { fail(ErrorKind::kConfig, "positional feature dim must be even and >= 16"); }
    if (!(bandwidth > 0.0)) { fail(ErrorKind::kConfig, "positional feature bandwidth must be positive"); }
    SplitMix64 rng(seed);
    const std::size_t n = dim / 2;
    freqs_.reserve(n);
    // Frequencies come in orthogonal triples sharing one radius, so the sum of
    // w w^T over each triple is isotropic and the kernel is round near its peak.
    while (freqs_.size() < n) {
      Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
      const Eigen::Matrix3d basis = Eigen::Quaterniond(q.normalized()).toRotationMatrix();
      const double radius =
        std::sqrt(std::pow(rng.normal(), 2) + std::pow(rng.normal(), 2) + std::pow(rng.normal(), 2)) / bandwidth;
      for (int a = 0; a < 3 && freqs_.size() < n; ++a) { freqs_.push_back(basis.col(a) * radius); }
    }
  }

  std::size_t dim() const noexcept { return dim_; }

  void encode(const Eigen::Vector3d & x, std::span<float> out) const
  {
    const double norm = 1.0 / std::sqrt(double(freqs_.size()));
    for (std::size_t j = 0; j < freqs_.size(); ++j) {
      const double a = freqs_[j].dot(x);
      out[2 * j] = float(std::cos(a) * norm);
      out[2 * j + 1] = float(std::sin(a) * norm);
    }
  }

  /// Exact kernel value phi(X) . phi(Y) in double precision.
  double kernel(const Eigen::Vector3d & x, const Eigen::Vector3d & y) const
  {
    double s = 0.0;
    for (const auto & w : freqs_) { s += std::cos(w.dot(x - y)); }
    return s / double(freqs_.size());
  }

private:
  std::size_t dim_;
  std::vector<Eigen::Vector3d> freqs_;
};

/// World-space size of one pixel at the reference view's median depth.
inline double pixel_footprint(const Scene & scene)
{
  std::vector<double> d = scene.reference_depth().data();
  std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(d.size() / 2), d.end());
  return d[d.size() / 2] / scene.params().focal;
}

inline constexpr double kDefaultBandwidthPixels = 1.0;
inline constexpr std::size_t kDefaultFeatureDim = 48;

/**
 * Feature map of view `v` at `factor` times the feature resolution: each
 * pixel encodes the world point it observes. Pixels whose ray misses every
 * surface get a zero vector. bandwidth <= 0 selects
 * kDefaultBandwidthPixels * pixel_footprint(scene).
 */
inline FeatureMap positional_features(
  const Scene & scene, std::size_t v, std::size_t dim, std::uint64_t seed, double bandwidth = 0.0,
  std::size_t factor = 1)
{
  if (v >= scene.view_count()) { fail(ErrorKind::kIndex, "view index out of range"); }
  if (bandwidth <= 0.0) { bandwidth = kDefaultBandwidthPixels * pixel_footprint(scene); }
  const FourierEncoder enc(dim, bandwidth, seed);
  View vw = scene.view(v);
  vw.intrinsics = vw.intrinsics.scaled(double(factor));
  const std::size_t h = scene.params().height * factor, w = scene.params().width * factor;
  FeatureMap f(h, w, dim, 0.0f);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Pixel p{double(x), double(y)};
      const auto depth = scene.cast(vw, p);
      if (!depth) { continue; }
      const Eigen::Vector3d world = vw.pose.center() + *depth * (vw.pose.rotation.transpose() * vw.intrinsics.back_project(p));
      enc.encode(world, f.pixel(y, x));
    }
  }
  return f;
}

}  // namespace corrmvs

#endif  // CORRMVS_SYNTHSCENE_HPP_
