#ifndef CORRMVS_GEOMETRY_HPP_
#define CORRMVS_GEOMETRY_HPP_

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "corrmvs/error.hpp"

namespace corrmvs
{

/// Tolerance for rotation orthonormality and unit determinant.
inline constexpr double kRotationTolerance = 1e-9;

/// Projections whose camera-frame z falls at or below this are behind the camera.
inline constexpr double kMinPositiveZ = 1e-9;

/// Continuous pixel coordinate; integer values sit on pixel centres.
struct Pixel
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Pixel &, const Pixel &) = default;
};

struct Intrinsics
{
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const
  {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
        !std::isfinite(cx) || !std::isfinite(cy))
    {
      fail(ErrorKind::kConfig, "intrinsics need fx, fy > 0 and a finite principal point");
    }
  }

  Eigen::Matrix3d matrix() const
  {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  /// K^-1 (x, y, 1)^T
  Eigen::Vector3d back_project(const Pixel & p) const
  {
    return {(p.x - cx) / fx, (p.y - cy) / fy, 1.0};
  }

  /// Intrinsics of the same camera at `factor` times the resolution, with
  /// half-pixel-centred sampling (pixel centres at integer coordinates).
  Intrinsics scaled(double factor) const
  {
    return {fx * factor, fy * factor, (cx + 0.5) * factor - 0.5, (cy + 0.5) * factor - 0.5};
  }

  friend bool operator==(const Intrinsics &, const Intrinsics &) = default;
};

inline bool is_rotation(const Eigen::Matrix3d & r, double tol = kRotationTolerance)
{
  if (!r.allFinite()) { return false; }
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

/**
 * @brief Rigid camera pose stored as camera-from-world: x_cam = R * x_world + t.
 */
struct Pose
{
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  void validate() const
  {
    if (!is_rotation(rotation)) { fail(ErrorKind::kInvalidPose, "rotation is not orthonormal with det 1"); }
    if (!translation.allFinite()) { fail(ErrorKind::kInvalidPose, "translation is not finite"); }
  }

  Eigen::Vector3d transform(const Eigen::Vector3d & world) const { return rotation * world + translation; }

  Pose inverse() const
  {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (*this) o other: apply `other` first.
  Pose compose(const Pose & other) const
  {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  /// Camera centre in world coordinates.
  Eigen::Vector3d center() const { return -(rotation.transpose() * translation); }

  friend bool operator==(const Pose & a, const Pose & b)
  {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

/// Maps reference-camera coordinates into source-camera coordinates.
struct RelativePose
{
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RelativePose identity() { return {}; }

  Eigen::Vector3d transform(const Eigen::Vector3d & ref_point) const
  {
    return rotation * ref_point + translation;
  }
};

inline RelativePose relative_pose(const Pose & ref_pose, const Pose & src_pose)
{
  ref_pose.validate();
  src_pose.validate();
  RelativePose rel;
  rel.rotation = src_pose.rotation * ref_pose.rotation.transpose();
  rel.translation = src_pose.translation - rel.rotation * ref_pose.translation;
  return rel;
}

inline Eigen::Vector3d unproject(const Pixel & p, double depth, const Intrinsics & k)
{
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    fail(ErrorKind::kInvalidDepth, "depth must be positive, got " + std::to_string(depth));
  }
  const Eigen::Vector3d ray = k.back_project(p);
  return {ray.x() * depth, ray.y() * depth, depth};
}

inline std::optional<Pixel> try_project(const Eigen::Vector3d & point, const Intrinsics & k)
{
  if (!(point.z() > kMinPositiveZ)) { return std::nullopt; }
  return Pixel{k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy};
}

inline Pixel project(const Eigen::Vector3d & point, const Intrinsics & k)
{
  if (auto px = try_project(point, k)) { return *px; }
  fail(ErrorKind::kBehindCamera, "point has z = " + std::to_string(point.z()));
}

struct Reprojection
{
  Pixel pixel;
  double z = 0.0;  // source-camera depth before perspective division
};

/// Reprojection with separate reference and source intrinsics; nullopt when
/// the point lands behind the source camera.
inline std::optional<Reprojection> try_reproject(
  const Pixel & p, double depth, const Intrinsics & ref_k, const Intrinsics & src_k,
  const RelativePose & rel)
{
  const Eigen::Vector3d ray = ref_k.back_project(p);
  const Eigen::Vector3d x_src = rel.rotation * (ray * depth) + rel.translation;
  if (!(x_src.z() > kMinPositiveZ)) { return std::nullopt; }
  return Reprojection{
    Pixel{src_k.fx * x_src.x() / x_src.z() + src_k.cx, src_k.fy * x_src.y() / x_src.z() + src_k.cy},
    x_src.z()};
}

/// p_k ~ K (R_k K^-1 d p + t_k) with a single shared K.
inline Reprojection reproject(
  const Pixel & p, double depth, const Intrinsics & k, const RelativePose & rel)
{
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    fail(ErrorKind::kInvalidDepth, "depth must be positive, got " + std::to_string(depth));
  }
  if (auto r = try_reproject(p, depth, k, k, rel)) { return *r; }
  fail(ErrorKind::kBehindCamera, "reprojected point is behind the source camera");
}

struct View
{
  Intrinsics intrinsics;
  Pose pose;
};

/**
 * @brief Reference view plus source views, with relative poses cached at construction.
 */
class CameraRig
{
public:
  CameraRig() = default;

  CameraRig(View reference, std::vector<View> sources)
  : reference_(std::move(reference)), sources_(std::move(sources))
  {
    reference_.intrinsics.validate();
    relative_.reserve(sources_.size());
    for (const auto & s : sources_) {
      s.intrinsics.validate();
      relative_.push_back(relative_pose(reference_.pose, s.pose));
    }
  }

  const View & reference() const noexcept { return reference_; }
  const Intrinsics & intrinsics() const noexcept { return reference_.intrinsics; }
  std::size_t source_count() const noexcept { return sources_.size(); }
  const View & source(std::size_t k) const { return sources_.at(k); }
  const std::vector<View> & sources() const noexcept { return sources_; }
  const RelativePose & relative(std::size_t k) const { return relative_.at(k); }

private:
  View reference_;
  std::vector<View> sources_;
  std::vector<RelativePose> relative_;
};

}  // namespace corrmvs

#endif  // CORRMVS_GEOMETRY_HPP_
