// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace canonflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform mapping camera coordinates to world coordinates.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  Pose inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
};

/// Pinhole camera.
///
/// Convention (used throughout the project): right-handed camera frame with
/// +X right, +Y up, looking down -Z. Image row 0 is the top row and rows
/// increase downward; integer pixel coordinates address pixel centers.
/// `world_from_camera` is the camera pose (camera -> world).
struct CameraModel {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
  int width = 0, height = 0;
  Pose world_from_camera;

  /// Throws std::invalid_argument on violated invariants
  /// (positive focals, principal point inside the image, orthonormal rotation).
  void validate() const;

  Vec3 center() const { return world_from_camera.translation; }

  /// Projects a world point to continuous (row, col). Throws if the point is
  /// at or behind the camera plane.
  Eigen::Vector2d project(const Vec3& world_point) const;

  /// True when the world point lies strictly in front of the camera.
  bool in_front(const Vec3& world_point) const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
  double pixel_row = 0, pixel_col = 0;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Back-projects pixels (row, col) to world-space rays through the camera
/// center. Pixels outside [0,h) x [0,w) are rejected with
/// std::invalid_argument.
std::vector<Ray> generate_rays(const CameraModel& camera,
                               const std::vector<Eigen::Vector2d>& pixels);
Ray generate_ray(const CameraModel& camera, double row, double col);

/// Camera at `position` looking toward `target`, world +Y up (+X fallback
/// when the view direction is vertical), principal point at the pixel-grid
/// center. Throws when position and target coincide.
CameraModel make_lookat_camera(const Vec3& position, const Vec3& target, int width, int height,
                               double focal);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extents() const { return max - min; }
};

/// Slab intersection. Returns the parametric interval of the ray inside the
/// box with t_near clamped to 0 when the origin is inside, or nullopt on a
/// miss (including boxes entirely behind the origin).
std::optional<std::pair<double, double>> ray_aabb_intersect(const Ray& ray, const Aabb& box);

/// Triangle mesh with optional per-vertex colors and named joints.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<Vec3> vertex_colors;          // empty or size() == vertices.size(), RGB in [0,1]
  std::map<std::string, Vec3> joints;

  bool empty() const { return vertices.empty(); }
  /// Index bounds and degenerate-triangle check (area > 1e-12 m^2); throws.
  void validate() const;
  double triangle_area(int tri_index) const;
};

/// Tight vertex bounding box enlarged symmetrically by xy_margin along X and
/// Y and by z_margin along Z. Throws on an empty mesh.
Aabb build_frame_aabb(const TriMesh& mesh, double xy_margin, double z_margin);

/// Default per-frame AABB margins at desk scale (meters). Depth along the
/// camera axis is the least constrained direction, hence the looser Z.
inline constexpr double kFrameMarginXY = 0.2;
inline constexpr double kFrameMarginZ = 0.4;

struct MeshHit {
  double t = 0;            // distance along the ray, > 0
  int triangle = -1;
  Vec3 barycentric = Vec3::Zero();  // sums to 1
};

/// Nearest positive-distance hit via a Moller-Trumbore loop over all
/// triangles, with an AABB pre-cull when `precull` is given.
std::optional<MeshHit> ray_mesh_intersect(const Ray& ray, const TriMesh& mesh,
                                          const Aabb* precull = nullptr);

/// Counts ray/triangle crossings with t > 0 (for parity-style queries).
int ray_mesh_count_hits(const Ray& ray, const TriMesh& mesh);

/// Element of se(3): axis-angle rotation part and translation part.
struct Twist {
  Vec3 omega = Vec3::Zero();  // radians
  Vec3 v = Vec3::Zero();      // meters

  /// Throws std::invalid_argument unless finite and |omega| < pi.
  Twist() = default;
  Twist(const Vec3& omega_in, const Vec3& v_in);
};

/// Applies the SE(3) exponential map: exp([omega]) * x + G(omega) * v, where
/// G is the left Jacobian of SO(3). Identity at the zero twist.
Vec3 se3_apply(const Twist& twist, const Vec3& x);

/// Rotation/translation series coefficients of the exponential map as
/// functions of s = |omega|^2, with Taylor fallbacks near zero:
///   a = sin(t)/t, b = (1-cos(t))/t^2, c = (t-sin(t))/t^3, t = sqrt(s).
/// Derivatives with respect to s are written when pointers are non-null.
void se3_series_coeffs(double s, double* a, double* b, double* c, double* da = nullptr,
                       double* db = nullptr, double* dc = nullptr);

}  // namespace canonflow
