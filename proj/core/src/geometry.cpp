// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace canonflow {

void CameraModel::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
    throw std::invalid_argument("camera: principal point outside the image");
  }
  const Mat3& r = world_from_camera.rotation;
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(r.determinant() - 1.0) > 1e-6) {
    throw std::invalid_argument("camera: extrinsic rotation is not a proper rotation");
  }
}

Eigen::Vector2d CameraModel::project(const Vec3& world_point) const {
  const Vec3 q = world_from_camera.apply_inverse(world_point);
  if (!(q.z() < 0)) throw std::invalid_argument("project: point not in front of the camera");
  const double inv_depth = 1.0 / (-q.z());
  return {cy - fy * q.y() * inv_depth, cx + fx * q.x() * inv_depth};
}

bool CameraModel::in_front(const Vec3& world_point) const {
  return world_from_camera.apply_inverse(world_point).z() < 0;
}

Ray generate_ray(const CameraModel& camera, double row, double col) {
  if (!(row >= 0 && row < camera.height && col >= 0 && col < camera.width)) {
    throw std::invalid_argument("generate_ray: pixel outside the image");
  }
  const Vec3 dir_cam((col - camera.cx) / camera.fx, -(row - camera.cy) / camera.fy, -1.0);
  Ray ray;
  ray.origin = camera.center();
  ray.direction = (camera.world_from_camera.rotation * dir_cam).normalized();
  ray.pixel_row = row;
  ray.pixel_col = col;
  return ray;
}

std::vector<Ray> generate_rays(const CameraModel& camera,
                               const std::vector<Eigen::Vector2d>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) rays.push_back(generate_ray(camera, p.x(), p.y()));
  return rays;
}

std::optional<std::pair<double, double>> ray_aabb_intersect(const Ray& ray, const Aabb& box) {
  double t_near = 0.0;  // origin inside the box clamps here
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[a] - o) / d;
    double t1 = (box.max[a] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (!(t_far > t_near)) return std::nullopt;
  return std::make_pair(t_near, t_far);
}

double TriMesh::triangle_area(int tri_index) const {
  const auto& t = triangles[tri_index];
  const Vec3 e1 = vertices[t.y()] - vertices[t.x()];
  const Vec3 e2 = vertices[t.z()] - vertices[t.x()];
  return 0.5 * e1.cross(e2).norm();
}

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  if (!vertex_colors.empty() && vertex_colors.size() != vertices.size()) {
    throw std::invalid_argument("mesh: vertex color count mismatch");
  }
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const auto& t = triangles[i];
    if (t.minCoeff() < 0 || t.maxCoeff() >= n) {
      throw std::out_of_range("mesh: triangle index out of range");
    }
    if (triangle_area(static_cast<int>(i)) <= 1e-12) {
      throw std::invalid_argument("mesh: degenerate triangle " + std::to_string(i));
    }
  }
}

Aabb build_frame_aabb(const TriMesh& mesh, double xy_margin, double z_margin) {
  if (mesh.empty()) throw std::invalid_argument("build_frame_aabb: empty mesh");
  Vec3 lo = mesh.vertices.front();
  Vec3 hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 margin(xy_margin, xy_margin, z_margin);
  return {lo - margin, hi + margin};
}

namespace {

// Moller-Trumbore; returns t and barycentrics (1-u-v, u, v) for hits with t > eps.
bool intersect_triangle(const Ray& ray, const Vec3& v0, const Vec3& v1, const Vec3& v2,
                        double* t_out, double* u_out, double* v_out) {
  constexpr double kEps = 1e-12;
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 pvec = ray.direction.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < kEps) return false;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = ray.origin - v0;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(e1);
  const double v = ray.direction.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qvec) * inv_det;
  if (t <= kEps) return false;
  *t_out = t;
  *u_out = u;
  *v_out = v;
  return true;
}

}  // namespace

std::optional<MeshHit> ray_mesh_intersect(const Ray& ray, const TriMesh& mesh,
                                          const Aabb* precull) {
  if (precull && !ray_aabb_intersect(ray, *precull)) return std::nullopt;
  MeshHit best;
  best.t = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& tri = mesh.triangles[i];
    double t, u, v;
    if (intersect_triangle(ray, mesh.vertices[tri.x()], mesh.vertices[tri.y()],
                           mesh.vertices[tri.z()], &t, &u, &v) &&
        t < best.t) {
      best.t = t;
      best.triangle = static_cast<int>(i);
      best.barycentric = Vec3(1.0 - u - v, u, v);
    }
  }
  if (best.triangle < 0) return std::nullopt;
  return best;
}

int ray_mesh_count_hits(const Ray& ray, const TriMesh& mesh) {
  int count = 0;
  for (const auto& tri : mesh.triangles) {
    double t, u, v;
    if (intersect_triangle(ray, mesh.vertices[tri.x()], mesh.vertices[tri.y()],
                           mesh.vertices[tri.z()], &t, &u, &v)) {
      ++count;
    }
  }
  return count;
}

Twist::Twist(const Vec3& omega_in, const Vec3& v_in) : omega(omega_in), v(v_in) {
  if (!omega.allFinite() || !v.allFinite()) throw std::invalid_argument("twist: non-finite");
  if (omega.norm() >= M_PI) {
    throw std::invalid_argument("twist: |omega| must be < pi for a unique log map");
  }
}

void se3_series_coeffs(double s, double* a, double* b, double* c, double* da, double* db,
                       double* dc) {
  // Below the switch point the closed forms lose digits to cancellation; the
  // truncated series are exact to ~1e-16 there.
  if (s < 1e-4) {
    *a = 1.0 - s / 6.0 + s * s / 120.0;
    *b = 0.5 - s / 24.0 + s * s / 720.0;
    *c = 1.0 / 6.0 - s / 120.0 + s * s / 5040.0;
    if (da) *da = -1.0 / 6.0 + s / 60.0 - s * s / 1680.0;
    if (db) *db = -1.0 / 24.0 + s / 360.0 - s * s / 13440.0;
    if (dc) *dc = -1.0 / 120.0 + s / 2520.0 - s * s / 120960.0;
    return;
  }
  const double t = std::sqrt(s);
  const double st = std::sin(t);
  const double ct = std::cos(t);
  *a = st / t;
  *b = (1.0 - ct) / s;
  *c = (t - st) / (s * t);
  if (da) *da = (t * ct - st) / (2.0 * s * t);
  if (db) *db = (t * st / 2.0 - (1.0 - ct)) / (s * s);
  if (dc) *dc = ((1.0 - ct) / 2.0 - 1.5 * (t - st) / t) / (s * s);
}

CameraModel make_lookat_camera(const Vec3& position, const Vec3& target, int width, int height,
                               double focal) {
  const Vec3 to_target = target - position;
  if (to_target.norm() < 1e-9) {
    throw std::invalid_argument("make_lookat_camera: position equals target");
  }
  const Vec3 forward = to_target.normalized();
  Vec3 up = Vec3::UnitY();
  if (forward.cross(up).norm() < 1e-6) up = Vec3::UnitX();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 true_up = right.cross(forward);
  CameraModel camera;
  camera.fx = camera.fy = focal;
  camera.cx = (width - 1) / 2.0;
  camera.cy = (height - 1) / 2.0;
  camera.width = width;
  camera.height = height;
  camera.world_from_camera.rotation.col(0) = right;
  camera.world_from_camera.rotation.col(1) = true_up;
  camera.world_from_camera.rotation.col(2) = -forward;
  camera.world_from_camera.translation = position;
  camera.validate();
  return camera;
}

Vec3 se3_apply(const Twist& twist, const Vec3& x) {
  const Vec3& w = twist.omega;
  double a, b, c;
  se3_series_coeffs(w.squaredNorm(), &a, &b, &c);
  const Vec3 rotated = x + a * w.cross(x) + b * w.cross(w.cross(x));
  const Vec3 translated = twist.v + b * w.cross(twist.v) + c * w.cross(w.cross(twist.v));
  return rotated + translated;
}

}  // namespace canonflow
