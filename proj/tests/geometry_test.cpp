// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/geometry.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"

using namespace canonflow;

namespace {

CameraModel test_camera() {
  CameraModel cam;
  cam.fx = 100.0;
  cam.fy = 100.0;
  cam.cx = 32.0;
  cam.cy = 24.0;
  cam.width = 64;
  cam.height = 48;
  return cam;
}

/// Unit cube [0,1]^3 as 12 triangles with outward orientation unimportant
/// for the intersection routines under test.
TriMesh unit_cube() {
  TriMesh mesh;
  for (int z = 0; z <= 1; ++z) {
    for (int y = 0; y <= 1; ++y) {
      for (int x = 0; x <= 1; ++x) mesh.vertices.emplace_back(x, y, z);
    }
  }
  const int quads[6][4] = {{0, 1, 3, 2}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.triangles.emplace_back(q[0], q[1], q[2]);
    mesh.triangles.emplace_back(q[0], q[2], q[3]);
  }
  return mesh;
}

}  // namespace

TEST_CASE("pose apply and inverse round trip") {
  Pose pose;
  pose.rotation = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  pose.translation = Vec3(0.4, -1.2, 2.5);
  const Vec3 p(0.3, 0.8, -0.5);
  CHECK((pose.apply_inverse(pose.apply(p)) - p).norm() < 1e-14);
  const Pose inv = pose.inverse();
  CHECK((inv.apply(pose.apply(p)) - p).norm() < 1e-14);
}

TEST_CASE("camera validation") {
  CameraModel cam = test_camera();
  CHECK_NOTHROW(cam.validate());
  cam.fx = -1.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  cam = test_camera();
  cam.cx = 100.0;  // outside the image
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  cam = test_camera();
  cam.world_from_camera.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}

TEST_CASE("ray generation oracle for the identity pose") {
  // +X right, +Y up, looking down -Z, rows increase downward:
  // dir_cam = ((col - cx) / fx, -(row - cy) / fy, -1), normalized.
  const CameraModel cam = test_camera();
  const Ray ray = generate_ray(cam, 10.0, 40.0);
  const Vec3 expected = Vec3(0.08, 0.14, -1.0).normalized();
  CHECK((ray.direction - expected).norm() < 1e-15);
  CHECK(ray.origin.norm() == 0.0);
  CHECK(ray.pixel_row == 10.0);
  CHECK(ray.pixel_col == 40.0);
  CHECK(std::abs(ray.direction.norm() - 1.0) < 1e-15);

  // The center pixel looks straight down -Z.
  const Ray center = generate_ray(cam, cam.cy, cam.cx);
  CHECK((center.direction - Vec3(0, 0, -1)).norm() < 1e-15);

  CHECK_THROWS_AS(generate_ray(cam, -1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(generate_ray(cam, 0.0, 64.0), std::invalid_argument);
}

TEST_CASE("project inverts ray generation under an arbitrary pose") {
  CameraModel cam = test_camera();
  cam.world_from_camera.rotation =
      Eigen::AngleAxisd(-0.4, Vec3(0.2, 1.0, -0.3).normalized()).toRotationMatrix();
  cam.world_from_camera.translation = Vec3(1.5, -0.2, 3.0);
  cam.validate();

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> row_dist(0.0, cam.height - 1e-9);
  std::uniform_real_distribution<double> col_dist(0.0, cam.width - 1e-9);
  std::uniform_real_distribution<double> t_dist(0.5, 10.0);
  for (int i = 0; i < 50; ++i) {
    const double row = row_dist(rng), col = col_dist(rng);
    const Ray ray = generate_ray(cam, row, col);
    const Vec3 p = ray.at(t_dist(rng));
    CHECK(cam.in_front(p));
    const Eigen::Vector2d rc = cam.project(p);
    CHECK(rc(0) == doctest::Approx(row).epsilon(1e-10));
    CHECK(rc(1) == doctest::Approx(col).epsilon(1e-10));
  }

  // Points behind the camera are rejected.
  const Vec3 behind = cam.center() + cam.world_from_camera.rotation * Vec3(0, 0, 1.0);
  CHECK_FALSE(cam.in_front(behind));
  CHECK_THROWS_AS(cam.project(behind), std::invalid_argument);
}

TEST_CASE("ray aabb intersection") {
  const Aabb box{Vec3(0, 0, 0), Vec3(1, 1, 1)};

  Ray ray;
  ray.origin = Vec3(-2.0, 0.5, 0.5);
  ray.direction = Vec3(1, 0, 0);
  auto hit = ray_aabb_intersect(ray, box);
  REQUIRE(hit.has_value());
  CHECK(hit->first == doctest::Approx(2.0));
  CHECK(hit->second == doctest::Approx(3.0));

  // Origin inside: near end clamps to zero.
  ray.origin = Vec3(0.5, 0.5, 0.5);
  hit = ray_aabb_intersect(ray, box);
  REQUIRE(hit.has_value());
  CHECK(hit->first == 0.0);
  CHECK(hit->second == doctest::Approx(0.5));

  // Box entirely behind.
  ray.origin = Vec3(2.0, 0.5, 0.5);
  CHECK_FALSE(ray_aabb_intersect(ray, box).has_value());

  // Parallel miss (zero direction component outside the slab).
  ray.origin = Vec3(-2.0, 1.5, 0.5);
  CHECK_FALSE(ray_aabb_intersect(ray, box).has_value());

  // Diagonal through opposite corners.
  ray.origin = Vec3(-1, -1, -1);
  ray.direction = Vec3(1, 1, 1).normalized();
  hit = ray_aabb_intersect(ray, box);
  REQUIRE(hit.has_value());
  CHECK(hit->first == doctest::Approx(std::sqrt(3.0)));
  CHECK(hit->second == doctest::Approx(2.0 * std::sqrt(3.0)));
}

TEST_CASE("ray triangle intersection oracle") {
  TriMesh mesh;
  mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  mesh.triangles = {Eigen::Vector3i(0, 1, 2)};
  mesh.validate();

  Ray ray;
  ray.origin = Vec3(0.2, 0.3, 1.0);
  ray.direction = Vec3(0, 0, -1);
  const auto hit = ray_mesh_intersect(ray, mesh);
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(1.0));
  CHECK(hit->triangle == 0);
  CHECK(hit->barycentric(0) == doctest::Approx(0.5));
  CHECK(hit->barycentric(1) == doctest::Approx(0.2));
  CHECK(hit->barycentric(2) == doctest::Approx(0.3));
  CHECK(hit->barycentric.sum() == doctest::Approx(1.0));

  // Outside the triangle.
  ray.origin = Vec3(0.8, 0.8, 1.0);
  CHECK_FALSE(ray_mesh_intersect(ray, mesh).has_value());

  // Behind the origin.
  ray.origin = Vec3(0.2, 0.3, -1.0);
  CHECK_FALSE(ray_mesh_intersect(ray, mesh).has_value());
}

TEST_CASE("mesh intersection picks the nearest hit and counts parity") {
  const TriMesh cube = unit_cube();
  cube.validate();

  // Pixel offsets avoid the face diagonals, where an edge hit would be
  // counted by both triangles of a quad.
  Ray ray;
  ray.origin = Vec3(0.25, 0.4, 5.0);
  ray.direction = Vec3(0, 0, -1);
  const auto hit = ray_mesh_intersect(ray, cube);
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(4.0));  // front face at z = 1
  CHECK(ray_mesh_count_hits(ray, cube) == 2);

  // From inside: one crossing (odd parity).
  ray.origin = Vec3(0.25, 0.4, 0.5);
  CHECK(ray_mesh_count_hits(ray, cube) == 1);

  // AABB precull keeps the same answer.
  const Aabb box{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  ray.origin = Vec3(0.25, 0.4, 5.0);
  const auto hit2 = ray_mesh_intersect(ray, cube, &box);
  REQUIRE(hit2.has_value());
  CHECK(hit2->t == doctest::Approx(4.0));

  // Precull miss short-circuits.
  ray.origin = Vec3(5.0, 5.0, 5.0);
  CHECK_FALSE(ray_mesh_intersect(ray, cube, &box).has_value());
}

TEST_CASE("mesh validation catches bad meshes") {
  TriMesh mesh;
  mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  mesh.triangles = {Eigen::Vector3i(0, 1, 3)};  // out of range
  CHECK_THROWS_AS(mesh.validate(), std::out_of_range);
  mesh.triangles = {Eigen::Vector3i(0, 1, 1)};  // degenerate
  CHECK_THROWS_AS(mesh.validate(), std::invalid_argument);
  mesh.triangles = {Eigen::Vector3i(0, 1, 2)};
  mesh.vertex_colors = {Vec3(1, 0, 0)};  // wrong count
  CHECK_THROWS_AS(mesh.validate(), std::invalid_argument);
}

TEST_CASE("frame aabb applies asymmetric margins") {
  TriMesh mesh;
  mesh.vertices = {Vec3(-1, -2, 0.5), Vec3(1, 2, 1.5), Vec3(0, 0, 1.0)};
  mesh.triangles = {Eigen::Vector3i(0, 1, 2)};
  const Aabb box = build_frame_aabb(mesh, 0.2, 0.4);
  CHECK((box.min - Vec3(-1.2, -2.2, 0.1)).norm() < 1e-15);
  CHECK((box.max - Vec3(1.2, 2.2, 1.9)).norm() < 1e-15);
  CHECK_THROWS_AS(build_frame_aabb(TriMesh{}, 0.1, 0.1), std::invalid_argument);
}

TEST_CASE("twist validation") {
  CHECK_NOTHROW(Twist(Vec3(0, 0, 3.0), Vec3::Zero()));
  CHECK_THROWS_AS(Twist(Vec3(0, 0, 4.0), Vec3::Zero()), std::invalid_argument);  // |omega| >= pi
  CHECK_THROWS_AS(Twist(Vec3(0, 0, std::nan("")), Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("se3 apply oracle") {
  // Zero twist is the identity.
  const Vec3 x(0.3, -0.7, 1.1);
  CHECK((se3_apply(Twist(), x) - x).norm() == 0.0);

  // Pure translation.
  const Twist trans(Vec3::Zero(), Vec3(0.1, 0.2, 0.3));
  CHECK((se3_apply(trans, x) - (x + Vec3(0.1, 0.2, 0.3))).norm() < 1e-15);

  // Quarter-turn screw about +Z with unit translation along +X:
  // exp: R x = (0, 1, 0); G v = (sin(t)/t, (1-cos(t)) t / t^2, 0), t = pi/2.
  const Twist screw(Vec3(0, 0, M_PI / 2), Vec3(1, 0, 0));
  const Vec3 y = se3_apply(screw, Vec3(1, 0, 0));
  CHECK(y(0) == doctest::Approx(0.63661977236758134).epsilon(1e-14));
  CHECK(y(1) == doctest::Approx(1.6366197723675813).epsilon(1e-14));
  CHECK(y(2) == doctest::Approx(0.0));
}

TEST_CASE("se3 rotation part matches a rotation matrix") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    Vec3 omega(dist(rng), dist(rng), dist(rng));
    Vec3 x(dist(rng), dist(rng), dist(rng));
    const Mat3 r = Eigen::AngleAxisd(omega.norm(), omega.normalized()).toRotationMatrix();
    const Vec3 got = se3_apply(Twist(omega, Vec3::Zero()), x);
    CHECK((got - r * x).norm() < 1e-13);
  }
}

TEST_CASE("se3 series coefficients: closed form, Taylor, and derivatives") {
  double a, b, c;
  se3_series_coeffs(0.3, &a, &b, &c);
  CHECK(a == doctest::Approx(0.95074466511781171).epsilon(1e-15));
  CHECK(b == doctest::Approx(0.48762433258422101).epsilon(1e-15));
  CHECK(c == doctest::Approx(0.16418444960729430).epsilon(1e-15));

  double da, db, dc;
  se3_series_coeffs(0.3, &a, &b, &c, &da, &db, &dc);
  CHECK(da == doctest::Approx(-0.16171994148846335).epsilon(1e-12));
  CHECK(db == doctest::Approx(-0.040840000084383866).epsilon(1e-12));
  CHECK(dc == doctest::Approx(-0.0082150270627698338).epsilon(1e-12));

  // Limits at s = 0.
  se3_series_coeffs(0.0, &a, &b, &c, &da, &db, &dc);
  CHECK(a == 1.0);
  CHECK(b == 0.5);
  CHECK(c == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(da == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
  CHECK(db == doctest::Approx(-1.0 / 24.0).epsilon(1e-12));
  CHECK(dc == doctest::Approx(-1.0 / 120.0).epsilon(1e-12));

  // Just below the switchover the Taylor branch must agree with the closed
  // forms evaluated directly (their cancellation error there is ~1e-12).
  const double s = 0.99e-4;
  const double t = std::sqrt(s);
  se3_series_coeffs(s, &a, &b, &c);
  CHECK(a == doctest::Approx(std::sin(t) / t).epsilon(1e-11));
  CHECK(b == doctest::Approx((1.0 - std::cos(t)) / s).epsilon(1e-11));
  CHECK(c == doctest::Approx((t - std::sin(t)) / (s * t)).epsilon(1e-9));

  // Derivatives agree with central differences of the values.
  for (const double s : {0.05, 0.5, 2.0, 6.0}) {
    const double eps = 1e-6;
    double ap, bp, cp, am, bm, cm;
    se3_series_coeffs(s + eps, &ap, &bp, &cp);
    se3_series_coeffs(s - eps, &am, &bm, &cm);
    se3_series_coeffs(s, &a, &b, &c, &da, &db, &dc);
    CHECK(da == doctest::Approx((ap - am) / (2 * eps)).epsilon(1e-7));
    CHECK(db == doctest::Approx((bp - bm) / (2 * eps)).epsilon(1e-7));
    CHECK(dc == doctest::Approx((cp - cm) / (2 * eps)).epsilon(1e-7));
  }
}
