// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/synth.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Geometry>

#include "canonflow/data.hpp"

namespace canonflow {
namespace {

constexpr double kPi = 3.14159265358979323846;

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Unit UV sphere shared by every part. `checker` flags alternate cells for
/// the textured-band albedo; poles count as band 0.
struct SphereTopo {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<bool> checker;
};

SphereTopo unit_sphere(int subdivisions) {
  const int lat = 4 + 2 * subdivisions;
  const int lon = 8 + 4 * subdivisions;
  SphereTopo topo;
  topo.vertices.push_back(Vec3(0, 1, 0));
  topo.checker.push_back(false);
  for (int i = 1; i < lat; ++i) {
    const double theta = kPi * i / lat;
    for (int j = 0; j < lon; ++j) {
      const double phi = 2.0 * kPi * j / lon;
      topo.vertices.push_back(
          Vec3(std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)));
      topo.checker.push_back(((i + j) % 2) != 0);
    }
  }
  topo.vertices.push_back(Vec3(0, -1, 0));
  topo.checker.push_back(false);
  const int south = static_cast<int>(topo.vertices.size()) - 1;
  auto ring = [lon](int i, int j) { return 1 + (i - 1) * lon + (j % lon); };
  for (int j = 0; j < lon; ++j) {
    topo.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
  }
  for (int i = 1; i + 1 < lat; ++i) {
    for (int j = 0; j < lon; ++j) {
      const int a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j), d = ring(i + 1, j + 1);
      topo.triangles.push_back({a, b, c});
      topo.triangles.push_back({b, d, c});
    }
  }
  for (int j = 0; j < lon; ++j) {
    topo.triangles.push_back({south, ring(lat - 1, j + 1), ring(lat - 1, j)});
  }
  return topo;
}

double part_angle(const EllipsoidSpec& part, double t) {
  return part.angle_amplitude * std::sin(2.0 * kPi * t + part.angle_phase);
}

std::vector<Pose> chain_poses(const SynthConfig& config, double t,
                              const std::vector<double>& joint_jitter) {
  const Vec3 root_position = config.look_at + config.root_linear_drift * t +
                             config.root_swing_amplitude * std::sin(2.0 * kPi * t);
  const Pose root{axis_angle(config.root_hinge_axis, config.root_angle_amplitude *
                                                         std::sin(2.0 * kPi * t +
                                                                  config.root_angle_phase)),
                  root_position};
  std::vector<Pose> poses;
  poses.reserve(config.parts.size());
  for (size_t k = 0; k < config.parts.size(); ++k) {
    const EllipsoidSpec& part = config.parts[k];
    const double jitter = joint_jitter.empty() ? 0.0 : joint_jitter[k];
    const Pose local{axis_angle(part.hinge_axis, part_angle(part, t) + jitter),
                     part.joint_offset};
    const Pose& parent = part.parent < 0 ? root : poses[static_cast<size_t>(part.parent)];
    poses.push_back(compose(parent, local));
  }
  return poses;
}

TriMesh assemble_body(const SynthConfig& config, const SphereTopo& topo,
                      const std::vector<Pose>& poses) {
  TriMesh mesh;
  for (size_t k = 0; k < config.parts.size(); ++k) {
    const EllipsoidSpec& part = config.parts[k];
    const Pose& pose = poses[k];
    const int base = static_cast<int>(mesh.vertices.size());
    const Vec3 muted = 0.25 * part.color + Vec3::Constant(0.05);
    for (size_t v = 0; v < topo.vertices.size(); ++v) {
      const Vec3 local = part.center_from_joint + part.radii.cwiseProduct(topo.vertices[v]);
      mesh.vertices.push_back(pose.apply(local));
      mesh.vertex_colors.push_back(part.textured_band && topo.checker[v] ? muted : part.color);
    }
    for (const Eigen::Vector3i& tri : topo.triangles) {
      mesh.triangles.push_back(tri + Eigen::Vector3i::Constant(base));
    }
    mesh.joints[part.name] = pose.apply(Vec3::Zero());
  }
  return mesh;
}

/// Snaps to the 8-bit grid so the PNG round trip is lossless.
void quantize_image(Image* image) {
  for (double& v : image->data()) v = quantize_u8(v) / 255.0;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (;;) {
    Vec3 v;
    v.x() = unit(rng);  // sequenced draws keep the stream layout fixed
    v.y() = unit(rng);
    v.z() = unit(rng);
    const double n = v.norm();
    if (n > 1e-6 && n <= 1.0) return v / n;
  }
}

/// One rigid error per frame: rotate about the body centroid, then translate.
void apply_rigid_noise(TriMesh* mesh, const Mat3& rotation, const Vec3& translation) {
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& v : mesh->vertices) centroid += v;
  centroid /= static_cast<double>(mesh->vertices.size());
  for (Vec3& v : mesh->vertices) v = rotation * (v - centroid) + centroid + translation;
  for (auto& [name, joint] : mesh->joints) {
    joint = rotation * (joint - centroid) + centroid + translation;
  }
}

FrameKeypoints project_keypoints(const TriMesh& mesh, const CameraModel& camera) {
  FrameKeypoints kp;
  for (const auto& [name, position] : mesh.joints) {
    kp.world[name] = position;
    kp.pixel[name] = camera.project(position);
  }
  return kp;
}

Aabb union_aabb(const Aabb& a, const Aabb& b) {
  return {a.min.cwiseMin(b.min), a.max.cwiseMax(b.max)};
}

}  // namespace

void SynthConfig::validate() const {
  if (frame_count < 2) throw std::invalid_argument("SynthConfig: frame_count must be >= 2");
  if (image_width < 8 || image_height < 8) {
    throw std::invalid_argument("SynthConfig: image size must be at least 8x8");
  }
  if (!(focal > 0) || !(fps > 0)) throw std::invalid_argument("SynthConfig: focal and fps > 0");
  if (parts.empty()) throw std::invalid_argument("SynthConfig: at least one part");
  if ((camera_position - look_at).norm() < 1e-9) {
    throw std::invalid_argument("SynthConfig: camera_position equals look_at");
  }
  if (sphere_subdivisions < 1) throw std::invalid_argument("SynthConfig: subdivisions >= 1");
  if (noise_joint_deg < 0 || noise_rotation_deg < 0 || noise_translation < 0) {
    throw std::invalid_argument("SynthConfig: noise magnitudes must be >= 0");
  }
  if (eval_view_count < 0 || eval_view_spread_deg < 0) {
    throw std::invalid_argument("SynthConfig: eval view settings must be >= 0");
  }
  if (root_hinge_axis.norm() < 1e-9) throw std::invalid_argument("SynthConfig: zero root axis");
  std::vector<std::string> names;
  for (size_t k = 0; k < parts.size(); ++k) {
    const EllipsoidSpec& part = parts[k];
    if (part.name.empty()) throw std::invalid_argument("SynthConfig: unnamed part");
    for (const std::string& other : names) {
      if (other == part.name) throw std::invalid_argument("SynthConfig: duplicate part name");
    }
    names.push_back(part.name);
    if (part.parent < -1 || part.parent >= static_cast<int>(k)) {
      throw std::invalid_argument("SynthConfig: part parents must precede children");
    }
    if (!(part.radii.minCoeff() > 0)) throw std::invalid_argument("SynthConfig: radii must be > 0");
    if (part.color.minCoeff() < 0 || part.color.maxCoeff() > 1) {
      throw std::invalid_argument("SynthConfig: colors must lie in [0,1]");
    }
    if (part.hinge_axis.norm() < 1e-9) throw std::invalid_argument("SynthConfig: zero hinge axis");
  }
}

SynthConfig SynthConfig::desk_default() {
  SynthConfig config;
  config.frame_count = 24;
  config.image_width = 96;
  config.image_height = 96;
  config.focal = 110.0;
  config.root_linear_drift = Vec3(0.05, 0.0, 0.02);
  config.root_swing_amplitude = Vec3(0.04, 0.02, 0.0);
  config.root_hinge_axis = Vec3::UnitY();
  config.root_angle_amplitude = 0.25;

  EllipsoidSpec torso;
  torso.name = "torso";
  torso.radii = Vec3(0.16, 0.22, 0.12);
  torso.color = Vec3(0.85, 0.66, 0.20);
  torso.textured_band = true;
  config.parts.push_back(torso);

  EllipsoidSpec head;
  head.name = "head";
  head.parent = 0;
  head.joint_offset = Vec3(0.0, 0.26, 0.0);
  head.center_from_joint = Vec3(0.0, 0.09, 0.0);
  head.radii = Vec3(0.09, 0.10, 0.09);
  head.color = Vec3(0.25, 0.45, 0.85);
  head.hinge_axis = Vec3::UnitX();
  head.angle_amplitude = 0.35;
  head.angle_phase = 0.7;
  config.parts.push_back(head);

  EllipsoidSpec arm_l;
  arm_l.name = "arm_l";
  arm_l.parent = 0;
  arm_l.joint_offset = Vec3(-0.20, 0.12, 0.0);
  arm_l.center_from_joint = Vec3(-0.13, 0.0, 0.0);
  arm_l.radii = Vec3(0.14, 0.05, 0.05);
  arm_l.color = Vec3(0.20, 0.70, 0.35);
  arm_l.hinge_axis = Vec3::UnitZ();
  arm_l.angle_amplitude = 0.6;
  config.parts.push_back(arm_l);

  EllipsoidSpec arm_r = arm_l;
  arm_r.name = "arm_r";
  arm_r.joint_offset = Vec3(0.20, 0.12, 0.0);
  arm_r.center_from_joint = Vec3(0.13, 0.0, 0.0);
  arm_r.color = Vec3(0.70, 0.25, 0.60);
  arm_r.angle_phase = kPi;
  config.parts.push_back(arm_r);

  EllipsoidSpec tail;
  tail.name = "tail";
  tail.parent = 0;
  tail.joint_offset = Vec3(0.0, -0.24, 0.0);
  tail.center_from_joint = Vec3(0.0, -0.11, 0.0);
  tail.radii = Vec3(0.06, 0.13, 0.06);
  tail.color = Vec3(0.90, 0.40, 0.15);
  tail.hinge_axis = Vec3::UnitX();
  tail.angle_amplitude = 0.5;
  tail.angle_phase = 1.9;
  config.parts.push_back(tail);
  return config;
}

std::vector<Pose> part_world_poses(const SynthConfig& config, double t) {
  return chain_poses(config, t, {});
}

std::vector<int> vertex_part_ids(const SynthConfig& config) {
  const size_t per_part = unit_sphere(config.sphere_subdivisions).vertices.size();
  std::vector<int> ids;
  ids.reserve(per_part * config.parts.size());
  for (size_t k = 0; k < config.parts.size(); ++k) {
    ids.insert(ids.end(), per_part, static_cast<int>(k));
  }
  return ids;
}

FrameDataset generate_synthetic_sequence(const SynthConfig& config, uint64_t seed) {
  config.validate();
  const SphereTopo topo = unit_sphere(config.sphere_subdivisions);
  const CameraModel camera = make_lookat_camera(config.camera_position, config.look_at,
                                            config.image_width, config.image_height, config.focal);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double joint_rad = config.noise_joint_deg * kPi / 180.0;
  const double rot_rad = config.noise_rotation_deg * kPi / 180.0;
  const int m = config.frame_count;

  FrameDataset dataset;
  dataset.camera = camera;
  dataset.fps = config.fps;
  for (int i = 0; i < m; ++i) {
    const double t = static_cast<double>(i) / (m - 1);
    dataset.timestamps.push_back(t);

    const std::vector<Pose> clean_poses = chain_poses(config, t, {});
    dataset.clean_meshes.push_back(assemble_body(config, topo, clean_poses));
    const TriMesh& clean = dataset.clean_meshes.back();
    Mask mask;
    dataset.frames.push_back(render_mesh_flat(clean, camera, config.background_color, &mask));
    dataset.masks.push_back(std::move(mask));
    dataset.keypoints.push_back(project_keypoints(clean, camera));

    // Estimated track: per-joint jitter re-poses the chain, then one rigid
    // error corrupts the whole frame. Draw order is fixed so the stream
    // layout is identical for every noise magnitude (including zero).
    std::vector<double> jitter(config.parts.size());
    for (double& j : jitter) j = (2.0 * unit(rng) - 1.0) * joint_rad;
    const Vec3 rot_axis = random_unit(rng);
    const double rot_angle = unit(rng) * rot_rad;
    const Vec3 trans_dir = random_unit(rng);
    const Vec3 trans = trans_dir * (unit(rng) * config.noise_translation);
    TriMesh estimated = assemble_body(config, topo, chain_poses(config, t, jitter));
    // Skipped when exactly zero so a noise-free config reproduces the clean
    // track bitwise (the centroid round trip would otherwise cost one ulp).
    if (rot_angle != 0.0 || trans.squaredNorm() != 0.0) {
      apply_rigid_noise(&estimated, axis_angle(rot_axis, rot_angle), trans);
    }
    dataset.meshes.push_back(std::move(estimated));
  }
  dataset.canonical_mesh = dataset.meshes.front();
  dataset.background = extract_background(dataset.frames);
  // An even frame count can average two quantized values off the 8-bit grid;
  // snapping keeps the PNG round trip lossless.
  quantize_image(&dataset.background);

  Aabb box = build_frame_aabb(dataset.clean_meshes.front(), 0.0, 0.0);
  for (const TriMesh& mesh : dataset.clean_meshes) {
    box = union_aabb(box, build_frame_aabb(mesh, 0.0, 0.0));
  }
  for (const TriMesh& mesh : dataset.meshes) {
    box = union_aabb(box, build_frame_aabb(mesh, 0.0, 0.0));
  }
  box.min -= Vec3(kFrameMarginXY, kFrameMarginXY, kFrameMarginZ);
  box.max += Vec3(kFrameMarginXY, kFrameMarginXY, kFrameMarginZ);
  dataset.scene_scale.center = box.center();
  dataset.scene_scale.scale = 0.5 * box.extents().maxCoeff();

  const int n_eval = config.eval_view_count;
  for (int j = 0; j < n_eval; ++j) {
    const double spread = config.eval_view_spread_deg * kPi / 180.0;
    const double angle = n_eval == 1 ? spread : -spread + 2.0 * spread * j / (n_eval - 1);
    const Vec3 offset = config.camera_position - config.look_at;
    const Vec3 position = config.look_at + axis_angle(Vec3::UnitY(), angle) * offset;
    const CameraModel eval_camera = make_lookat_camera(position, config.look_at, config.image_width,
                                                   config.image_height, config.focal);
    const int frame = static_cast<int>(std::llround((j + 1) * (m - 1) / double(n_eval + 1)));
    const TriMesh& clean = dataset.clean_meshes[static_cast<size_t>(frame)];
    Mask mask;
    dataset.eval_images.push_back(render_mesh_flat(clean, eval_camera, config.background_color, &mask));
    dataset.eval_masks.push_back(std::move(mask));
    dataset.eval_cameras.push_back(eval_camera);
    dataset.eval_times.push_back(dataset.timestamps[static_cast<size_t>(frame)]);
    dataset.eval_keypoints.push_back(project_keypoints(clean, eval_camera));
  }
  dataset.validate();
  return dataset;
}

}  // namespace canonflow
