// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "canonflow/data.hpp"

namespace canonflow {

/// One rigid body part: an ellipsoid hinged to its parent. The kinematic
/// chain is  T_k = T_parent * Translate(joint_offset) * Rot(hinge_axis, a_k),
/// with a_k(t) = angle_amplitude * sin(2*pi*t + angle_phase). The part's
/// vertices live at center_from_joint + radii-scaled sphere points in the
/// joint frame; the joint origin itself is the part's named keypoint.
struct EllipsoidSpec {
  std::string name;
  Eigen::Vector3d radii = Eigen::Vector3d::Constant(0.1);
  Eigen::Vector3d color = Eigen::Vector3d(0.8, 0.3, 0.3);
  int parent = -1;  // -1 attaches the part to the root motion directly
  Eigen::Vector3d joint_offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d center_from_joint = Eigen::Vector3d::Zero();
  Eigen::Vector3d hinge_axis = Eigen::Vector3d::UnitZ();
  double angle_amplitude = 0.0;  // radians
  double angle_phase = 0.0;
  bool textured_band = false;  // checkered albedo instead of a flat color
};

struct SynthConfig {
  int frame_count = 24;
  int image_width = 96;
  int image_height = 96;
  double focal = 110.0;  // pixels; principal point sits at the image center
  double fps = 30.0;
  Eigen::Vector3d background_color = Eigen::Vector3d(0.92, 0.92, 0.88);

  // Camera placed at camera_position looking at the articulated body.
  Eigen::Vector3d camera_position = Eigen::Vector3d(0.0, 0.0, 0.0);
  Eigen::Vector3d look_at = Eigen::Vector3d(0.0, 0.0, -2.2);

  std::vector<EllipsoidSpec> parts;
  int sphere_subdivisions = 4;  // tessellation density of each ellipsoid

  // Root motion: position(t) = look_at + drift * t + swing * sin(2*pi*t).
  Eigen::Vector3d root_linear_drift = Eigen::Vector3d::Zero();
  Eigen::Vector3d root_swing_amplitude = Eigen::Vector3d::Zero();
  Eigen::Vector3d root_hinge_axis = Eigen::Vector3d::UnitY();
  double root_angle_amplitude = 0.0;
  double root_angle_phase = 0.0;

  // Estimated-track corruption, sampled per frame: a uniform joint-angle
  // jitter, then one rigid error (rotation about the body centroid plus a
  // translation) with uniformly drawn magnitudes up to these bounds.
  double noise_joint_deg = 5.0;
  double noise_rotation_deg = 10.0;
  double noise_translation = 0.05;  // meters

  // Held-out novel views on a horizontal arc around the body.
  int eval_view_count = 2;
  double eval_view_spread_deg = 25.0;

  void validate() const;  // frame_count >= 2, parts well-formed, etc.
  /// Desk-scale default: a five-part articulated figure about 2.2 m from
  /// a stationary camera, swinging limbs plus a slow root drift.
  static SynthConfig desk_default();
};

/// Renders the full synthetic sequence: ray-cast albedo frames against a
/// solid background, exact masks and keypoints from the clean track, and a
/// seeded noise-injected estimated track (canonical mesh = estimated frame
/// 0). Deterministic for a fixed (config, seed).
FrameDataset generate_synthetic_sequence(const SynthConfig& config, uint64_t seed);

/// Clean kinematic chain: world-from-joint pose of every part at time t,
/// indexed like config.parts. Exposes the script's ground-truth motion so
/// tests can verify flow consistency of generated correspondences.
std::vector<Pose> part_world_poses(const SynthConfig& config, double t);

/// Part index owning each vertex of the assembled body mesh.
std::vector<int> vertex_part_ids(const SynthConfig& config);

}  // namespace canonflow
