// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "canonflow/fields.hpp"
#include "canonflow/geometry.hpp"
#include "canonflow/image.hpp"
#include "canonflow/losses.hpp"

namespace canonflow {

/// Per-frame named keypoints: 3D world positions plus their 2D projections
/// as continuous (row, col) in the frame's camera.
struct FrameKeypoints {
  std::map<std::string, Eigen::Vector3d> world;
  std::map<std::string, Eigen::Vector2d> pixel;
};

/// A stationary-monocular sequence with everything training and evaluation
/// consume. `meshes` is the estimated (noise-injected) track driving the
/// initialization; `clean_meshes` is the ground-truth track behind masks,
/// keypoints, and the misalignment study.
struct FrameDataset {
  std::vector<Image> frames;
  std::vector<Mask> masks;              // exact silhouettes
  std::vector<double> timestamps;       // t_0 = 0, ascending, within [0, 1]
  CameraModel camera;
  Image background;
  std::vector<TriMesh> meshes;          // estimated track
  std::vector<TriMesh> clean_meshes;    // ground-truth track
  TriMesh canonical_mesh;               // estimated track, frame-0 pose
  std::vector<FrameKeypoints> keypoints;  // from the ground-truth track
  SceneScale scene_scale;
  double fps = 30.0;

  // Optional held-out novel views.
  std::vector<Image> eval_images;
  std::vector<Mask> eval_masks;
  std::vector<CameraModel> eval_cameras;
  std::vector<double> eval_times;
  std::vector<FrameKeypoints> eval_keypoints;

  int frame_count() const { return static_cast<int>(frames.size()); }
  /// Counts agree, mesh topology is shared with the canonical mesh,
  /// t_0 == 0 and timestamps ascend. Throws std::invalid_argument.
  void validate() const;
};

/// Per-pixel, per-channel median across frames (even counts average the two
/// middle values). Throws on an empty list or shape mismatches.
Image extract_background(const std::vector<Image>& frames);

/// Area-weighted random surface points on the posed mesh paired with the
/// same barycentric location on the canonical mesh. Topology mismatch is
/// rejected.
CorrespondenceBatch sample_correspondences(const TriMesh& posed, const TriMesh& canonical,
                                           int count, std::mt19937_64& rng);

/// Uniform AABB samples kept only when farther than `margin` from every mesh
/// vertex (vertex distance is the documented proxy for surface distance).
/// Throws std::runtime_error when the rejection rate exceeds 99%.
Eigen::MatrixXd sample_free_points(const Aabb& box, const TriMesh& posed, double margin,
                                   int count, std::mt19937_64& rng);

/// Projects the mesh silhouette onto the camera: a pixel is set when its
/// center lies inside some projected triangle (equivalently, when the pixel
/// ray hits the mesh).
Mask rasterize_silhouette(const TriMesh& mesh, const CameraModel& camera);

/// Ray-cast flat-albedo render: nearest hit, barycentric vertex-color
/// interpolation, solid background elsewhere. Colors snap to the 8-bit grid
/// so PNG round trips are lossless. Optionally reports the hit mask.
Image render_mesh_flat(const TriMesh& mesh, const CameraModel& camera,
                       const Eigen::Vector3d& background, Mask* mask_out = nullptr);

/// Exhaustive search over the translation lattice spanning `grid` with
/// `resolution` nodes per axis, minimizing 1 - IoU between the translated
/// mesh silhouette and target_mask. Ties break to the lexicographically
/// smallest translation (the scan order).
Eigen::Vector3d grid_location_search(const TriMesh& mesh, const Mask& target_mask,
                                     const CameraModel& camera, const Aabb& grid,
                                     const Eigen::Vector3i& resolution);

/// Directory layout: frames/%04d.png, masks/%04d.png, meshes/%04d.obj (+
/// .joints.json sidecars), canonical.obj, keypoints.json, camera.json,
/// background.png, meta.json, optional eval/ (views, masks, eval.json,
/// clean_meshes). meta.json carries a version field checked on load.
void save_dataset(const FrameDataset& dataset, const std::filesystem::path& path);
FrameDataset load_dataset(const std::filesystem::path& path);

}  // namespace canonflow
