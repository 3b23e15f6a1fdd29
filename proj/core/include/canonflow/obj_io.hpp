// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "canonflow/geometry.hpp"

namespace canonflow {

/// Wavefront-OBJ subset: `v x y z [r g b]` and `f i j k` (1-based indices,
/// `i/j/k` forms accepted, position index only). Vertex colors are written
/// when the mesh has them.
TriMesh load_obj(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const TriMesh& mesh);

/// Joints sidecar: JSON object mapping joint name -> [x, y, z]. Loaded into /
/// written from TriMesh::joints. The conventional sidecar path for mesh.obj
/// is mesh.joints.json.
std::filesystem::path joints_sidecar_path(const std::filesystem::path& obj_path);
void load_joints_sidecar(const std::filesystem::path& path, TriMesh* mesh);
void save_joints_sidecar(const std::filesystem::path& path, const TriMesh& mesh);

}  // namespace canonflow
