// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/obj_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace canonflow {

namespace {

int parse_face_index(const std::string& token, std::size_t vertex_count) {
  // Accepts "i", "i/j", "i/j/k"; only the position index is used.
  const std::size_t slash = token.find('/');
  const int idx = std::stoi(slash == std::string::npos ? token : token.substr(0, slash));
  if (idx < 1 || static_cast<std::size_t>(idx) > vertex_count) {
    throw std::runtime_error("obj: face index out of range: " + token);
  }
  return idx - 1;
}

}  // namespace

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("obj: cannot open: " + path.string());

  TriMesh mesh;
  bool any_color = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      std::vector<double> nums;
      double value;
      while (ss >> value) nums.push_back(value);
      if (nums.size() != 3 && nums.size() != 6) {
        throw std::runtime_error("obj: malformed vertex: " + line);
      }
      const bool colored = nums.size() == 6;
      if (!mesh.vertices.empty() && colored != any_color) {
        throw std::runtime_error("obj: mixed colored and uncolored vertices");
      }
      any_color = colored;
      mesh.vertices.emplace_back(nums[0], nums[1], nums[2]);
      if (colored) mesh.vertex_colors.emplace_back(nums[3], nums[4], nums[5]);
    } else if (tag == "f") {
      std::string a, b, c;
      if (!(ss >> a >> b >> c)) throw std::runtime_error("obj: malformed face: " + line);
      mesh.triangles.emplace_back(parse_face_index(a, mesh.vertices.size()),
                                  parse_face_index(b, mesh.vertices.size()),
                                  parse_face_index(c, mesh.vertices.size()));
      std::string extra;
      if (ss >> extra) throw std::runtime_error("obj: only triangle faces are supported");
    }
    // Other tags (vn, vt, comments, groups) are ignored.
  }
  mesh.validate();
  return mesh;
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("obj: cannot open for writing: " + path.string());
  out.precision(17);
  const bool colored = !mesh.vertex_colors.empty();
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z();
    if (colored) {
      const Vec3& c = mesh.vertex_colors[i];
      out << ' ' << c.x() << ' ' << c.y() << ' ' << c.z();
    }
    out << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t.x() + 1 << ' ' << t.y() + 1 << ' ' << t.z() + 1 << '\n';
  }
  if (!out) throw std::runtime_error("obj: write failed: " + path.string());
}

std::filesystem::path joints_sidecar_path(const std::filesystem::path& obj_path) {
  std::filesystem::path p = obj_path;
  p.replace_extension(".joints.json");
  return p;
}

void load_joints_sidecar(const std::filesystem::path& path, TriMesh* mesh) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("joints: cannot open: " + path.string());
  nlohmann::json j;
  in >> j;
  mesh->joints.clear();
  for (const auto& [name, coords] : j.items()) {
    if (!coords.is_array() || coords.size() != 3) {
      throw std::runtime_error("joints: '" + name + "' is not a 3-vector");
    }
    mesh->joints[name] = Vec3(coords[0].get<double>(), coords[1].get<double>(),
                              coords[2].get<double>());
  }
}

void save_joints_sidecar(const std::filesystem::path& path, const TriMesh& mesh) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, p] : mesh.joints) j[name] = {p.x(), p.y(), p.z()};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("joints: cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace canonflow
