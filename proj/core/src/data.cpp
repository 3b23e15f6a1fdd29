// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "canonflow/obj_io.hpp"
#include "json.hpp"

namespace canonflow {
namespace {

using nlohmann::json;

constexpr int kDatasetVersion = 1;

bool same_topology(const TriMesh& a, const TriMesh& b) {
  if (a.vertices.size() != b.vertices.size()) return false;
  if (a.triangles.size() != b.triangles.size()) return false;
  for (size_t i = 0; i < a.triangles.size(); ++i) {
    if (a.triangles[i] != b.triangles[i]) return false;
  }
  return true;
}

std::string frame_name(int index, const char* extension) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%04d.%s", index, extension);
  return buffer;
}

json vec_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vec_from_json(const json& j, int expected) {
  if (!j.is_array() || static_cast<int>(j.size()) != expected) {
    throw std::runtime_error("expected a numeric array of length " + std::to_string(expected));
  }
  Eigen::VectorXd v(expected);
  for (int i = 0; i < expected; ++i) v[i] = j.at(static_cast<size_t>(i)).get<double>();
  return v;
}

json camera_to_json(const CameraModel& camera) {
  json j;
  j["fx"] = camera.fx;
  j["fy"] = camera.fy;
  j["cx"] = camera.cx;
  j["cy"] = camera.cy;
  j["width"] = camera.width;
  j["height"] = camera.height;
  json rotation = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rotation.push_back(camera.world_from_camera.rotation(r, c));
  }
  j["rotation"] = rotation;  // row-major, camera -> world
  j["translation"] = vec_to_json(camera.world_from_camera.translation);
  return j;
}

CameraModel camera_from_json(const json& j) {
  CameraModel camera;
  camera.fx = j.at("fx").get<double>();
  camera.fy = j.at("fy").get<double>();
  camera.cx = j.at("cx").get<double>();
  camera.cy = j.at("cy").get<double>();
  camera.width = j.at("width").get<int>();
  camera.height = j.at("height").get<int>();
  const Eigen::VectorXd rotation = vec_from_json(j.at("rotation"), 9);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) camera.world_from_camera.rotation(r, c) = rotation[3 * r + c];
  }
  camera.world_from_camera.translation = vec_from_json(j.at("translation"), 3);
  camera.validate();
  return camera;
}

json keypoints_to_json(const FrameKeypoints& keypoints) {
  json j = json::object();
  for (const auto& [name, world] : keypoints.world) {
    json entry;
    entry["world"] = vec_to_json(world);
    if (auto it = keypoints.pixel.find(name); it != keypoints.pixel.end()) {
      entry["pixel"] = vec_to_json(it->second);
    }
    j[name] = entry;
  }
  return j;
}

FrameKeypoints keypoints_from_json(const json& j) {
  FrameKeypoints keypoints;
  for (const auto& [name, entry] : j.items()) {
    keypoints.world[name] = vec_from_json(entry.at("world"), 3);
    if (entry.contains("pixel")) keypoints.pixel[name] = vec_from_json(entry.at("pixel"), 2);
  }
  return keypoints;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset save: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset load: missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset load: failed to parse " + path.string() + ": " + e.what());
  }
}

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("dataset load: missing file " + path.string());
  }
}

TriMesh load_mesh_with_joints(const std::filesystem::path& path) {
  require_file(path);
  TriMesh mesh = load_obj(path);
  const std::filesystem::path sidecar = joints_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) load_joints_sidecar(sidecar, &mesh);
  return mesh;
}

void save_mesh_with_joints(const std::filesystem::path& path, const TriMesh& mesh) {
  save_obj(path, mesh);
  if (!mesh.joints.empty()) save_joints_sidecar(joints_sidecar_path(path), mesh);
}

/// Pixel-center-in-projected-triangle test, winding-agnostic. Equivalent to
/// casting the pixel ray against the triangle (same pinhole map), up to
/// boundary ties.
void rasterize_triangle(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
                        const Eigen::Vector2d& p2, Mask* mask) {
  auto edge = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& q) {
    return (b.x() - a.x()) * (q.y() - a.y()) - (b.y() - a.y()) * (q.x() - a.x());
  };
  const double area2 = edge(p0, p1, p2);
  if (std::abs(area2) < 1e-12) return;
  const double tol = 1e-9 * std::abs(area2);
  const int r0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.x(), p1.x(), p2.x()}))));
  const int r1 = std::min(mask->height() - 1,
                          static_cast<int>(std::floor(std::max({p0.x(), p1.x(), p2.x()}))));
  const int c0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.y(), p1.y(), p2.y()}))));
  const int c1 = std::min(mask->width() - 1,
                          static_cast<int>(std::floor(std::max({p0.y(), p1.y(), p2.y()}))));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const Eigen::Vector2d q(r, c);
      const double w0 = edge(p1, p2, q);
      const double w1 = edge(p2, p0, q);
      const double w2 = edge(p0, p1, q);
      const bool inside_ccw = w0 >= -tol && w1 >= -tol && w2 >= -tol;
      const bool inside_cw = w0 <= tol && w1 <= tol && w2 <= tol;
      if (inside_ccw || inside_cw) mask->set(r, c, 1);
    }
  }
}

double mask_iou(const Mask& a, const Mask& b) {
  std::int64_t intersection = 0, unions = 0;
  const auto& da = a.data();
  const auto& db = b.data();
  for (size_t i = 0; i < da.size(); ++i) {
    const bool fa = da[i] != 0, fb = db[i] != 0;
    intersection += fa && fb;
    unions += fa || fb;
  }
  return unions == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(unions);
}

}  // namespace

void FrameDataset::validate() const {
  const size_t m = frames.size();
  if (m == 0) throw std::invalid_argument("FrameDataset: no frames");
  if (masks.size() != m || timestamps.size() != m || meshes.size() != m ||
      keypoints.size() != m) {
    throw std::invalid_argument("FrameDataset: per-frame list sizes disagree");
  }
  if (!clean_meshes.empty() && clean_meshes.size() != m) {
    throw std::invalid_argument("FrameDataset: clean mesh track size disagrees");
  }
  if (timestamps.front() != 0.0) throw std::invalid_argument("FrameDataset: t_0 must be 0");
  for (size_t i = 1; i < m; ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) {
      throw std::invalid_argument("FrameDataset: timestamps must ascend");
    }
  }
  camera.validate();
  if (!(scene_scale.scale > 0)) throw std::invalid_argument("FrameDataset: scene scale must be > 0");
  if (!(fps > 0)) throw std::invalid_argument("FrameDataset: fps must be > 0");
  for (size_t i = 0; i < m; ++i) {
    if (frames[i].height() != camera.height || frames[i].width() != camera.width ||
        masks[i].height() != camera.height || masks[i].width() != camera.width) {
      throw std::invalid_argument("FrameDataset: frame/mask shape differs from the camera");
    }
    if (!same_topology(meshes[i], canonical_mesh)) {
      throw std::invalid_argument("FrameDataset: posed mesh topology differs from canonical");
    }
    if (!clean_meshes.empty() && !same_topology(clean_meshes[i], canonical_mesh)) {
      throw std::invalid_argument("FrameDataset: clean mesh topology differs from canonical");
    }
  }
  if (background.height() != camera.height || background.width() != camera.width) {
    throw std::invalid_argument("FrameDataset: background shape differs from the camera");
  }
  const size_t e = eval_images.size();
  if (eval_masks.size() != e || eval_cameras.size() != e || eval_times.size() != e ||
      eval_keypoints.size() != e) {
    throw std::invalid_argument("FrameDataset: eval list sizes disagree");
  }
  for (size_t i = 0; i < e; ++i) {
    eval_cameras[i].validate();
    if (eval_images[i].height() != eval_cameras[i].height ||
        eval_images[i].width() != eval_cameras[i].width ||
        eval_masks[i].height() != eval_cameras[i].height ||
        eval_masks[i].width() != eval_cameras[i].width) {
      throw std::invalid_argument("FrameDataset: eval image shape differs from its camera");
    }
  }
}

Image extract_background(const std::vector<Image>& frames) {
  if (frames.empty()) throw std::invalid_argument("extract_background: no frames");
  for (const Image& frame : frames) {
    if (!frame.same_shape(frames.front()) || frame.empty()) {
      throw std::invalid_argument("extract_background: frame shapes disagree");
    }
  }
  const size_t m = frames.size();
  Image background(frames.front().height(), frames.front().width());
  std::vector<double> values(m);
  for (size_t i = 0; i < background.data().size(); ++i) {
    for (size_t f = 0; f < m; ++f) values[f] = frames[f].data()[i];
    auto mid = values.begin() + static_cast<std::ptrdiff_t>(m / 2);
    std::nth_element(values.begin(), mid, values.end());
    double median = *mid;
    if (m % 2 == 0) {
      // Even count: average the two middle values.
      median = 0.5 * (median + *std::max_element(values.begin(), mid));
    }
    background.data()[i] = median;
  }
  return background;
}

CorrespondenceBatch sample_correspondences(const TriMesh& posed, const TriMesh& canonical,
                                           int count, std::mt19937_64& rng) {
  if (count < 1) throw std::invalid_argument("sample_correspondences: count must be >= 1");
  if (!same_topology(posed, canonical)) {
    throw std::invalid_argument("sample_correspondences: topology mismatch");
  }
  posed.validate();
  std::vector<double> areas(posed.triangles.size());
  for (size_t i = 0; i < areas.size(); ++i) areas[i] = posed.triangle_area(static_cast<int>(i));
  std::discrete_distribution<int> pick_triangle(areas.begin(), areas.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CorrespondenceBatch batch;
  batch.x_obs.resize(3, count);
  batch.x_canonical.resize(3, count);
  for (int p = 0; p < count; ++p) {
    const Eigen::Vector3i tri = posed.triangles[static_cast<size_t>(pick_triangle(rng))];
    double u = unit(rng), v = unit(rng);
    if (u + v > 1.0) {  // fold the unit square onto the triangle
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const double w = 1.0 - u - v;
    batch.x_obs.col(p) = w * posed.vertices[tri.x()] + u * posed.vertices[tri.y()] +
                         v * posed.vertices[tri.z()];
    batch.x_canonical.col(p) = w * canonical.vertices[tri.x()] + u * canonical.vertices[tri.y()] +
                               v * canonical.vertices[tri.z()];
  }
  return batch;
}

Eigen::MatrixXd sample_free_points(const Aabb& box, const TriMesh& posed, double margin,
                                   int count, std::mt19937_64& rng) {
  if (margin < 0) throw std::invalid_argument("sample_free_points: margin must be >= 0");
  if (count < 0) throw std::invalid_argument("sample_free_points: count must be >= 0");
  if ((box.extents().array() < 0).any()) {
    throw std::invalid_argument("sample_free_points: empty AABB");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double margin_sq = margin * margin;
  Eigen::MatrixXd points(3, count);
  const std::int64_t max_attempts = 100 * static_cast<std::int64_t>(count) + 1000;
  std::int64_t attempts = 0;
  int accepted = 0;
  while (accepted < count) {
    if (attempts >= max_attempts) {
      throw std::runtime_error(
          "sample_free_points: rejection rate above 99%, the box is too tight for the margin");
    }
    ++attempts;
    // Sequenced draws: axis order x, y, z.
    Vec3 p = box.min;
    p.x() += unit(rng) * box.extents().x();
    p.y() += unit(rng) * box.extents().y();
    p.z() += unit(rng) * box.extents().z();
    bool free = true;
    for (const Vec3& v : posed.vertices) {
      if ((p - v).squaredNorm() <= margin_sq) {
        free = false;
        break;
      }
    }
    if (free) points.col(accepted++) = p;
  }
  return points;
}

Image render_mesh_flat(const TriMesh& mesh, const CameraModel& camera,
                       const Eigen::Vector3d& background, Mask* mask_out) {
  camera.validate();
  Image image(camera.height, camera.width, background);
  if (mask_out != nullptr) *mask_out = Mask(camera.height, camera.width);
  if (!mesh.empty()) {
    const Aabb cull = build_frame_aabb(mesh, 0.0, 0.0);
    for (int row = 0; row < camera.height; ++row) {
      for (int col = 0; col < camera.width; ++col) {
        const Ray ray = generate_ray(camera, row, col);
        const auto hit = ray_mesh_intersect(ray, mesh, &cull);
        if (!hit) continue;
        const Eigen::Vector3i tri = mesh.triangles[static_cast<size_t>(hit->triangle)];
        Vec3 color = Vec3::Constant(0.5);
        if (!mesh.vertex_colors.empty()) {
          color = hit->barycentric.x() * mesh.vertex_colors[tri.x()] +
                  hit->barycentric.y() * mesh.vertex_colors[tri.y()] +
                  hit->barycentric.z() * mesh.vertex_colors[tri.z()];
        }
        image.set_pixel(row, col, color);
        if (mask_out != nullptr) mask_out->set(row, col, 1);
      }
    }
  }
  for (double& v : image.data()) v = quantize_u8(v) / 255.0;
  return image;
}

Mask rasterize_silhouette(const TriMesh& mesh, const CameraModel& camera) {
  camera.validate();
  Mask mask(camera.height, camera.width);
  if (mesh.empty()) return mask;
  std::vector<Eigen::Vector2d> projected(mesh.vertices.size());
  std::vector<bool> in_front(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    in_front[i] = camera.in_front(mesh.vertices[i]);
    if (in_front[i]) projected[i] = camera.project(mesh.vertices[i]);
  }
  for (const Eigen::Vector3i& tri : mesh.triangles) {
    // Parts behind the camera do not rasterize; desk scenes keep the body
    // strictly in front.
    if (!in_front[tri.x()] || !in_front[tri.y()] || !in_front[tri.z()]) continue;
    rasterize_triangle(projected[tri.x()], projected[tri.y()], projected[tri.z()], &mask);
  }
  return mask;
}

Eigen::Vector3d grid_location_search(const TriMesh& mesh, const Mask& target_mask,
                                     const CameraModel& camera, const Aabb& grid,
                                     const Eigen::Vector3i& resolution) {
  camera.validate();
  if ((resolution.array() < 1).any()) {
    throw std::invalid_argument("grid_location_search: resolution must be >= 1 per axis");
  }
  if ((grid.extents().array() < 0).any()) {
    throw std::invalid_argument("grid_location_search: empty grid");
  }
  if (target_mask.height() != camera.height || target_mask.width() != camera.width) {
    throw std::invalid_argument("grid_location_search: target mask shape differs from the camera");
  }
  auto node = [&](int axis, int index) {
    if (resolution[axis] == 1) return grid.min[axis];
    return grid.min[axis] +
           (grid.max[axis] - grid.min[axis]) * index / static_cast<double>(resolution[axis] - 1);
  };
  TriMesh moved = mesh;
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  double best_loss = std::numeric_limits<double>::infinity();
  // Ascending lexicographic scan; strict improvement keeps the first optimum,
  // which is the lexicographically smallest tying translation.
  for (int ix = 0; ix < resolution.x(); ++ix) {
    for (int iy = 0; iy < resolution.y(); ++iy) {
      for (int iz = 0; iz < resolution.z(); ++iz) {
        const Eigen::Vector3d offset(node(0, ix), node(1, iy), node(2, iz));
        for (size_t v = 0; v < mesh.vertices.size(); ++v) {
          moved.vertices[v] = mesh.vertices[v] + offset;
        }
        const double loss = 1.0 - mask_iou(rasterize_silhouette(moved, camera), target_mask);
        if (loss < best_loss) {
          best_loss = loss;
          best = offset;
        }
      }
    }
  }
  return best;
}

void save_dataset(const FrameDataset& dataset, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  dataset.validate();
  fs::create_directories(path / "frames");
  fs::create_directories(path / "masks");
  fs::create_directories(path / "meshes");
  const int m = dataset.frame_count();
  for (int i = 0; i < m; ++i) {
    write_png(path / "frames" / frame_name(i, "png"), dataset.frames[static_cast<size_t>(i)]);
    write_png(path / "masks" / frame_name(i, "png"), dataset.masks[static_cast<size_t>(i)]);
    save_mesh_with_joints(path / "meshes" / frame_name(i, "obj"),
                          dataset.meshes[static_cast<size_t>(i)]);
  }
  save_mesh_with_joints(path / "canonical.obj", dataset.canonical_mesh);
  write_png(path / "background.png", dataset.background);
  write_json_file(path / "camera.json", camera_to_json(dataset.camera));

  json keypoints;
  keypoints["frames"] = json::array();
  for (const FrameKeypoints& kp : dataset.keypoints) {
    keypoints["frames"].push_back(keypoints_to_json(kp));
  }
  write_json_file(path / "keypoints.json", keypoints);

  json meta;
  meta["version"] = kDatasetVersion;
  meta["frame_count"] = m;
  meta["fps"] = dataset.fps;
  meta["timestamps"] = json(dataset.timestamps);
  meta["scene_scale"] = {{"center", vec_to_json(dataset.scene_scale.center)},
                         {"scale", dataset.scene_scale.scale}};
  write_json_file(path / "meta.json", meta);

  if (!dataset.clean_meshes.empty()) {
    fs::create_directories(path / "eval" / "clean_meshes");
    for (int i = 0; i < m; ++i) {
      save_mesh_with_joints(path / "eval" / "clean_meshes" / frame_name(i, "obj"),
                            dataset.clean_meshes[static_cast<size_t>(i)]);
    }
  }
  if (!dataset.eval_images.empty()) {
    fs::create_directories(path / "eval" / "views");
    fs::create_directories(path / "eval" / "masks");
    json eval;
    eval["cameras"] = json::array();
    eval["times"] = json(dataset.eval_times);
    eval["keypoints"] = json::array();
    for (size_t i = 0; i < dataset.eval_images.size(); ++i) {
      write_png(path / "eval" / "views" / frame_name(static_cast<int>(i), "png"),
                dataset.eval_images[i]);
      write_png(path / "eval" / "masks" / frame_name(static_cast<int>(i), "png"),
                dataset.eval_masks[i]);
      eval["cameras"].push_back(camera_to_json(dataset.eval_cameras[i]));
      eval["keypoints"].push_back(keypoints_to_json(dataset.eval_keypoints[i]));
    }
    write_json_file(path / "eval" / "eval.json", eval);
  }
}

FrameDataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) {
    throw std::runtime_error("dataset load: no such directory " + path.string());
  }
  const json meta = read_json_file(path / "meta.json");
  if (!meta.contains("version")) {
    throw std::runtime_error("dataset load: meta.json has no version field");
  }
  const int version = meta.at("version").get<int>();
  if (version != kDatasetVersion) {
    throw std::runtime_error("dataset load: incompatible dataset version " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kDatasetVersion));
  }
  FrameDataset dataset;
  try {
    const int m = meta.at("frame_count").get<int>();
    dataset.timestamps = meta.at("timestamps").get<std::vector<double>>();
    dataset.fps = meta.at("fps").get<double>();
    dataset.scene_scale.center = vec_from_json(meta.at("scene_scale").at("center"), 3);
    dataset.scene_scale.scale = meta.at("scene_scale").at("scale").get<double>();
    dataset.camera = camera_from_json(read_json_file(path / "camera.json"));
    require_file(path / "background.png");
    dataset.background = read_png(path / "background.png");
    for (int i = 0; i < m; ++i) {
      require_file(path / "frames" / frame_name(i, "png"));
      dataset.frames.push_back(read_png(path / "frames" / frame_name(i, "png")));
      require_file(path / "masks" / frame_name(i, "png"));
      dataset.masks.push_back(read_png_mask(path / "masks" / frame_name(i, "png")));
      dataset.meshes.push_back(load_mesh_with_joints(path / "meshes" / frame_name(i, "obj")));
    }
    dataset.canonical_mesh = load_mesh_with_joints(path / "canonical.obj");
    const json keypoints = read_json_file(path / "keypoints.json");
    for (const json& kp : keypoints.at("frames")) {
      dataset.keypoints.push_back(keypoints_from_json(kp));
    }
    if (fs::exists(path / "eval" / "clean_meshes")) {
      for (int i = 0; i < m; ++i) {
        dataset.clean_meshes.push_back(
            load_mesh_with_joints(path / "eval" / "clean_meshes" / frame_name(i, "obj")));
      }
    }
    if (fs::exists(path / "eval" / "eval.json")) {
      const json eval = read_json_file(path / "eval" / "eval.json");
      dataset.eval_times = eval.at("times").get<std::vector<double>>();
      for (const json& cam : eval.at("cameras")) {
        dataset.eval_cameras.push_back(camera_from_json(cam));
      }
      for (const json& kp : eval.at("keypoints")) {
        dataset.eval_keypoints.push_back(keypoints_from_json(kp));
      }
      for (size_t i = 0; i < dataset.eval_times.size(); ++i) {
        const auto view = path / "eval" / "views" / frame_name(static_cast<int>(i), "png");
        const auto mask = path / "eval" / "masks" / frame_name(static_cast<int>(i), "png");
        require_file(view);
        require_file(mask);
        dataset.eval_images.push_back(read_png(view));
        dataset.eval_masks.push_back(read_png_mask(mask));
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset load: malformed metadata in " + path.string() + ": " +
                             e.what());
  }
  dataset.validate();
  return dataset;
}

}  // namespace canonflow
