// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "canonflow/geometry.hpp"
#include "canonflow/training.hpp"

namespace canonflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Eigen::Vector2d visible_centroid(const KeypointSet& set) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int count = 0;
  for (const auto& [name, kp] : set.points) {
    if (!kp.visible) continue;
    sum += kp.pixel;
    ++count;
  }
  return sum / count;
}

Image translate_image(const Image& image, const Eigen::Vector2d& shift) {
  Image out(image.height(), image.width());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      out.set_pixel(r, c, image.sample_bilinear(r - shift.x(), c - shift.y()));
    }
  }
  return out;
}

Image rotate_image(const Image& image, const Eigen::Vector2d& center, double angle_rad) {
  Image out(image.height(), image.width());
  const double cs = std::cos(angle_rad);
  const double sn = std::sin(angle_rad);
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      // Inverse-rotate the destination pixel into the source.
      const double dr = r - center.x();
      const double dc = c - center.y();
      const double sr = center.x() + cs * dr + sn * dc;
      const double sc = center.y() - sn * dr + cs * dc;
      out.set_pixel(r, c, image.sample_bilinear(sr, sc));
    }
  }
  return out;
}

Eigen::Vector2d mask_centroid(const Mask& mask) {
  double sr = 0.0, sc = 0.0;
  int count = 0;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == 0) continue;
      sr += r;
      sc += c;
      ++count;
    }
  }
  if (count == 0) {
    return Eigen::Vector2d((mask.height() - 1) / 2.0, (mask.width() - 1) / 2.0);
  }
  return Eigen::Vector2d(sr / count, sc / count);
}

int crop_axis_origin(double centroid, int crop, int extent) {
  // Round the ideal fractional start to the nearest integer; an exact half
  // tie goes to the candidate whose window center is nearer the image
  // center (and to the smaller start when that is also tied).
  const double ideal = centroid - (crop - 1) / 2.0;
  const int lo = static_cast<int>(std::floor(ideal));
  const int hi = lo + 1;
  int start;
  if (ideal - lo < 0.5) {
    start = lo;
  } else if (ideal - lo > 0.5) {
    start = hi;
  } else {
    const double image_center = (extent - 1) / 2.0;
    const double lo_distance = std::abs(lo + (crop - 1) / 2.0 - image_center);
    const double hi_distance = std::abs(hi + (crop - 1) / 2.0 - image_center);
    if (lo_distance < hi_distance) {
      start = lo;
    } else if (hi_distance < lo_distance) {
      start = hi;
    } else {
      start = lo;
    }
  }
  return std::clamp(start, 0, extent - crop);
}

Image crop_image(const Image& image, const Eigen::Vector2i& origin, int crop) {
  Image out(crop, crop);
  for (int r = 0; r < crop; ++r) {
    for (int c = 0; c < crop; ++c) {
      out.set_pixel(r, c, image.pixel(origin.x() + r, origin.y() + c));
    }
  }
  return out;
}

Mask crop_mask(const Mask& mask, const Eigen::Vector2i& origin, int crop) {
  Mask out(crop, crop);
  for (int r = 0; r < crop; ++r) {
    for (int c = 0; c < crop; ++c) {
      out.set(r, c, mask.at(origin.x() + r, origin.y() + c));
    }
  }
  return out;
}

void apply_mask(Image* image, const Mask& mask) {
  for (int r = 0; r < image->height(); ++r) {
    for (int c = 0; c < image->width(); ++c) {
      if (mask.at(r, c) == 0) image->set_pixel(r, c, Eigen::Vector3d::Zero());
    }
  }
}

/// Scale s from the bounding box of the nonzero mask pixels.
double subject_scale(const Mask& mask) {
  int rmin = mask.height(), rmax = -1, cmin = mask.width(), cmax = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == 0) continue;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  if (rmax < rmin) return 0.0;
  return std::sqrt(static_cast<double>(rmax - rmin + 1) * (cmax - cmin + 1));
}

void write_report_file(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("evaluate_views: cannot write " + path.string());
  out << "view time psnr_db oks iou\n";
  for (const auto& row : report.views) {
    out << row.view << " " << row.time << " " << row.psnr_db << " " << row.oks_score << " "
        << row.iou << "\n";
  }
  out << "mean - " << report.mean_psnr << " " << report.mean_oks << " " << report.mean_iou
      << "\n";
}

void write_contact_sheet(const std::vector<Image>& gt, const std::vector<Image>& predicted,
                         const std::filesystem::path& path) {
  const int crop = gt.front().height();
  const int rows = static_cast<int>(gt.size());
  Image sheet(rows * crop, 2 * crop, Eigen::Vector3d::Ones());
  for (int v = 0; v < rows; ++v) {
    for (int r = 0; r < crop; ++r) {
      for (int c = 0; c < crop; ++c) {
        sheet.set_pixel(v * crop + r, c, gt[v].pixel(r, c));
        sheet.set_pixel(v * crop + r, crop + c, predicted[v].pixel(r, c));
      }
    }
  }
  write_png(path, sheet);
}

}  // namespace

int KeypointSet::visible_count() const {
  int count = 0;
  for (const auto& [name, kp] : points) count += kp.visible ? 1 : 0;
  return count;
}

void KeypointSet::validate() const {
  if (!(scale > 0.0)) throw std::invalid_argument("KeypointSet: scale must be positive");
  if (visible_count() < 1) {
    throw std::invalid_argument("KeypointSet: needs at least one visible keypoint");
  }
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image shapes differ");
  if (a.empty()) throw std::invalid_argument("psnr: empty image");
  double mse = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    const double d = a.data()[k] - b.data()[k];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data().size());
  if (mse == 0.0) return kInf;
  return 10.0 * std::log10(1.0 / mse);
}

double oks(const KeypointSet& pred, const KeypointSet& gt, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("oks: kappa must be positive");
  pred.validate();
  gt.validate();
  const Eigen::Vector2d pred_center = visible_centroid(pred);
  const Eigen::Vector2d gt_center = visible_centroid(gt);
  const double denom = 2.0 * gt.scale * gt.scale * kappa * kappa;
  double sum = 0.0;
  int count = 0;
  for (const auto& [name, gt_kp] : gt.points) {
    if (!gt_kp.visible) continue;
    const auto it = pred.points.find(name);
    if (it == pred.points.end() || !it->second.visible) continue;
    const Eigen::Vector2d d =
        (it->second.pixel - pred_center) - (gt_kp.pixel - gt_center);
    sum += std::exp(-d.squaredNorm() / denom);
    ++count;
  }
  if (count == 0) {
    throw std::runtime_error("oks: no mutually visible keypoints, score undefined");
  }
  return sum / count;
}

double silhouette_iou(const Mask& a, const Mask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("silhouette_iou: mask shapes differ");
  }
  int inter = 0, uni = 0;
  for (int r = 0; r < a.height(); ++r) {
    for (int c = 0; c < a.width(); ++c) {
      const bool in_a = a.at(r, c) != 0;
      const bool in_b = b.at(r, c) != 0;
      inter += (in_a && in_b) ? 1 : 0;
      uni += (in_a || in_b) ? 1 : 0;
    }
  }
  if (uni == 0) return 1.0;  // both empty: identical silhouettes
  return static_cast<double>(inter) / uni;
}

double reference_misalignment_psnr(const std::string& kind, double amount) {
  if (kind == "translation") {
    if (amount == 10.0) return 20.46;
    if (amount == 20.0) return 17.44;
    if (amount == 30.0) return 16.38;
    if (amount == 40.0) return 15.51;
    if (amount == 50.0) return 14.84;
  } else if (kind == "rotation") {
    if (amount == 5.0) return 21.07;
    if (amount == 10.0) return 18.24;
    if (amount == 15.0) return 16.97;
    if (amount == 20.0) return 16.25;
    if (amount == 25.0) return 15.74;
    if (amount == 30.0) return 15.34;
  }
  return kNan;
}

std::vector<MisalignmentRow> misalignment_study(const Image& image, const Mask& subject,
                                                const std::vector<double>& translations_px,
                                                const std::vector<double>& rotations_deg,
                                                std::uint64_t seed) {
  if (image.empty()) throw std::invalid_argument("misalignment_study: empty image");
  if (subject.height() != image.height() || subject.width() != image.width()) {
    throw std::invalid_argument("misalignment_study: mask shape differs from image");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * 3.14159265358979323846);
  const double theta = angle_dist(rng);
  const Eigen::Vector2d direction(std::cos(theta), std::sin(theta));
  const int sign = (rng() & 1) == 0 ? 1 : -1;
  const Eigen::Vector2d centroid = mask_centroid(subject);

  std::vector<MisalignmentRow> rows;
  for (const double px : translations_px) {
    MisalignmentRow row;
    row.kind = "translation";
    row.amount = px;
    row.psnr_db = px == 0.0 ? kInf : psnr(image, translate_image(image, px * direction));
    row.reference_db = reference_misalignment_psnr(row.kind, px);
    rows.push_back(row);
  }
  for (const double deg : rotations_deg) {
    MisalignmentRow row;
    row.kind = "rotation";
    row.amount = deg;
    const double rad = sign * deg * 3.14159265358979323846 / 180.0;
    row.psnr_db = deg == 0.0 ? kInf : psnr(image, rotate_image(image, centroid, rad));
    row.reference_db = reference_misalignment_psnr(row.kind, deg);
    rows.push_back(row);
  }
  return rows;
}

void EvalOptions::validate() const {
  if (crop < 1) throw std::invalid_argument("EvalOptions: crop must be positive");
  if (!(kappa > 0.0)) throw std::invalid_argument("EvalOptions: kappa must be positive");
  render.validate();
}

int nearest_frame(const FrameDataset& dataset, double t) {
  if (dataset.timestamps.empty()) {
    throw std::invalid_argument("nearest_frame: dataset has no frames");
  }
  int best = 0;
  double best_distance = std::abs(dataset.timestamps[0] - t);
  for (int i = 1; i < static_cast<int>(dataset.timestamps.size()); ++i) {
    const double distance = std::abs(dataset.timestamps[i] - t);
    if (distance < best_distance) {
      best = i;
      best_distance = distance;
    }
  }
  return best;
}

Eigen::Vector2i crop_origin(const Mask& mask, int crop) {
  if (crop > mask.height() || crop > mask.width()) {
    throw std::invalid_argument("crop_origin: crop exceeds the image");
  }
  const Eigen::Vector2d centroid = mask_centroid(mask);
  return Eigen::Vector2i(crop_axis_origin(centroid.x(), crop, mask.height()),
                         crop_axis_origin(centroid.y(), crop, mask.width()));
}

EvalReport evaluate_views(const FrameDataset& dataset, const NovelViewRenderer& renderer,
                          const EvalOptions& options) {
  options.validate();
  if (dataset.eval_images.empty()) {
    throw std::runtime_error("evaluate_views: dataset has no eval split");
  }
  EvalReport report;
  std::vector<Image> gt_tiles;
  std::vector<Image> predicted_tiles;
  for (int v = 0; v < static_cast<int>(dataset.eval_images.size()); ++v) {
    const Image& gt_image = dataset.eval_images[v];
    const Mask& gt_mask = dataset.eval_masks[v];
    const NovelViewRender rendered = renderer(v);
    if (!rendered.image.same_shape(gt_image)) {
      throw std::runtime_error("evaluate_views: rendered view shape differs from GT");
    }

    const Eigen::Vector2i origin = crop_origin(gt_mask, options.crop);
    const Mask gt_crop = crop_mask(gt_mask, origin, options.crop);
    Image gt_patch = crop_image(gt_image, origin, options.crop);
    Image predicted_patch = crop_image(rendered.image, origin, options.crop);
    // Subject-fidelity protocol: the GT mask blanks the background on both
    // sides before PSNR.
    apply_mask(&gt_patch, gt_crop);
    apply_mask(&predicted_patch, gt_crop);

    ViewEvaluation row;
    row.view = v;
    row.time = dataset.eval_times[v];
    row.psnr_db = psnr(predicted_patch, gt_patch);
    row.iou = silhouette_iou(crop_mask(rendered.mask, origin, options.crop), gt_crop);

    KeypointSet gt_set;
    gt_set.scale = subject_scale(gt_mask);
    for (const auto& [name, pixel] : dataset.eval_keypoints[v].pixel) {
      gt_set.points[name] = Keypoint2d{pixel, true};
    }
    KeypointSet predicted_set;
    predicted_set.scale = gt_set.scale;
    for (const auto& [name, pixel] : rendered.keypoints) {
      predicted_set.points[name] = Keypoint2d{pixel, true};
    }
    row.oks_score = oks(predicted_set, gt_set, options.kappa);

    report.views.push_back(row);
    gt_tiles.push_back(gt_patch);
    predicted_tiles.push_back(predicted_patch);
  }

  for (const auto& row : report.views) {
    report.mean_psnr += row.psnr_db;
    report.mean_oks += row.oks_score;
    report.mean_iou += row.iou;
  }
  const double n = static_cast<double>(report.views.size());
  report.mean_psnr /= n;
  report.mean_oks /= n;
  report.mean_iou /= n;

  if (!options.output_dir.empty()) {
    std::filesystem::create_directories(options.output_dir);
    write_report_file(report, options.output_dir / "report.txt");
    write_contact_sheet(gt_tiles, predicted_tiles, options.output_dir / "contact_sheet.png");
  }
  return report;
}

EvalReport evaluate_novel_views(const SceneModel& model, const FrameDataset& dataset,
                                const EvalOptions& options) {
  const double full_bands = model.config.point_bands;
  const NovelViewRenderer renderer = [&](int v) {
    const CameraModel& camera = dataset.eval_cameras[v];
    const double t = dataset.eval_times[v];
    const int frame = nearest_frame(dataset, t);
    // Synthetic backgrounds are a constant color; novel cameras reuse its
    // mean as a solid backdrop.
    Eigen::Vector3d background_color = Eigen::Vector3d::Zero();
    for (int r = 0; r < dataset.background.height(); ++r) {
      for (int c = 0; c < dataset.background.width(); ++c) {
        background_color += dataset.background.pixel(r, c);
      }
    }
    background_color /= dataset.background.height() * dataset.background.width();
    const Image background(camera.height, camera.width, background_color);

    NovelViewRender out;
    const auto [image, opacity] =
        render_image(model, camera, t, model.code(frame), background,
                     frame_bounds(dataset, frame), full_bands, options.render,
                     options.seed + static_cast<std::uint64_t>(v));
    out.image = image;
    out.mask = Mask(camera.height, camera.width);
    for (int r = 0; r < camera.height; ++r) {
      for (int c = 0; c < camera.width; ++c) {
        out.mask.set(r, c, opacity(r, c) > 0.5 ? 1 : 0);
      }
    }
    // Keypoint transfer: canonical joints forward-flowed to t, projected.
    for (const auto& [name, canonical] : dataset.canonical_mesh.joints) {
      const Eigen::Vector3d warped = forward_flow(model, canonical, t, full_bands);
      if (!camera.in_front(warped)) continue;
      out.keypoints[name] = camera.project(warped);
    }
    return out;
  };
  return evaluate_views(dataset, renderer, options);
}

}  // namespace canonflow
