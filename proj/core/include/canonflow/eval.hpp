// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "canonflow/data.hpp"
#include "canonflow/fields.hpp"
#include "canonflow/image.hpp"
#include "canonflow/rendering.hpp"

namespace canonflow {

struct Keypoint2d {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();  // (row, col)
  bool visible = true;
};

/// Named 2D keypoints with visibility and the object scale s (pixels, the
/// square root of the subject bounding-box area).
struct KeypointSet {
  std::map<std::string, Keypoint2d> points;
  double scale = 0.0;

  int visible_count() const;
  /// scale > 0 and at least one visible keypoint; throws std::invalid_argument.
  void validate() const;
};

/// 10 log10(1 / MSE) over all channels; equal images yield the +infinity
/// sentinel. Shape mismatch throws std::invalid_argument.
double psnr(const Image& a, const Image& b);

/// Object keypoint similarity with mean-center canonicalization: each set is
/// shifted by the centroid of its own visible points, then
/// score = mean over mutually visible i of exp(-d_i^2 / (2 s^2 kappa^2))
/// with s taken from gt. No mutually visible keypoint is an error
/// (std::runtime_error).
double oks(const KeypointSet& pred, const KeypointSet& gt, double kappa = 0.1);

/// Intersection over union of nonzero pixels; two empty masks score 1.0 by
/// convention. Shape mismatch throws std::invalid_argument.
double silhouette_iou(const Mask& a, const Mask& b);

struct MisalignmentRow {
  std::string kind;  // "translation" (px) or "rotation" (deg)
  double amount = 0.0;
  double psnr_db = 0.0;
  double reference_db = 0.0;  // published reference trend; NaN when absent
};

/// Reference PSNR of the original misalignment table for the standard
/// offsets (10..50 px, 5..30 deg); NaN for any other query. These were
/// measured on different data and serve as a direction reference only.
double reference_misalignment_psnr(const std::string& kind, double amount);

/// Translates the image by each offset along one seeded random direction and
/// rotates it about the subject centroid (from `subject`) by each angle with
/// a seeded random sign, scoring PSNR against the original each time.
/// Bilinear resampling with border clamp; offset 0 is the exact identity.
std::vector<MisalignmentRow> misalignment_study(const Image& image, const Mask& subject,
                                                const std::vector<double>& translations_px,
                                                const std::vector<double>& rotations_deg,
                                                std::uint64_t seed);

struct EvalOptions {
  int crop = 64;       // square patch side, centered on the GT subject centroid
  double kappa = 0.1;  // per-keypoint OKS constant for synthetic joints
  RenderConfig render;
  std::uint64_t seed = 0;  // per-pixel render stream seed
  std::filesystem::path output_dir;  // when set, writes report.txt + contact_sheet.png

  void validate() const;
};

struct ViewEvaluation {
  int view = 0;
  double time = 0.0;
  double psnr_db = 0.0;
  double oks_score = 0.0;
  double iou = 0.0;
};

struct EvalReport {
  std::vector<ViewEvaluation> views;
  double mean_psnr = 0.0;  // arithmetic means of the per-view rows
  double mean_oks = 0.0;
  double mean_iou = 0.0;
};

/// One rendered novel view: image, silhouette, and predicted keypoint pixels
/// in full-image coordinates.
struct NovelViewRender {
  Image image;
  Mask mask;
  std::map<std::string, Eigen::Vector2d> keypoints;
};
using NovelViewRenderer = std::function<NovelViewRender(int view_index)>;

/// Index of the training frame whose timestamp is closest to t (ties toward
/// the earlier frame).
int nearest_frame(const FrameDataset& dataset, double t);

/// Square crop window start (top, left) for a patch of the given size
/// centered on the subject centroid of `mask`, ties broken toward the image
/// center, clamped to the image. An empty mask centers the window on the
/// image. Throws when the image is smaller than the crop.
Eigen::Vector2i crop_origin(const Mask& mask, int crop);

/// Evaluates every eval-split view with the supplied renderer: PSNR on the
/// GT-masked crop (both sides masked, subject-fidelity protocol), silhouette
/// IoU on the cropped masks, and OKS against the GT keypoints. A missing
/// eval split is an error.
EvalReport evaluate_views(const FrameDataset& dataset, const NovelViewRenderer& renderer,
                          const EvalOptions& options);

/// The model path: renders each held-out camera/time through the scene
/// model; predicted keypoints are the canonical joints forward-flowed to the
/// view time and projected (keypoint transfer, not detection).
EvalReport evaluate_novel_views(const SceneModel& model, const FrameDataset& dataset,
                                const EvalOptions& options);

}  // namespace canonflow
