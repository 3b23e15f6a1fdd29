// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "canonflow/fields.hpp"
#include "canonflow/geometry.hpp"
#include "canonflow/image.hpp"
#include "canonflow/tape.hpp"

namespace canonflow {

struct RenderConfig {
  int coarse_samples = 64;
  int fine_samples = 128;
  int chunk_size = 1024;  // rays per render_image chunk; result-invariant

  void validate() const;
};

/// One uniform draw in each of n equal-width bins spanning [t_near, t_far];
/// strictly increasing. Throws std::invalid_argument on a degenerate
/// interval or n < 1.
std::vector<double> stratified_depths(double t_near, double t_far, int n, std::mt19937_64& rng);

/// Inverse-CDF resampling from the piecewise-constant PDF with one bin per
/// coarse depth: bin k spans the midpoints around depth k, closed by the
/// first and last depths at the ends, and carries probability mass
/// proportional to weight k. All-zero (or negative-sum) weights fall back to
/// the uniform density over [first, last]. Output is sorted.
std::vector<double> importance_depths(const std::vector<double>& coarse_depths,
                                      const Eigen::VectorXd& coarse_weights, int n,
                                      std::mt19937_64& rng);

/// One ray's quadrature record.
struct CompositeResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double opacity = 0.0;  // 1 - final transmittance
  Eigen::VectorXd weights;  // T_i * alpha_i per sample
  double final_transmittance = 1.0;
};

/// Quadrature along one ray: alpha_i = 1 - exp(-sigma_i * delta_i) with
/// delta_i the gap to the next depth and the last delta running to t_exit;
/// C = sum T_i alpha_i c_i + T_final * background (the background acts as an
/// opaque final sample). colors are one column per sample.
CompositeResult composite(const Eigen::MatrixXd& colors, const Eigen::VectorXd& sigmas,
                          const std::vector<double>& depths, double t_exit,
                          const Eigen::Vector3d& background);

/// Column span of one ray inside a batched sample matrix. count == 0 marks a
/// ray that missed the bounds; its color is the background, with no
/// gradient.
struct RaySpan {
  int offset = 0;
  int count = 0;
  std::vector<double> deltas;  // size count; the last delta reaches the AABB exit
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

/// Differentiable batched composite: sigma is 1xS, color 3xS, and the result
/// is the 3xR ray-color matrix in span order. The backward pass uses the
/// division-free suffix form dC/dsigma_k = delta_k (T_{k+1} c_k - S_k) with
/// S_k the tail sum of weighted colors plus the background term.
Var composite_rays_var(Tape& tape, const Var& sigma, const Var& color,
                       const std::vector<RaySpan>& spans);

struct RenderOutput {
  Eigen::MatrixXd color;                 // 3 x R, [0,1]
  Eigen::VectorXd opacity;               // R, [0,1]
  std::vector<Eigen::VectorXd> weights;  // per ray, per sample (empty on a miss)
};

struct RenderStats {
  std::int64_t canonical_points = 0;  // points evaluated through the canonical field
  std::int64_t flow_points = 0;       // points warped by a flow network
};

struct RenderRaysResult {
  RenderOutput coarse;
  RenderOutput fine;
};

/// Renders rays at frame time t through backward_flow + canonical field.
/// The canonical encoding always runs at full bands; alpha_flow windows the
/// flow encodings only. Rays missing `bounds` (or grazing it) return their
/// background with zero opacity and no field evaluation. The rng is consumed
/// in a fixed order: all coarse draws ray by ray, then all importance draws
/// ray by ray.
RenderRaysResult render_rays(const SceneModel& model, const std::vector<Ray>& rays,
                             const std::vector<Eigen::Vector3d>& backgrounds, double t,
                             const Eigen::VectorXd& code, const Aabb& bounds,
                             double alpha_flow, const RenderConfig& config,
                             std::mt19937_64& rng, RenderStats* stats = nullptr);

/// Differentiable render used by the training loop. Exposes the fine-level
/// observation-space sample points and their (detached) densities so the
/// caller can build motion-consensus batches from them.
struct TrainRenderResult {
  Var coarse_color;  // 3 x R
  Var fine_color;    // 3 x R
  Eigen::MatrixXd fine_points;  // 3 x S, observation space, hit rays only
  Eigen::VectorXd fine_sigma;   // S, densities at the warped fine points
  int hit_rays = 0;
};

/// With bypass_flows the sample points feed the canonical field directly
/// (identity warp, no flow gradients); used by density pretraining where
/// observation space IS the canonical space.
TrainRenderResult render_rays_var(Tape& tape, const ModelVars& vars, const SceneModel& model,
                                  const std::vector<Ray>& rays,
                                  const std::vector<Eigen::Vector3d>& backgrounds, double t,
                                  int frame_index, const Aabb& bounds, double alpha_flow,
                                  const RenderConfig& config, std::mt19937_64& rng,
                                  RenderStats* stats = nullptr, bool bypass_flows = false);

/// Derives the per-pixel RNG seed used by render_image; pixel_index is
/// row * width + col. Exposed so callers can reproduce single pixels.
std::uint64_t pixel_seed(std::uint64_t master_seed, std::uint64_t pixel_index);

/// Chunked whole-image render. Every pixel owns an mt19937_64 seeded with
/// pixel_seed(seed, index), so results do not depend on chunk_size beyond
/// float-accumulation order. Returns the image and the opacity map.
std::pair<Image, Eigen::MatrixXd> render_image(const SceneModel& model,
                                               const CameraModel& camera, double t,
                                               const Eigen::VectorXd& code,
                                               const Image& background, const Aabb& bounds,
                                               double alpha_flow, const RenderConfig& config,
                                               std::uint64_t seed,
                                               RenderStats* stats = nullptr);

}  // namespace canonflow
