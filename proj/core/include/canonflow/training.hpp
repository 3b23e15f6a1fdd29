// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "canonflow/data.hpp"
#include "canonflow/fields.hpp"
#include "canonflow/losses.hpp"
#include "canonflow/rendering.hpp"

namespace canonflow {

/// Adam with the standard published defaults.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// One in-place Adam update; `step` is the 1-based bias-correction index
/// shared by every tensor. Exposed so tests can drive a hand-computed
/// single-parameter oracle.
void adam_update(const std::vector<Eigen::MatrixXd*>& params,
                 const std::vector<Eigen::MatrixXd>& grads, std::vector<Eigen::MatrixXd>* m,
                 std::vector<Eigen::MatrixXd>* v, std::int64_t step, double lr,
                 const AdamConfig& config);

struct TrainSchedule {
  // Stage iteration counts: init (N1), joint annealing (N2), joint tail (N3).
  int init_iterations = 2000;
  int anneal_iterations = 10000;
  int tail_iterations = 5000;

  int rays_per_iteration = 384;  // rays on one randomly selected image
  RenderConfig render;

  double base_learning_rate = 5e-4;
  double decay_factor = 0.9999;  // per-iteration multiplicative decay
  double learning_rate_floor = 0.0;

  LossWeights weights;
  int anneal_bands = 8;  // f in alpha(n) = f * n / N2, then held at f

  int correspondence_samples = 512;  // pairs per init-stage step
  int free_samples = 512;            // free points per init-stage step
  double free_margin = 0.05;         // meters
  int moco_points = 128;             // cap on consensus points per step

  AdamConfig adam;

  // Density bootstrap on multi-view renders of the canonical mesh.
  int pretrain_iterations = 1000;
  int pretrain_views = 20;

  int metrics_period = 100;  // emit metrics every K steps (and the last)
  std::uint64_t seed = 1;
  // When set, the joint-stage divergence guard dumps a diagnostic checkpoint
  // here before aborting.
  std::filesystem::path diagnostics_dir;

  void validate() const;
  int total_joint_iterations() const { return anneal_iterations + tail_iterations; }
  /// Desk-scale preset: (N1, N2, N3) = (2k, 10k, 5k), 256 rays, 48/96
  /// samples; sized for a single CPU core.
  static TrainSchedule desk_default();
  /// Full-scale preset from the source protocol: (200k, 1500k, 1000k),
  /// 384 rays, 64/128 samples.
  static TrainSchedule paper_default();
};

/// lr(n) = base * decay^n, clamped below at the floor.
double learning_rate(int iteration, const TrainSchedule& schedule);

enum class TrainStage : int { kPretrain = 0, kInit = 1, kJoint = 2, kDone = 3 };

std::string stage_name(TrainStage stage);

struct StepMetrics {
  int iteration = 0;  // counts init + joint optimizer steps, 1-based at emit
  TrainStage stage = TrainStage::kPretrain;
  double loss = 0.0;
  double photo = 0.0;
  double moco_local = 0.0;
  double moco_global = 0.0;
  double fit = 0.0;
  double learning_rate = 0.0;
  double alpha = 0.0;  // flow-encoding annealing state
};

using MetricsSink = std::function<void(const StepMetrics&)>;

struct TrainState {
  SceneModel model;
  std::vector<Eigen::MatrixXd> adam_m;  // parameters() order
  std::vector<Eigen::MatrixXd> adam_v;
  std::int64_t adam_step = 0;     // total Adam updates so far (bias correction)
  int pretrain_iteration = 0;     // completed pretrain steps
  int iteration = 0;              // completed init + joint steps
  TrainStage stage = TrainStage::kPretrain;
  std::mt19937_64 rng;
  double smoothed_loss = 0.0;  // EMA, factor 0.99
};

/// Fresh state: seeded model initialization, scene scale from the dataset,
/// zero moments, seeded rng.
TrainState make_initial_state(const FieldConfig& config, const FrameDataset& dataset,
                              const TrainSchedule& schedule);

/// Per-frame rendering bounds used across training and evaluation.
Aabb frame_bounds(const FrameDataset& dataset, int frame);

/// Side length of the square pretraining renders.
inline constexpr int kPretrainImageSize = 64;

/// The pretraining views: cameras on a Fibonacci sphere around the mesh and
/// their flat-shaded ray-cast renders. Deterministic.
struct PretrainViews {
  std::vector<CameraModel> cameras;
  std::vector<Image> images;
  Eigen::Vector3d background = Eigen::Vector3d::Constant(0.8);
};
PretrainViews make_pretrain_views(const TriMesh& mesh, int n_views, int image_size);

/// Stage 0: fit the canonical field (identity warp, flows bypassed) to
/// multi-view renders of the canonical mesh. Flow parameters are untouched.
void pretrain_density(TrainState* state, const TriMesh& canonical_mesh,
                      const TrainSchedule& schedule, const MetricsSink& sink = nullptr);

/// One optimizer step of the current stage (init or joint). Deterministic
/// given the rng state. Emits the step's loss components.
StepMetrics train_step(TrainState* state, const FrameDataset& dataset,
                       const TrainSchedule& schedule);

/// Stage 1: L_init for N1 iterations with F_sigma frozen (bit-identical at
/// exit). Resumes from state->iteration.
void run_init_stage(TrainState* state, const FrameDataset& dataset,
                    const TrainSchedule& schedule, const MetricsSink& sink = nullptr);

/// Stage 2: L_joint for N2 + N3 iterations, alpha annealed over N2 then held.
/// The sink always fires at the anneal/tail boundary (N1 + N2) and at the
/// final iteration, on top of the metrics_period cadence. Aborts (after an
/// optional diagnostic checkpoint) on non-finite loss or loss > 1e6.
void run_joint_stage(TrainState* state, const FrameDataset& dataset,
                     const TrainSchedule& schedule, const MetricsSink& sink = nullptr);

/// Checkpoints hold the full state: parameters, moments, counters, rng
/// stream, and enough config to rebuild the model. Doubles are bit-exact.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace canonflow
