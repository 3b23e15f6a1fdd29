// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include "canonflow/fields.hpp"
#include "canonflow/geometry.hpp"
#include "canonflow/tape.hpp"

namespace canonflow {

struct LossWeights {
  double lambda = 0.2;   // motion-consensus weight
  double mu = 10.0;      // initialization fit weight
  double epsilon = 0.01;  // occupancy threshold for consensus filtering

  /// lambda, mu >= 0 and epsilon > 0; throws std::invalid_argument.
  void validate() const;
};

/// One observation/canonical correspondence at frame time t.
struct CorrespondencePair {
  Eigen::Vector3d x_obs = Eigen::Vector3d::Zero();
  Eigen::Vector3d x_canonical = Eigen::Vector3d::Zero();
  double t = 0.0;
};

/// Correspondences of one frame packed column-wise for batched evaluation.
struct CorrespondenceBatch {
  Eigen::MatrixXd x_obs;        // 3 x P, observation space
  Eigen::MatrixXd x_canonical;  // 3 x P, canonical space
};

/// Mean squared error over ray colors. The two-level overload sums the
/// coarse-level and fine-level MSE.
Var photometric_loss(Tape& tape, const Var& predicted, const Eigen::MatrixXd& target);
Var photometric_loss(Tape& tape, const Var& coarse, const Var& fine,
                     const Eigen::MatrixXd& target);

/// Local consensus: mean L1 (world units, averaged over points and
/// coordinates) of the two-hop round trip fw(bw(x, t), t) - x. Empty point
/// sets yield a constant 0.
Var moco_local(Tape& tape, const ModelVars& vars, const SceneModel& model,
               const Var& points_world, double t_i, double alpha_flow);
Var moco_local(Tape& tape, const ModelVars& vars, const SceneModel& model,
               const Eigen::MatrixXd& points_world, double t_i, double alpha_flow);

/// Global consensus: mean L1 of the four-hop cycle
/// fw(bw(fw(bw(x, t_i), t_j), t_j), t_i) - x across a second frame time t_j.
Var moco_global(Tape& tape, const ModelVars& vars, const SceneModel& model,
                const Var& points_world, double t_i, double t_j, double alpha_flow);
Var moco_global(Tape& tape, const ModelVars& vars, const SceneModel& model,
                const Eigen::MatrixXd& points_world, double t_i, double t_j,
                double alpha_flow);

/// Total consensus regularizer: moco_global + moco_local, exactly.
Var moco_loss(Tape& tape, const ModelVars& vars, const SceneModel& model,
              const Var& points_world, double t_i, double t_j, double alpha_flow);

/// Keeps the columns whose warped density sigma(bw(x, t_i)) exceeds epsilon
/// strictly. The decision is gradient-free by construction (plain
/// evaluation).
Eigen::MatrixXd filter_occupied(const SceneModel& model, const Eigen::MatrixXd& points_world,
                                double t_i, double epsilon, double alpha_flow);
/// Same filter against precomputed densities for the given columns.
Eigen::MatrixXd filter_occupied(const Eigen::MatrixXd& points_world,
                                const Eigen::VectorXd& sigmas, double epsilon);

/// Mean coarse sample spacing of an AABB: average extent over the three
/// axes divided by the coarse sample count. Used as the opacity step delta0
/// in the initialization fit loss.
double mean_coarse_spacing(const Aabb& bounds, int coarse_samples);

/// Initialization fit loss:
///   mean L1 |bw(x_h, t) - x'_h| + mean L1 |fw(x'_h, t) - x_h|
///   + mean BCE(1 - exp(-sigma(bw(x_f, t)) delta0), 0).
/// The BCE term reduces algebraically to mean(sigma) * delta0, which is the
/// exact and overflow-free form used here. Pairs must be nonempty; an empty
/// free set drops the BCE term.
Var init_fit_loss(Tape& tape, const ModelVars& vars, const SceneModel& model,
                  const CorrespondenceBatch& pairs, const Eigen::MatrixXd& free_points,
                  double t, double delta0, double alpha_flow);

/// L_init = photo + lambda * moco + mu * fit.
Var init_objective(Tape& tape, const Var& photo, const Var& moco, const Var& fit,
                   const LossWeights& weights);
double init_objective(double photo, double moco, double fit, const LossWeights& weights);

/// L_joint = photo + lambda * moco.
Var joint_objective(Tape& tape, const Var& photo, const Var& moco, const LossWeights& weights);
double joint_objective(double photo, double moco, const LossWeights& weights);

}  // namespace canonflow
