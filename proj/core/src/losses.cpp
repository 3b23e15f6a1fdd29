// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/losses.hpp"

#include <stdexcept>
#include <vector>

namespace canonflow {

namespace {

/// World points var -> normalized points var (affine, differentiable).
Var normalize_var(Tape& tape, const SceneScale& scale, const Var& points_world) {
  const Var centered =
      add_bias(points_world, tape.constant(Eigen::MatrixXd(-scale.center)));
  return canonflow::scale(centered, 1.0 / scale.scale);
}

/// Mean L1 in world units: mean |a - b| over points and coordinates, scaled
/// from normalized to meters.
Var mean_l1_world(const SceneScale& scale, const Var& a_norm, const Var& b_norm) {
  return canonflow::scale(mean(absv(sub(a_norm, b_norm))), scale.scale);
}

}  // namespace

void LossWeights::validate() const {
  if (lambda < 0.0 || mu < 0.0) throw std::invalid_argument("LossWeights: negative weight");
  if (!(epsilon > 0.0)) throw std::invalid_argument("LossWeights: epsilon must be > 0");
}

Var photometric_loss(Tape& tape, const Var& predicted, const Eigen::MatrixXd& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
    throw std::invalid_argument("photometric_loss: shape mismatch");
  }
  return mean(square(sub(predicted, tape.constant(target))));
}

Var photometric_loss(Tape& tape, const Var& coarse, const Var& fine,
                     const Eigen::MatrixXd& target) {
  return add(photometric_loss(tape, coarse, target), photometric_loss(tape, fine, target));
}

Var moco_local(Tape& tape, const ModelVars& vars, const SceneModel& model,
               const Var& points_world, double t_i, double alpha_flow) {
  if (points_world.cols() == 0) return tape.constant(Eigen::MatrixXd::Zero(1, 1));
  const Var x_norm = normalize_var(tape, model.scene_scale, points_world);
  const Var canonical = flow_var(tape, vars.flow_bw, model.config, x_norm, t_i, alpha_flow);
  const Var round_trip = flow_var(tape, vars.flow_fw, model.config, canonical, t_i, alpha_flow);
  return mean_l1_world(model.scene_scale, round_trip, x_norm);
}

Var moco_local(Tape& tape, const ModelVars& vars, const SceneModel& model,
               const Eigen::MatrixXd& points_world, double t_i, double alpha_flow) {
  return moco_local(tape, vars, model, tape.constant(points_world), t_i, alpha_flow);
}

Var moco_global(Tape& tape, const ModelVars& vars, const SceneModel& model,
                const Var& points_world, double t_i, double t_j, double alpha_flow) {
  if (points_world.cols() == 0) return tape.constant(Eigen::MatrixXd::Zero(1, 1));
  const Var x_norm = normalize_var(tape, model.scene_scale, points_world);
  // Observation i -> canonical -> observation j -> canonical -> observation i.
  const Var h1 = flow_var(tape, vars.flow_bw, model.config, x_norm, t_i, alpha_flow);
  const Var h2 = flow_var(tape, vars.flow_fw, model.config, h1, t_j, alpha_flow);
  const Var h3 = flow_var(tape, vars.flow_bw, model.config, h2, t_j, alpha_flow);
  const Var h4 = flow_var(tape, vars.flow_fw, model.config, h3, t_i, alpha_flow);
  return mean_l1_world(model.scene_scale, h4, x_norm);
}

Var moco_global(Tape& tape, const ModelVars& vars, const SceneModel& model,
                const Eigen::MatrixXd& points_world, double t_i, double t_j,
                double alpha_flow) {
  return moco_global(tape, vars, model, tape.constant(points_world), t_i, t_j, alpha_flow);
}

Var moco_loss(Tape& tape, const ModelVars& vars, const SceneModel& model,
              const Var& points_world, double t_i, double t_j, double alpha_flow) {
  return add(moco_global(tape, vars, model, points_world, t_i, t_j, alpha_flow),
             moco_local(tape, vars, model, points_world, t_i, alpha_flow));
}

Eigen::MatrixXd filter_occupied(const Eigen::MatrixXd& points_world,
                                const Eigen::VectorXd& sigmas, double epsilon) {
  if (points_world.cols() != sigmas.size()) {
    throw std::invalid_argument("filter_occupied: point/density count mismatch");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("filter_occupied: epsilon must be > 0");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < sigmas.size(); ++j) {
    if (sigmas(j) > epsilon) keep.push_back(j);
  }
  Eigen::MatrixXd out(3, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) out.col(k) = points_world.col(keep[k]);
  return out;
}

Eigen::MatrixXd filter_occupied(const SceneModel& model, const Eigen::MatrixXd& points_world,
                                double t_i, double epsilon, double alpha_flow) {
  const double alpha_full = static_cast<double>(model.config.point_bands);
  const Eigen::MatrixXd canonical =
      backward_flow_batch(model, points_world, t_i, alpha_flow);
  return filter_occupied(points_world, eval_density_batch(model, canonical, alpha_full),
                         epsilon);
}

double mean_coarse_spacing(const Aabb& bounds, int coarse_samples) {
  if (coarse_samples < 1) throw std::invalid_argument("mean_coarse_spacing: n < 1");
  return bounds.extents().mean() / coarse_samples;
}

Var init_fit_loss(Tape& tape, const ModelVars& vars, const SceneModel& model,
                  const CorrespondenceBatch& pairs, const Eigen::MatrixXd& free_points,
                  double t, double delta0, double alpha_flow) {
  if (pairs.x_obs.cols() == 0) throw std::invalid_argument("init_fit_loss: empty pairs");
  if (pairs.x_obs.rows() != 3 || pairs.x_canonical.rows() != 3 ||
      pairs.x_obs.cols() != pairs.x_canonical.cols()) {
    throw std::invalid_argument("init_fit_loss: pair shape mismatch");
  }
  if (!(delta0 > 0.0)) throw std::invalid_argument("init_fit_loss: delta0 must be > 0");
  const SceneScale& scale = model.scene_scale;
  const double alpha_full = static_cast<double>(model.config.point_bands);

  const Var obs_norm = normalize_var(tape, scale, tape.constant(pairs.x_obs));
  const Var can_norm = normalize_var(tape, scale, tape.constant(pairs.x_canonical));
  const Var bw = flow_var(tape, vars.flow_bw, model.config, obs_norm, t, alpha_flow);
  const Var fw = flow_var(tape, vars.flow_fw, model.config, can_norm, t, alpha_flow);
  Var loss = add(mean_l1_world(scale, bw, can_norm), mean_l1_world(scale, fw, obs_norm));

  if (free_points.cols() > 0) {
    // BCE of opacity o = 1 - exp(-sigma delta0) against target 0 is
    // -log(1 - o) = sigma * delta0 exactly; evaluated in that stable form.
    const Var free_norm = normalize_var(tape, scale, tape.constant(free_points));
    const Var warped = flow_var(tape, vars.flow_bw, model.config, free_norm, t, alpha_flow);
    const Var sigma = eval_density_var(tape, vars, model.config, warped, alpha_full);
    loss = add(loss, canonflow::scale(mean(sigma), delta0));
  }
  return loss;
}

Var init_objective(Tape& tape, const Var& photo, const Var& moco, const Var& fit,
                   const LossWeights& weights) {
  (void)tape;
  weights.validate();
  return add(photo, add(scale(moco, weights.lambda), scale(fit, weights.mu)));
}

double init_objective(double photo, double moco, double fit, const LossWeights& weights) {
  weights.validate();
  return photo + weights.lambda * moco + weights.mu * fit;
}

Var joint_objective(Tape& tape, const Var& photo, const Var& moco, const LossWeights& weights) {
  (void)tape;
  weights.validate();
  return add(photo, scale(moco, weights.lambda));
}

double joint_objective(double photo, double moco, const LossWeights& weights) {
  weights.validate();
  return photo + weights.lambda * moco;
}

}  // namespace canonflow
