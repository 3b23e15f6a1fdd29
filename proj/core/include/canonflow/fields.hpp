// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "canonflow/tape.hpp"

namespace canonflow {

enum class OutputActivation { kLinear, kRelu };

/// Fully connected stack. Hidden activations are ReLU; the layer at
/// `skip_layer` receives the original input concatenated below the running
/// hidden state.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // layer l: out x in
  std::vector<Eigen::MatrixXd> biases;   // out x 1
  int skip_layer = -1;                   // -1 disables the skip
  OutputActivation output_activation = OutputActivation::kLinear;

  int layer_count() const { return static_cast<int>(weights.size()); }
  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  /// Consecutive layer shapes must compose (with the skip widening) and
  /// skip_layer must be -1 or in (0, layer_count). Throws std::invalid_argument.
  void validate() const;
};

/// Gradient-free forward pass.
Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& input);
Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& input);

struct FieldConfig {
  int point_bands = 8;  // f
  int time_bands = 16;  // f_t
  int hidden_width = 64;
  int hidden_layers = 6;
  int skip_layer = 3;
  int appearance_dim = 8;

  void validate() const;

  /// Desk-scale network (the defaults): width 64, 6 layers, skip at 3.
  static FieldConfig desk() { return FieldConfig{}; }
  /// Full-scale network: width 256, 8 layers, skip at 4.
  static FieldConfig paper() {
    FieldConfig config;
    config.hidden_width = 256;
    config.hidden_layers = 8;
    config.skip_layer = 4;
    return config;
  }
};

/// Maps world coordinates to the roughly [-1,1]^3 domain the encodings and
/// networks operate in. Uniform scale keeps flow twists rigid in both frames.
struct SceneScale {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double scale = 1.0;  // meters per normalized unit, > 0

  Eigen::Vector3d to_normalized(const Eigen::Vector3d& world) const {
    return (world - center) / scale;
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& normalized) const {
    return normalized * scale + center;
  }
};

/// Density activation: sigma = softplus(raw - kDensityShift). The shift keeps
/// fresh models at a moderate density instead of softplus(0).
constexpr double kDensityShift = 1.0;

/// Canonical radiance field, both flows, and per-frame appearance codes.
///
/// The density branch F_sigma is canonical_trunk + density_head; the color
/// branch F_c is color_head (trunk features plus the appearance code in,
/// sigmoid RGB out). Flows map (encoded point, encoded time) to an se(3)
/// twist applied to the input point; their final layers start at zero, so
/// fresh flows are the identity.
struct SceneModel {
  FieldConfig config;
  SceneScale scene_scale;
  MlpParams canonical_trunk;  // encoded point -> width features, ReLU output
  MlpParams density_head;     // features -> 1 raw
  MlpParams color_head;       // features + code -> 3 raw
  MlpParams flow_bw;          // encoded point and time -> 6 raw twist
  MlpParams flow_fw;
  Eigen::MatrixXd appearance_codes;  // appearance_dim x frame_count

  int frame_count() const { return static_cast<int>(appearance_codes.cols()); }
  Eigen::VectorXd code(int frame) const { return appearance_codes.col(frame); }
  void validate() const;

  struct ParamRef {
    std::string name;
    Eigen::MatrixXd* value;
  };
  /// Every trainable tensor in a fixed, documented order (checkpoint and
  /// optimizer-state order).
  std::vector<ParamRef> parameters();
  /// The F_sigma subset: canonical trunk plus density head.
  std::vector<ParamRef> density_parameters();
};

/// Deterministic initialization: He-style Gaussian weights, zero biases,
/// zeroed flow output layers, appearance codes ~ N(0, 0.01^2).
SceneModel init_scene_model(const FieldConfig& config, int frame_count, std::uint64_t seed);

// Gradient-free single-point evaluation, world coordinates in and out.
// alpha windows the point encoding of the evaluated network only.
double eval_density(const SceneModel& model, const Eigen::Vector3d& x_canonical_world,
                    double alpha);
/// Returns (color in [0,1]^3, density >= 0).
std::pair<Eigen::Vector3d, double> eval_canonical(const SceneModel& model,
                                                  const Eigen::Vector3d& x_canonical_world,
                                                  const Eigen::VectorXd& code, double alpha);
Eigen::Vector3d backward_flow(const SceneModel& model, const Eigen::Vector3d& x_world,
                              double t, double alpha);
Eigen::Vector3d forward_flow(const SceneModel& model,
                             const Eigen::Vector3d& x_canonical_world, double t, double alpha);

// Batched gradient-free evaluation; one point per column, world coordinates.
Eigen::MatrixXd backward_flow_batch(const SceneModel& model, const Eigen::MatrixXd& x_world,
                                    double t, double alpha);
Eigen::MatrixXd forward_flow_batch(const SceneModel& model,
                                   const Eigen::MatrixXd& x_canonical_world, double t,
                                   double alpha);
/// Returns (colors 3xN, densities N).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> eval_canonical_batch(
    const SceneModel& model, const Eigen::MatrixXd& x_canonical_world,
    const Eigen::VectorXd& code, double alpha);
Eigen::VectorXd eval_density_batch(const SceneModel& model,
                                   const Eigen::MatrixXd& x_canonical_world, double alpha);

// Tape-side batched evaluation. Points are in normalized coordinates here;
// callers convert once per batch.

struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
  int skip_layer = -1;
  OutputActivation output_activation = OutputActivation::kLinear;
};

struct ModelVars {
  MlpVars canonical_trunk;
  MlpVars density_head;
  MlpVars color_head;
  MlpVars flow_bw;
  MlpVars flow_fw;
  Var appearance_codes;
  /// (parameter name, var) in SceneModel::parameters() order.
  std::vector<std::pair<std::string, Var>> entries;
};

/// Registers the model's tensors on the tape. With freeze_density, the
/// F_sigma tensors are recorded as constants: no gradients flow to them.
ModelVars make_model_vars(Tape& tape, const SceneModel& model, bool freeze_density = false);

/// Accumulated parameter gradients in parameters() order; zero matrices for
/// tensors that received no gradient (frozen or unused).
std::vector<Eigen::MatrixXd> collect_gradients(const ModelVars& vars);

Var mlp_forward_var(Tape& tape, const MlpVars& params, const Var& input);

/// Tape version of encode_points (3xN in, (3+6f)xN out).
Var encode_points_var(Tape& tape, const Var& x, int bands, double alpha);

/// Batched SE(3) action: column j of the result is exp(twist_j) applied to
/// x_j. twist is 6xN (omega rows 0-2, v rows 3-5), x is 3xN.
Var se3_apply_var(Tape& tape, const Var& twist, const Var& x);

/// Flow network applied to a batch: encode, run the MLP to a twist field,
/// apply SE(3). x_norm is 3xN normalized points.
Var flow_var(Tape& tape, const MlpVars& flow, const FieldConfig& config, const Var& x_norm,
             double t, double alpha);

struct CanonicalVarOut {
  Var color;  // 3xN in [0,1]
  Var sigma;  // 1xN >= 0
};

/// Density-only tape evaluation: trunk + density head, no color pass.
Var eval_density_var(Tape& tape, const ModelVars& vars, const FieldConfig& config,
                     const Var& x_norm, double alpha);

/// Canonical field on a batch of normalized canonical points. code is
/// appearance_dim x 1 and broadcasts over the batch.
CanonicalVarOut eval_canonical_var(Tape& tape, const ModelVars& vars,
                                   const FieldConfig& config, const Var& x_norm,
                                   const Var& code, double alpha);

}  // namespace canonflow
