// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/fields.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "canonflow/encoding.hpp"
#include "canonflow/geometry.hpp"

namespace canonflow {

namespace {

double softplus_shifted_scalar(double raw, double shift) {
  const double z = raw - shift;
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid_scalar(double x) { return 0.5 * (std::tanh(0.5 * x) + 1.0); }

/// exp map without the Twist range validation; network twists are
/// unconstrained and the series is valid for any finite omega.
Eigen::Vector3d se3_apply_raw(const Eigen::Vector3d& omega, const Eigen::Vector3d& v,
                              const Eigen::Vector3d& x) {
  double a, b, c;
  se3_series_coeffs(omega.squaredNorm(), &a, &b, &c);
  const Eigen::Vector3d rotated = x + a * omega.cross(x) + b * omega.cross(omega.cross(x));
  return rotated + v + b * omega.cross(v) + c * omega.cross(omega.cross(v));
}

}  // namespace

Eigen::Index MlpParams::input_dim() const {
  if (weights.empty()) throw std::invalid_argument("mlp: no layers");
  return weights.front().cols();
}

Eigen::Index MlpParams::output_dim() const {
  if (weights.empty()) throw std::invalid_argument("mlp: no layers");
  return weights.back().rows();
}

void MlpParams::validate() const {
  if (weights.empty()) throw std::invalid_argument("mlp: no layers");
  if (weights.size() != biases.size()) {
    throw std::invalid_argument("mlp: weight/bias layer count mismatch");
  }
  if (skip_layer != -1 && (skip_layer <= 0 || skip_layer >= layer_count())) {
    throw std::invalid_argument("mlp: skip layer outside (0, layer_count)");
  }
  const Eigen::Index in = weights.front().cols();
  for (int l = 0; l < layer_count(); ++l) {
    if (biases[l].rows() != weights[l].rows() || biases[l].cols() != 1) {
      throw std::invalid_argument("mlp: bias shape mismatch at layer " + std::to_string(l));
    }
    if (l == 0) continue;
    const Eigen::Index expected = weights[l - 1].rows() + (l == skip_layer ? in : 0);
    if (weights[l].cols() != expected) {
      throw std::invalid_argument("mlp: layer " + std::to_string(l) +
                                  " input dim does not compose");
    }
  }
}

Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& input) {
  return mlp_forward_batch(params, input).col(0);
}

Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& input) {
  if (input.rows() != params.input_dim()) {
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  }
  Eigen::MatrixXd h = input;
  const int layers = params.layer_count();
  for (int l = 0; l < layers; ++l) {
    if (l == params.skip_layer) {
      Eigen::MatrixXd with_skip(h.rows() + input.rows(), h.cols());
      with_skip << h, input;
      h = std::move(with_skip);
    }
    h = (params.weights[l] * h).colwise() + Eigen::VectorXd(params.biases[l]);
    const bool last = l + 1 == layers;
    if (!last || params.output_activation == OutputActivation::kRelu) {
      h = h.cwiseMax(0.0);
    }
  }
  return h;
}

void FieldConfig::validate() const {
  if (point_bands < 0 || time_bands < 0) throw std::invalid_argument("config: negative bands");
  if (hidden_width < 2) throw std::invalid_argument("config: hidden width < 2");
  if (hidden_layers < 1) throw std::invalid_argument("config: hidden layers < 1");
  if (skip_layer != -1 && (skip_layer <= 0 || skip_layer >= hidden_layers)) {
    throw std::invalid_argument("config: skip layer outside (0, hidden_layers)");
  }
  if (appearance_dim < 1) throw std::invalid_argument("config: appearance dim < 1");
}

void SceneModel::validate() const {
  config.validate();
  if (scene_scale.scale <= 0.0) throw std::invalid_argument("model: nonpositive scene scale");
  canonical_trunk.validate();
  density_head.validate();
  color_head.validate();
  flow_bw.validate();
  flow_fw.validate();
  const Eigen::Index width = canonical_trunk.output_dim();
  if (density_head.input_dim() != width || density_head.output_dim() != 1) {
    throw std::invalid_argument("model: density head shape");
  }
  if (color_head.input_dim() != width + config.appearance_dim || color_head.output_dim() != 3) {
    throw std::invalid_argument("model: color head shape");
  }
  const Eigen::Index flow_in = point_encoding_dim(config.point_bands) +
                               time_encoding_dim(config.time_bands);
  if (flow_bw.input_dim() != flow_in || flow_bw.output_dim() != 6 ||
      flow_fw.input_dim() != flow_in || flow_fw.output_dim() != 6) {
    throw std::invalid_argument("model: flow network shape");
  }
  if (appearance_codes.rows() != config.appearance_dim || appearance_codes.cols() < 1) {
    throw std::invalid_argument("model: appearance code shape");
  }
}

namespace {

void append_mlp_params(const std::string& prefix, MlpParams* mlp,
                       std::vector<SceneModel::ParamRef>* out) {
  for (int l = 0; l < mlp->layer_count(); ++l) {
    out->push_back({prefix + ".w" + std::to_string(l), &mlp->weights[l]});
    out->push_back({prefix + ".b" + std::to_string(l), &mlp->biases[l]});
  }
}

}  // namespace

std::vector<SceneModel::ParamRef> SceneModel::parameters() {
  std::vector<ParamRef> out;
  append_mlp_params("canonical_trunk", &canonical_trunk, &out);
  append_mlp_params("density_head", &density_head, &out);
  append_mlp_params("color_head", &color_head, &out);
  append_mlp_params("flow_bw", &flow_bw, &out);
  append_mlp_params("flow_fw", &flow_fw, &out);
  out.push_back({"appearance_codes", &appearance_codes});
  return out;
}

std::vector<SceneModel::ParamRef> SceneModel::density_parameters() {
  std::vector<ParamRef> out;
  append_mlp_params("canonical_trunk", &canonical_trunk, &out);
  append_mlp_params("density_head", &density_head, &out);
  return out;
}

namespace {

MlpParams make_mlp(std::mt19937_64* rng, const std::vector<Eigen::Index>& dims, int skip_layer,
                   Eigen::Index skip_extra, OutputActivation out_act, bool zero_last) {
  std::normal_distribution<double> normal;
  MlpParams mlp;
  mlp.skip_layer = skip_layer;
  mlp.output_activation = out_act;
  const int layers = static_cast<int>(dims.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const Eigen::Index in = dims[l] + (l == skip_layer ? skip_extra : 0);
    const Eigen::Index out = dims[l + 1];
    Eigen::MatrixXd w(out, in);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (Eigen::Index c = 0; c < in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) w(r, c) = stddev * normal(*rng);
    }
    if (zero_last && l + 1 == layers) w.setZero();
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Eigen::MatrixXd::Zero(out, 1));
  }
  return mlp;
}

}  // namespace

SceneModel init_scene_model(const FieldConfig& config, int frame_count, std::uint64_t seed) {
  config.validate();
  if (frame_count < 1) throw std::invalid_argument("init_scene_model: frame count < 1");

  // Tensors are drawn in parameters() order so the construction is a single
  // documented stream: trunk, density head, color head, flows, codes.
  std::mt19937_64 rng(seed);
  const Eigen::Index enc_point = point_encoding_dim(config.point_bands);
  const Eigen::Index enc_time = time_encoding_dim(config.time_bands);
  const Eigen::Index w = config.hidden_width;

  SceneModel model;
  model.config = config;

  std::vector<Eigen::Index> trunk_dims(config.hidden_layers + 1, w);
  trunk_dims[0] = enc_point;
  model.canonical_trunk =
      make_mlp(&rng, trunk_dims, config.skip_layer, enc_point, OutputActivation::kRelu, false);

  model.density_head = make_mlp(&rng, {w, 1}, -1, 0, OutputActivation::kLinear, false);
  model.color_head = make_mlp(&rng, {w + config.appearance_dim, w / 2, 3}, -1, 0,
                              OutputActivation::kLinear, false);

  std::vector<Eigen::Index> flow_dims(config.hidden_layers + 2, w);
  flow_dims[0] = enc_point + enc_time;
  flow_dims[config.hidden_layers + 1] = 6;
  model.flow_bw = make_mlp(&rng, flow_dims, config.skip_layer, flow_dims[0],
                           OutputActivation::kLinear, true);
  model.flow_fw = make_mlp(&rng, flow_dims, config.skip_layer, flow_dims[0],
                           OutputActivation::kLinear, true);

  std::normal_distribution<double> normal;
  model.appearance_codes.resize(config.appearance_dim, frame_count);
  for (Eigen::Index c = 0; c < frame_count; ++c) {
    for (Eigen::Index r = 0; r < config.appearance_dim; ++r) {
      model.appearance_codes(r, c) = 0.01 * normal(rng);
    }
  }
  model.validate();
  return model;
}

double eval_density(const SceneModel& model, const Eigen::Vector3d& x_canonical_world,
                    double alpha) {
  const Eigen::Vector3d xn = model.scene_scale.to_normalized(x_canonical_world);
  const Eigen::VectorXd enc = encode_point(xn, AnnealState(alpha, model.config.point_bands));
  const Eigen::VectorXd features = mlp_forward(model.canonical_trunk, enc);
  const Eigen::VectorXd raw = mlp_forward(model.density_head, features);
  return softplus_shifted_scalar(raw(0), kDensityShift);
}

std::pair<Eigen::Vector3d, double> eval_canonical(const SceneModel& model,
                                                  const Eigen::Vector3d& x_canonical_world,
                                                  const Eigen::VectorXd& code, double alpha) {
  if (code.size() != model.config.appearance_dim) {
    throw std::invalid_argument("eval_canonical: appearance code dimension mismatch");
  }
  const Eigen::Vector3d xn = model.scene_scale.to_normalized(x_canonical_world);
  const Eigen::VectorXd enc = encode_point(xn, AnnealState(alpha, model.config.point_bands));
  const Eigen::VectorXd features = mlp_forward(model.canonical_trunk, enc);
  const double sigma =
      softplus_shifted_scalar(mlp_forward(model.density_head, features)(0), kDensityShift);

  Eigen::VectorXd color_in(features.size() + code.size());
  color_in << features, code;
  const Eigen::VectorXd raw = mlp_forward(model.color_head, color_in);
  Eigen::Vector3d color;
  for (int i = 0; i < 3; ++i) color(i) = sigmoid_scalar(raw(i));
  return {color, sigma};
}

namespace {

Eigen::Vector3d flow_point(const SceneModel& model, const MlpParams& flow,
                           const Eigen::Vector3d& x_world, double t, double alpha) {
  const Eigen::Vector3d xn = model.scene_scale.to_normalized(x_world);
  const Eigen::VectorXd enc_p = encode_point(xn, AnnealState(alpha, model.config.point_bands));
  const Eigen::VectorXd enc_t = encode_time(t, model.config.time_bands);
  Eigen::VectorXd input(enc_p.size() + enc_t.size());
  input << enc_p, enc_t;
  const Eigen::VectorXd twist = mlp_forward(flow, input);
  const Eigen::Vector3d yn = se3_apply_raw(twist.head<3>(), twist.tail<3>(), xn);
  return model.scene_scale.to_world(yn);
}

}  // namespace

Eigen::Vector3d backward_flow(const SceneModel& model, const Eigen::Vector3d& x_world,
                              double t, double alpha) {
  return flow_point(model, model.flow_bw, x_world, t, alpha);
}

Eigen::Vector3d forward_flow(const SceneModel& model,
                             const Eigen::Vector3d& x_canonical_world, double t, double alpha) {
  return flow_point(model, model.flow_fw, x_canonical_world, t, alpha);
}

namespace {

Eigen::MatrixXd normalize_batch(const SceneScale& scale, const Eigen::MatrixXd& x_world) {
  if (x_world.rows() != 3) throw std::invalid_argument("point batch must be 3xN");
  return (x_world.colwise() - scale.center) / scale.scale;
}

Eigen::MatrixXd flow_batch(const SceneModel& model, const MlpParams& flow,
                           const Eigen::MatrixXd& x_world, double t, double alpha) {
  const Eigen::Index n = x_world.cols();
  const Eigen::MatrixXd xn = normalize_batch(model.scene_scale, x_world);
  const Eigen::MatrixXd enc_p = encode_points(xn, AnnealState(alpha, model.config.point_bands));
  const Eigen::VectorXd enc_t = encode_time(t, model.config.time_bands);
  Eigen::MatrixXd input(enc_p.rows() + enc_t.size(), n);
  input.topRows(enc_p.rows()) = enc_p;
  input.bottomRows(enc_t.size()).colwise() = enc_t;
  const Eigen::MatrixXd twists = mlp_forward_batch(flow, input);
  Eigen::MatrixXd out(3, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Vector3d yn =
        se3_apply_raw(twists.col(j).head<3>(), twists.col(j).tail<3>(), xn.col(j));
    out.col(j) = model.scene_scale.to_world(yn);
  }
  return out;
}

}  // namespace

Eigen::MatrixXd backward_flow_batch(const SceneModel& model, const Eigen::MatrixXd& x_world,
                                    double t, double alpha) {
  return flow_batch(model, model.flow_bw, x_world, t, alpha);
}

Eigen::MatrixXd forward_flow_batch(const SceneModel& model,
                                   const Eigen::MatrixXd& x_canonical_world, double t,
                                   double alpha) {
  return flow_batch(model, model.flow_fw, x_canonical_world, t, alpha);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> eval_canonical_batch(
    const SceneModel& model, const Eigen::MatrixXd& x_canonical_world,
    const Eigen::VectorXd& code, double alpha) {
  if (code.size() != model.config.appearance_dim) {
    throw std::invalid_argument("eval_canonical_batch: appearance code dimension mismatch");
  }
  const Eigen::Index n = x_canonical_world.cols();
  const Eigen::MatrixXd xn = normalize_batch(model.scene_scale, x_canonical_world);
  const Eigen::MatrixXd enc =
      encode_points(xn, AnnealState(alpha, model.config.point_bands));
  const Eigen::MatrixXd features = mlp_forward_batch(model.canonical_trunk, enc);
  const Eigen::MatrixXd raw_sigma = mlp_forward_batch(model.density_head, features);

  Eigen::MatrixXd color_in(features.rows() + code.size(), n);
  color_in.topRows(features.rows()) = features;
  color_in.bottomRows(code.size()).colwise() = code;
  const Eigen::MatrixXd raw_color = mlp_forward_batch(model.color_head, color_in);

  Eigen::MatrixXd colors(3, n);
  Eigen::VectorXd sigmas(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    sigmas(j) = softplus_shifted_scalar(raw_sigma(0, j), kDensityShift);
    for (int i = 0; i < 3; ++i) colors(i, j) = sigmoid_scalar(raw_color(i, j));
  }
  return {colors, sigmas};
}

Eigen::VectorXd eval_density_batch(const SceneModel& model,
                                   const Eigen::MatrixXd& x_canonical_world, double alpha) {
  const Eigen::MatrixXd xn = normalize_batch(model.scene_scale, x_canonical_world);
  const Eigen::MatrixXd enc =
      encode_points(xn, AnnealState(alpha, model.config.point_bands));
  const Eigen::MatrixXd features = mlp_forward_batch(model.canonical_trunk, enc);
  const Eigen::MatrixXd raw = mlp_forward_batch(model.density_head, features);
  Eigen::VectorXd sigmas(x_canonical_world.cols());
  for (Eigen::Index j = 0; j < sigmas.size(); ++j) {
    sigmas(j) = softplus_shifted_scalar(raw(0, j), kDensityShift);
  }
  return sigmas;
}

namespace {

MlpVars register_mlp(Tape& tape, const std::string& prefix, const MlpParams& mlp, bool frozen,
                     std::vector<std::pair<std::string, Var>>* entries) {
  MlpVars vars;
  vars.skip_layer = mlp.skip_layer;
  vars.output_activation = mlp.output_activation;
  for (int l = 0; l < mlp.layer_count(); ++l) {
    Var w = frozen ? tape.constant(mlp.weights[l]) : tape.leaf(mlp.weights[l]);
    Var b = frozen ? tape.constant(mlp.biases[l]) : tape.leaf(mlp.biases[l]);
    entries->emplace_back(prefix + ".w" + std::to_string(l), w);
    entries->emplace_back(prefix + ".b" + std::to_string(l), b);
    vars.weights.push_back(w);
    vars.biases.push_back(b);
  }
  return vars;
}

}  // namespace

ModelVars make_model_vars(Tape& tape, const SceneModel& model, bool freeze_density) {
  ModelVars vars;
  vars.canonical_trunk =
      register_mlp(tape, "canonical_trunk", model.canonical_trunk, freeze_density, &vars.entries);
  vars.density_head =
      register_mlp(tape, "density_head", model.density_head, freeze_density, &vars.entries);
  vars.color_head = register_mlp(tape, "color_head", model.color_head, false, &vars.entries);
  vars.flow_bw = register_mlp(tape, "flow_bw", model.flow_bw, false, &vars.entries);
  vars.flow_fw = register_mlp(tape, "flow_fw", model.flow_fw, false, &vars.entries);
  vars.appearance_codes = tape.leaf(model.appearance_codes);
  vars.entries.emplace_back("appearance_codes", vars.appearance_codes);
  return vars;
}

std::vector<Eigen::MatrixXd> collect_gradients(const ModelVars& vars) {
  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(vars.entries.size());
  for (const auto& [name, var] : vars.entries) {
    if (var.grad().size() > 0) {
      grads.push_back(var.grad());
    } else {
      grads.push_back(Eigen::MatrixXd::Zero(var.rows(), var.cols()));
    }
  }
  return grads;
}

Var mlp_forward_var(Tape& tape, const MlpVars& params, const Var& input) {
  (void)tape;
  Var h = input;
  const int layers = static_cast<int>(params.weights.size());
  for (int l = 0; l < layers; ++l) {
    if (l == params.skip_layer) h = vcat({h, input});
    h = add_bias(matmul(params.weights[l], h), params.biases[l]);
    const bool last = l + 1 == layers;
    if (!last || params.output_activation == OutputActivation::kRelu) h = relu(h);
  }
  return h;
}

Var encode_points_var(Tape& tape, const Var& x, int bands, double alpha) {
  if (x.rows() != 3) throw std::invalid_argument("encode_points_var: points must be 3xN");
  std::vector<Var> parts;
  parts.reserve(1 + 2 * bands);
  parts.push_back(x);
  double freq = M_PI;
  for (int k = 0; k < bands; ++k) {
    const double w = window_weight(k, alpha);
    if (w == 0.0) {
      // Closed band: constant zeros, no gradient path by construction.
      parts.push_back(tape.constant(Eigen::MatrixXd::Zero(3, x.cols())));
      parts.push_back(tape.constant(Eigen::MatrixXd::Zero(3, x.cols())));
    } else {
      const Var phase = scale(x, freq);
      parts.push_back(scale(sinv(phase), w));
      parts.push_back(scale(cosv(phase), w));
    }
    freq *= 2.0;
  }
  return vcat(parts);
}

Var se3_apply_var(Tape& tape, const Var& twist, const Var& x) {
  if (twist.rows() != 6 || x.rows() != 3 || twist.cols() != x.cols()) {
    throw std::invalid_argument("se3_apply_var: twist must be 6xN and x 3xN");
  }
  const Eigen::Index n = x.cols();
  const Eigen::MatrixXd& tw = twist.value();
  const Eigen::MatrixXd& xv = x.value();
  Eigen::MatrixXd y(3, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    y.col(j) = se3_apply_raw(tw.col(j).head<3>(), tw.col(j).tail<3>(), xv.col(j));
  }
  if (!tape.grad_enabled() ||
      (!tape.needs_grad(twist.index) && !tape.needs_grad(x.index))) {
    return tape.constant(std::move(y));
  }
  const std::int32_t ti = twist.index, xi = x.index;
  return tape.make_node(
      std::move(y),
      [ti, xi](Tape& tp, std::int32_t self) {
        const Eigen::MatrixXd& g = tp.grad_of(self);
        const Eigen::MatrixXd& tw = tp.value_of(ti);
        const Eigen::MatrixXd& xv = tp.value_of(xi);
        const Eigen::Index n = xv.cols();
        Eigen::MatrixXd gt(6, n);
        Eigen::MatrixXd gx(3, n);
        for (Eigen::Index j = 0; j < n; ++j) {
          const Eigen::Vector3d omega = tw.col(j).head<3>();
          const Eigen::Vector3d v = tw.col(j).tail<3>();
          const Eigen::Vector3d xj = xv.col(j);
          const Eigen::Vector3d gj = g.col(j);
          double a, b, c, da, db, dc;
          se3_series_coeffs(omega.squaredNorm(), &a, &b, &c, &da, &db, &dc);

          // d(y)/d(x) = R = I + a [w]x + b [w]x^2; transpose flips the sign
          // of the skew term.
          gx.col(j) = gj - a * omega.cross(gj) + b * omega.cross(omega.cross(gj));
          // d(y)/d(v) = G = I + b [w]x + c [w]x^2.
          gt.col(j).tail<3>() = gj - b * omega.cross(gj) + c * omega.cross(omega.cross(gj));

          // d(y)/d(omega): chain through the series coefficients (via
          // s = |omega|^2) and through the cross products. For constant u,
          //   d[k(s) (w x u)]/dw       = 2 k' (w x u) w^T - k [u]x
          //   d[k(s) (w x (w x u))]/dw = 2 k' (w x (w x u)) w^T
          //                              + k (w u^T + (w.u) I - 2 u w^T).
          const Eigen::Vector3d wxx = omega.cross(xj);
          const Eigen::Vector3d wwxx = omega.cross(wxx);
          const Eigen::Vector3d wxv = omega.cross(v);
          const Eigen::Vector3d wwxv = omega.cross(wxv);
          const double series = da * gj.dot(wxx) + db * (gj.dot(wwxx) + gj.dot(wxv)) +
                                dc * gj.dot(wwxv);
          Eigen::Vector3d gw = 2.0 * series * omega;
          gw += a * xj.cross(gj);
          gw += b * (omega.dot(gj) * xj + omega.dot(xj) * gj - 2.0 * xj.dot(gj) * omega);
          gw += b * v.cross(gj);
          gw += c * (omega.dot(gj) * v + omega.dot(v) * gj - 2.0 * v.dot(gj) * omega);
          gt.col(j).head<3>() = gw;
        }
        tp.accumulate(ti, gt);
        tp.accumulate(xi, gx);
      },
      true);
}

Var flow_var(Tape& tape, const MlpVars& flow, const FieldConfig& config, const Var& x_norm,
             double t, double alpha) {
  const Var enc = encode_points_var(tape, x_norm, config.point_bands, alpha);
  const Eigen::VectorXd enc_t = encode_time(t, config.time_bands);
  const Var time_rows = tape.constant(enc_t.rowwise().replicate(x_norm.cols()));
  const Var twist = mlp_forward_var(tape, flow, vcat({enc, time_rows}));
  return se3_apply_var(tape, twist, x_norm);
}

CanonicalVarOut eval_canonical_var(Tape& tape, const ModelVars& vars,
                                   const FieldConfig& config, const Var& x_norm,
                                   const Var& code, double alpha) {
  if (code.rows() != config.appearance_dim || code.cols() != 1) {
    throw std::invalid_argument("eval_canonical_var: code must be appearance_dim x 1");
  }
  const Var enc = encode_points_var(tape, x_norm, config.point_bands, alpha);
  const Var features = mlp_forward_var(tape, vars.canonical_trunk, enc);
  const Var sigma =
      softplus_shifted(mlp_forward_var(tape, vars.density_head, features), kDensityShift);
  const Var code_rep = repeat_cols(code, x_norm.cols());
  const Var raw = mlp_forward_var(tape, vars.color_head, vcat({features, code_rep}));
  return {sigmoid(raw), sigma};
}

Var eval_density_var(Tape& tape, const ModelVars& vars, const FieldConfig& config,
                     const Var& x_norm, double alpha) {
  const Var enc = encode_points_var(tape, x_norm, config.point_bands, alpha);
  const Var features = mlp_forward_var(tape, vars.canonical_trunk, enc);
  return softplus_shifted(mlp_forward_var(tape, vars.density_head, features), kDensityShift);
}

}  // namespace canonflow
