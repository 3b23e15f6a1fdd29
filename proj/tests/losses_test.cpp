// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/losses.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"

using namespace canonflow;

namespace {

FieldConfig tiny_config() {
  FieldConfig cfg;
  cfg.point_bands = 2;
  cfg.time_bands = 2;
  cfg.hidden_width = 8;
  cfg.hidden_layers = 2;
  cfg.skip_layer = 1;
  cfg.appearance_dim = 2;
  return cfg;
}

/// Flow network that ignores its input and applies the constant twist
/// (omega, v) in normalized coordinates.
void set_constant_twist(MlpParams* flow, const Eigen::Vector3d& omega,
                        const Eigen::Vector3d& v) {
  flow->weights.back().setZero();
  flow->biases.back().col(0).head<3>() = omega;
  flow->biases.back().col(0).tail<3>() = v;
}

Eigen::MatrixXd random_points(int n, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-spread, spread);
  Eigen::MatrixXd pts(3, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < 3; ++i) pts(i, j) = dist(rng);
  }
  return pts;
}

}  // namespace

TEST_CASE("loss weights validate") {
  LossWeights w;
  CHECK(w.lambda == 0.2);
  CHECK(w.mu == 10.0);
  CHECK(w.epsilon == 0.01);
  CHECK_NOTHROW(w.validate());
  w.lambda = -0.1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.epsilon = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("photometric loss") {
  Tape tape;
  const Eigen::MatrixXd target = random_points(5, 1, 0.5);

  CHECK(photometric_loss(tape, tape.leaf(target), target).value()(0, 0) == 0.0);

  Eigen::MatrixXd offset = target.array() + 0.1;
  CHECK(photometric_loss(tape, tape.leaf(offset), target).value()(0, 0) ==
        doctest::Approx(0.01).epsilon(1e-12));

  // Straight-line oracle on a random pair.
  const Eigen::MatrixXd pred = random_points(5, 2, 0.5);
  double expect = 0.0;
  for (int j = 0; j < 5; ++j) {
    for (int i = 0; i < 3; ++i) {
      expect += (pred(i, j) - target(i, j)) * (pred(i, j) - target(i, j));
    }
  }
  expect /= 15.0;
  CHECK(photometric_loss(tape, tape.leaf(pred), target).value()(0, 0) ==
        doctest::Approx(expect).epsilon(1e-12));

  // Hierarchical form is the sum of the two levels.
  const double coarse = photometric_loss(tape, tape.leaf(offset), target).value()(0, 0);
  const double fine = photometric_loss(tape, tape.leaf(pred), target).value()(0, 0);
  CHECK(photometric_loss(tape, tape.leaf(offset), tape.leaf(pred), target).value()(0, 0) ==
        doctest::Approx(coarse + fine).epsilon(1e-12));

  CHECK_THROWS_AS(photometric_loss(tape, tape.leaf(random_points(4, 3)), target),
                  std::invalid_argument);
}

TEST_CASE("moco_local closed forms") {
  SceneModel model = init_scene_model(tiny_config(), 3, 11);
  const Eigen::MatrixXd points = random_points(7, 4);

  // Fresh flows are identities.
  Tape t0;
  CHECK(moco_local(t0, make_model_vars(t0, model), model, points, 0.4, 2.0).value()(0, 0) ==
        0.0);

  // Both flows shift by +s: residual is exactly 2s per point.
  const Eigen::Vector3d s(0.05, -0.2, 0.1);
  set_constant_twist(&model.flow_bw, Eigen::Vector3d::Zero(), s);
  set_constant_twist(&model.flow_fw, Eigen::Vector3d::Zero(), s);
  Tape t1;
  const double got =
      moco_local(t1, make_model_vars(t1, model), model, points, 0.4, 2.0).value()(0, 0);
  CHECK(got == doctest::Approx(2.0 * s.cwiseAbs().mean()).epsilon(1e-12));

  // Exact inverse rigid pair: exp(tau) then exp(-tau).
  const Eigen::Vector3d omega(0.3, -0.1, 0.2);
  const Eigen::Vector3d v(0.1, 0.25, -0.15);
  set_constant_twist(&model.flow_bw, omega, v);
  set_constant_twist(&model.flow_fw, -omega, -v);
  Tape t2;
  CHECK(moco_local(t2, make_model_vars(t2, model), model, points, 0.4, 2.0).value()(0, 0) <
        1e-9);

  // Empty set is zero by definition.
  Tape t3;
  CHECK(moco_local(t3, make_model_vars(t3, model), model, Eigen::MatrixXd(3, 0), 0.4, 2.0)
            .value()(0, 0) == 0.0);
}

TEST_CASE("moco_global closed forms") {
  SceneModel model = init_scene_model(tiny_config(), 3, 12);
  const Eigen::MatrixXd points = random_points(6, 5);

  Tape t0;
  CHECK(moco_global(t0, make_model_vars(t0, model), model, points, 0.2, 0.8, 2.0)
            .value()(0, 0) == 0.0);

  // Constant shifts bw = +a, fw = +b: the cycle accumulates 2(a + b).
  const Eigen::Vector3d a(0.04, -0.1, 0.06);
  const Eigen::Vector3d b(-0.02, 0.05, 0.08);
  set_constant_twist(&model.flow_bw, Eigen::Vector3d::Zero(), a);
  set_constant_twist(&model.flow_fw, Eigen::Vector3d::Zero(), b);
  Tape t1;
  const double got =
      moco_global(t1, make_model_vars(t1, model), model, points, 0.2, 0.8, 2.0).value()(0, 0);
  CHECK(got == doctest::Approx(2.0 * (a + b).cwiseAbs().mean()).epsilon(1e-12));

  // t_i == t_j with mutually inverse flows degenerates to two local loops.
  const Eigen::Vector3d omega(0.25, 0.1, -0.2);
  const Eigen::Vector3d v(-0.1, 0.2, 0.05);
  set_constant_twist(&model.flow_bw, omega, v);
  set_constant_twist(&model.flow_fw, -omega, -v);
  Tape t2;
  CHECK(moco_global(t2, make_model_vars(t2, model), model, points, 0.5, 0.5, 2.0)
            .value()(0, 0) < 1e-9);

  // moco_loss is exactly global + local.
  Tape t3;
  const ModelVars vars = make_model_vars(t3, model);
  const Var pts = t3.constant(points);
  const double total = moco_loss(t3, vars, model, pts, 0.3, 0.9, 2.0).value()(0, 0);
  const double global = moco_global(t3, vars, model, pts, 0.3, 0.9, 2.0).value()(0, 0);
  const double local = moco_local(t3, vars, model, pts, 0.3, 2.0).value()(0, 0);
  CHECK(total == global + local);
}

TEST_CASE("filter_occupied") {
  // Zero-density model keeps nothing.
  SceneModel model = init_scene_model(tiny_config(), 2, 13);
  model.density_head.weights[0].setZero();
  model.density_head.biases[0](0, 0) = -40.0;
  const Eigen::MatrixXd points = random_points(10, 6, 0.8);
  CHECK(filter_occupied(model, points, 0.3, 0.01, 2.0).cols() == 0);

  // Constant lively density keeps everything, in order.
  model.density_head.biases[0](0, 0) = 1.5;
  const Eigen::MatrixXd kept = filter_occupied(model, points, 0.3, 0.01, 2.0);
  REQUIRE(kept.cols() == 10);
  CHECK((kept - points).cwiseAbs().maxCoeff() == 0.0);

  // Half-space stub: density fires only where the first trunk feature
  // relu(x) is on; the softplus transition sits near x = 0.04.
  SceneModel half = init_scene_model(tiny_config(), 2, 14);
  for (auto& w : half.canonical_trunk.weights) w.setZero();
  for (auto& b : half.canonical_trunk.biases) b.setZero();
  half.canonical_trunk.weights[0](0, 0) = 1.0;   // feature 0 = relu(x)
  half.canonical_trunk.weights[1](0, 0) = 1.0;   // passthrough
  half.density_head.weights[0].setZero();
  half.density_head.weights[0](0, 0) = 1000.0;
  half.density_head.biases[0](0, 0) = -39.0;     // sigma = softplus(1000 x - 40)
  Eigen::MatrixXd probes(3, 4);
  probes << -0.5, -0.1, 0.2, 0.7, 0.1, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0;
  const Eigen::MatrixXd half_kept = filter_occupied(half, probes, 0.0, 0.01, 2.0);
  REQUIRE(half_kept.cols() == 2);
  CHECK(half_kept(0, 0) == 0.2);
  CHECK(half_kept(0, 1) == 0.7);

  // Precomputed-density overload agrees with strict inequality at epsilon.
  Eigen::VectorXd sig(4);
  sig << 0.0, 0.01, 0.0100001, 5.0;
  const Eigen::MatrixXd strict = filter_occupied(probes, sig, 0.01);
  REQUIRE(strict.cols() == 2);
  CHECK(strict(0, 0) == 0.2);
  CHECK_THROWS_AS(filter_occupied(probes, sig, 0.0), std::invalid_argument);
}

TEST_CASE("init_fit_loss limits and oracle") {
  SceneModel model = init_scene_model(tiny_config(), 2, 15);
  model.density_head.weights[0].setZero();
  model.density_head.biases[0](0, 0) = -40.0;  // sigma ~ 4e-18

  // Identity flows + coincident pairs + dead density: loss vanishes.
  CorrespondenceBatch pairs;
  pairs.x_obs = random_points(6, 7, 0.8);
  pairs.x_canonical = pairs.x_obs;
  const Eigen::MatrixXd free_points = random_points(5, 8, 0.8);
  Tape t0;
  CHECK(init_fit_loss(t0, make_model_vars(t0, model), model, pairs, free_points, 0.3, 1.0,
                      2.0)
            .value()(0, 0) < 1e-12);

  // Constant density softplus(0) = ln 2 with delta0 = 1 gives opacity 1/2,
  // so the BCE term is exactly -ln(1/2).
  model.density_head.biases[0](0, 0) = 1.0;
  Tape t1;
  CHECK(init_fit_loss(t1, make_model_vars(t1, model), model, pairs, free_points, 0.3, 1.0,
                      2.0)
            .value()(0, 0) == doctest::Approx(0.69314718055994531).epsilon(1e-12));

  // Random stubs against a straight-line recomputation.
  SceneModel stub = init_scene_model(tiny_config(), 2, 16);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist;
  for (const auto& param : stub.parameters()) {
    for (Eigen::Index c = 0; c < param.value->cols(); ++c) {
      for (Eigen::Index r = 0; r < param.value->rows(); ++r) {
        (*param.value)(r, c) += 0.05 * dist(rng);
      }
    }
  }
  pairs.x_canonical = random_points(6, 9, 0.8);
  const double t = 0.45, alpha = 1.5, delta0 = 0.37;
  Tape t2;
  const double got =
      init_fit_loss(t2, make_model_vars(t2, stub), stub, pairs, free_points, t, delta0, alpha)
          .value()(0, 0);

  double expect = 0.0;
  const double alpha_full = tiny_config().point_bands;
  for (int j = 0; j < pairs.x_obs.cols(); ++j) {
    expect += (backward_flow(stub, pairs.x_obs.col(j), t, alpha) - pairs.x_canonical.col(j))
                  .cwiseAbs()
                  .sum();
    expect += (forward_flow(stub, pairs.x_canonical.col(j), t, alpha) - pairs.x_obs.col(j))
                  .cwiseAbs()
                  .sum();
  }
  expect /= 3.0 * pairs.x_obs.cols();
  double bce = 0.0;
  for (int j = 0; j < free_points.cols(); ++j) {
    bce += eval_density(stub, backward_flow(stub, free_points.col(j), t, alpha), alpha_full);
  }
  expect += delta0 * bce / free_points.cols();
  CHECK(got == doctest::Approx(expect).epsilon(1e-10));

  Tape t3;
  CHECK_THROWS_AS(init_fit_loss(t3, make_model_vars(t3, stub), stub,
                                CorrespondenceBatch{Eigen::MatrixXd(3, 0),
                                                    Eigen::MatrixXd(3, 0)},
                                free_points, t, delta0, alpha),
                  std::invalid_argument);
}

TEST_CASE("objective arithmetic") {
  LossWeights paper;  // lambda 0.2, mu 10
  CHECK(init_objective(1.0, 1.0, 1.0, paper) == doctest::Approx(11.2).epsilon(1e-12));
  CHECK(init_objective(0.0, 2.0, 0.5, paper) == doctest::Approx(5.4).epsilon(1e-12));
  CHECK(joint_objective(1.0, 1.0, paper) == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(joint_objective(0.5, 2.0, paper) == doctest::Approx(0.9).epsilon(1e-12));

  LossWeights off;
  off.lambda = 0.0;
  off.mu = 0.0;
  CHECK(init_objective(0.7, 3.0, 9.0, off) == 0.7);
  CHECK(joint_objective(0.7, 3.0, off) == 0.7);

  // Var forms match the double forms.
  Tape tape;
  auto c = [&tape](double v) { return tape.constant(Eigen::MatrixXd::Constant(1, 1, v)); };
  CHECK(init_objective(tape, c(1.0), c(1.0), c(1.0), paper).value()(0, 0) ==
        doctest::Approx(11.2).epsilon(1e-12));
  CHECK(joint_objective(tape, c(0.5), c(2.0), paper).value()(0, 0) ==
        doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("mean_coarse_spacing") {
  Aabb box{Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1.0, 2.0, 3.0)};
  CHECK(mean_coarse_spacing(box, 4) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(mean_coarse_spacing(box, 0), std::invalid_argument);
}

TEST_CASE("loss gradients match finite differences") {
  SceneModel model = init_scene_model(tiny_config(), 2, 19);
  std::mt19937_64 rng(20);
  std::normal_distribution<double> dist;
  for (const auto& param : model.parameters()) {
    for (Eigen::Index c = 0; c < param.value->cols(); ++c) {
      for (Eigen::Index r = 0; r < param.value->rows(); ++r) {
        (*param.value)(r, c) += 0.05 * dist(rng);
      }
    }
  }
  const Eigen::MatrixXd points = random_points(4, 21, 0.7);
  CorrespondenceBatch pairs;
  pairs.x_obs = random_points(3, 22, 0.7);
  pairs.x_canonical = random_points(3, 23, 0.7);
  const Eigen::MatrixXd free_points = random_points(3, 24, 0.7);

  const auto build = [&](Tape& tape, const ModelVars& vars) {
    const Var moco = moco_loss(tape, vars, model, tape.constant(points), 0.3, 0.8, 1.5);
    const Var fit =
        init_fit_loss(tape, vars, model, pairs, free_points, 0.3, 0.4, 1.5);
    LossWeights weights;
    return init_objective(tape, tape.constant(Eigen::MatrixXd::Zero(1, 1)), moco, fit,
                          weights);
  };

  Tape tape;
  const ModelVars vars = make_model_vars(tape, model);
  const Var loss = build(tape, vars);
  CHECK(loss.value()(0, 0) > 0.0);  // losses are nonnegative, generically positive
  tape.backward(loss);
  const std::vector<Eigen::MatrixXd> grads = collect_gradients(vars);

  auto loss_value = [&](SceneModel& m) {
    Tape t;
    t.set_grad_enabled(false);
    const ModelVars v = make_model_vars(t, m);
    const Var moco = moco_loss(t, v, m, t.constant(points), 0.3, 0.8, 1.5);
    const Var fit = init_fit_loss(t, v, m, pairs, free_points, 0.3, 0.4, 1.5);
    LossWeights weights;
    return init_objective(t, t.constant(Eigen::MatrixXd::Zero(1, 1)), moco, fit, weights)
        .value()(0, 0);
  };

  auto params = model.parameters();
  std::mt19937_64 pick(25);
  const double eps = 1e-5;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& tensor = *params[i].value;
    for (int probe = 0; probe < 2; ++probe) {
      const Eigen::Index r = static_cast<Eigen::Index>(pick() % tensor.rows());
      const Eigen::Index c = static_cast<Eigen::Index>(pick() % tensor.cols());
      const double saved = tensor(r, c);
      tensor(r, c) = saved + eps;
      const double hi = loss_value(model);
      tensor(r, c) = saved - eps;
      const double lo = loss_value(model);
      tensor(r, c) = saved;
      const double numeric = (hi - lo) / (2.0 * eps);
      const double got = grads[i](r, c);
      CAPTURE(params[i].name);
      CHECK(std::abs(got - numeric) <=
            1e-4 * (1.0 + std::max(std::abs(got), std::abs(numeric))));
    }
  }
}

TEST_CASE("filtered points receive no moco gradient") {
  SceneModel model = init_scene_model(tiny_config(), 2, 30);
  // Half-space density: x > ~0.04 occupied (same stub as the filter test).
  for (auto& w : model.canonical_trunk.weights) w.setZero();
  for (auto& b : model.canonical_trunk.biases) b.setZero();
  model.canonical_trunk.weights[0](0, 0) = 1.0;
  model.canonical_trunk.weights[1](0, 0) = 1.0;
  model.density_head.weights[0].setZero();
  model.density_head.weights[0](0, 0) = 1000.0;
  model.density_head.biases[0](0, 0) = -39.0;
  // Give the flows some signal so kept points produce nonzero gradients.
  std::mt19937_64 rng(31);
  std::normal_distribution<double> dist;
  for (auto* flow : {&model.flow_bw, &model.flow_fw}) {
    for (Eigen::Index c = 0; c < flow->weights.back().cols(); ++c) {
      flow->weights.back()(5, c) = 0.02 * dist(rng);
    }
  }

  Eigen::MatrixXd points(3, 4);
  points << -0.5, 0.3, -0.2, 0.6, 0.1, -0.1, 0.2, 0.0, 0.05, 0.0, -0.1, 0.1;

  Tape tape;
  const ModelVars vars = make_model_vars(tape, model);
  const Var points_var = tape.leaf(points);

  // Filtering decision from the gradient-free path.
  const Eigen::MatrixXd canonical = backward_flow_batch(model, points, 0.4, 2.0);
  const Eigen::VectorXd sigmas = eval_density_batch(model, canonical, 2.0);
  std::vector<Var> kept;
  std::vector<int> kept_index;
  for (int j = 0; j < 4; ++j) {
    if (sigmas(j) > 0.01) {
      kept.push_back(cols(points_var, j, 1));
      kept_index.push_back(j);
    }
  }
  REQUIRE(kept_index == std::vector<int>({1, 3}));

  const Var loss = moco_loss(tape, vars, model, hcat(kept), 0.4, 0.9, 2.0);
  tape.backward(loss);
  const Eigen::MatrixXd& grad = points_var.grad();
  REQUIRE(grad.size() > 0);
  CHECK(grad.col(0).cwiseAbs().maxCoeff() == 0.0);  // dropped
  CHECK(grad.col(2).cwiseAbs().maxCoeff() == 0.0);  // dropped
  CHECK(grad.col(1).cwiseAbs().maxCoeff() > 0.0);
  CHECK(grad.col(3).cwiseAbs().maxCoeff() > 0.0);
}
