// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/training.hpp"

#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "canonflow/array_container.hpp"
#include "canonflow/encoding.hpp"

namespace canonflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDivergenceCeiling = 1e6;
constexpr double kSmoothingFactor = 0.99;  // loss EMA
constexpr std::int64_t kCheckpointVersion = 1;

double scalar(const Var& v) { return v.value()(0, 0); }

// Names of the F_sigma tensors; excluded from init-stage updates so that
// stale Adam momentum cannot move frozen parameters.
std::set<std::string> density_parameter_names(SceneModel* model) {
  std::set<std::string> names;
  for (const auto& ref : model->density_parameters()) names.insert(ref.name);
  return names;
}

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<Eigen::Vector3d> backgrounds;
  Eigen::MatrixXd targets;  // 3 x R
};

// Uniform random pixels of one image. Draws are sequenced row-then-col per
// ray so the stream layout is fixed.
RayBatch sample_ray_batch(const Image& frame, const Image& background,
                          const CameraModel& camera, int count, std::mt19937_64& rng) {
  RayBatch batch;
  batch.rays.reserve(count);
  batch.backgrounds.reserve(count);
  batch.targets.resize(3, count);
  std::uniform_int_distribution<int> row_dist(0, frame.height() - 1);
  std::uniform_int_distribution<int> col_dist(0, frame.width() - 1);
  for (int r = 0; r < count; ++r) {
    const int row = row_dist(rng);
    const int col = col_dist(rng);
    batch.rays.push_back(generate_ray(camera, row, col));
    batch.backgrounds.push_back(background.pixel(row, col));
    batch.targets.col(r) = frame.pixel(row, col);
  }
  return batch;
}

// First-k cap on the motion-consensus point set. The columns arrive in ray
// sample order, which is already uniform over the batch.
Eigen::MatrixXd cap_columns(const Eigen::MatrixXd& points, int cap) {
  if (cap <= 0) return Eigen::MatrixXd(3, 0);
  if (points.cols() <= cap) return points;
  return points.leftCols(cap);
}

// Uniform frame index != i.
int draw_other_frame(int frame_count, int i, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, frame_count - 2);
  const int j = dist(rng);
  return j >= i ? j + 1 : j;
}

void check_divergence(const TrainState& state, const TrainSchedule& schedule, double loss,
                      const char* stage) {
  if (std::isfinite(loss) && loss <= kDivergenceCeiling) return;
  if (!schedule.diagnostics_dir.empty()) {
    std::filesystem::create_directories(schedule.diagnostics_dir);
    save_checkpoint(state, schedule.diagnostics_dir / "diverged.ckpt");
  }
  std::ostringstream msg;
  msg << "training diverged in " << stage << " stage at iteration " << state.iteration
      << ": loss = " << loss;
  if (!schedule.diagnostics_dir.empty()) {
    msg << " (state dumped to " << (schedule.diagnostics_dir / "diverged.ckpt").string() << ")";
  }
  throw std::runtime_error(msg.str());
}

void update_smoothed_loss(TrainState* state, double loss) {
  if (state->adam_step <= 1) {
    state->smoothed_loss = loss;
  } else {
    state->smoothed_loss = kSmoothingFactor * state->smoothed_loss +
                           (1.0 - kSmoothingFactor) * loss;
  }
}

// Applies one Adam step to every parameter except the named ones.
void apply_update(TrainState* state, const std::vector<Eigen::MatrixXd>& grads, double lr,
                  const AdamConfig& adam, const std::set<std::string>& frozen) {
  auto refs = state->model.parameters();
  std::vector<Eigen::MatrixXd*> params;
  std::vector<Eigen::MatrixXd> sub_grads;
  std::vector<std::size_t> indices;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (frozen.count(refs[k].name) > 0) continue;
    params.push_back(refs[k].value);
    sub_grads.push_back(grads[k]);
    indices.push_back(k);
  }
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  m.reserve(indices.size());
  v.reserve(indices.size());
  for (const std::size_t k : indices) {
    m.push_back(state->adam_m[k]);
    v.push_back(state->adam_v[k]);
  }
  state->adam_step += 1;
  adam_update(params, sub_grads, &m, &v, state->adam_step, lr, adam);
  for (std::size_t s = 0; s < indices.size(); ++s) {
    state->adam_m[indices[s]] = std::move(m[s]);
    state->adam_v[indices[s]] = std::move(v[s]);
  }
}

void emit(const MetricsSink& sink, const StepMetrics& metrics, const TrainSchedule& schedule,
          int stage_end, int forced_iteration = -1) {
  if (!sink) return;
  if (metrics.iteration % schedule.metrics_period == 0 || metrics.iteration == stage_end ||
      metrics.iteration == forced_iteration) {
    sink(metrics);
  }
}

}  // namespace

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamConfig: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("AdamConfig: epsilon must be positive");
}

void adam_update(const std::vector<Eigen::MatrixXd*>& params,
                 const std::vector<Eigen::MatrixXd>& grads, std::vector<Eigen::MatrixXd>* m,
                 std::vector<Eigen::MatrixXd>* v, std::int64_t step, double lr,
                 const AdamConfig& config) {
  config.validate();
  if (step < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  if (params.size() != grads.size() || params.size() != m->size() ||
      params.size() != v->size()) {
    throw std::invalid_argument("adam_update: tensor list sizes disagree");
  }
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::MatrixXd& mk = (*m)[k];
    Eigen::MatrixXd& vk = (*v)[k];
    const Eigen::MatrixXd& g = grads[k];
    mk = config.beta1 * mk + (1.0 - config.beta1) * g;
    vk = config.beta2 * vk + (1.0 - config.beta2) * g.cwiseProduct(g);
    const Eigen::MatrixXd m_hat = mk / bias1;
    const Eigen::MatrixXd v_hat = vk / bias2;
    *params[k] -=
        lr * (m_hat.array() / (v_hat.array().sqrt() + config.epsilon)).matrix();
  }
}

void TrainSchedule::validate() const {
  if (init_iterations < 0 || anneal_iterations < 0 || tail_iterations < 0) {
    throw std::invalid_argument("TrainSchedule: stage lengths must be non-negative");
  }
  if (rays_per_iteration < 1) {
    throw std::invalid_argument("TrainSchedule: rays_per_iteration must be positive");
  }
  render.validate();
  if (render.fine_samples < 1) {
    throw std::invalid_argument("TrainSchedule: training requires a fine sampling level");
  }
  if (!(base_learning_rate >= 0.0)) {
    throw std::invalid_argument("TrainSchedule: base_learning_rate must be non-negative");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("TrainSchedule: decay_factor must lie in (0, 1]");
  }
  if (!(learning_rate_floor >= 0.0)) {
    throw std::invalid_argument("TrainSchedule: learning_rate_floor must be non-negative");
  }
  weights.validate();
  if (anneal_bands < 1) throw std::invalid_argument("TrainSchedule: anneal_bands must be >= 1");
  if (correspondence_samples < 1) {
    throw std::invalid_argument("TrainSchedule: correspondence_samples must be positive");
  }
  if (free_samples < 0 || moco_points < 0) {
    throw std::invalid_argument("TrainSchedule: sample counts must be non-negative");
  }
  if (!(free_margin >= 0.0)) {
    throw std::invalid_argument("TrainSchedule: free_margin must be non-negative");
  }
  adam.validate();
  if (pretrain_iterations < 0) {
    throw std::invalid_argument("TrainSchedule: pretrain_iterations must be non-negative");
  }
  if (pretrain_iterations > 0 && pretrain_views < 1) {
    throw std::invalid_argument("TrainSchedule: pretraining requires at least one view");
  }
  if (metrics_period < 1) {
    throw std::invalid_argument("TrainSchedule: metrics_period must be positive");
  }
}

TrainSchedule TrainSchedule::desk_default() {
  TrainSchedule schedule;
  schedule.rays_per_iteration = 256;
  schedule.render.coarse_samples = 48;
  schedule.render.fine_samples = 96;
  return schedule;
}

TrainSchedule TrainSchedule::paper_default() {
  TrainSchedule schedule;
  schedule.init_iterations = 200000;
  schedule.anneal_iterations = 1500000;
  schedule.tail_iterations = 1000000;
  schedule.rays_per_iteration = 384;
  schedule.render.coarse_samples = 64;
  schedule.render.fine_samples = 128;
  schedule.pretrain_iterations = 10000;
  return schedule;
}

double learning_rate(int iteration, const TrainSchedule& schedule) {
  if (iteration < 0) throw std::invalid_argument("learning_rate: negative iteration");
  const double decayed =
      schedule.base_learning_rate * std::pow(schedule.decay_factor, iteration);
  return std::max(schedule.learning_rate_floor, decayed);
}

std::string stage_name(TrainStage stage) {
  switch (stage) {
    case TrainStage::kPretrain:
      return "pretrain";
    case TrainStage::kInit:
      return "init";
    case TrainStage::kJoint:
      return "joint";
    case TrainStage::kDone:
      return "done";
  }
  throw std::invalid_argument("stage_name: unknown stage");
}

TrainState make_initial_state(const FieldConfig& config, const FrameDataset& dataset,
                              const TrainSchedule& schedule) {
  schedule.validate();
  if (dataset.frame_count() < 2) {
    throw std::invalid_argument("make_initial_state: training needs at least two frames");
  }
  TrainState state;
  state.model = init_scene_model(config, dataset.frame_count(), schedule.seed);
  state.model.scene_scale = dataset.scene_scale;
  for (const auto& ref : state.model.parameters()) {
    state.adam_m.push_back(Eigen::MatrixXd::Zero(ref.value->rows(), ref.value->cols()));
    state.adam_v.push_back(Eigen::MatrixXd::Zero(ref.value->rows(), ref.value->cols()));
  }
  state.rng.seed(schedule.seed);
  return state;
}

Aabb frame_bounds(const FrameDataset& dataset, int frame) {
  if (frame < 0 || frame >= dataset.frame_count()) {
    throw std::invalid_argument("frame_bounds: frame index out of range");
  }
  return build_frame_aabb(dataset.meshes[frame], kFrameMarginXY, kFrameMarginZ);
}

PretrainViews make_pretrain_views(const TriMesh& mesh, int n_views, int image_size) {
  if (n_views < 1) throw std::invalid_argument("make_pretrain_views: n_views must be >= 1");
  if (image_size < 8) {
    throw std::invalid_argument("make_pretrain_views: image_size must be >= 8");
  }
  const Aabb box = build_frame_aabb(mesh, 0.0, 0.0);
  const Eigen::Vector3d center = 0.5 * (box.min + box.max);
  const double half_extent = std::max(0.5 * (box.max - box.min).maxCoeff(), 1e-6);
  const double radius = 3.0 * half_extent;
  // Mesh spans roughly 60% of the frame: half_extent * focal / radius = 0.3 * size.
  const double focal = 0.3 * image_size * radius / half_extent;
  PretrainViews views;
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n_views; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n_views;
    const double ring = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    const Eigen::Vector3d dir(ring * std::cos(phi), z, ring * std::sin(phi));
    const CameraModel camera =
        make_lookat_camera(center + radius * dir, center, image_size, image_size, focal);
    views.cameras.push_back(camera);
    views.images.push_back(render_mesh_flat(mesh, camera, views.background));
  }
  return views;
}

void pretrain_density(TrainState* state, const TriMesh& canonical_mesh,
                      const TrainSchedule& schedule, const MetricsSink& sink) {
  schedule.validate();
  if (state->stage != TrainStage::kPretrain) return;
  if (schedule.pretrain_iterations > 0) {
    const PretrainViews views =
        make_pretrain_views(canonical_mesh, schedule.pretrain_views, kPretrainImageSize);
    // Orbital cameras see the mesh from every side, so the slack is
    // symmetric rather than camera-axis weighted.
    const Aabb bounds = build_frame_aabb(canonical_mesh, kFrameMarginXY, kFrameMarginXY);
    const Image background(kPretrainImageSize, kPretrainImageSize, views.background);
    std::uniform_int_distribution<int> view_dist(0,
                                                 static_cast<int>(views.images.size()) - 1);
    while (state->pretrain_iteration < schedule.pretrain_iterations) {
      const int view = view_dist(state->rng);
      const RayBatch batch = sample_ray_batch(views.images[view], background,
                                              views.cameras[view],
                                              schedule.rays_per_iteration, state->rng);
      Tape tape;
      const ModelVars vars = make_model_vars(tape, state->model);
      const TrainRenderResult render = render_rays_var(
          tape, vars, state->model, batch.rays, batch.backgrounds, /*t=*/0.0,
          /*frame_index=*/0, bounds, /*alpha_flow=*/0.0, schedule.render, state->rng,
          nullptr, /*bypass_flows=*/true);
      const Var loss = photometric_loss(tape, render.coarse_color, render.fine_color,
                                        batch.targets);
      const double loss_value = scalar(loss);
      check_divergence(*state, schedule, loss_value, "pretrain");
      tape.backward(loss);
      const std::vector<Eigen::MatrixXd> grads = collect_gradients(vars);
      const double lr = learning_rate(state->pretrain_iteration, schedule);
      apply_update(state, grads, lr, schedule.adam, {});
      update_smoothed_loss(state, loss_value);
      state->pretrain_iteration += 1;
      StepMetrics metrics;
      metrics.iteration = state->pretrain_iteration;
      metrics.stage = TrainStage::kPretrain;
      metrics.loss = loss_value;
      metrics.photo = loss_value;
      metrics.learning_rate = lr;
      emit(sink, metrics, schedule, schedule.pretrain_iterations);
    }
  }
  state->stage = TrainStage::kInit;
}

StepMetrics train_step(TrainState* state, const FrameDataset& dataset,
                       const TrainSchedule& schedule) {
  if (state->stage != TrainStage::kInit && state->stage != TrainStage::kJoint) {
    throw std::logic_error("train_step: state must be in the init or joint stage");
  }
  const bool init_stage = state->stage == TrainStage::kInit;
  const int frame_count = dataset.frame_count();
  std::uniform_int_distribution<int> frame_dist(0, frame_count - 1);
  const int frame = frame_dist(state->rng);
  const double t = dataset.timestamps[frame];
  const RayBatch batch =
      sample_ray_batch(dataset.frames[frame], dataset.background, dataset.camera,
                       schedule.rays_per_iteration, state->rng);
  const Aabb bounds = frame_bounds(dataset, frame);
  // Flow encodings start fully windowed (alpha 0) and open over the joint
  // annealing phase; the canonical encoding always runs at full bands.
  const double alpha =
      init_stage ? 0.0
                 : anneal_alpha(state->iteration - schedule.init_iterations,
                                schedule.anneal_iterations, schedule.anneal_bands);

  Tape tape;
  const ModelVars vars = make_model_vars(tape, state->model, /*freeze_density=*/init_stage);
  const TrainRenderResult render =
      render_rays_var(tape, vars, state->model, batch.rays, batch.backgrounds, t, frame,
                      bounds, alpha, schedule.render, state->rng);
  const Var photo = photometric_loss(tape, render.coarse_color, render.fine_color,
                                     batch.targets);

  // Consensus points: occupied fine samples of this batch, detached.
  const Eigen::MatrixXd occupied =
      filter_occupied(render.fine_points, render.fine_sigma, schedule.weights.epsilon);
  const Eigen::MatrixXd moco_batch = cap_columns(occupied, schedule.moco_points);
  const int other = draw_other_frame(frame_count, frame, state->rng);
  const double t_other = dataset.timestamps[other];
  const Var points = tape.constant(moco_batch);
  const Var local = moco_local(tape, vars, state->model, points, t, alpha);
  const Var global = moco_global(tape, vars, state->model, points, t, t_other, alpha);
  const Var moco = add(global, local);

  Var total = tape.constant(Eigen::MatrixXd::Zero(1, 1));
  Var fit = tape.constant(Eigen::MatrixXd::Zero(1, 1));
  if (init_stage) {
    const CorrespondenceBatch pairs =
        sample_correspondences(dataset.meshes[frame], dataset.canonical_mesh,
                               schedule.correspondence_samples, state->rng);
    const Eigen::MatrixXd free_points = sample_free_points(
        bounds, dataset.meshes[frame], schedule.free_margin, schedule.free_samples,
        state->rng);
    const double delta0 = mean_coarse_spacing(bounds, schedule.render.coarse_samples);
    fit = init_fit_loss(tape, vars, state->model, pairs, free_points, t, delta0, alpha);
    total = init_objective(tape, photo, moco, fit, schedule.weights);
  } else {
    total = joint_objective(tape, photo, moco, schedule.weights);
  }

  const double loss_value = scalar(total);
  check_divergence(*state, schedule, loss_value, init_stage ? "init" : "joint");
  tape.backward(total);
  const std::vector<Eigen::MatrixXd> grads = collect_gradients(vars);
  const double lr = learning_rate(state->iteration, schedule);
  const std::set<std::string> frozen =
      init_stage ? density_parameter_names(&state->model) : std::set<std::string>{};
  apply_update(state, grads, lr, schedule.adam, frozen);
  update_smoothed_loss(state, loss_value);
  state->iteration += 1;

  StepMetrics metrics;
  metrics.iteration = state->iteration;
  metrics.stage = init_stage ? TrainStage::kInit : TrainStage::kJoint;
  metrics.loss = loss_value;
  metrics.photo = scalar(photo);
  metrics.moco_local = scalar(local);
  metrics.moco_global = scalar(global);
  metrics.fit = init_stage ? scalar(fit) : 0.0;
  metrics.learning_rate = lr;
  metrics.alpha = alpha;
  return metrics;
}

void run_init_stage(TrainState* state, const FrameDataset& dataset,
                    const TrainSchedule& schedule, const MetricsSink& sink) {
  schedule.validate();
  if (state->stage == TrainStage::kPretrain) {
    throw std::runtime_error("run_init_stage: density pretraining has not completed");
  }
  if (state->stage != TrainStage::kInit) return;
  while (state->iteration < schedule.init_iterations) {
    const StepMetrics metrics = train_step(state, dataset, schedule);
    emit(sink, metrics, schedule, schedule.init_iterations);
  }
  state->stage = TrainStage::kJoint;
}

void run_joint_stage(TrainState* state, const FrameDataset& dataset,
                     const TrainSchedule& schedule, const MetricsSink& sink) {
  schedule.validate();
  if (state->stage == TrainStage::kPretrain || state->stage == TrainStage::kInit) {
    throw std::runtime_error("run_joint_stage: earlier stages have not completed");
  }
  if (state->stage != TrainStage::kJoint) return;
  const int total = schedule.init_iterations + schedule.total_joint_iterations();
  // The anneal/tail boundary always reaches the sink so callers can log it.
  const int anneal_end = schedule.init_iterations + schedule.anneal_iterations;
  while (state->iteration < total) {
    const StepMetrics metrics = train_step(state, dataset, schedule);
    emit(sink, metrics, schedule, total, anneal_end);
  }
  state->stage = TrainStage::kDone;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  ArrayContainer container;
  container.put_int("version", kCheckpointVersion);
  container.put_int("stage", static_cast<std::int64_t>(state.stage));
  container.put_int("iteration", state.iteration);
  container.put_int("pretrain_iteration", state.pretrain_iteration);
  container.put_int("adam_step", state.adam_step);
  container.put_int("frame_count", state.model.frame_count());
  const FieldConfig& config = state.model.config;
  container.put_int("config/point_bands", config.point_bands);
  container.put_int("config/time_bands", config.time_bands);
  container.put_int("config/hidden_width", config.hidden_width);
  container.put_int("config/hidden_layers", config.hidden_layers);
  container.put_int("config/skip_layer", config.skip_layer);
  container.put_int("config/appearance_dim", config.appearance_dim);
  container.put("scene_scale/center", Eigen::MatrixXd(state.model.scene_scale.center));
  container.put_scalar("scene_scale/scale", state.model.scene_scale.scale);
  container.put_scalar("smoothed_loss", state.smoothed_loss);
  // parameters() only hands out pointers; saving does not mutate the model.
  auto refs = const_cast<SceneModel&>(state.model).parameters();
  for (std::size_t k = 0; k < refs.size(); ++k) {
    container.put("param/" + refs[k].name, *refs[k].value);
    container.put("adam_m/" + refs[k].name, state.adam_m[k]);
    container.put("adam_v/" + refs[k].name, state.adam_v[k]);
  }
  std::ostringstream rng_stream;
  rng_stream << state.rng;
  container.put_bytes("rng", rng_stream.str());
  container.save(path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const ArrayContainer container = ArrayContainer::load(path);
  if (container.get_int("version") != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: incompatible checkpoint version " +
                             std::to_string(container.get_int("version")) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  FieldConfig config;
  config.point_bands = static_cast<int>(container.get_int("config/point_bands"));
  config.time_bands = static_cast<int>(container.get_int("config/time_bands"));
  config.hidden_width = static_cast<int>(container.get_int("config/hidden_width"));
  config.hidden_layers = static_cast<int>(container.get_int("config/hidden_layers"));
  config.skip_layer = static_cast<int>(container.get_int("config/skip_layer"));
  config.appearance_dim = static_cast<int>(container.get_int("config/appearance_dim"));
  const int frame_count = static_cast<int>(container.get_int("frame_count"));

  TrainState state;
  state.model = init_scene_model(config, frame_count, /*seed=*/0);
  state.model.scene_scale.center = container.get("scene_scale/center");
  state.model.scene_scale.scale = container.get_scalar("scene_scale/scale");
  auto refs = state.model.parameters();
  for (const auto& ref : refs) {
    const Eigen::MatrixXd stored = container.get("param/" + ref.name);
    if (stored.rows() != ref.value->rows() || stored.cols() != ref.value->cols()) {
      throw std::runtime_error("load_checkpoint: shape mismatch for tensor " + ref.name);
    }
    *ref.value = stored;
    state.adam_m.push_back(container.get("adam_m/" + ref.name));
    state.adam_v.push_back(container.get("adam_v/" + ref.name));
  }
  state.adam_step = container.get_int("adam_step");
  state.iteration = static_cast<int>(container.get_int("iteration"));
  state.pretrain_iteration = static_cast<int>(container.get_int("pretrain_iteration"));
  const std::int64_t stage = container.get_int("stage");
  if (stage < 0 || stage > static_cast<std::int64_t>(TrainStage::kDone)) {
    throw std::runtime_error("load_checkpoint: invalid stage tag " + std::to_string(stage));
  }
  state.stage = static_cast<TrainStage>(stage);
  state.smoothed_loss = container.get_scalar("smoothed_loss");
  std::istringstream rng_stream(container.get_bytes("rng"));
  rng_stream >> state.rng;
  if (rng_stream.fail()) {
    throw std::runtime_error("load_checkpoint: corrupt rng state");
  }
  return state;
}

}  // namespace canonflow
