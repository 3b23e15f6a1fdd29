// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// canonflow: one binary, five subcommands (synth, train, render, eval,
// study). Configuration is a JSON tree seeded from the desk-scale defaults;
// --config merges a file over it and --set key=value merges dotted-path
// overrides last. Unknown keys and type mismatches are rejected.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "CLI11.hpp"
#include "json.hpp"

#include "canonflow/data.hpp"
#include "canonflow/eval.hpp"
#include "canonflow/fields.hpp"
#include "canonflow/geometry.hpp"
#include "canonflow/image.hpp"
#include "canonflow/rendering.hpp"
#include "canonflow/synth.hpp"
#include "canonflow/training.hpp"
#include "canonflow/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace canonflow;

namespace {

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("configuration key " + key + " expects 3 numbers");
  }
  for (const auto& item : j) {
    if (!item.is_number()) {
      throw std::invalid_argument("configuration key " + key + " expects 3 numbers");
    }
  }
  return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

std::vector<double> numbers_from(const json& j, const std::string& key) {
  if (!j.is_array()) throw std::invalid_argument("configuration key " + key + " expects an array");
  std::vector<double> out;
  for (const auto& item : j) {
    if (!item.is_number()) {
      throw std::invalid_argument("configuration key " + key + " expects numbers");
    }
    out.push_back(item.get<double>());
  }
  return out;
}

// The full configuration schema with desk-scale defaults. Every legal key
// appears here; merges are validated against this tree.
json default_config() {
  json root;

  const SynthConfig s = SynthConfig::desk_default();
  json& synth = root["synth"];
  synth["frame_count"] = s.frame_count;
  synth["image_width"] = s.image_width;
  synth["image_height"] = s.image_height;
  synth["focal"] = s.focal;
  synth["fps"] = s.fps;
  synth["background_color"] = vec3_json(s.background_color);
  synth["camera_position"] = vec3_json(s.camera_position);
  synth["look_at"] = vec3_json(s.look_at);
  synth["sphere_subdivisions"] = s.sphere_subdivisions;
  synth["root_linear_drift"] = vec3_json(s.root_linear_drift);
  synth["root_swing_amplitude"] = vec3_json(s.root_swing_amplitude);
  synth["root_hinge_axis"] = vec3_json(s.root_hinge_axis);
  synth["root_angle_amplitude"] = s.root_angle_amplitude;
  synth["root_angle_phase"] = s.root_angle_phase;
  synth["noise_joint_deg"] = s.noise_joint_deg;
  synth["noise_rotation_deg"] = s.noise_rotation_deg;
  synth["noise_translation"] = s.noise_translation;
  synth["eval_view_count"] = s.eval_view_count;
  synth["eval_view_spread_deg"] = s.eval_view_spread_deg;

  const FieldConfig f;
  json& fields = root["fields"];
  fields["point_bands"] = f.point_bands;
  fields["time_bands"] = f.time_bands;
  fields["hidden_width"] = f.hidden_width;
  fields["hidden_layers"] = f.hidden_layers;
  fields["skip_layer"] = f.skip_layer;
  fields["appearance_dim"] = f.appearance_dim;

  const TrainSchedule t = TrainSchedule::desk_default();
  json& train = root["train"];
  train["dataset"] = "";
  train["init_iterations"] = t.init_iterations;
  train["anneal_iterations"] = t.anneal_iterations;
  train["tail_iterations"] = t.tail_iterations;
  train["rays_per_iteration"] = t.rays_per_iteration;
  train["coarse_samples"] = t.render.coarse_samples;
  train["fine_samples"] = t.render.fine_samples;
  train["chunk_size"] = t.render.chunk_size;
  train["base_learning_rate"] = t.base_learning_rate;
  train["decay_factor"] = t.decay_factor;
  train["learning_rate_floor"] = t.learning_rate_floor;
  train["lambda"] = t.weights.lambda;
  train["mu"] = t.weights.mu;
  train["epsilon"] = t.weights.epsilon;
  train["anneal_bands"] = t.anneal_bands;
  train["correspondence_samples"] = t.correspondence_samples;
  train["free_samples"] = t.free_samples;
  train["free_margin"] = t.free_margin;
  train["moco_points"] = t.moco_points;
  train["pretrain_iterations"] = t.pretrain_iterations;
  train["pretrain_views"] = t.pretrain_views;
  train["metrics_period"] = t.metrics_period;

  json& render = root["render"];
  render["checkpoint"] = "";
  render["dataset"] = "";
  render["time"] = 0.0;
  render["orbit_views"] = 8;
  render["background"] = json::array();  // empty: mean of the dataset background
  render["coarse_samples"] = 64;
  render["fine_samples"] = 128;
  render["chunk_size"] = 1024;

  const EvalOptions e;
  json& eval = root["eval"];
  eval["checkpoint"] = "";
  eval["dataset"] = "";
  eval["crop"] = e.crop;
  eval["kappa"] = e.kappa;
  eval["coarse_samples"] = e.render.coarse_samples;
  eval["fine_samples"] = e.render.fine_samples;
  eval["chunk_size"] = e.render.chunk_size;

  json& study = root["study"];
  study["dataset"] = "";
  study["frame"] = 0;
  study["translations"] = json::array({10.0, 20.0, 30.0, 40.0, 50.0});
  study["rotations"] = json::array({5.0, 10.0, 15.0, 20.0, 25.0, 30.0});

  return root;
}

const char* json_kind(const json& j) {
  if (j.is_object()) return "an object";
  if (j.is_array()) return "an array";
  if (j.is_string()) return "a string";
  if (j.is_boolean()) return "a boolean";
  if (j.is_number()) return "a number";
  return "a value";
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type() ||
         (a.is_number() == b.is_number() && a.is_array() == b.is_array() &&
          a.is_object() == b.is_object() && a.is_string() == b.is_string() &&
          a.is_boolean() == b.is_boolean());
}

// Merges `overlay` into `base`, rejecting keys absent from the schema and
// values whose JSON kind disagrees with the default.
void merge_checked(json* base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) {
    throw std::invalid_argument("configuration" +
                                (prefix.empty() ? std::string() : " at " + prefix) +
                                " must be an object");
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base->contains(key)) {
      throw std::invalid_argument("unknown configuration key: " + path);
    }
    json& slot = (*base)[key];
    if (slot.is_object()) {
      merge_checked(&slot, value, path);
      continue;
    }
    if (!same_kind(slot, value)) {
      throw std::invalid_argument("configuration key " + path + " expects " + json_kind(slot));
    }
    slot = value;
  }
}

// Parses one --set override "a.b.c=value" into a single-path JSON tree.
// Values go through the JSON parser so numbers, booleans, and arrays work;
// anything unparseable is kept as a plain string (convenient for paths).
json parse_override(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects key=value, got: " + spec);
  }
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }

  json tree = std::move(value);
  std::vector<std::string> parts;
  std::stringstream stream(key);
  for (std::string part; std::getline(stream, part, '.');) {
    if (part.empty()) throw std::invalid_argument("--set key has an empty segment: " + key);
    parts.push_back(part);
  }
  if (parts.empty()) throw std::invalid_argument("--set expects key=value, got: " + spec);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    json wrapper;
    wrapper[*it] = std::move(tree);
    tree = std::move(wrapper);
  }
  return tree;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  std::string out;
  std::string resume;
  bool dry_run = false;
};

json resolve_config(const CommonArgs& args) {
  json resolved = default_config();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw std::invalid_argument("cannot open config file: " + args.config_path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config file " + args.config_path + ": " + e.what());
    }
    merge_checked(&resolved, file, "");
  }
  for (const std::string& spec : args.overrides) {
    merge_checked(&resolved, parse_override(spec), "");
  }
  return resolved;
}

fs::path require_out(const CommonArgs& args) {
  if (args.out.empty()) throw std::invalid_argument("--out is required");
  fs::create_directories(args.out);
  return fs::path(args.out);
}

// Provenance stamp: the fully resolved configuration, the seed, and the
// source version, written into every output directory.
void write_stamp(const fs::path& out, const std::string& command, const CommonArgs& args,
                 const json& resolved) {
  json stamp;
  stamp["command"] = command;
  stamp["seed"] = args.seed;
  stamp["version"] = kVersionString;
  stamp["git_describe"] = kGitDescribe;
  stamp["config"] = resolved;
  std::ofstream file(out / "resolved_config.json");
  file << stamp.dump(2) << "\n";
}

SynthConfig synth_from(const json& j) {
  SynthConfig c = SynthConfig::desk_default();
  c.frame_count = j.at("frame_count").get<int>();
  c.image_width = j.at("image_width").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.focal = j.at("focal").get<double>();
  c.fps = j.at("fps").get<double>();
  c.background_color = vec3_from(j.at("background_color"), "synth.background_color");
  c.camera_position = vec3_from(j.at("camera_position"), "synth.camera_position");
  c.look_at = vec3_from(j.at("look_at"), "synth.look_at");
  c.sphere_subdivisions = j.at("sphere_subdivisions").get<int>();
  c.root_linear_drift = vec3_from(j.at("root_linear_drift"), "synth.root_linear_drift");
  c.root_swing_amplitude = vec3_from(j.at("root_swing_amplitude"), "synth.root_swing_amplitude");
  c.root_hinge_axis = vec3_from(j.at("root_hinge_axis"), "synth.root_hinge_axis");
  c.root_angle_amplitude = j.at("root_angle_amplitude").get<double>();
  c.root_angle_phase = j.at("root_angle_phase").get<double>();
  c.noise_joint_deg = j.at("noise_joint_deg").get<double>();
  c.noise_rotation_deg = j.at("noise_rotation_deg").get<double>();
  c.noise_translation = j.at("noise_translation").get<double>();
  c.eval_view_count = j.at("eval_view_count").get<int>();
  c.eval_view_spread_deg = j.at("eval_view_spread_deg").get<double>();
  return c;
}

FieldConfig fields_from(const json& j) {
  FieldConfig c;
  c.point_bands = j.at("point_bands").get<int>();
  c.time_bands = j.at("time_bands").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.skip_layer = j.at("skip_layer").get<int>();
  c.appearance_dim = j.at("appearance_dim").get<int>();
  return c;
}

TrainSchedule schedule_from(const json& j, std::uint64_t seed, const fs::path& out) {
  TrainSchedule s = TrainSchedule::desk_default();
  s.init_iterations = j.at("init_iterations").get<int>();
  s.anneal_iterations = j.at("anneal_iterations").get<int>();
  s.tail_iterations = j.at("tail_iterations").get<int>();
  s.rays_per_iteration = j.at("rays_per_iteration").get<int>();
  s.render.coarse_samples = j.at("coarse_samples").get<int>();
  s.render.fine_samples = j.at("fine_samples").get<int>();
  s.render.chunk_size = j.at("chunk_size").get<int>();
  s.base_learning_rate = j.at("base_learning_rate").get<double>();
  s.decay_factor = j.at("decay_factor").get<double>();
  s.learning_rate_floor = j.at("learning_rate_floor").get<double>();
  s.weights.lambda = j.at("lambda").get<double>();
  s.weights.mu = j.at("mu").get<double>();
  s.weights.epsilon = j.at("epsilon").get<double>();
  s.anneal_bands = j.at("anneal_bands").get<int>();
  s.correspondence_samples = j.at("correspondence_samples").get<int>();
  s.free_samples = j.at("free_samples").get<int>();
  s.free_margin = j.at("free_margin").get<double>();
  s.moco_points = j.at("moco_points").get<int>();
  s.pretrain_iterations = j.at("pretrain_iterations").get<int>();
  s.pretrain_views = j.at("pretrain_views").get<int>();
  s.metrics_period = j.at("metrics_period").get<int>();
  s.seed = seed;
  s.diagnostics_dir = out;
  return s;
}

EvalOptions eval_from(const json& j, std::uint64_t seed, const fs::path& out) {
  EvalOptions o;
  o.crop = j.at("crop").get<int>();
  o.kappa = j.at("kappa").get<double>();
  o.render.coarse_samples = j.at("coarse_samples").get<int>();
  o.render.fine_samples = j.at("fine_samples").get<int>();
  o.render.chunk_size = j.at("chunk_size").get<int>();
  o.seed = seed;
  o.output_dir = out;
  return o;
}

std::string require_path(const json& section, const char* key, const std::string& full_key) {
  const std::string value = section.at(key).get<std::string>();
  if (value.empty()) throw std::invalid_argument(full_key + " is required");
  return value;
}

int cmd_synth(const CommonArgs& args) {
  const json resolved = resolve_config(args);
  const SynthConfig config = synth_from(resolved.at("synth"));
  config.validate();
  if (args.dry_run) {
    std::cout << "configuration ok\n";
    return 0;
  }
  const fs::path out = require_out(args);
  write_stamp(out, "synth", args, resolved);

  const FrameDataset dataset = generate_synthetic_sequence(config, args.seed);
  save_dataset(dataset, out);
  std::cout << "wrote " << dataset.frame_count() << " frames ("
            << dataset.eval_images.size() << " eval views) to " << out.string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const json resolved = resolve_config(args);
  const FieldConfig fields = fields_from(resolved.at("fields"));
  fields.validate();
  const fs::path out = args.dry_run ? fs::path() : require_out(args);
  const TrainSchedule schedule = schedule_from(resolved.at("train"), args.seed, out);
  schedule.validate();
  const std::string dataset_path = require_path(resolved.at("train"), "dataset", "train.dataset");
  if (args.dry_run) {
    std::cout << "configuration ok\n";
    return 0;
  }
  write_stamp(out, "train", args, resolved);

  const FrameDataset dataset = load_dataset(dataset_path);
  TrainState state = args.resume.empty() ? make_initial_state(fields, dataset, schedule)
                                         : load_checkpoint(args.resume);
  if (!args.resume.empty()) {
    std::cout << "resumed from " << args.resume << " at stage "
              << stage_name(state.stage) << ", iteration " << state.iteration << "\n";
  }

  std::ofstream metrics_file(out / "metrics.jsonl", std::ios::app);
  if (!metrics_file) throw std::runtime_error("cannot open metrics file in " + out.string());
  const int n1 = schedule.init_iterations;
  const int anneal_end = n1 + schedule.anneal_iterations;
  const MetricsSink sink = [&](const StepMetrics& m) {
    json record;
    record["iteration"] = m.iteration;
    record["stage"] = stage_name(m.stage);
    record["loss"] = m.loss;
    record["photo"] = m.photo;
    record["moco_global"] = m.moco_global;
    record["moco_local"] = m.moco_local;
    record["fit"] = m.fit;
    record["learning_rate"] = m.learning_rate;
    record["alpha"] = m.alpha;
    metrics_file << record.dump() << "\n" << std::flush;
    std::cout << "[" << stage_name(m.stage) << "] iter " << m.iteration << " loss " << m.loss
              << " lr " << m.learning_rate << " alpha " << m.alpha << "\n";
    if (m.stage == TrainStage::kInit && m.iteration == n1) {
      std::cout << "stage boundary: init complete at iteration " << n1 << "\n";
    }
    if (m.stage == TrainStage::kJoint && m.iteration == anneal_end) {
      std::cout << "stage boundary: anneal complete at iteration " << anneal_end << "\n";
    }
  };

  if (state.stage == TrainStage::kPretrain) {
    pretrain_density(&state, dataset.canonical_mesh, schedule, sink);
    save_checkpoint(state, out / "checkpoint_pretrain.ckpt");
    std::cout << "stage boundary: pretrain complete at iteration "
              << state.pretrain_iteration << "\n";
  }
  if (state.stage == TrainStage::kInit) {
    run_init_stage(&state, dataset, schedule, sink);
    save_checkpoint(state, out / "checkpoint_init.ckpt");
  }
  if (state.stage == TrainStage::kJoint) {
    run_joint_stage(&state, dataset, schedule, sink);
  }
  save_checkpoint(state, out / "checkpoint_final.ckpt");
  std::cout << "training complete at iteration " << state.iteration << ", smoothed loss "
            << state.smoothed_loss << "\n";
  return 0;
}

int cmd_render(const CommonArgs& args) {
  const json resolved = resolve_config(args);
  const json& section = resolved.at("render");
  RenderConfig render;
  render.coarse_samples = section.at("coarse_samples").get<int>();
  render.fine_samples = section.at("fine_samples").get<int>();
  render.chunk_size = section.at("chunk_size").get<int>();
  render.validate();
  const double time = section.at("time").get<double>();
  const int orbit_views = section.at("orbit_views").get<int>();
  if (orbit_views < 0) throw std::invalid_argument("render.orbit_views must be >= 0");
  const std::string checkpoint_path = require_path(section, "checkpoint", "render.checkpoint");
  const std::string dataset_path = require_path(section, "dataset", "render.dataset");
  if (args.dry_run) {
    std::cout << "configuration ok\n";
    return 0;
  }
  const fs::path out = require_out(args);
  write_stamp(out, "render", args, resolved);

  const FrameDataset dataset = load_dataset(dataset_path);
  const TrainState state = load_checkpoint(checkpoint_path);
  const SceneModel& model = state.model;

  // Solid novel-view backdrop: an explicit color, or the mean of the
  // dataset background plate.
  Eigen::Vector3d background_color = Eigen::Vector3d::Zero();
  const json& background_key = section.at("background");
  if (background_key.empty()) {
    for (int r = 0; r < dataset.background.height(); ++r) {
      for (int c = 0; c < dataset.background.width(); ++c) {
        background_color += dataset.background.pixel(r, c);
      }
    }
    background_color /= dataset.background.height() * dataset.background.width();
  } else {
    background_color = vec3_from(background_key, "render.background");
  }

  const int frame = nearest_frame(dataset, time);
  const Aabb bounds = frame_bounds(dataset, frame);
  const Eigen::VectorXd code = model.code(frame);
  const double full_bands = model.config.point_bands;
  const CameraModel& base = dataset.camera;
  const Image background(base.height, base.width, background_color);

  // Orbit preset: cameras evenly spaced in azimuth about the scene center,
  // at the training camera's radius and focal. orbit_views == 0 renders the
  // training camera alone.
  const Eigen::Vector3d center = model.scene_scale.center;
  const Eigen::Vector3d offset = base.center() - center;
  const int count = orbit_views == 0 ? 1 : orbit_views;
  for (int v = 0; v < count; ++v) {
    CameraModel camera = base;
    if (orbit_views > 0) {
      const double azimuth = 2.0 * M_PI * v / orbit_views;
      const Eigen::Vector3d position =
          center + Eigen::AngleAxisd(azimuth, Eigen::Vector3d::UnitY()) * offset;
      camera = make_lookat_camera(position, center, base.width, base.height, base.fx);
    }
    const auto [image, opacity] =
        render_image(model, camera, time, code, background, bounds, full_bands, render,
                     args.seed + static_cast<std::uint64_t>(v));
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d.png", v);
    write_png(out / name, image);
  }
  std::cout << "wrote " << count << " views to " << out.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  const json resolved = resolve_config(args);
  const json& section = resolved.at("eval");
  const std::string checkpoint_path = require_path(section, "checkpoint", "eval.checkpoint");
  const std::string dataset_path = require_path(section, "dataset", "eval.dataset");
  if (args.dry_run) {
    EvalOptions probe = eval_from(section, args.seed, fs::path());
    probe.validate();
    std::cout << "configuration ok\n";
    return 0;
  }
  const fs::path out = require_out(args);
  const EvalOptions options = eval_from(section, args.seed, out);
  options.validate();
  write_stamp(out, "eval", args, resolved);

  const FrameDataset dataset = load_dataset(dataset_path);
  const TrainState state = load_checkpoint(checkpoint_path);
  const EvalReport report = evaluate_novel_views(state.model, dataset, options);
  for (const ViewEvaluation& view : report.views) {
    std::cout << "view " << view.view << " t=" << view.time << " psnr=" << view.psnr_db
              << " oks=" << view.oks_score << " iou=" << view.iou << "\n";
  }
  std::cout << "mean psnr=" << report.mean_psnr << " oks=" << report.mean_oks
            << " iou=" << report.mean_iou << "\n";
  return 0;
}

int cmd_study(const CommonArgs& args) {
  const json resolved = resolve_config(args);
  const json& section = resolved.at("study");
  const std::string dataset_path = require_path(section, "dataset", "study.dataset");
  const int frame = section.at("frame").get<int>();
  const std::vector<double> translations = numbers_from(section.at("translations"),
                                                        "study.translations");
  const std::vector<double> rotations = numbers_from(section.at("rotations"), "study.rotations");
  if (args.dry_run) {
    std::cout << "configuration ok\n";
    return 0;
  }
  const fs::path out = require_out(args);
  write_stamp(out, "study", args, resolved);

  const FrameDataset dataset = load_dataset(dataset_path);
  if (frame < 0 || frame >= dataset.frame_count()) {
    throw std::invalid_argument("study.frame out of range");
  }
  const std::vector<MisalignmentRow> rows = misalignment_study(
      dataset.frames[frame], dataset.masks[frame], translations, rotations, args.seed);

  std::ostringstream table;
  table << "kind          amount      psnr_db   reference_db\n";
  for (const MisalignmentRow& row : rows) {
    char line[96];
    if (std::isinf(row.psnr_db)) {
      std::snprintf(line, sizeof(line), "%-12s %7.1f %12s", row.kind.c_str(), row.amount, "inf");
    } else {
      std::snprintf(line, sizeof(line), "%-12s %7.1f %12.2f", row.kind.c_str(), row.amount,
                    row.psnr_db);
    }
    table << line;
    if (std::isnan(row.reference_db)) {
      table << "              -\n";
    } else {
      std::snprintf(line, sizeof(line), " %14.2f\n", row.reference_db);
      table << line;
    }
  }
  std::cout << table.str();
  std::ofstream file(out / "study.txt");
  file << table.str();
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs* args, bool with_resume) {
  cmd->add_option("--config", args->config_path, "JSON configuration file merged over defaults");
  cmd->add_option("--set", args->overrides,
                  "dotted-key override, e.g. --set train.lambda=0.2 (repeatable)");
  cmd->add_option("--seed", args->seed, "master RNG seed");
  cmd->add_option("--out", args->out, "output directory");
  cmd->add_flag("--dry-run", args->dry_run, "validate the configuration and exit");
  if (with_resume) {
    cmd->add_option("--resume", args->resume, "checkpoint to resume training from");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"canonical field + motion flows on a synthetic monocular desk scene"};
  app.set_version_flag("--version", std::string(kVersionString) + " (" + kGitDescribe + ")");
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  CLI::App* train = app.add_subcommand("train", "run pretrain, init, and joint stages");
  CLI::App* render = app.add_subcommand("render", "render novel views from a checkpoint");
  CLI::App* eval = app.add_subcommand("eval", "score held-out views from a checkpoint");
  CLI::App* study = app.add_subcommand("study", "misalignment sensitivity table");
  add_common(synth, &args, false);
  add_common(train, &args, true);
  add_common(render, &args, false);
  add_common(eval, &args, false);
  add_common(study, &args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(args);
    if (train->parsed()) return cmd_train(args);
    if (render->parsed()) return cmd_render(args);
    if (eval->parsed()) return cmd_eval(args);
    if (study->parsed()) return cmd_study(args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
