// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "canonflow/encoding.hpp"

namespace canonflow {

namespace {

// Rays whose AABB chord is shorter than this are treated as misses;
// quadrature over a degenerate interval is meaningless.
constexpr double kMinChord = 1e-9;

std::vector<double> deltas_from_depths(const std::vector<double>& depths, double t_exit) {
  std::vector<double> deltas(depths.size());
  for (std::size_t i = 0; i + 1 < depths.size(); ++i) deltas[i] = depths[i + 1] - depths[i];
  if (!depths.empty()) deltas.back() = t_exit - depths.back();
  return deltas;
}

void check_depths(const std::vector<double>& depths, double t_exit) {
  for (std::size_t i = 0; i + 1 < depths.size(); ++i) {
    if (!(depths[i] < depths[i + 1])) {
      throw std::invalid_argument("composite: depths must be strictly increasing");
    }
  }
  if (!depths.empty() && t_exit < depths.back()) {
    throw std::invalid_argument("composite: t_exit before the last depth");
  }
}

}  // namespace

void RenderConfig::validate() const {
  if (coarse_samples < 1) throw std::invalid_argument("RenderConfig: coarse_samples < 1");
  if (fine_samples < 0) throw std::invalid_argument("RenderConfig: fine_samples < 0");
  if (chunk_size < 1) throw std::invalid_argument("RenderConfig: chunk_size < 1");
}

std::vector<double> stratified_depths(double t_near, double t_far, int n,
                                      std::mt19937_64& rng) {
  if (!(t_near < t_far)) throw std::invalid_argument("stratified_depths: t_near >= t_far");
  if (n < 1) throw std::invalid_argument("stratified_depths: n < 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = (t_far - t_near) / n;
  std::vector<double> depths(n);
  for (int k = 0; k < n; ++k) depths[k] = t_near + (k + unit(rng)) * width;
  return depths;
}

std::vector<double> importance_depths(const std::vector<double>& coarse_depths,
                                      const Eigen::VectorXd& coarse_weights, int n,
                                      std::mt19937_64& rng) {
  const std::size_t bins = coarse_depths.size();
  if (bins < 2) throw std::invalid_argument("importance_depths: need at least two depths");
  if (static_cast<std::size_t>(coarse_weights.size()) != bins) {
    throw std::invalid_argument("importance_depths: weight/depth size mismatch");
  }
  if (n < 1) throw std::invalid_argument("importance_depths: n < 1");
  if ((coarse_weights.array() < 0.0).any()) {
    throw std::invalid_argument("importance_depths: negative weight");
  }

  // Bin edges: first depth, midpoints, last depth.
  std::vector<double> edges(bins + 1);
  edges[0] = coarse_depths.front();
  for (std::size_t i = 1; i < bins; ++i) {
    edges[i] = 0.5 * (coarse_depths[i - 1] + coarse_depths[i]);
  }
  edges[bins] = coarse_depths.back();

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> samples(n);
  const double total = coarse_weights.sum();
  if (total <= 0.0) {
    // Documented fallback: no occupancy signal, sample uniformly.
    for (int k = 0; k < n; ++k) {
      samples[k] = edges.front() + unit(rng) * (edges.back() - edges.front());
    }
  } else {
    std::vector<double> cdf(bins);
    double acc = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      acc += coarse_weights(static_cast<Eigen::Index>(i)) / total;
      cdf[i] = acc;
    }
    cdf.back() = 1.0;  // guard against rounding
    for (int k = 0; k < n; ++k) {
      const double u = unit(rng);
      const std::size_t bin =
          std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
      const double lo = bin == 0 ? 0.0 : cdf[bin - 1];
      const double frac = (u - lo) / (cdf[bin] - lo);
      samples[k] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
    }
  }
  std::sort(samples.begin(), samples.end());
  return samples;
}

CompositeResult composite(const Eigen::MatrixXd& colors, const Eigen::VectorXd& sigmas,
                          const std::vector<double>& depths, double t_exit,
                          const Eigen::Vector3d& background) {
  const auto n = static_cast<Eigen::Index>(depths.size());
  if (colors.rows() != 3 || colors.cols() != n || sigmas.size() != n) {
    throw std::invalid_argument("composite: shape mismatch");
  }
  check_depths(depths, t_exit);
  const std::vector<double> deltas = deltas_from_depths(depths, t_exit);

  CompositeResult out;
  out.weights.resize(n);
  double transmittance = 1.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double alpha = 1.0 - std::exp(-sigmas(i) * deltas[static_cast<std::size_t>(i)]);
    const double w = transmittance * alpha;
    out.weights(i) = w;
    color += w * colors.col(i);
    transmittance *= 1.0 - alpha;
  }
  out.color = color + transmittance * background;
  out.final_transmittance = transmittance;
  out.opacity = 1.0 - transmittance;
  return out;
}

Var composite_rays_var(Tape& tape, const Var& sigma, const Var& color,
                       const std::vector<RaySpan>& spans) {
  if (sigma.tape != &tape || color.tape != &tape) {
    throw std::invalid_argument("composite_rays_var: vars from a different tape");
  }
  const Eigen::MatrixXd& sig = sigma.value();
  const Eigen::MatrixXd& col = color.value();
  if (sig.rows() != 1 || col.rows() != 3 || sig.cols() != col.cols()) {
    throw std::invalid_argument("composite_rays_var: sigma 1xS and color 3xS required");
  }
  for (const RaySpan& span : spans) {
    if (span.count < 0 || span.offset < 0 || span.offset + span.count > sig.cols() ||
        static_cast<int>(span.deltas.size()) != span.count) {
      throw std::invalid_argument("composite_rays_var: span out of range");
    }
  }

  const auto rays = static_cast<Eigen::Index>(spans.size());
  Eigen::MatrixXd out(3, rays);
  for (Eigen::Index r = 0; r < rays; ++r) {
    const RaySpan& span = spans[static_cast<std::size_t>(r)];
    double transmittance = 1.0;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int k = 0; k < span.count; ++k) {
      const Eigen::Index j = span.offset + k;
      const double alpha = 1.0 - std::exp(-sig(0, j) * span.deltas[static_cast<std::size_t>(k)]);
      c += transmittance * alpha * col.col(j);
      transmittance *= 1.0 - alpha;
    }
    out.col(r) = c + transmittance * span.background;
  }

  const bool track = tape.grad_enabled() &&
                     (tape.needs_grad(sigma.index) || tape.needs_grad(color.index));
  if (!track) return tape.constant(std::move(out));

  const std::int32_t sigma_idx = sigma.index;
  const std::int32_t color_idx = color.index;
  return tape.make_node(
      std::move(out),
      [sigma_idx, color_idx, spans](Tape& t, std::int32_t self) {
        const Eigen::MatrixXd& g = t.grad_of(self);
        const Eigen::MatrixXd& sig = t.value_of(sigma_idx);
        const Eigen::MatrixXd& col = t.value_of(color_idx);
        Eigen::MatrixXd gs = Eigen::MatrixXd::Zero(1, sig.cols());
        Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(3, col.cols());
        for (std::size_t r = 0; r < spans.size(); ++r) {
          const RaySpan& span = spans[r];
          if (span.count == 0) continue;
          const Eigen::Vector3d gr = g.col(static_cast<Eigen::Index>(r));
          // Forward recomputation of alphas and transmittances.
          Eigen::VectorXd alphas(span.count);
          Eigen::VectorXd trans(span.count + 1);
          trans(0) = 1.0;
          for (int k = 0; k < span.count; ++k) {
            alphas(k) =
                1.0 - std::exp(-sig(0, span.offset + k) * span.deltas[static_cast<std::size_t>(k)]);
            trans(k + 1) = trans(k) * (1.0 - alphas(k));
          }
          // Reverse sweep with the suffix sum S_k of downstream radiance.
          Eigen::Vector3d suffix = trans(span.count) * span.background;
          for (int k = span.count - 1; k >= 0; --k) {
            const Eigen::Index j = span.offset + k;
            gc.col(j) += trans(k) * alphas(k) * gr;
            gs(0, j) += span.deltas[static_cast<std::size_t>(k)] *
                        gr.dot(trans(k + 1) * col.col(j) - suffix);
            suffix += trans(k) * alphas(k) * col.col(j);
          }
        }
        t.accumulate(sigma_idx, gs);
        t.accumulate(color_idx, gc);
      },
      true);
}

namespace {

// Shared sampling state for one batch of rays against one AABB.
struct RayPlan {
  bool hit = false;
  double t_exit = 0.0;
  std::vector<double> coarse_depths;
  std::vector<double> fine_depths;  // union of coarse + importance, sorted
};

std::vector<RayPlan> plan_coarse(const std::vector<Ray>& rays, const Aabb& bounds,
                                 const RenderConfig& config,
                                 const std::function<std::mt19937_64&(std::size_t)>& rng_of) {
  std::vector<RayPlan> plans(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto hit = ray_aabb_intersect(rays[i], bounds);
    if (!hit || hit->second - hit->first < kMinChord) continue;
    plans[i].hit = true;
    plans[i].t_exit = hit->second;
    plans[i].coarse_depths =
        stratified_depths(hit->first, hit->second, config.coarse_samples, rng_of(i));
  }
  return plans;
}

void plan_fine(std::vector<RayPlan>* plans, const std::vector<Eigen::VectorXd>& coarse_weights,
               const RenderConfig& config,
               const std::function<std::mt19937_64&(std::size_t)>& rng_of) {
  for (std::size_t i = 0; i < plans->size(); ++i) {
    RayPlan& plan = (*plans)[i];
    if (!plan.hit) continue;
    plan.fine_depths = plan.coarse_depths;
    if (config.fine_samples > 0) {
      const std::vector<double> extra = importance_depths(
          plan.coarse_depths, coarse_weights[i], config.fine_samples, rng_of(i));
      plan.fine_depths.insert(plan.fine_depths.end(), extra.begin(), extra.end());
      std::sort(plan.fine_depths.begin(), plan.fine_depths.end());
      // Coincident depths would produce zero-width slabs; keep strict order.
      plan.fine_depths.erase(
          std::unique(plan.fine_depths.begin(), plan.fine_depths.end()),
          plan.fine_depths.end());
    }
  }
}

Eigen::MatrixXd gather_points(const std::vector<Ray>& rays, const std::vector<RayPlan>& plans,
                              bool fine, std::vector<RaySpan>* spans,
                              const std::vector<Eigen::Vector3d>& backgrounds) {
  std::size_t total = 0;
  for (const RayPlan& plan : plans) {
    total += plan.hit ? (fine ? plan.fine_depths.size() : plan.coarse_depths.size()) : 0;
  }
  Eigen::MatrixXd points(3, static_cast<Eigen::Index>(total));
  spans->clear();
  spans->reserve(plans.size());
  Eigen::Index cursor = 0;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const RayPlan& plan = plans[i];
    RaySpan span;
    span.background = backgrounds[i];
    span.offset = static_cast<int>(cursor);
    if (plan.hit) {
      const std::vector<double>& depths = fine ? plan.fine_depths : plan.coarse_depths;
      span.count = static_cast<int>(depths.size());
      span.deltas = deltas_from_depths(depths, plan.t_exit);
      for (double depth : depths) points.col(cursor++) = rays[i].at(depth);
    }
    spans->push_back(std::move(span));
  }
  return points;
}

RenderOutput composite_level(const Eigen::MatrixXd& colors, const Eigen::VectorXd& sigmas,
                             const std::vector<RaySpan>& spans,
                             const std::vector<RayPlan>& plans, bool fine) {
  RenderOutput out;
  out.color.resize(3, static_cast<Eigen::Index>(spans.size()));
  out.opacity.resize(static_cast<Eigen::Index>(spans.size()));
  out.weights.resize(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const RaySpan& span = spans[i];
    if (span.count == 0) {
      out.color.col(static_cast<Eigen::Index>(i)) = span.background;
      out.opacity(static_cast<Eigen::Index>(i)) = 0.0;
      continue;
    }
    const std::vector<double>& depths =
        fine ? plans[i].fine_depths : plans[i].coarse_depths;
    const CompositeResult ray = composite(colors.middleCols(span.offset, span.count),
                                          sigmas.segment(span.offset, span.count), depths,
                                          plans[i].t_exit, span.background);
    out.color.col(static_cast<Eigen::Index>(i)) = ray.color;
    out.opacity(static_cast<Eigen::Index>(i)) = ray.opacity;
    out.weights[i] = ray.weights;
  }
  return out;
}

}  // namespace

RenderRaysResult render_rays(const SceneModel& model, const std::vector<Ray>& rays,
                             const std::vector<Eigen::Vector3d>& backgrounds, double t,
                             const Eigen::VectorXd& code, const Aabb& bounds,
                             double alpha_flow, const RenderConfig& config,
                             std::mt19937_64& rng, RenderStats* stats) {
  config.validate();
  if (rays.size() != backgrounds.size()) {
    throw std::invalid_argument("render_rays: ray/background count mismatch");
  }
  const double alpha_full = static_cast<double>(model.config.point_bands);
  auto shared_rng = [&rng](std::size_t) -> std::mt19937_64& { return rng; };

  std::vector<RayPlan> plans = plan_coarse(rays, bounds, config, shared_rng);

  std::vector<RaySpan> coarse_spans;
  const Eigen::MatrixXd coarse_points =
      gather_points(rays, plans, false, &coarse_spans, backgrounds);
  const Eigen::MatrixXd coarse_canonical =
      backward_flow_batch(model, coarse_points, t, alpha_flow);
  const auto [coarse_colors, coarse_sigmas] =
      eval_canonical_batch(model, coarse_canonical, code, alpha_full);
  if (stats) {
    stats->flow_points += coarse_points.cols();
    stats->canonical_points += coarse_points.cols();
  }

  RenderRaysResult result;
  result.coarse = composite_level(coarse_colors, coarse_sigmas, coarse_spans, plans, false);

  std::vector<Eigen::VectorXd> coarse_weights(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i) coarse_weights[i] = result.coarse.weights[i];
  plan_fine(&plans, coarse_weights, config, shared_rng);

  std::vector<RaySpan> fine_spans;
  const Eigen::MatrixXd fine_points =
      gather_points(rays, plans, true, &fine_spans, backgrounds);
  const Eigen::MatrixXd fine_canonical = backward_flow_batch(model, fine_points, t, alpha_flow);
  const auto [fine_colors, fine_sigmas] =
      eval_canonical_batch(model, fine_canonical, code, alpha_full);
  if (stats) {
    stats->flow_points += fine_points.cols();
    stats->canonical_points += fine_points.cols();
  }
  result.fine = composite_level(fine_colors, fine_sigmas, fine_spans, plans, true);
  return result;
}

TrainRenderResult render_rays_var(Tape& tape, const ModelVars& vars, const SceneModel& model,
                                  const std::vector<Ray>& rays,
                                  const std::vector<Eigen::Vector3d>& backgrounds, double t,
                                  int frame_index, const Aabb& bounds, double alpha_flow,
                                  const RenderConfig& config, std::mt19937_64& rng,
                                  RenderStats* stats, bool bypass_flows) {
  config.validate();
  if (rays.size() != backgrounds.size()) {
    throw std::invalid_argument("render_rays_var: ray/background count mismatch");
  }
  if (frame_index < 0 || frame_index >= model.frame_count()) {
    throw std::invalid_argument("render_rays_var: frame index out of range");
  }
  const double alpha_full = static_cast<double>(model.config.point_bands);
  const Var code = cols(vars.appearance_codes, frame_index, 1);
  auto shared_rng = [&rng](std::size_t) -> std::mt19937_64& { return rng; };

  std::vector<RayPlan> plans = plan_coarse(rays, bounds, config, shared_rng);

  const auto eval_level = [&](const std::vector<RaySpan>& spans,
                              const Eigen::MatrixXd& points) {
    const Eigen::MatrixXd normalized =
        (points.colwise() - model.scene_scale.center) / model.scene_scale.scale;
    const Var observed = tape.constant(normalized);
    const Var warped =
        bypass_flows
            ? observed
            : flow_var(tape, vars.flow_bw, model.config, observed, t, alpha_flow);
    const CanonicalVarOut field =
        eval_canonical_var(tape, vars, model.config, warped, code, alpha_full);
    if (stats) {
      if (!bypass_flows) stats->flow_points += points.cols();
      stats->canonical_points += points.cols();
    }
    return std::pair<Var, Var>(field.sigma, composite_rays_var(tape, field.sigma,
                                                               field.color, spans));
  };

  TrainRenderResult result;
  std::vector<RaySpan> coarse_spans;
  const Eigen::MatrixXd coarse_points =
      gather_points(rays, plans, false, &coarse_spans, backgrounds);
  const auto [coarse_sigma, coarse_color] = eval_level(coarse_spans, coarse_points);
  result.coarse_color = coarse_color;

  // Importance weights come from the coarse pass values; sampling positions
  // carry no gradient.
  std::vector<Eigen::VectorXd> coarse_weights(plans.size());
  {
    const Eigen::MatrixXd& sig = coarse_sigma.value();
    for (std::size_t i = 0; i < plans.size(); ++i) {
      const RaySpan& span = coarse_spans[i];
      if (span.count == 0) continue;
      Eigen::VectorXd w(span.count);
      double transmittance = 1.0;
      for (int k = 0; k < span.count; ++k) {
        const double alpha =
            1.0 - std::exp(-sig(0, span.offset + k) * span.deltas[static_cast<std::size_t>(k)]);
        w(k) = transmittance * alpha;
        transmittance *= 1.0 - alpha;
      }
      coarse_weights[i] = w;
    }
  }
  plan_fine(&plans, coarse_weights, config, shared_rng);

  std::vector<RaySpan> fine_spans;
  const Eigen::MatrixXd fine_points =
      gather_points(rays, plans, true, &fine_spans, backgrounds);
  const auto [fine_sigma, fine_color] = eval_level(fine_spans, fine_points);
  result.fine_color = fine_color;
  result.fine_points = fine_points;
  result.fine_sigma = fine_sigma.value().transpose();
  for (const RayPlan& plan : plans) result.hit_rays += plan.hit ? 1 : 0;
  return result;
}

std::uint64_t pixel_seed(std::uint64_t master_seed, std::uint64_t pixel_index) {
  // splitmix64 finalizer over a golden-ratio stream offset.
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (pixel_index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::pair<Image, Eigen::MatrixXd> render_image(const SceneModel& model,
                                               const CameraModel& camera, double t,
                                               const Eigen::VectorXd& code,
                                               const Image& background, const Aabb& bounds,
                                               double alpha_flow, const RenderConfig& config,
                                               std::uint64_t seed, RenderStats* stats) {
  config.validate();
  camera.validate();
  if (background.height() != camera.height || background.width() != camera.width) {
    throw std::invalid_argument("render_image: background/camera shape mismatch");
  }
  const double alpha_full = static_cast<double>(model.config.point_bands);
  const int total = camera.height * camera.width;

  Image out(camera.height, camera.width);
  Eigen::MatrixXd opacity(camera.height, camera.width);

  for (int start = 0; start < total; start += config.chunk_size) {
    const int count = std::min(config.chunk_size, total - start);
    std::vector<Ray> rays;
    std::vector<Eigen::Vector3d> backgrounds;
    std::vector<std::mt19937_64> rngs;
    rays.reserve(count);
    backgrounds.reserve(count);
    rngs.reserve(count);
    for (int k = 0; k < count; ++k) {
      const int index = start + k;
      const int row = index / camera.width;
      const int col = index % camera.width;
      rays.push_back(generate_ray(camera, row, col));
      backgrounds.push_back(background.pixel(row, col));
      rngs.emplace_back(pixel_seed(seed, static_cast<std::uint64_t>(index)));
    }
    auto rng_of = [&rngs](std::size_t i) -> std::mt19937_64& { return rngs[i]; };

    // Same pipeline as render_rays, but with per-pixel RNG streams so the
    // chunk boundaries cannot influence the samples.
    std::vector<RayPlan> plans = plan_coarse(rays, bounds, config, rng_of);
    std::vector<RaySpan> coarse_spans;
    const Eigen::MatrixXd coarse_points =
        gather_points(rays, plans, false, &coarse_spans, backgrounds);
    const Eigen::MatrixXd coarse_canonical =
        backward_flow_batch(model, coarse_points, t, alpha_flow);
    const auto [coarse_colors, coarse_sigmas] =
        eval_canonical_batch(model, coarse_canonical, code, alpha_full);
    const RenderOutput coarse =
        composite_level(coarse_colors, coarse_sigmas, coarse_spans, plans, false);

    std::vector<Eigen::VectorXd> coarse_weights(plans.size());
    for (std::size_t i = 0; i < plans.size(); ++i) coarse_weights[i] = coarse.weights[i];
    plan_fine(&plans, coarse_weights, config, rng_of);

    std::vector<RaySpan> fine_spans;
    const Eigen::MatrixXd fine_points =
        gather_points(rays, plans, true, &fine_spans, backgrounds);
    const Eigen::MatrixXd fine_canonical =
        backward_flow_batch(model, fine_points, t, alpha_flow);
    const auto [fine_colors, fine_sigmas] =
        eval_canonical_batch(model, fine_canonical, code, alpha_full);
    const RenderOutput fine =
        composite_level(fine_colors, fine_sigmas, fine_spans, plans, true);
    if (stats) {
      stats->flow_points += coarse_points.cols() + fine_points.cols();
      stats->canonical_points += coarse_points.cols() + fine_points.cols();
    }

    for (int k = 0; k < count; ++k) {
      const int index = start + k;
      const int row = index / camera.width;
      const int col = index % camera.width;
      out.set_pixel(row, col, fine.color.col(k));
      opacity(row, col) = fine.opacity(k);
    }
  }
  return {out, opacity};
}

}  // namespace canonflow
