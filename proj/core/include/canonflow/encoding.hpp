// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

namespace canonflow {

/// Coarse-to-fine annealing state for the point encoding: alpha grows from 0
/// to f over the annealing stage, opening one frequency band at a time.
struct AnnealState {
  double alpha = 0;
  int max_bands = 8;

  AnnealState() = default;
  AnnealState(double alpha_in, int max_bands_in);
};

/// Band window w_k(alpha) = (1 - cos(pi * clamp(alpha - k, 0, 1))) / 2.
/// 0 for alpha <= k, 1 for alpha >= k + 1, smooth cosine ramp between.
double window_weight(int band, double alpha);

/// Annealing schedule alpha(n) = min(f * n / N, f); held at f after the
/// annealing stage.
double anneal_alpha(std::int64_t iteration, std::int64_t total_iterations, int bands);

/// Sinusoidal encoding of a 3D point with windowed bands:
///   (x, w_0 sin(2^0 pi x), ..., w_0 cos(2^0 pi x), ..., per band)
/// Layout: 3 raw coordinates (never windowed), then per band k the three
/// sines followed by the three cosines. Output length 3 + 6f.
Eigen::VectorXd encode_point(const Eigen::Vector3d& x, const AnnealState& state);

/// Column-wise batch version; output (3 + 6f) x N.
Eigen::MatrixXd encode_points(const Eigen::Matrix3Xd& x, const AnnealState& state);

/// Time encoding: same band layout restricted to one dimension, all windows
/// fully open. Output length 1 + 2 * bands.
Eigen::VectorXd encode_time(double t, int bands);
Eigen::MatrixXd encode_times(const Eigen::RowVectorXd& t, int bands);

inline int point_encoding_dim(int bands) { return 3 + 6 * bands; }
inline int time_encoding_dim(int bands) { return 1 + 2 * bands; }

}  // namespace canonflow
