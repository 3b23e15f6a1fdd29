// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canonflow {

AnnealState::AnnealState(double alpha_in, int max_bands_in)
    : alpha(alpha_in), max_bands(max_bands_in) {
  if (max_bands < 0) throw std::invalid_argument("AnnealState: negative band count");
  if (!(alpha >= 0.0 && alpha <= static_cast<double>(max_bands))) {
    throw std::invalid_argument("AnnealState: alpha outside [0, max_bands]");
  }
}

double window_weight(int band, double alpha) {
  const double u = std::clamp(alpha - static_cast<double>(band), 0.0, 1.0);
  return (1.0 - std::cos(M_PI * u)) / 2.0;
}

double anneal_alpha(std::int64_t iteration, std::int64_t total_iterations, int bands) {
  if (total_iterations <= 0) throw std::invalid_argument("anneal_alpha: total_iterations <= 0");
  if (iteration < 0) throw std::invalid_argument("anneal_alpha: negative iteration");
  const double raw = static_cast<double>(bands) * static_cast<double>(iteration) /
                     static_cast<double>(total_iterations);
  return std::min(raw, static_cast<double>(bands));
}

Eigen::VectorXd encode_point(const Eigen::Vector3d& x, const AnnealState& state) {
  return encode_points(x, state).col(0);
}

Eigen::MatrixXd encode_points(const Eigen::Matrix3Xd& x, const AnnealState& state) {
  const int f = state.max_bands;
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd out(point_encoding_dim(f), n);
  out.topRows(3) = x;
  double freq = M_PI;  // 2^k * pi
  for (int k = 0; k < f; ++k) {
    const double w = window_weight(k, state.alpha);
    const Eigen::Matrix3Xd phase = freq * x;
    out.middleRows(3 + 6 * k, 3) = w * phase.array().sin().matrix();
    out.middleRows(3 + 6 * k + 3, 3) = w * phase.array().cos().matrix();
    freq *= 2.0;
  }
  return out;
}

Eigen::VectorXd encode_time(double t, int bands) {
  Eigen::RowVectorXd row(1);
  row(0) = t;
  return encode_times(row, bands).col(0);
}

Eigen::MatrixXd encode_times(const Eigen::RowVectorXd& t, int bands) {
  if (bands < 0) throw std::invalid_argument("encode_times: negative band count");
  Eigen::MatrixXd out(time_encoding_dim(bands), t.cols());
  out.row(0) = t;
  double freq = M_PI;
  for (int k = 0; k < bands; ++k) {
    const Eigen::RowVectorXd phase = freq * t;
    out.row(1 + 2 * k) = phase.array().sin();
    out.row(1 + 2 * k + 1) = phase.array().cos();
    freq *= 2.0;
  }
  return out;
}

}  // namespace canonflow
