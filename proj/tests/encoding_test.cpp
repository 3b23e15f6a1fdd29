// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/encoding.hpp"

#include <cmath>
#include <stdexcept>

#include "doctest.h"

using namespace canonflow;

TEST_CASE("window weight endpoints and ramp") {
  // Closed below, open above: w_k = 0 until alpha reaches k, 1 from k+1 on.
  CHECK(window_weight(3, 0.0) == 0.0);
  CHECK(window_weight(3, 3.0) == 0.0);
  CHECK(window_weight(3, 4.0) == 1.0);
  CHECK(window_weight(3, 7.5) == 1.0);
  CHECK(window_weight(0, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  // (1 - cos(pi/4)) / 2 at a quarter of the ramp.
  CHECK(window_weight(1, 1.25) == doctest::Approx(0.14644660940672624).epsilon(1e-15));
}

TEST_CASE("window weight is monotone in alpha") {
  double prev = -1.0;
  for (int i = 0; i <= 200; ++i) {
    const double w = window_weight(2, 8.0 * i / 200.0);
    CHECK(w >= prev - 1e-15);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    prev = w;
  }
}

TEST_CASE("anneal alpha schedule") {
  CHECK(anneal_alpha(0, 1000, 8) == 0.0);
  CHECK(anneal_alpha(500, 1000, 8) == doctest::Approx(4.0));
  CHECK(anneal_alpha(1000, 1000, 8) == 8.0);
  // Held at the band count after the annealing stage.
  CHECK(anneal_alpha(5000, 1000, 8) == 8.0);
  CHECK_THROWS_AS(anneal_alpha(10, 0, 8), std::invalid_argument);
  CHECK_THROWS_AS(anneal_alpha(-1, 100, 8), std::invalid_argument);
}

TEST_CASE("anneal state validates its invariant") {
  CHECK_NOTHROW(AnnealState(0.0, 8));
  CHECK_NOTHROW(AnnealState(8.0, 8));
  CHECK_THROWS_AS(AnnealState(-0.1, 8), std::invalid_argument);
  CHECK_THROWS_AS(AnnealState(8.1, 8), std::invalid_argument);
  CHECK_THROWS_AS(AnnealState(0.0, -1), std::invalid_argument);
}

TEST_CASE("encode_point matches frozen values") {
  const Eigen::Vector3d x(0.25, -0.5, 1.0);
  const Eigen::VectorXd e = encode_point(x, AnnealState(1.5, 2));
  REQUIRE(e.size() == 15);
  const double expected[15] = {
      0.25, -0.5, 1.0,
      // band 0, fully open: sin(pi x), cos(pi x)
      0.70710678118654752, -1.0, 0.0,
      0.70710678118654752, 0.0, -1.0,
      // band 1 at half window: 0.5 * (sin(2 pi x), cos(2 pi x))
      0.5, 0.0, 0.0,
      0.0, -0.5, 0.5};
  for (int i = 0; i < 15; ++i) {
    CAPTURE(i);
    CHECK(e(i) == doctest::Approx(expected[i]).epsilon(1e-14));
  }
}

TEST_CASE("encode_point zero alpha keeps only raw coordinates") {
  const Eigen::Vector3d x(0.3, 0.7, -0.2);
  const Eigen::VectorXd e = encode_point(x, AnnealState(0.0, 8));
  REQUIRE(e.size() == point_encoding_dim(8));
  CHECK(e.head<3>() == x);
  CHECK(e.tail(e.size() - 3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode_points batches agree with single-point calls") {
  Eigen::Matrix3Xd xs(3, 4);
  xs << 0.1, -0.4, 0.9, 0.0, 0.5, 0.2, -0.8, 1.0, -0.3, 0.6, 0.05, -1.0;
  const AnnealState state(3.7, 6);
  const Eigen::MatrixXd batch = encode_points(xs, state);
  REQUIRE(batch.rows() == point_encoding_dim(6));
  REQUIRE(batch.cols() == 4);
  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd single = encode_point(xs.col(j), state);
    CHECK((batch.col(j) - single).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("encode_time matches frozen values and is unwindowed") {
  const Eigen::VectorXd e = encode_time(0.3, 2);
  REQUIRE(e.size() == 5);
  CHECK(e(0) == 0.3);
  CHECK(e(1) == doctest::Approx(0.80901699437494742).epsilon(1e-15));
  CHECK(e(2) == doctest::Approx(0.58778525229247313).epsilon(1e-15));
  CHECK(e(3) == doctest::Approx(0.95105651629515357).epsilon(1e-15));
  CHECK(e(4) == doctest::Approx(-0.30901699437494742).epsilon(1e-15));
}

TEST_CASE("encoding dimensions") {
  CHECK(point_encoding_dim(8) == 51);
  CHECK(time_encoding_dim(16) == 33);
  CHECK(encode_point(Eigen::Vector3d::Zero(), AnnealState(0.0, 0)).size() == 3);
  CHECK(encode_time(0.5, 0).size() == 1);
}
