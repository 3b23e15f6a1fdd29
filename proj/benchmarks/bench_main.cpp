// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "canonflow/encoding.hpp"
#include "canonflow/tape.hpp"

namespace {

void BM_EncodePoints(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Eigen::Matrix3Xd x = Eigen::Matrix3Xd::Random(3, n);
  const canonflow::AnnealState anneal(8.0, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(canonflow::encode_points(x, anneal));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncodePoints)->Arg(1024)->Arg(16384);

void BM_TapeMatmulBackward(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Eigen::MatrixXd w0 = Eigen::MatrixXd::Random(64, 64);
  const Eigen::MatrixXd x0 = Eigen::MatrixXd::Random(64, n);
  for (auto _ : state) {
    canonflow::Tape tape;
    canonflow::Var w = tape.leaf(w0);
    canonflow::Var x = tape.constant(x0);
    canonflow::Var loss = canonflow::mean(canonflow::relu(canonflow::matmul(w, x)));
    tape.backward(loss);
    benchmark::DoNotOptimize(w.grad());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TapeMatmulBackward)->Arg(1024)->Arg(16384);

}  // namespace

BENCHMARK_MAIN();
