// Copyright 2026 The SCCM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Finite-difference checks for every differentiable op. Each loss contracts
// the op output with a fixed random matrix so all output entries matter.

#include <random>

#include "doctest.h"
#include "sccm/kernels.h"
#include "sccm/ops.h"
#include "test_util.h"

namespace sccm::ag {
namespace {

using test::GradCheck;
using test::RandomMatrix;
using V = Var<double>;

constexpr double kTol = 1e-6;

V Param(int r, int c, std::mt19937_64* rng, double scale = 1.0) {
  return V(RandomMatrix<double>(r, c, rng, scale), true);
}

// <y, weights> for a fixed random weights matrix.
V Contract(const V& y, uint64_t seed) {
  std::mt19937_64 rng(seed);
  V w(RandomMatrix<double>(y.rows(), y.cols(), &rng));
  return SumAll(Mul(y, w));
}

TEST_CASE("linear and matmul gradients") {
  std::mt19937_64 rng(1);
  V x = Param(5, 4, &rng), w = Param(3, 4, &rng), b = Param(1, 3, &rng);
  CHECK(GradCheck([&] { return Contract(Linear(x, w, b), 9); }, {x, w, b}) < kTol);
  V a = Param(4, 6, &rng), c = Param(6, 2, &rng), d = Param(5, 6, &rng);
  CHECK(GradCheck([&] { return Contract(MatMul(a, c), 9); }, {a, c}) < kTol);
  CHECK(GradCheck([&] { return Contract(MatMulNT(a, d), 9); }, {a, d}) < kTol);
}

TEST_CASE("elementwise gradients") {
  std::mt19937_64 rng(2);
  V a = Param(4, 5, &rng), b = Param(4, 5, &rng), row = Param(1, 5, &rng);
  V s = Param(1, 1, &rng), alpha = V(Matrix<double>(1, 1, 0.25), true);
  CHECK(GradCheck([&] { return Contract(Add(a, b), 3); }, {a, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(Sub(a, b), 3); }, {a, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(Mul(a, b), 3); }, {a, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(Scale(a, 1.7), 3); }, {a}) < kTol);
  CHECK(GradCheck([&] { return Contract(ScaleBy(a, s), 3); }, {a, s}) < kTol);
  CHECK(GradCheck([&] { return Contract(AddRow(a, row), 3); }, {a, row}) < kTol);
  CHECK(GradCheck([&] { return Contract(AddN<double>({a, b, a}), 3); }, {a, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(BroadcastRows(row, 7), 3); }, {row}) < kTol);
  CHECK(GradCheck([&] { return Contract(Sigmoid(a), 3); }, {a}) < kTol);
  CHECK(GradCheck([&] { return Contract(PRelu(a, alpha), 3); }, {a, alpha}) < kTol);
  CHECK(GradCheck([&] { return Contract(Relu(a), 3); }, {a}) < kTol);
}

TEST_CASE("normalization and softmax gradients") {
  std::mt19937_64 rng(3);
  V x = Param(6, 5, &rng), g = Param(1, 5, &rng), b = Param(1, 5, &rng);
  CHECK(GradCheck([&] { return Contract(LayerNormRows(x, g, b), 4); }, {x, g, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(GlobalLayerNorm(x, g, b), 4); }, {x, g, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(SoftmaxRows(x), 4); }, {x}) < kTol);
}

TEST_CASE("structural op gradients") {
  std::mt19937_64 rng(4);
  V a = Param(4, 6, &rng), b = Param(4, 2, &rng), c = Param(3, 6, &rng);
  CHECK(GradCheck([&] { return Contract(SliceCols(a, 1, 4), 5); }, {a}) < kTol);
  CHECK(GradCheck([&] { return Contract(SliceRows(a, 1, 3), 5); }, {a}) < kTol);
  CHECK(GradCheck([&] { return Contract(ConcatCols<double>({a, b, a}), 5); }, {a, b}) < kTol);
  CHECK(GradCheck([&] { return Contract(ConcatRows<double>({a, c}), 5); }, {a, c}) < kTol);
}

TEST_CASE("convolution and framing gradients") {
  std::mt19937_64 rng(5);
  V x = Param(17, 4, &rng), w = Param(4, 3, &rng), bias = Param(1, 4, &rng);
  for (int dilation : {1, 2, 4}) {
    CHECK(GradCheck([&] { return Contract(DepthwiseConv(x, w, bias, dilation), 6); }, {x, w, bias}) < kTol);
  }
  V sig = Param(1, 40, &rng);
  CHECK(GradCheck([&] { return Contract(Frame(sig, 8, 4), 6); }, {sig}) < kTol);
  V frames = Param(5, 8, &rng);
  CHECK(GradCheck([&] { return Contract(OverlapAdd(frames, 4, 27), 6); }, {frames}) < kTol);
}

TEST_CASE("loss gradients") {
  std::mt19937_64 rng(6);
  V logits = Param(1, 5, &rng);
  for (int target = 0; target < 5; ++target) {
    CHECK(GradCheck([&] { return CrossEntropy(logits, target); }, {logits}) < kTol);
  }
  V est = Param(1, 64, &rng);
  Matrix<double> ref = RandomMatrix<double>(1, 64, &rng);
  CHECK(GradCheck([&] { return SiSnr<double>(est, ref.flat()); }, {est}) < kTol);
}

TEST_CASE("composite graph reuses nodes correctly") {
  // y feeds two consumers; gradients must sum over both paths.
  std::mt19937_64 rng(7);
  V x = Param(3, 3, &rng), w = Param(3, 3, &rng);
  CHECK(GradCheck(
            [&] {
              V y = Linear(x, w, V());
              return Contract(Add(Mul(y, y), SoftmaxRows(y)), 8);
            },
            {x, w}) < kTol);
}

TEST_CASE("no-grad mode records nothing") {
  std::mt19937_64 rng(8);
  V x = Param(3, 3, &rng);
  NoGradGuard guard;
  V y = Relu(x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("ops give identical values under both kernel backends") {
  std::mt19937_64 rng(9);
  Var<float> x(RandomMatrix<float>(50, 33, &rng)), w(RandomMatrix<float>(20, 33, &rng));
  Var<float> y_par = Linear(x, w, Var<float>());
  kernels::ScopedBackend scoped(kernels::Backend::kReference);
  Var<float> y_ref = Linear(x, w, Var<float>());
  CHECK(test::MaxAbsDiff(y_par.value(), y_ref.value()) < 1e-4);
}

}  // namespace
}  // namespace sccm::ag
