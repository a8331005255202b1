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

// The parallel backend must agree with the serial reference on every kernel,
// across odd shapes, transposes and thread counts.

#include <random>

#include "doctest.h"
#include "sccm/kernels.h"
#include "test_util.h"

namespace sccm::kernels {
namespace {

using test::MaxAbsDiff;
using test::RandomMatrix;

template <typename T>
void CheckGemm(int m, int n, int k, Trans ta, Trans tb, T alpha, T beta, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix<T> a = ta == Trans::kNo ? RandomMatrix<T>(m, k, &rng) : RandomMatrix<T>(k, m, &rng);
  Matrix<T> b = tb == Trans::kNo ? RandomMatrix<T>(k, n, &rng) : RandomMatrix<T>(n, k, &rng);
  Matrix<T> c0 = RandomMatrix<T>(m, n, &rng);
  Matrix<T> c1 = c0;
  reference::Gemm(ta, tb, alpha, a, b, beta, &c0);
  parallel::Gemm(ta, tb, alpha, a, b, beta, &c1);
  const double tol = (std::is_same_v<T, float> ? 2e-5 : 1e-12) * (k + 1);
  CHECK(MaxAbsDiff(c0, c1) < tol);
}

TEST_CASE("gemm parallel matches reference") {
  for (int threads : {1, 3}) {
    SetNumThreads(threads);
    uint64_t seed = 1;
    for (auto [m, n, k] : std::vector<std::array<int, 3>>{
             {1, 1, 1}, {7, 5, 3}, {6, 32, 256}, {97, 33, 257}, {200, 64, 129}, {3, 130, 5}}) {
      for (Trans ta : {Trans::kNo, Trans::kYes}) {
        for (Trans tb : {Trans::kNo, Trans::kYes}) {
          CheckGemm<float>(m, n, k, ta, tb, 1.0f, 0.0f, seed++);
          CheckGemm<double>(m, n, k, ta, tb, -0.5, 1.0, seed++);
          CheckGemm<double>(m, n, k, ta, tb, 2.0, 0.25, seed++);
        }
      }
    }
  }
  SetNumThreads(0);
}

TEST_CASE("gemm rejects mismatched shapes") {
  Matrix<float> a(3, 4), b(5, 2), c(3, 2);
  CHECK_THROWS_AS(parallel::Gemm(Trans::kNo, Trans::kNo, 1.0f, a, b, 0.0f, &c), ShapeError);
  CHECK_THROWS_AS(reference::Gemm(Trans::kNo, Trans::kNo, 1.0f, a, b, 0.0f, &c), ShapeError);
}

TEST_CASE("depthwise conv forward and backward match reference") {
  for (int threads : {1, 4}) {
    SetNumThreads(threads);
    std::mt19937_64 rng(7);
    for (int dilation : {1, 2, 8}) {
      for (int taps : {1, 3, 5}) {
        auto x = RandomMatrix<double>(37, 11, &rng);
        auto w = RandomMatrix<double>(11, taps, &rng);
        auto bias = RandomMatrix<double>(1, 11, &rng);
        auto dy = RandomMatrix<double>(37, 11, &rng);
        Matrix<double> y0, y1;
        reference::DepthwiseConv(x, w, bias, dilation, &y0);
        parallel::DepthwiseConv(x, w, bias, dilation, &y1);
        CHECK(MaxAbsDiff(y0, y1) < 1e-12);

        Matrix<double> dx0(37, 11), dw0(11, taps), db0(1, 11);
        Matrix<double> dx1(37, 11), dw1(11, taps), db1(1, 11);
        reference::DepthwiseConvBackward(x, w, dilation, dy, &dx0, &dw0, &db0);
        parallel::DepthwiseConvBackward(x, w, dilation, dy, &dx1, &dw1, &db1);
        CHECK(MaxAbsDiff(dx0, dx1) < 1e-12);
        CHECK(MaxAbsDiff(dw0, dw1) < 1e-11);
        CHECK(MaxAbsDiff(db0, db1) < 1e-11);
      }
    }
  }
  SetNumThreads(0);
}

TEST_CASE("normalization kernels match reference") {
  std::mt19937_64 rng(11);
  auto x = RandomMatrix<double>(23, 9, &rng);
  auto gamma = RandomMatrix<double>(1, 9, &rng);
  auto beta = RandomMatrix<double>(1, 9, &rng);
  auto dy = RandomMatrix<double>(23, 9, &rng);

  Matrix<double> y0, y1, h0, h1;
  auto s0 = reference::GlobalNorm(x, gamma, beta, 1e-8, &y0, &h0);
  auto s1 = parallel::GlobalNorm(x, gamma, beta, 1e-8, &y1, &h1);
  CHECK(s0.mean == doctest::Approx(s1.mean).epsilon(1e-12));
  CHECK(MaxAbsDiff(y0, y1) < 1e-12);
  Matrix<double> dx0(23, 9), dg0(1, 9), db0(1, 9), dx1(23, 9), dg1(1, 9), db1(1, 9);
  reference::GlobalNormBackward(h0, gamma, s0.inv_std, dy, &dx0, &dg0, &db0);
  parallel::GlobalNormBackward(h1, gamma, s1.inv_std, dy, &dx1, &dg1, &db1);
  CHECK(MaxAbsDiff(dx0, dx1) < 1e-12);
  CHECK(MaxAbsDiff(dg0, dg1) < 1e-12);
  CHECK(MaxAbsDiff(db0, db1) < 1e-12);

  std::vector<double> i0, i1;
  reference::RowNorm(x, gamma, beta, 1e-5, &y0, &h0, &i0);
  parallel::RowNorm(x, gamma, beta, 1e-5, &y1, &h1, &i1);
  CHECK(MaxAbsDiff(y0, y1) < 1e-12);
  dx0.SetZero(); dg0.SetZero(); db0.SetZero();
  dx1.SetZero(); dg1.SetZero(); db1.SetZero();
  reference::RowNormBackward<double>(h0, gamma, i0, dy, &dx0, &dg0, &db0);
  parallel::RowNormBackward<double>(h1, gamma, i1, dy, &dx1, &dg1, &db1);
  CHECK(MaxAbsDiff(dx0, dx1) < 1e-12);
  CHECK(MaxAbsDiff(dg0, dg1) < 1e-12);
}

TEST_CASE("softmax rows normalize and match reference") {
  std::mt19937_64 rng(3);
  auto x = RandomMatrix<float>(13, 40, &rng, 10.0f);
  Matrix<float> y0, y1;
  reference::SoftmaxRows(x, &y0);
  parallel::SoftmaxRows(x, &y1);
  CHECK(MaxAbsDiff(y0, y1) < 1e-6);
  for (int r = 0; r < y1.rows(); ++r) {
    double s = 0;
    for (float v : y1.row(r)) {
      CHECK(v >= 0.0f);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("frame and overlap-add are adjoint") {
  std::mt19937_64 rng(5);
  const int len = 16, hop = 8, frames = 9;
  auto sig = RandomMatrix<double>(1, (frames - 1) * hop + len + 3, &rng);
  Matrix<double> f0(frames, len), f1(frames, len);
  reference::Frame<double>(sig.flat(), hop, &f0);
  parallel::Frame<double>(sig.flat(), hop, &f1);
  CHECK(f0 == f1);
  auto g = RandomMatrix<double>(frames, len, &rng);
  std::vector<double> o0(sig.size(), 0.0), o1(sig.size(), 0.0);
  reference::OverlapAdd<double>(g, hop, o0);
  parallel::OverlapAdd<double>(g, hop, o1);
  CHECK(o0 == o1);
  // <Frame(s), g> == <s, OverlapAdd(g)>
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < g.size(); ++i) lhs += f0[i] * g[i];
  for (size_t i = 0; i < sig.size(); ++i) rhs += sig[i] * o0[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

}  // namespace
}  // namespace sccm::kernels
