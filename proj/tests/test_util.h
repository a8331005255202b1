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

#ifndef SCCM_TESTS_TEST_UTIL_H_
#define SCCM_TESTS_TEST_UTIL_H_

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sccm/autograd.h"
#include "sccm/matrix.h"

namespace sccm::test {

template <typename T>
Matrix<T> RandomMatrix(int rows, int cols, std::mt19937_64* rng, T scale = T(1)) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<T> m(rows, cols);
  for (auto& v : m.flat()) v = static_cast<T>(scale * normal(*rng));
  return m;
}

template <typename T>
double MaxAbsDiff(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.SameShape(b)) return INFINITY;
  double d = 0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a[i]) - double(b[i])));
  return d;
}

// Central finite-difference check of d(loss)/d(param) for every entry of
// every parameter (or `probes` random entries when probes > 0). Returns the
// worst relative error max|a - n| / max(|a| + |n|, floor).
inline double GradCheck(const std::function<ag::Var<double>()>& loss,
                        std::vector<ag::Var<double>> params, int probes = 0,
                        uint64_t seed = 0, double h = 1e-5, double floor = 1e-7) {
  for (auto& p : params) p.ZeroGrad();
  ag::Var<double> l = loss();
  ag::Backward(l);
  std::vector<Matrix<double>> analytic;
  for (auto& p : params) analytic.push_back(p.has_grad() ? p.grad() : Matrix<double>(p.rows(), p.cols()));
  double worst = 0;
  auto probe = [&](size_t pi, size_t i) {
    double& v = params[pi].mutable_value()[i];
    const double saved = v;
    v = saved + h;
    const double up = loss().item();
    v = saved - h;
    const double down = loss().item();
    v = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic[pi][i];
    const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
    worst = std::max(worst, rel);
  };
  if (probes <= 0) {
    for (size_t pi = 0; pi < params.size(); ++pi)
      for (size_t i = 0; i < params[pi].value().size(); ++i) probe(pi, i);
  } else {
    std::mt19937_64 rng(seed);
    for (int k = 0; k < probes; ++k) {
      const size_t pi = rng() % params.size();
      const size_t i = rng() % params[pi].value().size();
      probe(pi, i);
    }
  }
  return worst;
}

}  // namespace sccm::test

#endif  // SCCM_TESTS_TEST_UTIL_H_
