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

// Independent reference implementations used as test oracles. They share no
// code with the library.

#ifndef SCCM_TESTS_ORACLES_H_
#define SCCM_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace sccm::test {

// Direct formula: remove means, scale both to unit energy, project, and
// take 10 log10(|s_t|^2 / (|e|^2 + 1e-8)).
inline double OracleSiSnr(const std::vector<double>& est, const std::vector<double>& ref) {
  const size_t n = est.size();
  double me = 0, mr = 0;
  for (size_t i = 0; i < n; ++i) {
    me += est[i];
    mr += ref[i];
  }
  me /= n;
  mr /= n;
  std::vector<double> u(n), v(n);
  double eu = 0, ev = 0;
  for (size_t i = 0; i < n; ++i) {
    u[i] = est[i] - me;
    v[i] = ref[i] - mr;
    eu += u[i] * u[i];
    ev += v[i] * v[i];
  }
  double dot = 0;
  for (size_t i = 0; i < n; ++i) {
    u[i] /= std::sqrt(eu);
    v[i] /= std::sqrt(ev);
    dot += u[i] * v[i];
  }
  double st = 0, en = 0;
  for (size_t i = 0; i < n; ++i) {
    const double s = dot * v[i];
    st += s * s;
    en += (u[i] - s) * (u[i] - s);
  }
  return 10.0 * std::log10(st / (en + 1e-8));
}

struct PermutationInstance {
  std::vector<std::vector<double>> estimates;
  std::vector<std::vector<double>> targets;
};

// Estimates are noisy, shuffled copies of the targets with random noise
// levels, so the best pairing is usually but not always the shuffle.
inline PermutationInstance RandomPermutationInstance(int n, int len, std::mt19937_64* rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> level(0.1, 3.0);
  PermutationInstance inst;
  inst.targets.assign(n, std::vector<double>(len));
  for (auto& t : inst.targets) {
    for (auto& x : t) x = normal(*rng);
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), *rng);
  for (int i = 0; i < n; ++i) {
    const double noise = level(*rng);
    std::vector<double> e(len);
    for (int k = 0; k < len; ++k) e[k] = inst.targets[order[i]][k] + noise * normal(*rng);
    inst.estimates.push_back(std::move(e));
  }
  return inst;
}

struct OracleAssignment {
  std::vector<int> theta;
  double loss = 0;
};

// Depth-first enumeration trying the smallest unused target first, so
// permutations arrive in lexicographic order and the first minimum wins.
inline OracleAssignment EnumerateBestPermutation(const std::vector<std::vector<double>>& estimates,
                                                 const std::vector<std::vector<double>>& targets) {
  const int n = static_cast<int>(targets.size());
  OracleAssignment best;
  best.loss = INFINITY;
  std::vector<int> current;
  std::vector<bool> used(n, false);
  std::function<void()> rec = [&] {
    if (static_cast<int>(current.size()) == n) {
      double sum = 0;
      for (int i = 0; i < n; ++i) sum -= OracleSiSnr(estimates[i], targets[current[i]]);
      if (sum / n < best.loss) {
        best.loss = sum / n;
        best.theta = current;
      }
      return;
    }
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      current.push_back(j);
      rec();
      current.pop_back();
      used[j] = false;
    }
  };
  rec();
  return best;
}

}  // namespace sccm::test

#endif  // SCCM_TESTS_ORACLES_H_
