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

// Serial reference kernels. Written for obviousness, not speed; the parallel
// backend is tested against these.

#include <cmath>

#include "kernels/checks.h"
#include "sccm/kernels.h"

namespace sccm::kernels::reference {

template <typename T>
void Gemm(Trans ta, Trans tb, T alpha, const Matrix<T>& a, const Matrix<T>& b,
          T beta, Matrix<T>* c) {
  int m, n, k;
  internal::CheckGemmShapes(ta, tb, a, b, *c, &m, &n, &k);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = ta == Trans::kNo ? a(i, p) : a(p, i);
        const T bv = tb == Trans::kNo ? b(p, j) : b(j, p);
        acc += av * bv;
      }
      (*c)(i, j) = beta == T(0) ? alpha * acc : alpha * acc + beta * (*c)(i, j);
    }
  }
}

template <typename T>
void DepthwiseConv(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& bias,
                   int dilation, Matrix<T>* y) {
  internal::CheckDepthwise(x, w, bias, dilation);
  const int steps = x.rows(), channels = x.cols(), taps = w.cols();
  const int half = (taps - 1) / 2;
  y->Resize(steps, channels);
  for (int t = 0; t < steps; ++t) {
    for (int c = 0; c < channels; ++c) {
      T acc = bias.empty() ? T(0) : bias(0, c);
      for (int p = 0; p < taps; ++p) {
        const int src = t + (p - half) * dilation;
        if (src >= 0 && src < steps) acc += w(c, p) * x(src, c);
      }
      (*y)(t, c) = acc;
    }
  }
}

template <typename T>
void DepthwiseConvBackward(const Matrix<T>& x, const Matrix<T>& w, int dilation,
                           const Matrix<T>& dy, Matrix<T>* dx, Matrix<T>* dw,
                           Matrix<T>* dbias) {
  const int steps = x.rows(), channels = x.cols(), taps = w.cols();
  const int half = (taps - 1) / 2;
  for (int t = 0; t < steps; ++t) {
    for (int c = 0; c < channels; ++c) {
      const T g = dy(t, c);
      if (dbias != nullptr) (*dbias)(0, c) += g;
      for (int p = 0; p < taps; ++p) {
        const int src = t + (p - half) * dilation;
        if (src < 0 || src >= steps) continue;
        if (dx != nullptr) (*dx)(src, c) += w(c, p) * g;
        if (dw != nullptr) (*dw)(c, p) += x(src, c) * g;
      }
    }
  }
}

template <typename T>
NormStats<T> GlobalNorm(const Matrix<T>& x, const Matrix<T>& gamma,
                        const Matrix<T>& beta, T eps, Matrix<T>* y,
                        Matrix<T>* xhat) {
  internal::CheckAffine(x, gamma, beta);
  double sum = 0;
  for (size_t i = 0; i < x.size(); ++i) sum += x[i];
  const double mean = sum / static_cast<double>(x.size());
  double sq = 0;
  for (size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean) * (x[i] - mean);
  const double var = sq / static_cast<double>(x.size());
  NormStats<T> stats{static_cast<T>(mean),
                     static_cast<T>(1.0 / std::sqrt(var + eps))};
  y->Resize(x.rows(), x.cols());
  xhat->Resize(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) {
      const T h = (x(r, c) - stats.mean) * stats.inv_std;
      (*xhat)(r, c) = h;
      (*y)(r, c) = gamma(0, c) * h + beta(0, c);
    }
  }
  return stats;
}

template <typename T>
void GlobalNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma, T inv_std,
                        const Matrix<T>& dy, Matrix<T>* dx, Matrix<T>* dgamma,
                        Matrix<T>* dbeta) {
  const double n = static_cast<double>(xhat.size());
  double mean_g = 0, mean_gh = 0;
  for (int r = 0; r < xhat.rows(); ++r) {
    for (int c = 0; c < xhat.cols(); ++c) {
      const double g = dy(r, c) * gamma(0, c);
      mean_g += g;
      mean_gh += g * xhat(r, c);
      if (dgamma != nullptr) (*dgamma)(0, c) += dy(r, c) * xhat(r, c);
      if (dbeta != nullptr) (*dbeta)(0, c) += dy(r, c);
    }
  }
  mean_g /= n;
  mean_gh /= n;
  if (dx == nullptr) return;
  for (int r = 0; r < xhat.rows(); ++r) {
    for (int c = 0; c < xhat.cols(); ++c) {
      const double g = dy(r, c) * gamma(0, c);
      (*dx)(r, c) += static_cast<T>(inv_std * (g - mean_g - xhat(r, c) * mean_gh));
    }
  }
}

template <typename T>
void RowNorm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta,
             T eps, Matrix<T>* y, Matrix<T>* xhat, std::vector<T>* inv_std) {
  internal::CheckAffine(x, gamma, beta);
  y->Resize(x.rows(), x.cols());
  xhat->Resize(x.rows(), x.cols());
  inv_std->assign(x.rows(), T(0));
  for (int r = 0; r < x.rows(); ++r) {
    double mean = 0;
    for (int c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= x.cols();
    double var = 0;
    for (int c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= x.cols();
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*inv_std)[r] = inv;
    for (int c = 0; c < x.cols(); ++c) {
      const T h = static_cast<T>((x(r, c) - mean) * inv);
      (*xhat)(r, c) = h;
      (*y)(r, c) = gamma(0, c) * h + beta(0, c);
    }
  }
}

template <typename T>
void RowNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma,
                     std::span<const T> inv_std, const Matrix<T>& dy,
                     Matrix<T>* dx, Matrix<T>* dgamma, Matrix<T>* dbeta) {
  const int cols = xhat.cols();
  for (int r = 0; r < xhat.rows(); ++r) {
    double mean_g = 0, mean_gh = 0;
    for (int c = 0; c < cols; ++c) {
      const double g = dy(r, c) * gamma(0, c);
      mean_g += g;
      mean_gh += g * xhat(r, c);
      if (dgamma != nullptr) (*dgamma)(0, c) += dy(r, c) * xhat(r, c);
      if (dbeta != nullptr) (*dbeta)(0, c) += dy(r, c);
    }
    mean_g /= cols;
    mean_gh /= cols;
    if (dx == nullptr) continue;
    for (int c = 0; c < cols; ++c) {
      const double g = dy(r, c) * gamma(0, c);
      (*dx)(r, c) += static_cast<T>(inv_std[r] * (g - mean_g - xhat(r, c) * mean_gh));
    }
  }
}

template <typename T>
void SoftmaxRows(const Matrix<T>& x, Matrix<T>* y) {
  y->Resize(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    T mx = x(r, 0);
    for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double sum = 0;
    for (int c = 0; c < x.cols(); ++c) sum += std::exp(static_cast<double>(x(r, c) - mx));
    for (int c = 0; c < x.cols(); ++c) {
      (*y)(r, c) = static_cast<T>(std::exp(static_cast<double>(x(r, c) - mx)) / sum);
    }
  }
}

template <typename T>
void SoftmaxRowsBackward(const Matrix<T>& y, const Matrix<T>& dy, Matrix<T>* dx) {
  for (int r = 0; r < y.rows(); ++r) {
    double dot = 0;
    for (int c = 0; c < y.cols(); ++c) dot += dy(r, c) * y(r, c);
    for (int c = 0; c < y.cols(); ++c) {
      (*dx)(r, c) += static_cast<T>(y(r, c) * (dy(r, c) - dot));
    }
  }
}

template <typename T>
void Frame(std::span<const T> signal, int hop, Matrix<T>* frames) {
  const int len = frames->cols();
  SCCM_CHECK_SHAPE(frames->rows() == 0 ||
                       static_cast<size_t>((frames->rows() - 1) * hop + len) <= signal.size(),
                   "framing exceeds signal");
  for (int f = 0; f < frames->rows(); ++f) {
    for (int l = 0; l < len; ++l) (*frames)(f, l) = signal[f * hop + l];
  }
}

template <typename T>
void OverlapAdd(const Matrix<T>& frames, int hop, std::span<T> out) {
  const int len = frames.cols();
  SCCM_CHECK_SHAPE(frames.rows() == 0 ||
                       static_cast<size_t>((frames.rows() - 1) * hop + len) <= out.size(),
                   "overlap-add exceeds output");
  for (int f = 0; f < frames.rows(); ++f) {
    for (int l = 0; l < len; ++l) out[f * hop + l] += frames(f, l);
  }
}

SCCM_INSTANTIATE_KERNELS(float)
SCCM_INSTANTIATE_KERNELS(double)

}  // namespace sccm::kernels::reference
