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

// Numeric kernels behind the autograd ops.
//
// Every kernel exists twice with identical signatures:
//   kernels::reference  plain serial loops, kept as the testing oracle;
//   kernels::parallel   OpenMP-parallel, cache-blocked and vectorized.
// The unqualified kernels::Foo() entry points dispatch on the process-wide
// backend (parallel by default). Backward kernels accumulate (+=) into their
// gradient outputs; null gradient pointers are skipped.

#ifndef SCCM_KERNELS_H_
#define SCCM_KERNELS_H_

#include <span>
#include <vector>

#include "sccm/matrix.h"

namespace sccm::kernels {

enum class Backend { kReference, kParallel };

void SetBackend(Backend backend);
Backend GetBackend();

class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : saved_(GetBackend()) { SetBackend(b); }
  ~ScopedBackend() { SetBackend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

// Number of worker threads used by the parallel backend (1 disables OpenMP
// fan-out). Values < 1 reset to the OpenMP default.
void SetNumThreads(int n);
int NumThreads();

enum class Trans { kNo, kYes };

template <typename T>
struct NormStats {
  T mean = T(0);
  T inv_std = T(0);
};

#define SCCM_DECLARE_KERNELS(ns)                                              \
  namespace ns {                                                              \
  /* c = alpha * op(a) * op(b) + beta * c; c must already have the result    \
     shape. */                                                                \
  template <typename T>                                                       \
  void Gemm(Trans ta, Trans tb, T alpha, const Matrix<T>& a,                  \
            const Matrix<T>& b, T beta, Matrix<T>* c);                        \
  /* Same-padded depthwise dilated convolution along rows. x: [time, ch],     \
     w: [ch, taps] (odd taps), bias: [1, ch] or empty. */                     \
  template <typename T>                                                       \
  void DepthwiseConv(const Matrix<T>& x, const Matrix<T>& w,                  \
                     const Matrix<T>& bias, int dilation, Matrix<T>* y);      \
  template <typename T>                                                       \
  void DepthwiseConvBackward(const Matrix<T>& x, const Matrix<T>& w,          \
                             int dilation, const Matrix<T>& dy,               \
                             Matrix<T>* dx, Matrix<T>* dw, Matrix<T>* dbias); \
  /* Normalization over every element, per-column affine. */                  \
  template <typename T>                                                       \
  NormStats<T> GlobalNorm(const Matrix<T>& x, const Matrix<T>& gamma,         \
                          const Matrix<T>& beta, T eps, Matrix<T>* y,         \
                          Matrix<T>* xhat);                                   \
  template <typename T>                                                       \
  void GlobalNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma,      \
                          T inv_std, const Matrix<T>& dy, Matrix<T>* dx,      \
                          Matrix<T>* dgamma, Matrix<T>* dbeta);               \
  /* Normalization of each row independently, per-column affine. */           \
  template <typename T>                                                       \
  void RowNorm(const Matrix<T>& x, const Matrix<T>& gamma,                    \
               const Matrix<T>& beta, T eps, Matrix<T>* y, Matrix<T>* xhat,   \
               std::vector<T>* inv_std);                                      \
  template <typename T>                                                       \
  void RowNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma,         \
                       std::span<const T> inv_std, const Matrix<T>& dy,       \
                       Matrix<T>* dx, Matrix<T>* dgamma, Matrix<T>* dbeta);   \
  template <typename T>                                                       \
  void SoftmaxRows(const Matrix<T>& x, Matrix<T>* y);                         \
  template <typename T>                                                       \
  void SoftmaxRowsBackward(const Matrix<T>& y, const Matrix<T>& dy,           \
                           Matrix<T>* dx);                                    \
  /* frames(f, l) = signal[f * hop + l]; frames must be pre-shaped. */        \
  template <typename T>                                                       \
  void Frame(std::span<const T> signal, int hop, Matrix<T>* frames);          \
  /* out[f * hop + l] += frames(f, l). */                                     \
  template <typename T>                                                       \
  void OverlapAdd(const Matrix<T>& frames, int hop, std::span<T> out);        \
  }

SCCM_DECLARE_KERNELS(reference)
SCCM_DECLARE_KERNELS(parallel)

#undef SCCM_DECLARE_KERNELS

#define SCCM_DISPATCH(fn, ...)                                        \
  (GetBackend() == Backend::kParallel ? parallel::fn(__VA_ARGS__)     \
                                      : reference::fn(__VA_ARGS__))

template <typename T>
void Gemm(Trans ta, Trans tb, T alpha, const Matrix<T>& a, const Matrix<T>& b,
          T beta, Matrix<T>* c) {
  SCCM_DISPATCH(Gemm, ta, tb, alpha, a, b, beta, c);
}
template <typename T>
void DepthwiseConv(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& bias,
                   int dilation, Matrix<T>* y) {
  SCCM_DISPATCH(DepthwiseConv, x, w, bias, dilation, y);
}
template <typename T>
void DepthwiseConvBackward(const Matrix<T>& x, const Matrix<T>& w, int dilation,
                           const Matrix<T>& dy, Matrix<T>* dx, Matrix<T>* dw,
                           Matrix<T>* dbias) {
  SCCM_DISPATCH(DepthwiseConvBackward, x, w, dilation, dy, dx, dw, dbias);
}
template <typename T>
NormStats<T> GlobalNorm(const Matrix<T>& x, const Matrix<T>& gamma,
                        const Matrix<T>& beta, T eps, Matrix<T>* y,
                        Matrix<T>* xhat) {
  return SCCM_DISPATCH(GlobalNorm, x, gamma, beta, eps, y, xhat);
}
template <typename T>
void GlobalNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma, T inv_std,
                        const Matrix<T>& dy, Matrix<T>* dx, Matrix<T>* dgamma,
                        Matrix<T>* dbeta) {
  SCCM_DISPATCH(GlobalNormBackward, xhat, gamma, inv_std, dy, dx, dgamma, dbeta);
}
template <typename T>
void RowNorm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta,
             T eps, Matrix<T>* y, Matrix<T>* xhat, std::vector<T>* inv_std) {
  SCCM_DISPATCH(RowNorm, x, gamma, beta, eps, y, xhat, inv_std);
}
template <typename T>
void RowNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma,
                     std::span<const T> inv_std, const Matrix<T>& dy,
                     Matrix<T>* dx, Matrix<T>* dgamma, Matrix<T>* dbeta) {
  SCCM_DISPATCH(RowNormBackward, xhat, gamma, inv_std, dy, dx, dgamma, dbeta);
}
template <typename T>
void SoftmaxRows(const Matrix<T>& x, Matrix<T>* y) {
  SCCM_DISPATCH(SoftmaxRows, x, y);
}
template <typename T>
void SoftmaxRowsBackward(const Matrix<T>& y, const Matrix<T>& dy, Matrix<T>* dx) {
  SCCM_DISPATCH(SoftmaxRowsBackward, y, dy, dx);
}
template <typename T>
void Frame(std::span<const T> signal, int hop, Matrix<T>* frames) {
  SCCM_DISPATCH(Frame, signal, hop, frames);
}
template <typename T>
void OverlapAdd(const Matrix<T>& frames, int hop, std::span<T> out) {
  SCCM_DISPATCH(OverlapAdd, frames, hop, out);
}

#undef SCCM_DISPATCH

}  // namespace sccm::kernels

#endif  // SCCM_KERNELS_H_
