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

#ifndef SCCM_SRC_KERNELS_CHECKS_H_
#define SCCM_SRC_KERNELS_CHECKS_H_

#include "sccm/kernels.h"

namespace sccm::kernels::internal {

template <typename T>
void CheckGemmShapes(Trans ta, Trans tb, const Matrix<T>& a,
                     const Matrix<T>& b, const Matrix<T>& c, int* m, int* n,
                     int* k) {
  *m = ta == Trans::kNo ? a.rows() : a.cols();
  *k = ta == Trans::kNo ? a.cols() : a.rows();
  const int kb = tb == Trans::kNo ? b.rows() : b.cols();
  *n = tb == Trans::kNo ? b.cols() : b.rows();
  SCCM_CHECK_SHAPE(*k == kb, "gemm inner dimension mismatch");
  SCCM_CHECK_SHAPE(c.rows() == *m && c.cols() == *n, "gemm output shape");
}

template <typename T>
void CheckDepthwise(const Matrix<T>& x, const Matrix<T>& w,
                    const Matrix<T>& bias, int dilation) {
  SCCM_CHECK_SHAPE(w.rows() == x.cols(), "depthwise weight channel count");
  SCCM_CHECK_SHAPE(w.cols() % 2 == 1, "depthwise kernel must have odd taps");
  SCCM_CHECK_SHAPE(dilation >= 1, "dilation must be positive");
  SCCM_CHECK_SHAPE(bias.empty() || (bias.rows() == 1 && bias.cols() == x.cols()),
                   "depthwise bias shape");
}

template <typename T>
void CheckAffine(const Matrix<T>& x, const Matrix<T>& gamma,
                 const Matrix<T>& beta) {
  SCCM_CHECK_SHAPE(gamma.rows() == 1 && gamma.cols() == x.cols(), "gamma shape");
  SCCM_CHECK_SHAPE(beta.rows() == 1 && beta.cols() == x.cols(), "beta shape");
}

}  // namespace sccm::kernels::internal

// Explicit instantiations shared by both backends.
#define SCCM_INSTANTIATE_KERNELS(T)                                                    \
  template void Gemm<T>(Trans, Trans, T, const Matrix<T>&, const Matrix<T>&,   \
                        T, Matrix<T>*);                                        \
  template void DepthwiseConv<T>(const Matrix<T>&, const Matrix<T>&,           \
                                 const Matrix<T>&, int, Matrix<T>*);           \
  template void DepthwiseConvBackward<T>(const Matrix<T>&, const Matrix<T>&,   \
                                         int, const Matrix<T>&, Matrix<T>*,    \
                                         Matrix<T>*, Matrix<T>*);              \
  template NormStats<T> GlobalNorm<T>(const Matrix<T>&, const Matrix<T>&,      \
                                      const Matrix<T>&, T, Matrix<T>*,         \
                                      Matrix<T>*);                             \
  template void GlobalNormBackward<T>(const Matrix<T>&, const Matrix<T>&, T,   \
                                      const Matrix<T>&, Matrix<T>*,            \
                                      Matrix<T>*, Matrix<T>*);                 \
  template void RowNorm<T>(const Matrix<T>&, const Matrix<T>&,                 \
                           const Matrix<T>&, T, Matrix<T>*, Matrix<T>*,        \
                           std::vector<T>*);                                   \
  template void RowNormBackward<T>(const Matrix<T>&, const Matrix<T>&,         \
                                   std::span<const T>, const Matrix<T>&,       \
                                   Matrix<T>*, Matrix<T>*, Matrix<T>*);        \
  template void SoftmaxRows<T>(const Matrix<T>&, Matrix<T>*);                  \
  template void SoftmaxRowsBackward<T>(const Matrix<T>&, const Matrix<T>&,     \
                                       Matrix<T>*);                            \
  template void Frame<T>(std::span<const T>, int, Matrix<T>*);                 \
  template void OverlapAdd<T>(const Matrix<T>&, int, std::span<T>);

#endif  // SCCM_SRC_KERNELS_CHECKS_H_
