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

// Differentiable ops. Shapes are [rows, cols]; sequences are time-major.

#ifndef SCCM_OPS_H_
#define SCCM_OPS_H_

#include <random>
#include <span>
#include <vector>

#include "sccm/autograd.h"

namespace sccm::ag {

// x [n, in] * w^T [in, out] + b [1, out]; b may be undefined.
template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);
// a [m, k] * b [k, n].
template <typename T>
Var<T> MatMul(const Var<T>& a, const Var<T>& b);
// a [m, k] * b^T, b [n, k].
template <typename T>
Var<T> MatMulNT(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b);
// Element-wise product.
template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Scale(const Var<T>& a, T s);
// a [n, c] + row [1, c] broadcast over rows.
template <typename T>
Var<T> AddRow(const Var<T>& a, const Var<T>& row);
// a [n, c] scaled by the 1x1 variable s.
template <typename T>
Var<T> ScaleBy(const Var<T>& a, const Var<T>& s);
// Sum of equally shaped variables.
template <typename T>
Var<T> AddN(const std::vector<Var<T>>& xs);
// 1x1 sum of all entries.
template <typename T>
Var<T> SumAll(const Var<T>& x);
// row [1, c] repeated n times.
template <typename T>
Var<T> BroadcastRows(const Var<T>& row, int n);

template <typename T>
Var<T> Relu(const Var<T>& x);
template <typename T>
Var<T> Sigmoid(const Var<T>& x);
// Single shared slope, alpha is 1x1.
template <typename T>
Var<T> PRelu(const Var<T>& x, const Var<T>& alpha);
// Inverted dropout; identity when !training or p == 0.
template <typename T>
Var<T> Dropout(const Var<T>& x, T p, bool training, std::mt19937_64* rng);

template <typename T>
Var<T> LayerNormRows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     T eps = T(1e-5));
template <typename T>
Var<T> GlobalLayerNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                       T eps = T(1e-8));
template <typename T>
Var<T> SoftmaxRows(const Var<T>& x);

template <typename T>
Var<T> SliceCols(const Var<T>& x, int begin, int end);
template <typename T>
Var<T> SliceRows(const Var<T>& x, int begin, int end);
template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& xs);
template <typename T>
Var<T> ConcatRows(const std::vector<Var<T>>& xs);

// Same-padded depthwise dilated conv along time; x [time, ch], w [ch, taps].
template <typename T>
Var<T> DepthwiseConv(const Var<T>& x, const Var<T>& w, const Var<T>& b,
                     int dilation);
// signal [1, len] -> [frames, frame_len]; trailing partial frame dropped.
template <typename T>
Var<T> Frame(const Var<T>& signal, int frame_len, int hop);
// frames [n, frame_len] -> [1, length]; samples past the last frame are zero.
template <typename T>
Var<T> OverlapAdd(const Var<T>& frames, int hop, int length);

// -log softmax(logits)[target]; logits [1, classes].
template <typename T>
Var<T> CrossEntropy(const Var<T>& logits, int target);
// Scale-invariant SNR in dB of estimate [1, len] against a constant reference.
template <typename T>
Var<T> SiSnr(const Var<T>& estimate, std::span<const T> reference);

}  // namespace sccm::ag

#endif  // SCCM_OPS_H_
