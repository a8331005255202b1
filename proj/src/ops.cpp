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

#include "sccm/ops.h"

#include <cmath>

#include "sccm/kernels.h"
#include "sccm/signal.h"

namespace sccm::ag {
namespace {

using kernels::Trans;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
bool Wants(const NodePtr<T>& n) {
  return n && n->requires_grad;
}

template <typename T>
void AddInto(Matrix<T>* dst, const Matrix<T>& src, T scale = T(1)) {
  T* d = dst->data();
  const T* s = src.data();
  const size_t n = src.size();
#pragma omp parallel for simd schedule(static) if (n > 65536)
  for (size_t i = 0; i < n; ++i) d[i] += scale * s[i];
}

template <typename T>
void ColumnSumInto(const Matrix<T>& m, Matrix<T>* row) {
  for (int r = 0; r < m.rows(); ++r) {
    const T* src = m.data() + static_cast<size_t>(r) * m.cols();
    T* dst = row->data();
#pragma omp simd
    for (int c = 0; c < m.cols(); ++c) dst[c] += src[c];
  }
}

template <typename T, typename F>
Matrix<T> Map(const Matrix<T>& x, F f) {
  Matrix<T> y(x.rows(), x.cols());
  const T* xs = x.data();
  T* ys = y.data();
  const size_t n = x.size();
#pragma omp parallel for simd schedule(static) if (n > 65536)
  for (size_t i = 0; i < n; ++i) ys[i] = f(xs[i]);
  return y;
}

}  // namespace

template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  SCCM_CHECK_SHAPE(x.cols() == w.cols(), "linear input width");
  Matrix<T> y(x.rows(), w.rows());
  kernels::Gemm(Trans::kNo, Trans::kYes, T(1), x.value(), w.value(), T(0), &y);
  if (b.defined()) {
    SCCM_CHECK_SHAPE(b.rows() == 1 && b.cols() == w.rows(), "linear bias shape");
    const T* bias = b.value().data();
    for (int r = 0; r < y.rows(); ++r) {
      T* yr = y.data() + static_cast<size_t>(r) * y.cols();
#pragma omp simd
      for (int c = 0; c < y.cols(); ++c) yr[c] += bias[c];
    }
  }
  NodePtr<T> xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  std::vector<NodePtr<T>> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return MakeResult<T>(std::move(y), std::move(parents), [xn, wn, bn](Node<T>& self) {
    const Matrix<T>& dy = self.grad;
    if (Wants(xn)) kernels::Gemm(Trans::kNo, Trans::kNo, T(1), dy, wn->value, T(1), &xn->Grad());
    if (Wants(wn)) kernels::Gemm(Trans::kYes, Trans::kNo, T(1), dy, xn->value, T(1), &wn->Grad());
    if (Wants(bn)) ColumnSumInto(dy, &bn->Grad());
  });
}

template <typename T>
Var<T> MatMul(const Var<T>& a, const Var<T>& b) {
  SCCM_CHECK_SHAPE(a.cols() == b.rows(), "matmul inner dimension");
  Matrix<T> y(a.rows(), b.cols());
  kernels::Gemm(Trans::kNo, Trans::kNo, T(1), a.value(), b.value(), T(0), &y);
  NodePtr<T> an = a.node(), bn = b.node();
  return MakeResult<T>(std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    if (Wants(an)) kernels::Gemm(Trans::kNo, Trans::kYes, T(1), self.grad, bn->value, T(1), &an->Grad());
    if (Wants(bn)) kernels::Gemm(Trans::kYes, Trans::kNo, T(1), an->value, self.grad, T(1), &bn->Grad());
  });
}

template <typename T>
Var<T> MatMulNT(const Var<T>& a, const Var<T>& b) {
  SCCM_CHECK_SHAPE(a.cols() == b.cols(), "matmul_nt inner dimension");
  Matrix<T> y(a.rows(), b.rows());
  kernels::Gemm(Trans::kNo, Trans::kYes, T(1), a.value(), b.value(), T(0), &y);
  NodePtr<T> an = a.node(), bn = b.node();
  return MakeResult<T>(std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    if (Wants(an)) kernels::Gemm(Trans::kNo, Trans::kNo, T(1), self.grad, bn->value, T(1), &an->Grad());
    if (Wants(bn)) kernels::Gemm(Trans::kYes, Trans::kNo, T(1), self.grad, an->value, T(1), &bn->Grad());
  });
}

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  SCCM_CHECK_SHAPE(a.value().SameShape(b.value()), "add shape mismatch");
  Matrix<T> y = a.value();
  AddInto(&y, b.value());
  NodePtr<T> an = a.node(), bn = b.node();
  return MakeResult<T>(std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    if (Wants(an)) AddInto(&an->Grad(), self.grad);
    if (Wants(bn)) AddInto(&bn->Grad(), self.grad);
  });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  SCCM_CHECK_SHAPE(a.value().SameShape(b.value()), "sub shape mismatch");
  Matrix<T> y = a.value();
  AddInto(&y, b.value(), T(-1));
  NodePtr<T> an = a.node(), bn = b.node();
  return MakeResult<T>(std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    if (Wants(an)) AddInto(&an->Grad(), self.grad);
    if (Wants(bn)) AddInto(&bn->Grad(), self.grad, T(-1));
  });
}

template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  SCCM_CHECK_SHAPE(a.value().SameShape(b.value()), "mul shape mismatch");
  Matrix<T> y(a.rows(), a.cols());
  const size_t n = y.size();
  {
    const T* av = a.value().data();
    const T* bv = b.value().data();
    T* yv = y.data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (size_t i = 0; i < n; ++i) yv[i] = av[i] * bv[i];
  }
  NodePtr<T> an = a.node(), bn = b.node();
  return MakeResult<T>(std::move(y), {an, bn}, [an, bn, n](Node<T>& self) {
    const T* g = self.grad.data();
    if (Wants(an)) {
      T* d = an->Grad().data();
      const T* o = bn->value.data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
      for (size_t i = 0; i < n; ++i) d[i] += g[i] * o[i];
    }
    if (Wants(bn)) {
      T* d = bn->Grad().data();
      const T* o = an->value.data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
      for (size_t i = 0; i < n; ++i) d[i] += g[i] * o[i];
    }
  });
}

template <typename T>
Var<T> Scale(const Var<T>& a, T s) {
  Matrix<T> y = Map(a.value(), [s](T v) { return v * s; });
  NodePtr<T> an = a.node();
  return MakeResult<T>(std::move(y), {an}, [an, s](Node<T>& self) {
    AddInto(&an->Grad(), self.grad, s);
  });
}

template <typename T>
Var<T> ScaleBy(const Var<T>& a, const Var<T>& s) {
  SCCM_CHECK_SHAPE(s.rows() == 1 && s.cols() == 1, "scale_by expects a 1x1 factor");
  const T factor = s.item();
  Matrix<T> y = Map(a.value(), [factor](T v) { return v * factor; });
  NodePtr<T> an = a.node(), sn = s.node();
  return MakeResult<T>(std::move(y), {an, sn}, [an, sn](Node<T>& self) {
    const T factor = sn->value(0, 0);
    if (Wants(an)) AddInto(&an->Grad(), self.grad, factor);
    if (Wants(sn)) {
      double acc = 0;
      for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * an->value[i];
      sn->Grad()(0, 0) += static_cast<T>(acc);
    }
  });
}

template <typename T>
Var<T> AddRow(const Var<T>& a, const Var<T>& row) {
  SCCM_CHECK_SHAPE(row.rows() == 1 && row.cols() == a.cols(), "add_row shape");
  Matrix<T> y = a.value();
  const T* rv = row.value().data();
  for (int r = 0; r < y.rows(); ++r) {
    T* yr = y.data() + static_cast<size_t>(r) * y.cols();
#pragma omp simd
    for (int c = 0; c < y.cols(); ++c) yr[c] += rv[c];
  }
  NodePtr<T> an = a.node(), rn = row.node();
  return MakeResult<T>(std::move(y), {an, rn}, [an, rn](Node<T>& self) {
    if (Wants(an)) AddInto(&an->Grad(), self.grad);
    if (Wants(rn)) ColumnSumInto(self.grad, &rn->Grad());
  });
}

template <typename T>
Var<T> AddN(const std::vector<Var<T>>& xs) {
  SCCM_CHECK_SHAPE(!xs.empty(), "add_n of nothing");
  Matrix<T> y = xs[0].value();
  std::vector<NodePtr<T>> parents{xs[0].node()};
  for (size_t i = 1; i < xs.size(); ++i) {
    SCCM_CHECK_SHAPE(xs[i].value().SameShape(y), "add_n shape mismatch");
    AddInto(&y, xs[i].value());
    parents.push_back(xs[i].node());
  }
  std::vector<NodePtr<T>> captured = parents;
  return MakeResult<T>(std::move(y), std::move(parents), [captured](Node<T>& self) {
    for (const auto& p : captured)
      if (Wants(p)) AddInto(&p->Grad(), self.grad);
  });
}

template <typename T>
Var<T> SumAll(const Var<T>& x) {
  double acc = 0;
  for (size_t i = 0; i < x.value().size(); ++i) acc += x.value()[i];
  NodePtr<T> xn = x.node();
  return MakeResult<T>(Matrix<T>(1, 1, static_cast<T>(acc)), {xn}, [xn](Node<T>& self) {
    const T g = self.grad(0, 0);
    for (auto& v : xn->Grad().flat()) v += g;
  });
}

template <typename T>
Var<T> BroadcastRows(const Var<T>& row, int n) {
  SCCM_CHECK_SHAPE(row.rows() == 1, "broadcast_rows expects a row vector");
  Matrix<T> y(n, row.cols());
  for (int r = 0; r < n; ++r) std::copy_n(row.value().data(), row.cols(), y.row(r).data());
  NodePtr<T> rn = row.node();
  return MakeResult<T>(std::move(y), {rn}, [rn](Node<T>& self) {
    ColumnSumInto(self.grad, &rn->Grad());
  });
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  Matrix<T> y = Map(x.value(), [](T v) { return v > T(0) ? v : T(0); });
  NodePtr<T> xn = x.node();
  return MakeResult<T>(std::move(y), {xn}, [xn](Node<T>& self) {
    T* d = xn->Grad().data();
    const T* g = self.grad.data();
    const T* xv = xn->value.data();
    const size_t n = self.grad.size();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (size_t i = 0; i < n; ++i) d[i] += xv[i] > T(0) ? g[i] : T(0);
  });
}

template <typename T>
Var<T> Sigmoid(const Var<T>& x) {
  Matrix<T> y = Map(x.value(), [](T v) { return T(1) / (T(1) + std::exp(-v)); });
  NodePtr<T> xn = x.node();
  return MakeResult<T>(std::move(y), {xn}, [xn](Node<T>& self) {
    T* d = xn->Grad().data();
    const T* g = self.grad.data();
    const T* yv = self.value.data();
    const size_t n = self.grad.size();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (size_t i = 0; i < n; ++i) d[i] += g[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <typename T>
Var<T> PRelu(const Var<T>& x, const Var<T>& alpha) {
  SCCM_CHECK_SHAPE(alpha.rows() == 1 && alpha.cols() == 1, "prelu slope must be 1x1");
  const T a = alpha.item();
  Matrix<T> y = Map(x.value(), [a](T v) { return v > T(0) ? v : a * v; });
  NodePtr<T> xn = x.node(), an = alpha.node();
  return MakeResult<T>(std::move(y), {xn, an}, [xn, an](Node<T>& self) {
    const T a = an->value(0, 0);
    const T* g = self.grad.data();
    const T* xv = xn->value.data();
    const size_t n = self.grad.size();
    if (Wants(xn)) {
      T* d = xn->Grad().data();
#pragma omp parallel for simd schedule(static) if (n > 65536)
      for (size_t i = 0; i < n; ++i) d[i] += xv[i] > T(0) ? g[i] : a * g[i];
    }
    if (Wants(an)) {
      double acc = 0;
      for (size_t i = 0; i < n; ++i)
        if (!(xv[i] > T(0))) acc += g[i] * xv[i];
      an->Grad()(0, 0) += static_cast<T>(acc);
    }
  });
}

template <typename T>
Var<T> Dropout(const Var<T>& x, T p, bool training, std::mt19937_64* rng) {
  if (!training || p <= T(0)) return x;
  SCCM_CHECK_SHAPE(p < T(1), "dropout probability must be < 1");
  auto mask = std::make_shared<Matrix<T>>(x.rows(), x.cols());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - p);
  for (auto& m : mask->flat()) m = uni(*rng) >= p ? keep_scale : T(0);
  Matrix<T> y(x.rows(), x.cols());
  for (size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * (*mask)[i];
  NodePtr<T> xn = x.node();
  return MakeResult<T>(std::move(y), {xn}, [xn, mask](Node<T>& self) {
    Matrix<T>& d = xn->Grad();
    for (size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * (*mask)[i];
  });
}

template <typename T>
Var<T> LayerNormRows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  Matrix<T> y;
  auto xhat = std::make_shared<Matrix<T>>();
  auto inv = std::make_shared<std::vector<T>>();
  kernels::RowNorm(x.value(), gamma.value(), beta.value(), eps, &y, xhat.get(), inv.get());
  NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node();
  return MakeResult<T>(std::move(y), {xn, gn, bn}, [xn, gn, bn, xhat, inv](Node<T>& self) {
    kernels::RowNormBackward<T>(*xhat, gn->value, *inv, self.grad,
                                Wants(xn) ? &xn->Grad() : nullptr,
                                Wants(gn) ? &gn->Grad() : nullptr,
                                Wants(bn) ? &bn->Grad() : nullptr);
  });
}

template <typename T>
Var<T> GlobalLayerNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  Matrix<T> y;
  auto xhat = std::make_shared<Matrix<T>>();
  const kernels::NormStats<T> stats =
      kernels::GlobalNorm(x.value(), gamma.value(), beta.value(), eps, &y, xhat.get());
  NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node();
  const T inv_std = stats.inv_std;
  return MakeResult<T>(std::move(y), {xn, gn, bn}, [xn, gn, bn, xhat, inv_std](Node<T>& self) {
    kernels::GlobalNormBackward(*xhat, gn->value, inv_std, self.grad,
                                Wants(xn) ? &xn->Grad() : nullptr,
                                Wants(gn) ? &gn->Grad() : nullptr,
                                Wants(bn) ? &bn->Grad() : nullptr);
  });
}

template <typename T>
Var<T> SoftmaxRows(const Var<T>& x) {
  Matrix<T> y;
  kernels::SoftmaxRows(x.value(), &y);
  NodePtr<T> xn = x.node();
  return MakeResult<T>(std::move(y), {xn}, [xn](Node<T>& self) {
    kernels::SoftmaxRowsBackward(self.value, self.grad, &xn->Grad());
  });
}

template <typename T>
Var<T> SliceCols(const Var<T>& x, int begin, int end) {
  SCCM_CHECK_SHAPE(0 <= begin && begin <= end && end <= x.cols(), "slice_cols range");
  const int w = end - begin;
  Matrix<T> y(x.rows(), w);
  for (int r = 0; r < x.rows(); ++r)
    std::copy_n(x.value().row(r).data() + begin, w, y.row(r).data());
  NodePtr<T> xn = x.node();
  return MakeResult<T>(std::move(y), {xn}, [xn, begin, w](Node<T>& self) {
    Matrix<T>& d = xn->Grad();
    for (int r = 0; r < self.grad.rows(); ++r) {
      T* dr = d.row(r).data() + begin;
      const T* g = self.grad.row(r).data();
      for (int c = 0; c < w; ++c) dr[c] += g[c];
    }
  });
}

template <typename T>
Var<T> SliceRows(const Var<T>& x, int begin, int end) {
  SCCM_CHECK_SHAPE(0 <= begin && begin <= end && end <= x.rows(), "slice_rows range");
  const int cols = x.cols();
  Matrix<T> y(end - begin, cols);
  std::copy_n(x.value().data() + static_cast<size_t>(begin) * cols, y.size(), y.data());
  NodePtr<T> xn = x.node();
  return MakeResult<T>(std::move(y), {xn}, [xn, begin, cols](Node<T>& self) {
    T* d = xn->Grad().data() + static_cast<size_t>(begin) * cols;
    for (size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& xs) {
  SCCM_CHECK_SHAPE(!xs.empty(), "concat of nothing");
  const int rows = xs[0].rows();
  int total = 0;
  std::vector<int> offsets;
  std::vector<NodePtr<T>> parents;
  for (const auto& x : xs) {
    SCCM_CHECK_SHAPE(x.rows() == rows, "concat_cols row mismatch");
    offsets.push_back(total);
    total += x.cols();
    parents.push_back(x.node());
  }
  Matrix<T> y(rows, total);
  for (size_t i = 0; i < xs.size(); ++i)
    for (int r = 0; r < rows; ++r)
      std::copy_n(xs[i].value().row(r).data(), xs[i].cols(), y.row(r).data() + offsets[i]);
  std::vector<NodePtr<T>> captured = parents;
  return MakeResult<T>(std::move(y), std::move(parents), [captured, offsets](Node<T>& self) {
    for (size_t i = 0; i < captured.size(); ++i) {
      if (!Wants(captured[i])) continue;
      Matrix<T>& d = captured[i]->Grad();
      for (int r = 0; r < d.rows(); ++r) {
        const T* g = self.grad.row(r).data() + offsets[i];
        T* dr = d.row(r).data();
        for (int c = 0; c < d.cols(); ++c) dr[c] += g[c];
      }
    }
  });
}

template <typename T>
Var<T> ConcatRows(const std::vector<Var<T>>& xs) {
  SCCM_CHECK_SHAPE(!xs.empty(), "concat of nothing");
  const int cols = xs[0].cols();
  int total = 0;
  std::vector<int> offsets;
  std::vector<NodePtr<T>> parents;
  for (const auto& x : xs) {
    SCCM_CHECK_SHAPE(x.cols() == cols, "concat_rows column mismatch");
    offsets.push_back(total);
    total += x.rows();
    parents.push_back(x.node());
  }
  Matrix<T> y(total, cols);
  for (size_t i = 0; i < xs.size(); ++i)
    std::copy_n(xs[i].value().data(), xs[i].value().size(),
                y.data() + static_cast<size_t>(offsets[i]) * cols);
  std::vector<NodePtr<T>> captured = parents;
  return MakeResult<T>(std::move(y), std::move(parents), [captured, offsets, cols](Node<T>& self) {
    for (size_t i = 0; i < captured.size(); ++i) {
      if (!Wants(captured[i])) continue;
      Matrix<T>& d = captured[i]->Grad();
      const T* g = self.grad.data() + static_cast<size_t>(offsets[i]) * cols;
      for (size_t j = 0; j < d.size(); ++j) d[j] += g[j];
    }
  });
}

template <typename T>
Var<T> DepthwiseConv(const Var<T>& x, const Var<T>& w, const Var<T>& b, int dilation) {
  Matrix<T> y;
  static const Matrix<T> kNoBias;
  kernels::DepthwiseConv(x.value(), w.value(), b.defined() ? b.value() : kNoBias, dilation, &y);
  NodePtr<T> xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  std::vector<NodePtr<T>> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return MakeResult<T>(std::move(y), std::move(parents), [xn, wn, bn, dilation](Node<T>& self) {
    kernels::DepthwiseConvBackward(xn->value, wn->value, dilation, self.grad,
                                   Wants(xn) ? &xn->Grad() : nullptr,
                                   Wants(wn) ? &wn->Grad() : nullptr,
                                   Wants(bn) ? &bn->Grad() : nullptr);
  });
}

template <typename T>
Var<T> Frame(const Var<T>& signal, int frame_len, int hop) {
  SCCM_CHECK_SHAPE(signal.rows() == 1, "frame expects a [1, len] signal");
  SCCM_CHECK_SHAPE(frame_len > 0 && hop > 0, "frame length and hop must be positive");
  const int count = NumFrames(signal.cols(), frame_len, hop);
  SCCM_CHECK_SHAPE(count > 0, "signal shorter than one frame");
  Matrix<T> y(count, frame_len);
  kernels::Frame<T>(signal.value().flat(), hop, &y);
  NodePtr<T> sn = signal.node();
  return MakeResult<T>(std::move(y), {sn}, [sn, hop](Node<T>& self) {
    kernels::OverlapAdd<T>(self.grad, hop, sn->Grad().flat());
  });
}

template <typename T>
Var<T> OverlapAdd(const Var<T>& frames, int hop, int length) {
  SCCM_CHECK_SHAPE(frames.rows() == 0 || (frames.rows() - 1) * hop + frames.cols() <= length,
                   "overlap_add output too short");
  Matrix<T> y(1, length);
  kernels::OverlapAdd<T>(frames.value(), hop, y.flat());
  NodePtr<T> fn = frames.node();
  return MakeResult<T>(std::move(y), {fn}, [fn, hop](Node<T>& self) {
    Matrix<T> g(fn->value.rows(), fn->value.cols());
    kernels::Frame<T>(std::span<const T>(self.grad.flat()), hop, &g);
    AddInto(&fn->Grad(), g);
  });
}

template <typename T>
Var<T> CrossEntropy(const Var<T>& logits, int target) {
  SCCM_CHECK_SHAPE(logits.rows() == 1, "cross_entropy expects [1, classes]");
  SCCM_CHECK_SHAPE(0 <= target && target < logits.cols(), "cross_entropy target range");
  auto probs = std::make_shared<Matrix<T>>();
  kernels::SoftmaxRows(logits.value(), probs.get());
  const T loss = -std::log(std::max((*probs)(0, target), std::numeric_limits<T>::min()));
  NodePtr<T> ln = logits.node();
  return MakeResult<T>(Matrix<T>(1, 1, loss), {ln}, [ln, probs, target](Node<T>& self) {
    const T g = self.grad(0, 0);
    Matrix<T>& d = ln->Grad();
    for (int c = 0; c < d.cols(); ++c) {
      d(0, c) += g * ((*probs)(0, c) - (c == target ? T(1) : T(0)));
    }
  });
}

template <typename T>
Var<T> SiSnr(const Var<T>& estimate, std::span<const T> reference) {
  SCCM_CHECK_SHAPE(estimate.rows() == 1, "si_snr expects a [1, len] estimate");
  auto grad = std::make_shared<std::vector<double>>();
  const double db = sccm::SiSnr<T>(estimate.value().flat(), reference,
                                   GradEnabled() && estimate.requires_grad() ? grad.get() : nullptr);
  NodePtr<T> en = estimate.node();
  return MakeResult<T>(Matrix<T>(1, 1, static_cast<T>(db)), {en}, [en, grad](Node<T>& self) {
    const T g = self.grad(0, 0);
    Matrix<T>& d = en->Grad();
    for (size_t i = 0; i < grad->size(); ++i) d[i] += static_cast<T>(g * (*grad)[i]);
  });
}

#define SCCM_INSTANTIATE_OPS(T)                                                        \
  template Var<T> Linear(const Var<T>&, const Var<T>&, const Var<T>&);                 \
  template Var<T> MatMul(const Var<T>&, const Var<T>&);                                \
  template Var<T> MatMulNT(const Var<T>&, const Var<T>&);                              \
  template Var<T> Add(const Var<T>&, const Var<T>&);                                   \
  template Var<T> Sub(const Var<T>&, const Var<T>&);                                   \
  template Var<T> Mul(const Var<T>&, const Var<T>&);                                   \
  template Var<T> Scale(const Var<T>&, T);                                             \
  template Var<T> ScaleBy(const Var<T>&, const Var<T>&);                               \
  template Var<T> AddRow(const Var<T>&, const Var<T>&);                                \
  template Var<T> AddN(const std::vector<Var<T>>&);                                    \
  template Var<T> SumAll(const Var<T>&);                                               \
  template Var<T> BroadcastRows(const Var<T>&, int);                                   \
  template Var<T> Relu(const Var<T>&);                                                 \
  template Var<T> Sigmoid(const Var<T>&);                                              \
  template Var<T> PRelu(const Var<T>&, const Var<T>&);                                 \
  template Var<T> Dropout(const Var<T>&, T, bool, std::mt19937_64*);                   \
  template Var<T> LayerNormRows(const Var<T>&, const Var<T>&, const Var<T>&, T);       \
  template Var<T> GlobalLayerNorm(const Var<T>&, const Var<T>&, const Var<T>&, T);     \
  template Var<T> SoftmaxRows(const Var<T>&);                                          \
  template Var<T> SliceCols(const Var<T>&, int, int);                                  \
  template Var<T> SliceRows(const Var<T>&, int, int);                                  \
  template Var<T> ConcatCols(const std::vector<Var<T>>&);                              \
  template Var<T> ConcatRows(const std::vector<Var<T>>&);                              \
  template Var<T> DepthwiseConv(const Var<T>&, const Var<T>&, const Var<T>&, int);     \
  template Var<T> Frame(const Var<T>&, int, int);                                      \
  template Var<T> OverlapAdd(const Var<T>&, int, int);                                 \
  template Var<T> CrossEntropy(const Var<T>&, int);                                    \
  template Var<T> SiSnr(const Var<T>&, std::span<const T>);

SCCM_INSTANTIATE_OPS(float)
SCCM_INSTANTIATE_OPS(double)

}  // namespace sccm::ag
