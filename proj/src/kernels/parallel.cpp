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

// OpenMP kernels. Reductions go through per-thread partials combined in
// thread order, so results are bit-reproducible for a fixed thread count.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels/checks.h"
#include "sccm/kernels.h"

namespace sccm::kernels::parallel {
namespace {

template <typename T>
struct Simd;
template <>
struct Simd<float> {
  typedef float Vec __attribute__((vector_size(64)));
  static constexpr int kLanes = 16;
};
template <>
struct Simd<double> {
  typedef double Vec __attribute__((vector_size(64)));
  static constexpr int kLanes = 8;
};

// Register tile: kMr rows of A by two SIMD vectors of B.
constexpr int kMr = 6;
constexpr int kKc = 256;
constexpr int kMc = 96;

template <typename T>
constexpr int kNr = 2 * Simd<T>::kLanes;

template <typename V, typename T>
inline V Load(const T* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

template <typename V, typename T>
inline void Store(T* p, const V& v) {
  std::memcpy(p, &v, sizeof(V));
}

// Element accessor for op(x) with explicit strides.
template <typename T>
struct StridedView {
  const T* data;
  long row_stride;
  long col_stride;
  T operator()(long r, long c) const { return data[r * row_stride + c * col_stride]; }
};

template <typename T>
StridedView<T> View(const Matrix<T>& m, Trans t) {
  return t == Trans::kNo ? StridedView<T>{m.data(), m.cols(), 1}
                         : StridedView<T>{m.data(), 1, m.cols()};
}

// Packs rows [i0, i0+mc) x depth [p0, p0+kc) of op(A) into kMr-row panels,
// each stored depth-major and zero-padded.
template <typename T>
void PackA(const StridedView<T>& a, int i0, int mc, int p0, int kc, T* out) {
  for (int ir = 0; ir < mc; ir += kMr) {
    const int rows = std::min(kMr, mc - ir);
    for (int p = 0; p < kc; ++p) {
      for (int r = 0; r < kMr; ++r) {
        *out++ = r < rows ? a(i0 + ir + r, p0 + p) : T(0);
      }
    }
  }
}

template <typename T>
void PackB(const StridedView<T>& b, int j0, int nc, int p0, int kc, T* out) {
  constexpr int nr = kNr<T>;
  for (int jr = 0; jr < nc; jr += nr) {
    const int cols = std::min(nr, nc - jr);
    for (int p = 0; p < kc; ++p) {
      if (cols == nr && b.col_stride == 1) {
        std::memcpy(out, &b.data[(p0 + p) * b.row_stride + j0 + jr], nr * sizeof(T));
        out += nr;
      } else {
        for (int c = 0; c < nr; ++c) *out++ = c < cols ? b(p0 + p, j0 + jr + c) : T(0);
      }
    }
  }
}

template <typename T>
void MicroKernel(int kc, const T* ap, const T* bp, T alpha, T* c, int ldc,
                 int rows, int cols) {
  using V = typename Simd<T>::Vec;
  constexpr int lanes = Simd<T>::kLanes;
  constexpr int nr = kNr<T>;
  V acc[kMr][2];
  for (int r = 0; r < kMr; ++r) acc[r][0] = acc[r][1] = V{};
  for (int p = 0; p < kc; ++p) {
    const V b0 = Load<V>(bp);
    const V b1 = Load<V>(bp + lanes);
    bp += nr;
    for (int r = 0; r < kMr; ++r) {
      const T av = ap[r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
    ap += kMr;
  }
  if (rows == kMr && cols == nr) {
    for (int r = 0; r < kMr; ++r) {
      T* crow = c + static_cast<long>(r) * ldc;
      Store(crow, Load<V>(crow) + alpha * acc[r][0]);
      Store(crow + lanes, Load<V>(crow + lanes) + alpha * acc[r][1]);
    }
    return;
  }
  alignas(64) T tile[kMr * nr];
  for (int r = 0; r < kMr; ++r) {
    Store(tile + r * nr, acc[r][0]);
    Store(tile + r * nr + lanes, acc[r][1]);
  }
  for (int r = 0; r < rows; ++r) {
    T* crow = c + static_cast<long>(r) * ldc;
    for (int j = 0; j < cols; ++j) crow[j] += alpha * tile[r * nr + j];
  }
}

// Sums per-thread partials in thread order.
template <typename T, typename F>
void ParallelAccumulate(int n, int width, F&& body, T* out) {
#ifdef _OPENMP
  const int threads = omp_get_max_threads();
#else
  const int threads = 1;
#endif
  if (threads == 1) {
    std::vector<double> acc(width, 0.0);
    body(0, n, acc.data());
    for (int i = 0; i < width; ++i) out[i] += static_cast<T>(acc[i]);
    return;
  }
  std::vector<std::vector<double>> partial(threads, std::vector<double>(width, 0.0));
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    const int chunk = (n + threads - 1) / threads;
    const int begin = std::min(n, tid * chunk);
    const int end = std::min(n, begin + chunk);
    body(begin, end, partial[tid].data());
  }
  for (int i = 0; i < width; ++i) {
    double s = 0;
    for (int t = 0; t < threads; ++t) s += partial[t][i];
    out[i] += static_cast<T>(s);
  }
}

}  // namespace

template <typename T>
void Gemm(Trans ta, Trans tb, T alpha, const Matrix<T>& a, const Matrix<T>& b,
          T beta, Matrix<T>* c) {
  int m, n, k;
  internal::CheckGemmShapes(ta, tb, a, b, *c, &m, &n, &k);
  if (beta == T(0)) {
    c->SetZero();
  } else if (beta != T(1)) {
    for (auto& v : c->flat()) v *= beta;
  }
  if (m == 0 || n == 0 || k == 0 || alpha == T(0)) return;

  constexpr int nr = kNr<T>;
  const StridedView<T> av = View(a, ta);
  const StridedView<T> bv = View(b, tb);
  const int n_panels = (n + nr - 1) / nr;
  std::vector<T> bpack(static_cast<size_t>(n_panels) * nr * kKc);
  const int m_blocks = (m + kMc - 1) / kMc;
  T* cdata = c->data();
  const int ldc = c->cols();

  for (int p0 = 0; p0 < k; p0 += kKc) {
    const int kc = std::min(kKc, k - p0);
    PackB(bv, 0, n, p0, kc, bpack.data());
#pragma omp parallel if (m_blocks > 1)
    {
      std::vector<T> apack(static_cast<size_t>(kMc) * kc);
#pragma omp for schedule(static)
      for (int blk = 0; blk < m_blocks; ++blk) {
        const int i0 = blk * kMc;
        const int mc = std::min(kMc, m - i0);
        PackA(av, i0, mc, p0, kc, apack.data());
        for (int jp = 0; jp < n_panels; ++jp) {
          const int j0 = jp * nr;
          const int cols = std::min(nr, n - j0);
          const T* bp = bpack.data() + static_cast<size_t>(jp) * nr * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            const int rows = std::min(kMr, mc - ir);
            MicroKernel(kc, apack.data() + static_cast<size_t>(ir) * kc, bp, alpha,
                        cdata + static_cast<long>(i0 + ir) * ldc + j0, ldc, rows, cols);
          }
        }
      }
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
  std::vector<T> wt(static_cast<size_t>(taps) * channels);
  for (int c = 0; c < channels; ++c)
    for (int p = 0; p < taps; ++p) wt[p * channels + c] = w(c, p);
  const T* xd = x.data();
  T* yd = y->data();
#pragma omp parallel for schedule(static)
  for (int t = 0; t < steps; ++t) {
    T* yrow = yd + static_cast<long>(t) * channels;
    if (!bias.empty()) {
      std::memcpy(yrow, bias.data(), channels * sizeof(T));
    }
    for (int p = 0; p < taps; ++p) {
      const int src = t + (p - half) * dilation;
      if (src < 0 || src >= steps) continue;
      const T* xrow = xd + static_cast<long>(src) * channels;
      const T* wrow = wt.data() + static_cast<long>(p) * channels;
#pragma omp simd
      for (int c = 0; c < channels; ++c) yrow[c] += wrow[c] * xrow[c];
    }
  }
}

template <typename T>
void DepthwiseConvBackward(const Matrix<T>& x, const Matrix<T>& w, int dilation,
                           const Matrix<T>& dy, Matrix<T>* dx, Matrix<T>* dw,
                           Matrix<T>* dbias) {
  const int steps = x.rows(), channels = x.cols(), taps = w.cols();
  const int half = (taps - 1) / 2;
  std::vector<T> wt(static_cast<size_t>(taps) * channels);
  for (int c = 0; c < channels; ++c)
    for (int p = 0; p < taps; ++p) wt[p * channels + c] = w(c, p);
  const T* xd = x.data();
  const T* gd = dy.data();

  if (dx != nullptr) {
    T* dxd = dx->data();
    // Gather form: dx[s] = sum_p w[p] * dy[s - offset_p].
#pragma omp parallel for schedule(static)
    for (int s = 0; s < steps; ++s) {
      T* dxrow = dxd + static_cast<long>(s) * channels;
      for (int p = 0; p < taps; ++p) {
        const int t = s - (p - half) * dilation;
        if (t < 0 || t >= steps) continue;
        const T* grow = gd + static_cast<long>(t) * channels;
        const T* wrow = wt.data() + static_cast<long>(p) * channels;
#pragma omp simd
        for (int c = 0; c < channels; ++c) dxrow[c] += wrow[c] * grow[c];
      }
    }
  }
  if (dw == nullptr && dbias == nullptr) return;
  // Partial layout: [taps * channels] weight grads then [channels] bias grads.
  const int width = (taps + 1) * channels;
  std::vector<T> sums(width, T(0));
  ParallelAccumulate<T>(
      steps, width,
      [&](int begin, int end, double* acc) {
        std::vector<T> local(width, T(0));
        for (int t = begin; t < end; ++t) {
          const T* grow = gd + static_cast<long>(t) * channels;
          for (int p = 0; p < taps; ++p) {
            const int src = t + (p - half) * dilation;
            if (src < 0 || src >= steps) continue;
            const T* xrow = xd + static_cast<long>(src) * channels;
            T* l = local.data() + p * channels;
#pragma omp simd
            for (int c = 0; c < channels; ++c) l[c] += grow[c] * xrow[c];
          }
          T* lb = local.data() + taps * channels;
#pragma omp simd
          for (int c = 0; c < channels; ++c) lb[c] += grow[c];
        }
        for (int i = 0; i < width; ++i) acc[i] += local[i];
      },
      sums.data());
  if (dw != nullptr) {
    for (int c = 0; c < channels; ++c)
      for (int p = 0; p < taps; ++p) (*dw)(c, p) += sums[p * channels + c];
  }
  if (dbias != nullptr) {
    for (int c = 0; c < channels; ++c) (*dbias)(0, c) += sums[taps * channels + c];
  }
}

template <typename T>
NormStats<T> GlobalNorm(const Matrix<T>& x, const Matrix<T>& gamma,
                        const Matrix<T>& beta, T eps, Matrix<T>* y,
                        Matrix<T>* xhat) {
  internal::CheckAffine(x, gamma, beta);
  const int rows = x.rows(), cols = x.cols();
  const double n = static_cast<double>(x.size());
  double sum = 0;
  ParallelAccumulate<double>(
      rows, 1,
      [&](int begin, int end, double* acc) {
        double s = 0;
        for (long i = static_cast<long>(begin) * cols; i < static_cast<long>(end) * cols; ++i)
          s += x[i];
        acc[0] += s;
      },
      &sum);
  const double mean = sum / n;
  double sq = 0;
  ParallelAccumulate<double>(
      rows, 1,
      [&](int begin, int end, double* acc) {
        double s = 0;
        for (long i = static_cast<long>(begin) * cols; i < static_cast<long>(end) * cols; ++i) {
          const double d = x[i] - mean;
          s += d * d;
        }
        acc[0] += s;
      },
      &sq);
  NormStats<T> stats{static_cast<T>(mean), static_cast<T>(1.0 / std::sqrt(sq / n + eps))};
  y->Resize(rows, cols);
  xhat->Resize(rows, cols);
  const T* g = gamma.data();
  const T* b = beta.data();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.data() + static_cast<long>(r) * cols;
    T* hr = xhat->data() + static_cast<long>(r) * cols;
    T* yr = y->data() + static_cast<long>(r) * cols;
#pragma omp simd
    for (int c = 0; c < cols; ++c) {
      const T h = (xr[c] - stats.mean) * stats.inv_std;
      hr[c] = h;
      yr[c] = g[c] * h + b[c];
    }
  }
  return stats;
}

template <typename T>
void GlobalNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma, T inv_std,
                        const Matrix<T>& dy, Matrix<T>* dx, Matrix<T>* dgamma,
                        Matrix<T>* dbeta) {
  const int rows = xhat.rows(), cols = xhat.cols();
  const double n = static_cast<double>(xhat.size());
  const T* g = gamma.data();
  // Partials: [cols] dgamma, [cols] dbeta, mean_g, mean_gh.
  const int width = 2 * cols + 2;
  std::vector<double> sums(width, 0.0);
  ParallelAccumulate<double>(
      rows, width,
      [&](int begin, int end, double* acc) {
        std::vector<T> dg(cols, T(0)), db(cols, T(0));
        double s_g = 0, s_gh = 0;
        for (int r = begin; r < end; ++r) {
          const T* hr = xhat.data() + static_cast<long>(r) * cols;
          const T* dr = dy.data() + static_cast<long>(r) * cols;
          T row_g = 0, row_gh = 0;
#pragma omp simd reduction(+ : row_g, row_gh)
          for (int c = 0; c < cols; ++c) {
            const T gv = dr[c] * g[c];
            row_g += gv;
            row_gh += gv * hr[c];
            dg[c] += dr[c] * hr[c];
            db[c] += dr[c];
          }
          s_g += row_g;
          s_gh += row_gh;
        }
        for (int c = 0; c < cols; ++c) {
          acc[c] += dg[c];
          acc[cols + c] += db[c];
        }
        acc[2 * cols] += s_g;
        acc[2 * cols + 1] += s_gh;
      },
      sums.data());
  if (dgamma != nullptr)
    for (int c = 0; c < cols; ++c) (*dgamma)(0, c) += static_cast<T>(sums[c]);
  if (dbeta != nullptr)
    for (int c = 0; c < cols; ++c) (*dbeta)(0, c) += static_cast<T>(sums[cols + c]);
  if (dx == nullptr) return;
  const T mean_g = static_cast<T>(sums[2 * cols] / n);
  const T mean_gh = static_cast<T>(sums[2 * cols + 1] / n);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* hr = xhat.data() + static_cast<long>(r) * cols;
    const T* dr = dy.data() + static_cast<long>(r) * cols;
    T* out = dx->data() + static_cast<long>(r) * cols;
#pragma omp simd
    for (int c = 0; c < cols; ++c) {
      out[c] += inv_std * (dr[c] * g[c] - mean_g - hr[c] * mean_gh);
    }
  }
}

template <typename T>
void RowNorm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta,
             T eps, Matrix<T>* y, Matrix<T>* xhat, std::vector<T>* inv_std) {
  internal::CheckAffine(x, gamma, beta);
  const int rows = x.rows(), cols = x.cols();
  y->Resize(rows, cols);
  xhat->Resize(rows, cols);
  inv_std->assign(rows, T(0));
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.data() + static_cast<long>(r) * cols;
    double mean = 0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= cols;
    double var = 0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= cols;
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*inv_std)[r] = inv;
    T* hr = xhat->data() + static_cast<long>(r) * cols;
    T* yr = y->data() + static_cast<long>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      hr[c] = static_cast<T>((xr[c] - mean) * inv);
      yr[c] = gamma[c] * hr[c] + beta[c];
    }
  }
}

template <typename T>
void RowNormBackward(const Matrix<T>& xhat, const Matrix<T>& gamma,
                     std::span<const T> inv_std, const Matrix<T>& dy,
                     Matrix<T>* dx, Matrix<T>* dgamma, Matrix<T>* dbeta) {
  const int rows = xhat.rows(), cols = xhat.cols();
  if (dgamma != nullptr || dbeta != nullptr) {
    std::vector<T> sums(2 * cols, T(0));
    ParallelAccumulate<T>(
        rows, 2 * cols,
        [&](int begin, int end, double* acc) {
          for (int r = begin; r < end; ++r)
            for (int c = 0; c < cols; ++c) {
              acc[c] += dy(r, c) * xhat(r, c);
              acc[cols + c] += dy(r, c);
            }
        },
        sums.data());
    for (int c = 0; c < cols; ++c) {
      if (dgamma != nullptr) (*dgamma)(0, c) += sums[c];
      if (dbeta != nullptr) (*dbeta)(0, c) += sums[cols + c];
    }
  }
  if (dx == nullptr) return;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double mean_g = 0, mean_gh = 0;
    for (int c = 0; c < cols; ++c) {
      const double g = dy(r, c) * gamma(0, c);
      mean_g += g;
      mean_gh += g * xhat(r, c);
    }
    mean_g /= cols;
    mean_gh /= cols;
    for (int c = 0; c < cols; ++c) {
      const double g = dy(r, c) * gamma(0, c);
      (*dx)(r, c) += static_cast<T>(inv_std[r] * (g - mean_g - xhat(r, c) * mean_gh));
    }
  }
}

template <typename T>
void SoftmaxRows(const Matrix<T>& x, Matrix<T>* y) {
  const int rows = x.rows(), cols = x.cols();
  y->Resize(rows, cols);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.data() + static_cast<long>(r) * cols;
    T* yr = y->data() + static_cast<long>(r) * cols;
    const T mx = *std::max_element(xr, xr + cols);
    double sum = 0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(static_cast<double>(xr[c] - mx));
      yr[c] = static_cast<T>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) yr[c] = static_cast<T>(yr[c] * inv);
  }
}

template <typename T>
void SoftmaxRowsBackward(const Matrix<T>& y, const Matrix<T>& dy, Matrix<T>* dx) {
  const int rows = y.rows(), cols = y.cols();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* yr = y.data() + static_cast<long>(r) * cols;
    const T* gr = dy.data() + static_cast<long>(r) * cols;
    T* out = dx->data() + static_cast<long>(r) * cols;
    double dot = 0;
    for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
    const T d = static_cast<T>(dot);
#pragma omp simd
    for (int c = 0; c < cols; ++c) out[c] += yr[c] * (gr[c] - d);
  }
}

template <typename T>
void Frame(std::span<const T> signal, int hop, Matrix<T>* frames) {
  const int len = frames->cols(), count = frames->rows();
  SCCM_CHECK_SHAPE(count == 0 ||
                       static_cast<size_t>((count - 1) * hop + len) <= signal.size(),
                   "framing exceeds signal");
#pragma omp parallel for schedule(static)
  for (int f = 0; f < count; ++f) {
    std::memcpy(frames->data() + static_cast<long>(f) * len,
                signal.data() + static_cast<long>(f) * hop, len * sizeof(T));
  }
}

template <typename T>
void OverlapAdd(const Matrix<T>& frames, int hop, std::span<T> out) {
  const int len = frames.cols(), count = frames.rows();
  SCCM_CHECK_SHAPE(count == 0 ||
                       static_cast<size_t>((count - 1) * hop + len) <= out.size(),
                   "overlap-add exceeds output");
  // Frames overlapping the same output samples are split into phases so no
  // two concurrently processed frames write the same sample.
  const int phases = (len + hop - 1) / hop;
  for (int phase = 0; phase < phases; ++phase) {
#pragma omp parallel for schedule(static)
    for (int f = phase; f < count; f += phases) {
      const T* fr = frames.data() + static_cast<long>(f) * len;
      T* o = out.data() + static_cast<long>(f) * hop;
#pragma omp simd
      for (int l = 0; l < len; ++l) o[l] += fr[l];
    }
  }
}

SCCM_INSTANTIATE_KERNELS(float)
SCCM_INSTANTIATE_KERNELS(double)

}  // namespace sccm::kernels::parallel
