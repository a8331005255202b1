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

#include "sccm/nn.h"

#include <cmath>
#include <map>

namespace sccm::nn {

template <typename T>
Var<T> UniformParam(int rows, int cols, double bound, Rng* rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix<T> m(rows, cols);
  for (auto& v : m.flat()) v = static_cast<T>(u(*rng));
  return Var<T>(std::move(m), true);
}

template <typename T>
Var<T> ConstantParam(int rows, int cols, T value) {
  return Var<T>(Matrix<T>(rows, cols, value), true);
}

template <typename T>
Linear<T>::Linear(int in, int out, bool bias, Rng* rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w = UniformParam<T>(out, in, bound, rng);
  if (bias) b = UniformParam<T>(1, out, bound, rng);
}

template <typename T>
void Linear<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  out->emplace_back(prefix + ".weight", w);
  if (b.defined()) out->emplace_back(prefix + ".bias", b);
}

template <typename T>
LayerNorm<T>::LayerNorm(int dim)
    : gamma(ConstantParam<T>(1, dim, T(1))), beta(ConstantParam<T>(1, dim, T(0))) {}

template <typename T>
void LayerNorm<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  out->emplace_back(prefix + ".gamma", gamma);
  out->emplace_back(prefix + ".beta", beta);
}

template <typename T>
GlobalNorm<T>::GlobalNorm(int dim)
    : gamma(ConstantParam<T>(1, dim, T(1))), beta(ConstantParam<T>(1, dim, T(0))) {}

template <typename T>
void GlobalNorm<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  out->emplace_back(prefix + ".gamma", gamma);
  out->emplace_back(prefix + ".beta", beta);
}

template <typename T>
PRelu<T>::PRelu() : alpha(ConstantParam<T>(1, 1, T(0.25))) {}

template <typename T>
void PRelu<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  out->emplace_back(prefix + ".alpha", alpha);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(int d_model, int heads_, int d_k_, int d_v_, Rng* rng)
    : heads(heads_), d_k(d_k_), d_v(d_v_),
      q(d_model, heads_ * d_k_, true, rng),
      k(d_model, heads_ * d_k_, true, rng),
      v(d_model, heads_ * d_v_, true, rng),
      o(heads_ * d_v_, d_model, true, rng) {}

template <typename T>
typename MultiHeadAttention<T>::KeyValue MultiHeadAttention<T>::Project(const Var<T>& memory) const {
  return {k(memory), v(memory)};
}

template <typename T>
Var<T> MultiHeadAttention<T>::Attend(const Var<T>& query, const KeyValue& kv, const Context& ctx,
                                     Matrix<T>* head_sum) const {
  const Var<T> qp = q(query);
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_k)));
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  if (head_sum) head_sum->Resize(query.rows(), kv.keys.rows());
  for (int h = 0; h < heads; ++h) {
    const Var<T> qh = heads == 1 ? qp : ag::SliceCols(qp, h * d_k, (h + 1) * d_k);
    const Var<T> kh = heads == 1 ? kv.keys : ag::SliceCols(kv.keys, h * d_k, (h + 1) * d_k);
    const Var<T> vh = heads == 1 ? kv.values : ag::SliceCols(kv.values, h * d_v, (h + 1) * d_v);
    Var<T> weights = ag::SoftmaxRows(ag::Scale(ag::MatMulNT(qh, kh), scale));
    if (head_sum) {
      for (size_t i = 0; i < head_sum->size(); ++i) (*head_sum)[i] += weights.value()[i];
    }
    weights = ApplyDropout(weights, ctx);
    outs.push_back(ag::MatMul(weights, vh));
  }
  return o(heads == 1 ? outs.front() : ag::ConcatCols(outs));
}

template <typename T>
void MultiHeadAttention<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  q.Collect(prefix + ".q", out);
  k.Collect(prefix + ".k", out);
  v.Collect(prefix + ".v", out);
  o.Collect(prefix + ".o", out);
}

template <typename T>
FeedForward<T>::FeedForward(int d_model, int d_ff, Rng* rng)
    : l1(d_model, d_ff, true, rng), l2(d_ff, d_model, true, rng) {}

template <typename T>
Var<T> FeedForward<T>::operator()(const Var<T>& x, const Context& ctx) const {
  return l2(ApplyDropout(ag::Relu(l1(x)), ctx));
}

template <typename T>
void FeedForward<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  l1.Collect(prefix + ".l1", out);
  l2.Collect(prefix + ".l2", out);
}

template <typename T>
EncoderBlock<T>::EncoderBlock(int d_model, int heads, int d_k, int d_v, int d_ff, bool pre_norm_,
                              Rng* rng)
    : attn(d_model, heads, d_k, d_v, rng), ff(d_model, d_ff, rng),
      ln1(d_model), ln2(d_model), pre_norm(pre_norm_) {}

template <typename T>
Var<T> EncoderBlock<T>::operator()(const Var<T>& x, const Context& ctx) const {
  if (pre_norm) {
    const Var<T> n1 = ln1(x);
    const Var<T> a = ag::Add(x, ApplyDropout(attn(n1, n1, ctx), ctx));
    return ag::Add(a, ApplyDropout(ff(ln2(a), ctx), ctx));
  }
  const Var<T> a = ln1(ag::Add(x, ApplyDropout(attn(x, x, ctx), ctx)));
  return ln2(ag::Add(a, ApplyDropout(ff(a, ctx), ctx)));
}

template <typename T>
void EncoderBlock<T>::Collect(const std::string& prefix, NamedParams<T>* out) const {
  attn.Collect(prefix + ".attn", out);
  ff.Collect(prefix + ".ff", out);
  ln1.Collect(prefix + ".ln1", out);
  ln2.Collect(prefix + ".ln2", out);
}

template <typename Src, typename Dst>
void CopyParams(const NamedParams<Src>& src, const NamedParams<Dst>& dst) {
  std::map<std::string, const Var<Src>*> by_name;
  for (const auto& [name, v] : src) by_name[name] = &v;
  for (const auto& [name, v] : dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeError("parameter " + name + " missing from source");
    const Matrix<Src>& s = it->second->value();
    Matrix<Dst>& d = const_cast<Var<Dst>&>(v).mutable_value();
    if (s.rows() != d.rows() || s.cols() != d.cols()) {
      throw ShapeError("parameter " + name + " has mismatched shape");
    }
    for (size_t i = 0; i < s.size(); ++i) d[i] = static_cast<Dst>(s[i]);
  }
}

#define SCCM_INSTANTIATE_NN(T)                                             \
  template Var<T> UniformParam<T>(int, int, double, Rng*);                \
  template Var<T> ConstantParam<T>(int, int, T);                          \
  template struct Linear<T>;                                              \
  template struct LayerNorm<T>;                                           \
  template struct GlobalNorm<T>;                                          \
  template struct PRelu<T>;                                               \
  template struct MultiHeadAttention<T>;                                  \
  template struct FeedForward<T>;                                         \
  template struct EncoderBlock<T>;

SCCM_INSTANTIATE_NN(float)
SCCM_INSTANTIATE_NN(double)

template void CopyParams<float, float>(const NamedParams<float>&, const NamedParams<float>&);
template void CopyParams<float, double>(const NamedParams<float>&, const NamedParams<double>&);
template void CopyParams<double, float>(const NamedParams<double>&, const NamedParams<float>&);
template void CopyParams<double, double>(const NamedParams<double>&, const NamedParams<double>&);

}  // namespace sccm::nn
