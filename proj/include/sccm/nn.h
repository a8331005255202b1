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

// Parameterized layers shared by the inference and extraction networks.

#ifndef SCCM_NN_H_
#define SCCM_NN_H_

#include <string>
#include <utility>
#include <vector>

#include "sccm/ops.h"
#include "sccm/random.h"

namespace sccm::nn {

using ag::Var;

// Parameters keyed by layer path, in a stable order.
template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

// Dropout state for one forward pass.
struct Context {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  static Context Eval() { return {}; }
};

template <typename T>
Var<T> ApplyDropout(const Var<T>& x, const Context& ctx) {
  return ag::Dropout<T>(x, static_cast<T>(ctx.dropout), ctx.training, ctx.rng);
}

// Parameter leaf initialized uniformly in [-bound, bound].
template <typename T>
Var<T> UniformParam(int rows, int cols, double bound, Rng* rng);
template <typename T>
Var<T> ConstantParam(int rows, int cols, T value);

template <typename T>
struct Linear {
  Var<T> w;  // [out, in]
  Var<T> b;  // [1, out], undefined without bias

  Linear() = default;
  Linear(int in, int out, bool bias, Rng* rng);
  Var<T> operator()(const Var<T>& x) const { return ag::Linear(x, w, b); }
  int in() const { return w.cols(); }
  int out() const { return w.rows(); }
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

// Per-row normalization over channels.
template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int dim);
  Var<T> operator()(const Var<T>& x) const { return ag::LayerNormRows(x, gamma, beta); }
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

// Normalization over time and channels jointly, per-channel affine.
template <typename T>
struct GlobalNorm {
  Var<T> gamma, beta;

  GlobalNorm() = default;
  explicit GlobalNorm(int dim);
  Var<T> operator()(const Var<T>& x) const { return ag::GlobalLayerNorm(x, gamma, beta); }
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

template <typename T>
struct PRelu {
  Var<T> alpha;  // 1x1

  PRelu();
  Var<T> operator()(const Var<T>& x) const { return ag::PRelu(x, alpha); }
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

template <typename T>
struct MultiHeadAttention {
  int heads = 1;
  int d_k = 0;
  int d_v = 0;
  Linear<T> q, k, v, o;

  struct KeyValue {
    Var<T> keys;    // [n, heads * d_k]
    Var<T> values;  // [n, heads * d_v]
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(int d_model, int heads, int d_k, int d_v, Rng* rng);

  KeyValue Project(const Var<T>& memory) const;
  // query [m, d_model] over projected memory. If head_sum is non-null it
  // receives the attention weights summed over heads, [m, n].
  Var<T> Attend(const Var<T>& query, const KeyValue& kv, const Context& ctx,
                Matrix<T>* head_sum = nullptr) const;
  Var<T> operator()(const Var<T>& query, const Var<T>& memory, const Context& ctx) const {
    return Attend(query, Project(memory), ctx);
  }
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

template <typename T>
struct FeedForward {
  Linear<T> l1, l2;

  FeedForward() = default;
  FeedForward(int d_model, int d_ff, Rng* rng);
  Var<T> operator()(const Var<T>& x, const Context& ctx) const;
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

// Self-attention + feed-forward with residuals. Post-norm places the norm
// after each residual sum, pre-norm before each sublayer.
template <typename T>
struct EncoderBlock {
  MultiHeadAttention<T> attn;
  FeedForward<T> ff;
  LayerNorm<T> ln1, ln2;
  bool pre_norm = false;

  EncoderBlock() = default;
  EncoderBlock(int d_model, int heads, int d_k, int d_v, int d_ff, bool pre_norm, Rng* rng);
  Var<T> operator()(const Var<T>& x, const Context& ctx) const;
  void Collect(const std::string& prefix, NamedParams<T>* out) const;
};

// Copies values between parameter lists with the same names and shapes.
template <typename Src, typename Dst>
void CopyParams(const NamedParams<Src>& src, const NamedParams<Dst>& dst);

template <typename T>
size_t CountParams(const NamedParams<T>& params) {
  size_t n = 0;
  for (const auto& [name, v] : params) n += v.value().size();
  return n;
}

}  // namespace sccm::nn

#endif  // SCCM_NN_H_
