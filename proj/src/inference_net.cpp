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

#include "sccm/inference_net.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sccm/error.h"

namespace sccm {

std::vector<std::string> InferenceNetConfig::Validate() const {
  std::vector<std::string> errs;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back("inference_net." + msg);
  };
  need(num_bins >= 1, "num_bins must be >= 1");
  need(d_model >= 1, "d_model must be >= 1");
  need(heads >= 1, "heads must be >= 1");
  need(d_k >= 1 && d_v >= 1, "d_k and d_v must be >= 1");
  need(d_ff >= 1, "d_ff must be >= 1");
  need(encoder_blocks >= 0, "encoder_blocks must be >= 0");
  need(num_speakers >= 1, "num_speakers must be >= 1");
  need(max_steps >= 2, "max_steps must be >= 2");
  need(dropout >= 0 && dropout < 1, "dropout must be in [0, 1)");
  return errs;
}

template <typename T>
InferenceNet<T>::InferenceNet(const InferenceNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  const auto errs = cfg.Validate();
  if (!errs.empty()) throw ConfigError(errs.front());
  Rng rng(DeriveSeed(seed, {0x494e46ULL}));
  const int d = cfg.d_model;
  input_proj_ = nn::Linear<T>(cfg.num_bins, d, true, &rng);
  for (int m = 0; m < cfg.encoder_blocks; ++m) {
    blocks_.emplace_back(d, cfg.heads, cfg.d_k, cfg.d_v, cfg.d_ff, cfg.pre_norm, &rng);
  }
  if (cfg.pre_norm) encoder_norm_ = nn::LayerNorm<T>(d);
  step_embed_ = nn::Linear<T>(1, d, true, &rng);
  self_attn_ = nn::MultiHeadAttention<T>(d, cfg.heads, cfg.d_k, cfg.d_v, &rng);
  cross_attn_ = nn::MultiHeadAttention<T>(d, cfg.heads, cfg.d_k, cfg.d_v, &rng);
  ff_ = nn::FeedForward<T>(d, cfg.d_ff, &rng);
  ln1_ = nn::LayerNorm<T>(d);
  ln2_ = nn::LayerNorm<T>(d);
  ln3_ = nn::LayerNorm<T>(d);
  classifier_ = nn::Linear<T>(d, cfg.num_classes(), true, &rng);
}

template <typename T>
typename InferenceNet<T>::Encoded InferenceNet<T>::Encode(const Matrix<T>& spectrogram,
                                                          const nn::Context& ctx) const {
  if (spectrogram.cols() != cfg_.num_bins) {
    throw ShapeError("spectrogram has " + std::to_string(spectrogram.cols()) + " bins, model expects " +
                     std::to_string(cfg_.num_bins));
  }
  if (spectrogram.rows() < 1) throw ShapeError("spectrogram has no frames");
  Var x = input_proj_(Var(spectrogram));
  for (const auto& block : blocks_) x = block(x, ctx);
  if (cfg_.pre_norm) x = encoder_norm_(x);
  return {x, cross_attn_.Project(x)};
}

template <typename T>
typename InferenceNet<T>::Step InferenceNet<T>::DecodeStep(const Encoded& enc,
                                                           const std::vector<Var>& history, int i,
                                                           const nn::Context& ctx) const {
  if (i < 1 || i > cfg_.max_steps) {
    throw RuntimeError("decode step " + std::to_string(i) + " outside [1, " +
                       std::to_string(cfg_.max_steps) + "]");
  }
  const Var j = step_embed_(Var(Matrix<T>(1, 1, static_cast<T>(i))));
  Step step;
  if (cfg_.pre_norm) {
    const Var q = ln1_(j);
    std::vector<Var> kv_rows = history;
    kv_rows.push_back(q);
    const Var a = ag::Add(j, nn::ApplyDropout(self_attn_(q, ag::ConcatRows(kv_rows), ctx), ctx));
    const Var b = ag::Add(a, nn::ApplyDropout(cross_attn_.Attend(ln2_(a), enc.cross, ctx, &step.attention), ctx));
    step.hidden = ag::Add(b, nn::ApplyDropout(ff_(ln3_(b), ctx), ctx));
  } else {
    std::vector<Var> kv_rows = history;
    kv_rows.push_back(j);
    const Var a = ln1_(ag::Add(j, nn::ApplyDropout(self_attn_(j, ag::ConcatRows(kv_rows), ctx), ctx)));
    const Var b = ln2_(ag::Add(a, nn::ApplyDropout(cross_attn_.Attend(a, enc.cross, ctx, &step.attention), ctx)));
    step.hidden = ln3_(ag::Add(b, nn::ApplyDropout(ff_(b, ctx), ctx)));
  }
  step.logits = classifier_(step.hidden);
  return step;
}

template <typename T>
std::vector<typename InferenceNet<T>::Step> InferenceNet<T>::Decode(const Encoded& enc, int steps,
                                                                     const nn::Context& ctx) const {
  std::vector<Step> out;
  std::vector<Var> history;
  for (int i = 1; i <= steps; ++i) {
    out.push_back(DecodeStep(enc, history, i, ctx));
    history.push_back(out.back().hidden);
  }
  return out;
}

template <typename T>
nn::NamedParams<T> InferenceNet<T>::Params() const {
  nn::NamedParams<T> p;
  input_proj_.Collect("inference.input_proj", &p);
  for (size_t m = 0; m < blocks_.size(); ++m) blocks_[m].Collect("inference.encoder." + std::to_string(m), &p);
  if (cfg_.pre_norm) encoder_norm_.Collect("inference.encoder_norm", &p);
  step_embed_.Collect("inference.step_embed", &p);
  self_attn_.Collect("inference.decoder.self_attn", &p);
  cross_attn_.Collect("inference.decoder.cross_attn", &p);
  ff_.Collect("inference.decoder.ff", &p);
  ln1_.Collect("inference.decoder.ln1", &p);
  ln2_.Collect("inference.decoder.ln2", &p);
  ln3_.Collect("inference.decoder.ln3", &p);
  classifier_.Collect("inference.classifier", &p);
  return p;
}

template class InferenceNet<float>;
template class InferenceNet<double>;

namespace {

std::vector<float> Softmax(std::span<const float> logits) {
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : logits) mx = std::max(mx, v);
  std::vector<float> p(logits.size());
  double sum = 0;
  for (size_t c = 0; c < p.size(); ++c) sum += (p[c] = std::exp(logits[c] - mx));
  for (float& v : p) v = static_cast<float>(v / sum);
  return p;
}

}  // namespace

InferenceResult InferSpeakers(const InferenceNet<float>& net, const Matrix<float>& spectrogram) {
  ag::NoGradGuard no_grad;
  const auto& cfg = net.config();
  const nn::Context ctx = nn::Context::Eval();
  const auto enc = net.Encode(spectrogram, ctx);
  InferenceResult result;
  std::vector<ag::Var<float>> history;
  std::vector<bool> used(cfg.num_classes(), false);
  for (int i = 1; i <= cfg.max_steps; ++i) {
    auto step = net.DecodeStep(enc, history, i, ctx);
    history.push_back(step.hidden);
    InferenceStep out;
    out.distribution = Softmax(step.logits.value().flat());
    int best = -1;
    for (int c = 0; c < cfg.num_classes(); ++c) {
      if (used[c] && c != cfg.eos()) continue;
      if (best < 0 || out.distribution[c] > out.distribution[best]) best = c;
    }
    if (best == cfg.eos()) return result;
    used[best] = true;
    out.class_index = best;
    out.embedding.assign(step.hidden.value().flat().begin(), step.hidden.value().flat().end());
    out.attention.assign(step.attention.flat().begin(), step.attention.flat().end());
    result.steps.push_back(std::move(out));
  }
  result.truncated = true;
  return result;
}

std::vector<float> AttentionStatus(const InferenceNet<float>& net, const Matrix<float>& spectrogram,
                                   int step) {
  const InferenceResult r = InferSpeakers(net, spectrogram);
  if (step < 0 || step >= static_cast<int>(r.steps.size())) {
    throw DataError("attention step " + std::to_string(step) + " out of range; " +
                    std::to_string(r.steps.size()) + " speakers inferred");
  }
  return r.steps[step].attention;
}

}  // namespace sccm
