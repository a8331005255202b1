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

#include "sccm/extraction_net.h"

#include <cmath>

#include "sccm/error.h"

namespace sccm {

std::vector<std::string> ExtractorConfig::Validate() const {
  std::vector<std::string> errs;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back("extraction_net." + msg);
  };
  need(n_filters >= 1, "n_filters must be >= 1");
  need(kernel >= 2 && kernel % 2 == 0, "kernel must be even and >= 2");
  need(bottleneck >= 1, "bottleneck must be >= 1");
  need(hidden >= 1, "hidden must be >= 1");
  need(conv_kernel >= 1 && conv_kernel % 2 == 1, "conv_kernel must be odd");
  need(blocks >= 1, "blocks must be >= 1");
  need(repeats >= 1, "repeats must be >= 1");
  need(cond_dim >= 1, "cond_dim must be >= 1");
  return errs;
}

FramePlan PlanFrames(int length, int kernel, int hop) {
  if (length < kernel) {
    throw DataError("input of " + std::to_string(length) + " samples is shorter than one kernel (" +
                    std::to_string(kernel) + ")");
  }
  FramePlan p;
  p.length = length;
  p.frames = (length - kernel + hop - 1) / hop + 1;
  p.padded = (p.frames - 1) * hop + kernel;
  return p;
}

namespace {

void CheckConfig(const ExtractorConfig& cfg) {
  const auto errs = cfg.Validate();
  if (!errs.empty()) throw ConfigError(errs.front());
}

template <typename T>
ag::Var<T> PadSignal(const ag::Var<T>& signal, const FramePlan& plan) {
  if (plan.padded == plan.length) return signal;
  return ag::ConcatCols<T>({signal, ag::Var<T>(Matrix<T>(1, plan.padded - plan.length))});
}

template <typename T>
ag::Var<T> EncodeFrames(const nn::Linear<T>& encoder, const ag::Var<T>& signal, const FramePlan& plan,
                        int kernel, int hop) {
  return ag::Relu(encoder(ag::Frame(PadSignal(signal, plan), kernel, hop)));
}

template <typename T>
ag::Var<T> DecodeFrames(const nn::Linear<T>& decoder, const ag::Var<T>& masked, const FramePlan& plan,
                        int hop) {
  const ag::Var<T> out = ag::OverlapAdd(decoder(masked), hop, plan.padded);
  return plan.padded == plan.length ? out : ag::SliceCols(out, 0, plan.length);
}

template <typename T>
void CheckSignal(const ag::Var<T>& signal) {
  SCCM_CHECK_SHAPE(signal.rows() == 1, "signal must be a [1, len] row");
}

}  // namespace

template <typename T>
TcnSeparator<T>::TcnSeparator(const ExtractorConfig& cfg, Rng* rng)
    : input_norm_(cfg.n_filters), bottleneck_(cfg.n_filters, cfg.bottleneck, true, rng) {
  const int total = cfg.repeats * cfg.blocks;
  for (int r = 0; r < cfg.repeats; ++r) {
    for (int x = 0; x < cfg.blocks; ++x) {
      Block b;
      b.in = nn::Linear<T>(cfg.bottleneck, cfg.hidden, true, rng);
      b.norm1 = nn::GlobalNorm<T>(cfg.hidden);
      b.norm2 = nn::GlobalNorm<T>(cfg.hidden);
      const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel));
      b.dw_weight = nn::UniformParam<T>(cfg.hidden, cfg.conv_kernel, bound, rng);
      b.dw_bias = nn::UniformParam<T>(1, cfg.hidden, bound, rng);
      b.dilation = 1 << x;
      if (static_cast<int>(blocks_.size()) + 1 < total) {
        b.residual = nn::Linear<T>(cfg.hidden, cfg.bottleneck, true, rng);
      }
      b.skip = nn::Linear<T>(cfg.hidden, cfg.bottleneck, true, rng);
      blocks_.push_back(std::move(b));
    }
  }
}

template <typename T>
ag::Var<T> TcnSeparator<T>::operator()(const Var& encoded) const {
  Var x = bottleneck_(input_norm_(encoded));
  std::vector<Var> skips;
  skips.reserve(blocks_.size());
  for (const Block& b : blocks_) {
    Var y = b.norm1(b.act1(b.in(x)));
    y = b.norm2(b.act2(ag::DepthwiseConv(y, b.dw_weight, b.dw_bias, b.dilation)));
    skips.push_back(b.skip(y));
    if (b.residual.w.defined()) x = ag::Add(x, b.residual(y));
  }
  return output_act_(ag::AddN(skips));
}

template <typename T>
void TcnSeparator<T>::Collect(const std::string& prefix, nn::NamedParams<T>* out) const {
  input_norm_.Collect(prefix + ".input_norm", out);
  bottleneck_.Collect(prefix + ".bottleneck", out);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    const std::string p = prefix + ".block" + std::to_string(i);
    b.in.Collect(p + ".in", out);
    b.act1.Collect(p + ".act1", out);
    b.norm1.Collect(p + ".norm1", out);
    out->emplace_back(p + ".dw.weight", b.dw_weight);
    out->emplace_back(p + ".dw.bias", b.dw_bias);
    b.act2.Collect(p + ".act2", out);
    b.norm2.Collect(p + ".norm2", out);
    if (b.residual.w.defined()) b.residual.Collect(p + ".residual", out);
    b.skip.Collect(p + ".skip", out);
  }
  output_act_.Collect(prefix + ".output_act", out);
}

template <typename T>
Extractor<T>::Extractor(const ExtractorConfig& cfg, uint64_t seed) : cfg_(cfg) {
  CheckConfig(cfg);
  Rng rng(DeriveSeed(seed, {0x455854ULL}));
  encoder_ = nn::Linear<T>(cfg.kernel, cfg.n_filters, false, &rng);
  separator_ = TcnSeparator<T>(cfg, &rng);
  // Bounds follow a single layer over the concatenated input.
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.bottleneck + cfg.cond_dim));
  mask_features_.w = nn::UniformParam<T>(cfg.n_filters, cfg.bottleneck, bound, &rng);
  mask_embedding_.w = nn::UniformParam<T>(cfg.n_filters, cfg.cond_dim, bound, &rng);
  mask_embedding_.b = nn::UniformParam<T>(1, cfg.n_filters, bound, &rng);
  decoder_ = nn::Linear<T>(cfg.n_filters, cfg.kernel, false, &rng);
}

template <typename T>
typename Extractor<T>::Analysis Extractor<T>::Analyze(const Var& signal) const {
  CheckSignal(signal);
  Analysis a;
  a.plan = PlanFrames(signal.cols(), cfg_.kernel, cfg_.hop());
  a.encoded = EncodeFrames(encoder_, signal, a.plan, cfg_.kernel, cfg_.hop());
  a.features = separator_(a.encoded);
  a.mask_partial = mask_features_(a.features);
  return a;
}

template <typename T>
ag::Var<T> Extractor<T>::Mask(const Analysis& analysis, const Var& embedding) const {
  if (embedding.rows() != 1 || embedding.cols() != cfg_.cond_dim) {
    throw ShapeError("embedding has width " + std::to_string(embedding.cols()) + ", extractor expects " +
                     std::to_string(cfg_.cond_dim));
  }
  return ag::Sigmoid(ag::AddRow(analysis.mask_partial, mask_embedding_(embedding)));
}

template <typename T>
ag::Var<T> Extractor<T>::Extract(const Analysis& analysis, const Var& embedding) const {
  const Var masked = ag::Mul(Mask(analysis, embedding), analysis.encoded);
  return DecodeFrames(decoder_, masked, analysis.plan, cfg_.hop());
}

template <typename T>
nn::NamedParams<T> Extractor<T>::Params() const {
  nn::NamedParams<T> p;
  encoder_.Collect("extractor.encoder", &p);
  separator_.Collect("extractor.separator", &p);
  mask_features_.Collect("extractor.mask.features", &p);
  mask_embedding_.Collect("extractor.mask.embedding", &p);
  decoder_.Collect("extractor.decoder", &p);
  return p;
}

template <typename T>
CascadeRefiner<T>::CascadeRefiner(const ExtractorConfig& cfg, uint64_t seed) : cfg_(cfg) {
  CheckConfig(cfg);
  Rng rng(DeriveSeed(seed, {0x434153ULL}));
  obs_encoder_ = nn::Linear<T>(cfg.kernel, cfg.n_filters, false, &rng);
  est_encoder_ = nn::Linear<T>(cfg.kernel, cfg.n_filters, false, &rng);
  separator_ = TcnSeparator<T>(cfg, &rng);
  mask_head_ = nn::Linear<T>(cfg.bottleneck, cfg.n_filters, true, &rng);
  decoder_ = nn::Linear<T>(cfg.n_filters, cfg.kernel, false, &rng);
  gate_ = nn::ConstantParam<T>(1, 1, T(0));
}

template <typename T>
ag::Var<T> CascadeRefiner<T>::Refine(const Var& observation, const Var& estimate) const {
  CheckSignal(observation);
  CheckSignal(estimate);
  if (observation.cols() != estimate.cols()) {
    throw DataError("cascade inputs differ in length (" + std::to_string(observation.cols()) + " vs " +
                    std::to_string(estimate.cols()) + ")");
  }
  const FramePlan plan = PlanFrames(observation.cols(), cfg_.kernel, cfg_.hop());
  const Var obs = EncodeFrames(obs_encoder_, observation, plan, cfg_.kernel, cfg_.hop());
  const Var est = EncodeFrames(est_encoder_, estimate, plan, cfg_.kernel, cfg_.hop());
  const Var mask = ag::Sigmoid(mask_head_(separator_(ag::Add(obs, est))));
  const Var correction = DecodeFrames(decoder_, ag::Mul(mask, obs), plan, cfg_.hop());
  return ag::Add(estimate, ag::ScaleBy(correction, gate_));
}

template <typename T>
nn::NamedParams<T> CascadeRefiner<T>::Params() const {
  nn::NamedParams<T> p;
  obs_encoder_.Collect("cascade.obs_encoder", &p);
  est_encoder_.Collect("cascade.est_encoder", &p);
  separator_.Collect("cascade.separator", &p);
  mask_head_.Collect("cascade.mask", &p);
  decoder_.Collect("cascade.decoder", &p);
  p.emplace_back("cascade.gate", gate_);
  return p;
}

template <typename T>
PitSeparator<T>::PitSeparator(const ExtractorConfig& cfg, int outputs, uint64_t seed)
    : cfg_(cfg), outputs_(outputs) {
  CheckConfig(cfg);
  if (outputs < 1) throw ConfigError("baseline needs at least one output");
  Rng rng(DeriveSeed(seed, {0x504954ULL}));
  encoder_ = nn::Linear<T>(cfg.kernel, cfg.n_filters, false, &rng);
  separator_ = TcnSeparator<T>(cfg, &rng);
  mask_head_ = nn::Linear<T>(cfg.bottleneck, outputs * cfg.n_filters, true, &rng);
  decoder_ = nn::Linear<T>(cfg.n_filters, cfg.kernel, false, &rng);
}

template <typename T>
std::vector<ag::Var<T>> PitSeparator<T>::Separate(const Var& signal) const {
  CheckSignal(signal);
  const FramePlan plan = PlanFrames(signal.cols(), cfg_.kernel, cfg_.hop());
  const Var enc = EncodeFrames(encoder_, signal, plan, cfg_.kernel, cfg_.hop());
  const Var masks = ag::Sigmoid(mask_head_(separator_(enc)));
  std::vector<Var> out;
  for (int c = 0; c < outputs_; ++c) {
    const Var m = ag::SliceCols(masks, c * cfg_.n_filters, (c + 1) * cfg_.n_filters);
    out.push_back(DecodeFrames(decoder_, ag::Mul(m, enc), plan, cfg_.hop()));
  }
  return out;
}

template <typename T>
nn::NamedParams<T> PitSeparator<T>::Params() const {
  nn::NamedParams<T> p;
  encoder_.Collect("pit.encoder", &p);
  separator_.Collect("pit.separator", &p);
  mask_head_.Collect("pit.mask", &p);
  decoder_.Collect("pit.decoder", &p);
  return p;
}

template class TcnSeparator<float>;
template class TcnSeparator<double>;
template class Extractor<float>;
template class Extractor<double>;
template class CascadeRefiner<float>;
template class CascadeRefiner<double>;
template class PitSeparator<float>;
template class PitSeparator<double>;

namespace {

ag::Var<float> AsRow(const Waveform& w) {
  ValidateWaveform(w);
  return ag::Var<float>(Matrix<float>::RowVector(w.view()));
}

Waveform ToWaveform(const ag::Var<float>& v, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(v.value().flat().begin(), v.value().flat().end());
  return w;
}

}  // namespace

Waveform Extract(const Extractor<float>& net, const Waveform& observation,
                 std::span<const float> embedding) {
  return ExtractAll(net, observation, {std::vector<float>(embedding.begin(), embedding.end())}).front();
}

std::vector<Waveform> ExtractAll(const Extractor<float>& net, const Waveform& observation,
                                 const std::vector<std::vector<float>>& embeddings) {
  std::vector<Waveform> out;
  if (embeddings.empty()) return out;
  ag::NoGradGuard no_grad;
  const auto analysis = net.Analyze(AsRow(observation));
  for (const auto& h : embeddings) {
    const ag::Var<float> e(Matrix<float>::RowVector(h));
    out.push_back(ToWaveform(net.Extract(analysis, e), observation.sample_rate));
  }
  return out;
}

Waveform CascadeRefine(const CascadeRefiner<float>& net, const Waveform& observation,
                       const Waveform& estimate) {
  ag::NoGradGuard no_grad;
  return ToWaveform(net.Refine(AsRow(observation), AsRow(estimate)), observation.sample_rate);
}

std::vector<Waveform> SeparatePit(const PitSeparator<float>& net, const Waveform& observation) {
  ag::NoGradGuard no_grad;
  std::vector<Waveform> out;
  for (const auto& v : net.Separate(AsRow(observation))) out.push_back(ToWaveform(v, observation.sample_rate));
  return out;
}

}  // namespace sccm
