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

// Time-domain conditional extractor: learned-basis encoder, dilated temporal
// convolution separator, one sigmoid mask per speaker embedding, learned
// decoder with overlap-add. Also the cascade refinement stage and a
// fixed-output permutation-trained baseline on the same backbone.

#ifndef SCCM_EXTRACTION_NET_H_
#define SCCM_EXTRACTION_NET_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sccm/nn.h"
#include "sccm/signal.h"

namespace sccm {

struct ExtractorConfig {
  int n_filters = 64;    // N
  int kernel = 16;       // L, encoder frame length; hop is L / 2
  int bottleneck = 64;   // B
  int hidden = 128;      // H
  int conv_kernel = 3;   // P
  int blocks = 4;        // X, dilations 1..2^(X-1)
  int repeats = 2;       // R
  int cond_dim = 64;     // embedding width, equals the inference d_model

  int hop() const { return kernel / 2; }
  std::vector<std::string> Validate() const;
};

// Input padding so that frames tile the signal exactly.
struct FramePlan {
  int length = 0;
  int padded = 0;
  int frames = 0;
};
FramePlan PlanFrames(int length, int kernel, int hop);

// gLN -> bottleneck -> R x X residual blocks -> PReLU(sum of skips).
template <typename T>
class TcnSeparator {
 public:
  using Var = ag::Var<T>;

  TcnSeparator() = default;
  TcnSeparator(const ExtractorConfig& cfg, Rng* rng);
  // encoded [frames, N] -> features [frames, B].
  Var operator()(const Var& encoded) const;
  void Collect(const std::string& prefix, nn::NamedParams<T>* out) const;

 private:
  struct Block {
    nn::Linear<T> in;
    nn::PRelu<T> act1, act2;
    nn::GlobalNorm<T> norm1, norm2;
    Var dw_weight, dw_bias;
    int dilation = 1;
    nn::Linear<T> residual;  // undefined on the last block
    nn::Linear<T> skip;
  };
  nn::GlobalNorm<T> input_norm_;
  nn::Linear<T> bottleneck_;
  std::vector<Block> blocks_;
  nn::PRelu<T> output_act_;
};

template <typename T>
class Extractor {
 public:
  using Var = ag::Var<T>;

  Extractor(const ExtractorConfig& cfg, uint64_t seed);

  // Embedding-independent part, computed once per mixture.
  struct Analysis {
    Var encoded;       // [frames, N]
    Var features;      // [frames, B]
    Var mask_partial;  // feature half of the mask logits, [frames, N]
    FramePlan plan;
  };
  // signal [1, len].
  Analysis Analyze(const Var& signal) const;
  // embedding [1, cond_dim] -> estimate [1, len].
  Var Extract(const Analysis& analysis, const Var& embedding) const;
  // Sigmoid mask for an embedding, [frames, N].
  Var Mask(const Analysis& analysis, const Var& embedding) const;

  nn::NamedParams<T> Params() const;
  const ExtractorConfig& config() const { return cfg_; }

 private:
  ExtractorConfig cfg_;
  nn::Linear<T> encoder_;
  TcnSeparator<T> separator_;
  // The 1x1 convolution over [features, embedding] is stored as its two
  // column blocks so the feature half is computed once per mixture.
  nn::Linear<T> mask_features_;
  nn::Linear<T> mask_embedding_;
  nn::Linear<T> decoder_;
};

// Second stage fed with (stage-one estimate, observation). Two encoders are
// summed before the separator; the output is estimate + g * decode(mask *
// enc(observation)) with the scalar gate g starting at 0, so an untrained
// stage passes the estimate through.
template <typename T>
class CascadeRefiner {
 public:
  using Var = ag::Var<T>;

  CascadeRefiner(const ExtractorConfig& cfg, uint64_t seed);
  Var Refine(const Var& observation, const Var& estimate) const;
  nn::NamedParams<T> Params() const;

 private:
  ExtractorConfig cfg_;
  nn::Linear<T> obs_encoder_, est_encoder_;
  TcnSeparator<T> separator_;
  nn::Linear<T> mask_head_;
  nn::Linear<T> decoder_;
  Var gate_;
};

// Unconditioned separator with a fixed number of outputs.
template <typename T>
class PitSeparator {
 public:
  using Var = ag::Var<T>;

  PitSeparator(const ExtractorConfig& cfg, int outputs, uint64_t seed);
  std::vector<Var> Separate(const Var& signal) const;
  nn::NamedParams<T> Params() const;
  int outputs() const { return outputs_; }

 private:
  ExtractorConfig cfg_;
  int outputs_;
  nn::Linear<T> encoder_;
  TcnSeparator<T> separator_;
  nn::Linear<T> mask_head_;
  nn::Linear<T> decoder_;
};

// Waveform-level helpers (no gradient recording).
Waveform Extract(const Extractor<float>& net, const Waveform& observation,
                 std::span<const float> embedding);
std::vector<Waveform> ExtractAll(const Extractor<float>& net, const Waveform& observation,
                                 const std::vector<std::vector<float>>& embeddings);
Waveform CascadeRefine(const CascadeRefiner<float>& net, const Waveform& observation,
                       const Waveform& estimate);
std::vector<Waveform> SeparatePit(const PitSeparator<float>& net, const Waveform& observation);

}  // namespace sccm

#endif  // SCCM_EXTRACTION_NET_H_
