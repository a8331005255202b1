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

// Speaker inference: a transformer encoder over the magnitude spectrogram and
// a one-block decoder driven by learned step-index queries. Each step emits a
// distribution over the N training speakers plus <EOS> and the hidden state
// used as that speaker's embedding.

#ifndef SCCM_INFERENCE_NET_H_
#define SCCM_INFERENCE_NET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sccm/nn.h"
#include "sccm/signal.h"

namespace sccm {

struct InferenceNetConfig {
  int num_bins = 129;       // F
  int d_model = 64;         // D
  int heads = 4;            // H
  int d_k = 16;
  int d_v = 16;
  int d_ff = 256;
  int encoder_blocks = 1;   // M
  int num_speakers = 4;     // N; <EOS> is class N
  int max_steps = 6;
  double dropout = 0.1;
  bool pre_norm = false;

  int eos() const { return num_speakers; }
  int num_classes() const { return num_speakers + 1; }
  // Every violated invariant, empty when valid.
  std::vector<std::string> Validate() const;
};

// One decoder step in plain floats.
struct InferenceStep {
  std::vector<float> distribution;  // N + 1 probabilities
  std::vector<float> embedding;     // D
  std::vector<float> attention;     // cross-attention summed over heads, one per frame
  int class_index = 0;
};

struct InferenceResult {
  std::vector<InferenceStep> steps;  // steps before <EOS>
  bool truncated = false;            // max_steps reached without <EOS>
};

template <typename T>
class InferenceNet {
 public:
  using Var = ag::Var<T>;

  InferenceNet(const InferenceNetConfig& cfg, uint64_t seed);

  struct Encoded {
    Var frames;  // E_M, [frames, D]
    typename nn::MultiHeadAttention<T>::KeyValue cross;
  };
  struct Step {
    Var logits;             // [1, N + 1]
    Var hidden;             // h_i, [1, D]
    Matrix<T> attention;    // [1, frames]
  };

  // spectrogram [frames, F].
  Encoded Encode(const Matrix<T>& spectrogram, const nn::Context& ctx) const;
  // Step i >= 1 given h_1..h_{i-1}.
  Step DecodeStep(const Encoded& enc, const std::vector<Var>& history, int i,
                  const nn::Context& ctx) const;
  // Unrolls `steps` decoder steps, feeding each hidden state into the history.
  std::vector<Step> Decode(const Encoded& enc, int steps, const nn::Context& ctx) const;

  nn::NamedParams<T> Params() const;
  const InferenceNetConfig& config() const { return cfg_; }

 private:
  InferenceNetConfig cfg_;
  nn::Linear<T> input_proj_;
  std::vector<nn::EncoderBlock<T>> blocks_;
  nn::LayerNorm<T> encoder_norm_;  // pre-norm only
  nn::Linear<T> step_embed_;
  nn::MultiHeadAttention<T> self_attn_, cross_attn_;
  nn::FeedForward<T> ff_;
  nn::LayerNorm<T> ln1_, ln2_, ln3_;
  nn::Linear<T> classifier_;
};

// Greedy decoding with previously emitted speakers masked out. Stops at <EOS>
// or max_steps.
InferenceResult InferSpeakers(const InferenceNet<float>& net, const Matrix<float>& spectrogram);

// Attention status of decoder step `step` (0-based among emitted steps).
std::vector<float> AttentionStatus(const InferenceNet<float>& net, const Matrix<float>& spectrogram,
                                   int step);

}  // namespace sccm

#endif  // SCCM_INFERENCE_NET_H_
