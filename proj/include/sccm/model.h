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

// A complete separation system as stored in a checkpoint: either the
// inference + conditional extraction pair (with an optional refinement
// stage) or the fixed-output baseline.

#ifndef SCCM_MODEL_H_
#define SCCM_MODEL_H_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sccm/checkpoint.h"
#include "sccm/config.h"
#include "sccm/extraction_net.h"
#include "sccm/inference_net.h"

namespace sccm {

struct SeparatedSource {
  Waveform waveform;
  int class_index = -1;          // -1 for the baseline
  std::vector<float> embedding;  // empty for the baseline
  std::vector<float> attention;
};

struct Separation {
  std::vector<SeparatedSource> sources;
  bool truncated = false;
  int num_frames = 0;  // spectrogram frames seen by speaker inference
};

class Model {
 public:
  // kind is "sccm" or "pit"; taken from cfg.train.model.
  Model(const ExperimentConfig& cfg, uint64_t seed);

  const ExperimentConfig& config() const { return cfg_; }
  // Only the train and eval sections may change after construction.
  ExperimentConfig& mutable_config() { return cfg_; }
  const std::string& kind() const { return cfg_.train.model; }
  bool is_sccm() const { return kind() == "sccm"; }

  const InferenceNet<float>& inference() const { return *inference_; }
  const Extractor<float>& extractor() const { return *extractor_; }
  const CascadeRefiner<float>* cascade() const { return cascade_.get(); }
  const PitSeparator<float>& pit() const { return *pit_; }
  // Adds a freshly initialized refinement stage.
  void EnableCascade(uint64_t seed);

  nn::NamedParams<float> Params() const;
  nn::NamedParams<float> InferenceParams() const;
  nn::NamedParams<float> CascadeParams() const;

  // Spectrogram features for speaker inference; DataError on a sample rate
  // other than the configured one or a recording shorter than one window.
  Matrix<float> Features(const Waveform& w) const;
  Separation Separate(const Waveform& observation, bool use_cascade = true) const;

  // Header carries kind, config echo and vocabulary; `state` is stored
  // verbatim under "training_state".
  Checkpoint ToCheckpoint(const nlohmann::json& state = nlohmann::json::object()) const;
  static Model FromCheckpoint(const Checkpoint& ckpt);
  static Model Load(const std::filesystem::path& path);

 private:
  ExperimentConfig cfg_;
  std::unique_ptr<InferenceNet<float>> inference_;
  std::unique_ptr<Extractor<float>> extractor_;
  std::unique_ptr<CascadeRefiner<float>> cascade_;
  std::unique_ptr<PitSeparator<float>> pit_;
};

}  // namespace sccm

#endif  // SCCM_MODEL_H_
