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

#include "sccm/model.h"

#include "sccm/error.h"

namespace sccm {

Model::Model(const ExperimentConfig& cfg, uint64_t seed) : cfg_(cfg) {
  const auto errs = cfg.Validate();
  if (!errs.empty()) throw ConfigError(JoinErrors(errs));
  if (is_sccm()) {
    inference_ = std::make_unique<InferenceNet<float>>(cfg.inference_net, seed);
    extractor_ = std::make_unique<Extractor<float>>(cfg.extraction_net, seed);
  } else {
    pit_ = std::make_unique<PitSeparator<float>>(cfg.extraction_net, cfg.train.pit_outputs, seed);
  }
}

void Model::EnableCascade(uint64_t seed) {
  if (!is_sccm()) throw ConfigError("the refinement stage requires the sccm model");
  cascade_ = std::make_unique<CascadeRefiner<float>>(cfg_.extraction_net, seed);
}

nn::NamedParams<float> Model::Params() const {
  nn::NamedParams<float> p;
  auto add = [&](const nn::NamedParams<float>& q) { p.insert(p.end(), q.begin(), q.end()); };
  if (inference_) add(inference_->Params());
  if (extractor_) add(extractor_->Params());
  if (cascade_) add(cascade_->Params());
  if (pit_) add(pit_->Params());
  return p;
}

nn::NamedParams<float> Model::InferenceParams() const {
  return inference_ ? inference_->Params() : nn::NamedParams<float>{};
}

nn::NamedParams<float> Model::CascadeParams() const {
  return cascade_ ? cascade_->Params() : nn::NamedParams<float>{};
}

Matrix<float> Model::Features(const Waveform& w) const {
  if (w.sample_rate != cfg_.dataset.sample_rate) {
    throw DataError("recording sample rate " + std::to_string(w.sample_rate) + " Hz differs from the model's " +
                    std::to_string(cfg_.dataset.sample_rate) + " Hz");
  }
  return StftMagnitude(w, cfg_.stft).frames;
}

Separation Model::Separate(const Waveform& observation, bool use_cascade) const {
  ValidateWaveform(observation);
  Separation out;
  if (!is_sccm()) {
    for (auto& w : SeparatePit(*pit_, observation)) out.sources.push_back({std::move(w), -1, {}, {}});
    return out;
  }
  const Matrix<float> features = Features(observation);
  out.num_frames = features.rows();
  const InferenceResult inferred = InferSpeakers(*inference_, features);
  out.truncated = inferred.truncated;
  std::vector<std::vector<float>> embeddings;
  for (const auto& s : inferred.steps) embeddings.push_back(s.embedding);
  auto waves = ExtractAll(*extractor_, observation, embeddings);
  for (size_t i = 0; i < waves.size(); ++i) {
    if (use_cascade && cascade_) waves[i] = CascadeRefine(*cascade_, observation, waves[i]);
    out.sources.push_back({std::move(waves[i]), inferred.steps[i].class_index, inferred.steps[i].embedding,
                           inferred.steps[i].attention});
  }
  return out;
}

Checkpoint Model::ToCheckpoint(const nlohmann::json& state) const {
  Checkpoint ckpt;
  ckpt.header["format"] = "sccm-checkpoint";
  ckpt.header["kind"] = kind();
  ckpt.header["config"] = ConfigToJson(cfg_);
  ckpt.header["has_cascade"] = cascade_ != nullptr;
  std::vector<int> ids(cfg_.inference_net.num_speakers);
  for (int i = 0; i < cfg_.inference_net.num_speakers; ++i) ids[i] = i;
  ckpt.header["vocabulary"] = {{"num_speakers", cfg_.inference_net.num_speakers},
                               {"eos_index", cfg_.inference_net.eos()},
                               {"speaker_ids", ids}};
  ckpt.header["training_state"] = state;
  for (const auto& [name, v] : Params()) ckpt.tensors.emplace_back(name, v.value());
  return ckpt;
}

Model Model::FromCheckpoint(const Checkpoint& ckpt) {
  std::vector<std::string> errors;
  if (!ckpt.header.contains("config")) throw DataError("checkpoint has no config");
  ExperimentConfig cfg = ConfigFromJson(ckpt.header.at("config"), &errors);
  if (!errors.empty()) throw DataError("checkpoint config is invalid:\n" + JoinErrors(errors));
  Model model(cfg, 0);
  if (ckpt.header.value("has_cascade", false)) model.EnableCascade(0);
  for (auto& [name, v] : model.Params()) {
    const Matrix<float>* src = ckpt.Find(name);
    if (!src) throw DataError("checkpoint lacks parameter " + name);
    if (!src->SameShape(v.value())) throw DataError("checkpoint parameter " + name + " has the wrong shape");
    v.mutable_value() = *src;
  }
  return model;
}

Model Model::Load(const std::filesystem::path& path) { return FromCheckpoint(LoadCheckpoint(path)); }

}  // namespace sccm
