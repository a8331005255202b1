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

// Experiment configuration: one JSON document with a section per module.

#ifndef SCCM_CONFIG_H_
#define SCCM_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccm/extraction_net.h"
#include "sccm/inference_net.h"
#include "sccm/signal.h"
#include "sccm/simulate.h"

namespace sccm {

struct TrainConfig {
  std::string model = "sccm";  // "sccm" or "pit" (fixed-output baseline)
  double alpha = 50.0;         // weight of the classification loss
  double lr = 1e-3;
  double decay_factor = 0.2;
  int decay_every_epochs = 20;
  int batch_size = 4;
  int max_epochs = 100;
  int max_steps = 0;  // optimizer steps; 0 = unlimited
  double segment_seconds = 4.0;
  int early_stop_patience = 5;  // validations without L_c improvement
  int validate_every_epochs = 1;
  double clip_norm = 5.0;
  std::string order = "model";  // target order: "model", "fixed" or "energy"
  int cascade_epochs = 0;       // 0 disables the refinement stage
  int pit_outputs = 2;
  int log_every_steps = 0;  // 0 = quiet
  uint64_t seed = 1;

  std::vector<std::string> Validate() const;
};

struct EvalConfig {
  bool use_cascade = true;  // apply the refinement stage when present
  double split_db = 5.0;
  double histogram_min_db = -20.0;
  double histogram_max_db = 40.0;

  std::vector<std::string> Validate() const;
};

struct ExperimentConfig {
  std::string profile = "desk";  // "desk" or "paper"
  StftConfig stft;
  DatasetConfig dataset;
  InferenceNetConfig inference_net;
  ExtractorConfig extraction_net;
  TrainConfig train;
  EvalConfig eval;

  static ExperimentConfig Profile(const std::string& name);
  // Every violated invariant across and within sections.
  std::vector<std::string> Validate() const;
  // Frequency bins of the configured STFT.
  int SpectrogramBins() const;
};

nlohmann::json ConfigToJson(const ExperimentConfig& cfg);
// Starts from the profile named in j (default "desk") and applies every
// field present. Unknown keys and type errors are appended to errors.
ExperimentConfig ConfigFromJson(const nlohmann::json& j, std::vector<std::string>* errors);

// Parses and validates; throws ConfigError listing every problem.
ExperimentConfig LoadConfig(const std::filesystem::path& path);
void SaveConfig(const ExperimentConfig& cfg, const std::filesystem::path& path);

// Joins messages into one ConfigError text, one per line.
std::string JoinErrors(const std::vector<std::string>& errors);

}  // namespace sccm

#endif  // SCCM_CONFIG_H_
