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

// Evaluation: separation quality (SI-SNRi under the oracle pairing),
// speaker-set micro-F1, counting accuracy and attention-status export.

#ifndef SCCM_EVAL_H_
#define SCCM_EVAL_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccm/config.h"
#include "sccm/model.h"
#include "sccm/simulate.h"

namespace sccm {

// Per-target SI-SNRi of a record's estimates under the best pairing. Missing
// estimates are zero signals; surplus estimates are left unpaired.
struct ScoredRecord {
  std::vector<double> si_snri;  // one per target
  std::vector<int> pairing;     // estimate index per target, -1 when padded
  double mean_si_snri = 0;
  double identity_loss = 0;  // mean -SI-SNR under the identity pairing (padded)
  double best_loss = 0;      // mean -SI-SNR under the chosen pairing
};
ScoredRecord ScoreRecord(std::span<const float> mixture, const std::vector<std::vector<float>>& estimates,
                         const std::vector<std::span<const float>>& targets);

struct RecordResult {
  size_t manifest_index = 0;
  int true_count = 0;
  int inferred_count = 0;
  bool truncated = false;
  std::vector<int> true_classes;
  std::vector<int> predicted_classes;
  ScoredRecord score;
};

struct EvalReport {
  int n_records = 0;
  double si_snri_mean = 0;
  double histogram_min_db = 0;
  double histogram_bin_db = 1;
  std::vector<int> si_snri_histogram;  // per-record means; edge bins absorb outliers
  double frac_below_5db = 0;
  double frac_above_5db = 0;
  bool has_micro_f1 = false;  // closed condition only
  double micro_f1 = 0;
  double counting_accuracy = 0;
  std::vector<RecordResult> records;

  nlohmann::json ToJson() const;
};

// TP/FP/FN pooled over records; F1 = 2TP / (2TP + FP + FN), 1 when all are
// empty. Open-condition data is a DataError.
double MicroF1(const std::vector<std::vector<int>>& predicted, const std::vector<std::vector<int>>& truth,
               bool open_condition = false);
double CountingAccuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

EvalReport Aggregate(std::vector<RecordResult> records, const EvalConfig& cfg, bool closed_condition);

// Runs the model on every manifest entry (or those of `split`).
EvalReport EvaluateSeparation(const Model& model, const Manifest& manifest, const std::string& split = "",
                              bool use_cascade = true);

// Writes attention_<k>.csv (frame_index,weight) and attention_<k>.png per
// inferred speaker plus spectrogram-aligned rendering. Returns the paths.
std::vector<std::filesystem::path> ExportAttention(const Model& model, const Waveform& observation,
                                                   const std::filesystem::path& out_dir);

// Fraction of a speaker's attention mass on frames where the speaker is
// active (at least half of the frame window is active).
double AttentionMassOnActive(std::span<const float> attention, const std::vector<uint8_t>& activity,
                             int frame_len, int hop);

// 8-bit RGB PNG.
void WritePng(const std::filesystem::path& path, int width, int height, const std::vector<uint8_t>& rgb);

}  // namespace sccm

#endif  // SCCM_EVAL_H_
