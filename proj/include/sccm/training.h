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

// Joint training of speaker inference and conditional extraction: target
// order chosen by the best permutation of the reconstruction loss, combined
// loss L_r + alpha * L_c, Adam with step decay and global-norm clipping,
// early stopping of the inference parameters on validation L_c, and the
// fixed-output permutation-invariant baseline.

#ifndef SCCM_TRAINING_H_
#define SCCM_TRAINING_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccm/checkpoint.h"
#include "sccm/model.h"
#include "sccm/ops.h"
#include "sccm/random.h"
#include "sccm/simulate.h"

namespace sccm {

// theta[i] is the target paired with estimate i.
struct PermutationAssignment {
  std::vector<int> theta;
  double reconstruction_loss = 0;  // mean of -SI-SNR(estimate_i, target_theta[i]) in dB
};

// Exhaustive search over all I! pairings of an I x I score matrix
// (scores[i][j] = SI-SNR of estimate i against target j). Ties resolve to
// the lexicographically smallest theta.
PermutationAssignment BestPermutationFromScores(const std::vector<std::vector<double>>& scores);

template <typename T>
PermutationAssignment BestPermutation(const std::vector<std::span<const T>>& estimates,
                                      const std::vector<std::span<const T>>& targets);
PermutationAssignment BestPermutation(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets);

// Targets sorted by decreasing energy (ties by index).
template <typename T>
std::vector<int> EnergyOrder(const std::vector<std::span<const T>>& targets);

template <typename T>
struct JointLossTerms {
  ag::Var<T> total;           // reconstruction + alpha * classification
  ag::Var<T> reconstruction;  // L_r
  ag::Var<T> classification;  // L_c
  PermutationAssignment assignment;
};

// logits: I + 1 decoder outputs; estimates: one extraction per speaker step;
// classes[j]: vocabulary class of target j. L_c is the mean cross-entropy of
// steps 1..I against classes ordered by theta plus the cross-entropy of step
// I + 1 against <EOS>. A non-null fixed_theta replaces the permutation search.
template <typename T>
JointLossTerms<T> JointLoss(const std::vector<ag::Var<T>>& logits, const std::vector<ag::Var<T>>& estimates,
                            const std::vector<std::span<const T>>& targets, const std::vector<int>& classes,
                            int eos, double alpha, const std::vector<int>* fixed_theta = nullptr);

// Adam over named parameters. Parameters without a gradient are skipped.
template <typename T>
class Adam {
 public:
  explicit Adam(nn::NamedParams<T> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Excludes (or re-includes) every parameter whose name starts with prefix.
  void SetFrozen(const std::string& prefix, bool frozen);
  // Rescales trainable gradients to a global L2 norm of at most max_norm.
  // Returns the norm before clipping.
  double ClipGradNorm(double max_norm);
  void Step(double lr);
  void ZeroGrad();
  int64_t steps() const { return t_; }

  // Moment buffers under "adam.m.<name>" / "adam.v.<name>".
  void SaveState(Checkpoint* ckpt) const;
  void LoadState(const Checkpoint& ckpt);

 private:
  nn::NamedParams<T> params_;
  std::vector<Matrix<T>> m_, v_;
  std::vector<bool> frozen_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// lr * decay_factor^floor(completed_epochs / decay_every_epochs).
double LearningRate(const TrainConfig& cfg, int completed_epochs);

// One record prepared for training or validation.
struct TrainRecord {
  MixtureRecord record;
  Matrix<float> features;    // whole-recording spectrogram
  std::vector<int> classes;  // vocabulary class per source
  size_t manifest_index = 0;
};

// Loads the entries of `split` (all entries when split is empty). With
// require_vocabulary, a speaker outside the closed vocabulary is a DataError.
// Records without sources are dropped and reported in warnings.
std::vector<TrainRecord> PrepareRecords(const Model& model, const Manifest& manifest, const std::string& split,
                                        bool require_vocabulary, std::vector<std::string>* warnings = nullptr,
                                        int workers = 1);

// Builds one record in memory; classes are the record's speaker ids.
TrainRecord MakeTrainRecord(const Model& model, MixtureRecord record, size_t index = 0);

struct Segment {
  int64_t start = 0;
  int64_t length = 0;
};

// Uniform random window of segment_samples (the whole record when shorter).
// Windows in which a source is silent are redrawn a bounded number of times.
Segment SampleSegment(const MixtureRecord& rec, int64_t segment_samples, Rng* rng);

struct EpochSummary {
  int epoch = 0;
  int steps = 0;  // cumulative optimizer steps at the end of the epoch
  double lr = 0;
  double loss = 0;
  double reconstruction = 0;
  double classification = 0;
  double theta_stability = -1;  // fraction of records keeping last epoch's theta; -1 on the first epoch
  bool validated = false;
  double valid_classification = 0;
  double valid_si_snri = 0;
  bool inference_frozen = false;
};

struct TrainingReport {
  std::string model;
  std::vector<double> step_loss;
  std::vector<double> step_reconstruction;
  std::vector<double> step_classification;
  std::vector<double> step_lr;
  std::vector<EpochSummary> epochs;
  std::vector<double> cascade_step_loss;
  std::vector<EpochSummary> cascade_epochs;
  int total_steps = 0;
  int frozen_at_epoch = -1;
  double best_valid_classification = std::numeric_limits<double>::infinity();
  double best_valid_si_snri = -std::numeric_limits<double>::infinity();
  double seconds = 0;
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
};

struct TrainState {
  int epoch = 0;  // completed epochs
  int step = 0;
  double best_valid_classification = std::numeric_limits<double>::infinity();
  double best_valid_si_snri = -std::numeric_limits<double>::infinity();
  int stale_validations = 0;
  bool inference_frozen = false;
  bool stage_one_done = false;

  nlohmann::json ToJson() const;
  static TrainState FromJson(const nlohmann::json& j);
};

struct TrainCallbacks {
  // tag is "best_si_snri", "best_classification" or "last".
  std::function<void(const std::string& tag, const Checkpoint& ckpt)> checkpoint;
  std::function<void(const std::string& line)> log;
};

class Trainer {
 public:
  Trainer(Model* model, TrainCallbacks callbacks = {});

  // Restores optimizer moments, counters and random streams from a
  // checkpoint written by this trainer.
  void Resume(const Checkpoint& ckpt);
  TrainingReport Run(const std::vector<TrainRecord>& train, const std::vector<TrainRecord>& valid);

  const TrainState& state() const { return state_; }
  // Model parameters plus optimizer and trainer state.
  Checkpoint Snapshot() const;

 private:
  struct Totals;
  void RunSccmEpoch(const std::vector<TrainRecord>& train, TrainingReport* report, Totals* totals);
  void RunPitEpoch(const std::vector<TrainRecord>& train, TrainingReport* report, Totals* totals);
  void Validate(const std::vector<TrainRecord>& valid, EpochSummary* summary) const;
  void RunCascade(const std::vector<TrainRecord>& train, TrainingReport* report);
  std::vector<std::vector<size_t>> Batches(const std::vector<TrainRecord>& records);
  void Emit(const std::string& tag);
  void Log(const std::string& line) const;
  bool StepBudgetLeft() const;

  Model* model_;
  TrainCallbacks callbacks_;
  TrainConfig cfg_;
  Adam<float> optimizer_;
  TrainState state_;
  Rng data_rng_;
  Rng dropout_rng_;
  std::vector<std::vector<int>> last_theta_;
};

// Mean -SI-SNR over targets under the best injective assignment of targets
// to estimates; used by the fixed-output baseline when I < outputs.
template <typename T>
ag::Var<T> PitLoss(const std::vector<ag::Var<T>>& estimates, const std::vector<std::span<const T>>& targets,
                   PermutationAssignment* assignment = nullptr);

}  // namespace sccm

#endif  // SCCM_TRAINING_H_
