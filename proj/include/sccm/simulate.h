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

// Synthetic-speaker corpus, fully overlapped mixtures and multi-round
// conversation recordings.

#ifndef SCCM_SIMULATE_H_
#define SCCM_SIMULATE_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sccm/signal.h"

namespace sccm {

struct Formant {
  double center_hz = 0;
  double bandwidth_hz = 0;
  double gain = 1;
};

struct SyntheticSpeaker {
  int speaker_id = 0;
  double f0_hz = 120;
  std::array<Formant, 3> formants;
  double tilt = 1.0;            // harmonic amplitude ~ k^-tilt
  double syllable_rate_hz = 4;  // amplitude modulation rate
  double vibrato_hz = 5;
  double vibrato_depth = 0.01;  // relative f0 excursion
  uint64_t seed = 0;
};

// `count` speakers with ids 0..count-1 and distinct f0 values on a 5 Hz grid.
std::vector<SyntheticSpeaker> MakeSpeakerPool(int count, uint64_t seed);

// Harmonic utterance peak-normalized to 0.9. Duration must lie in [0.5, 10] s.
Waveform SynthUtterance(const SyntheticSpeaker& spk, double duration_s, uint64_t seed,
                        int sample_rate = kDefaultSampleRate);

struct UtterancePlacement {
  int speaker_index = 0;  // position in MixtureRecord::speakers
  int64_t offset = 0;     // start sample in the recording
  int64_t length = 0;
  double snr_db = 0;
};

struct MixtureRecord {
  Waveform mixture;
  std::vector<Waveform> sources;  // one per speaker, full length
  std::vector<int> speakers;
  std::vector<UtterancePlacement> utterances;
  double overlap_ratio = 0;
  int clamped_shifts = 0;  // negative cursor positions clamped to 0
  double gain = 1;         // common gain applied to keep the mixture peak < 1

  int num_speakers() const { return static_cast<int>(speakers.size()); }
};

struct SnrRange {
  double lo_db = 0;
  double hi_db = 5;
};

MixtureRecord MixFullyOverlapped(const std::vector<SyntheticSpeaker>& speakers,
                                 SnrRange snr, double duration_s, uint64_t seed,
                                 int sample_rate = kDefaultSampleRate);

struct MultiroundConfig {
  int k_min = 4;
  int k_max = 4;
  double beta_s = 0.85;
  double utterance_min_s = 0.75;
  double utterance_max_s = 1.75;
  bool shuffle_order = false;  // reshuffle speaker order every round
};

MixtureRecord SimulateMultiround(const std::vector<SyntheticSpeaker>& speakers,
                                 const MultiroundConfig& cfg, SnrRange snr, uint64_t seed,
                                 int sample_rate = kDefaultSampleRate);

// Per-sample activity of speaker `index` (union of its placed utterances'
// nonzero samples).
std::vector<uint8_t> SpeakerActivity(const MixtureRecord& rec, int index);

// Fraction of samples where two or more speakers are active.
double OverlapRatio(const MixtureRecord& rec);

// Smallest beta on a grid whose mean overlap over `records` simulated
// recordings reaches `target`.
double CalibrateBeta(const MultiroundConfig& base, int num_speakers, double target,
                     int records, uint64_t seed);

struct DatasetConfig {
  std::string mixture_type = "fully_overlapped";  // or "multiround"
  int sample_rate = kDefaultSampleRate;
  int num_speakers = 4;       // closed-condition vocabulary size N
  int num_open_speakers = 4;  // held out for open-condition tests
  std::vector<int> speakers_per_mixture{2};
  double duration_s = 1.0;  // fully overlapped mixtures
  SnrRange snr;
  MultiroundConfig multiround;
  int train_size = 8;
  int valid_size = 0;
  int test_size = 0;
  bool test_open_condition = false;
  uint64_t seed = 1;
};

struct ManifestEntry {
  std::string mixture_path;
  std::vector<std::string> source_paths;
  std::vector<int> speaker_ids;
  std::vector<int64_t> offsets;
  std::vector<double> snr_db;
  std::vector<int> utterance_speakers;
  std::vector<int64_t> utterance_lengths;
  double overlap_ratio = 0;
  double duration_s = 0;
  std::string split;
  bool open_condition = false;
  int clamped_shifts = 0;
  double gain = 1;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;  // paths in entries are relative to this
  std::vector<ManifestEntry> entries;
};

// Records of one split, generated from per-record seeds.
std::vector<MixtureRecord> GenerateSplit(const DatasetConfig& cfg,
                                         const std::vector<SyntheticSpeaker>& pool,
                                         const std::string& split, int count, int workers = 1);

// Writes <split>/recNNNNN_{mix,sK}.wav, manifest.jsonl (all splits),
// <split>.jsonl and speakers.json. A non-empty out_dir requires force.
Manifest BuildDataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                      bool force, int workers = 1);

ManifestEntry ToEntry(const MixtureRecord& rec, const std::string& split, bool open_condition);

void SaveManifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
Manifest LoadManifest(const std::filesystem::path& path);

// Reads the WAVs referenced by an entry back into a record.
MixtureRecord LoadRecord(const Manifest& manifest, const ManifestEntry& entry);

// FNV-1a over every file (sorted relative path and bytes) below dir, except
// run_manifest.json, which carries timestamps.
uint64_t CorpusHash(const std::filesystem::path& dir);

}  // namespace sccm

#endif  // SCCM_SIMULATE_H_
