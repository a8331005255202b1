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

#ifndef SCCM_SIGNAL_H_
#define SCCM_SIGNAL_H_

#include <span>
#include <string>
#include <vector>

#include "sccm/matrix.h"

namespace sccm {

constexpr int kDefaultSampleRate = 8000;

// Mono audio, nominal amplitude range [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kDefaultSampleRate;

  size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
  std::span<const float> view() const { return samples; }
};

// Throws DataError for a non-positive rate or non-finite samples.
void ValidateWaveform(const Waveform& w);

// Scales w down so that max |sample| <= peak. Returns the applied gain.
double LimitPeak(Waveform* w, double peak = 1.0);

struct StftConfig {
  double window_ms = 32.0;
  double hop_ms = 8.0;
  std::string window = "sine";
  bool log_magnitude = false;

  int WindowSamples(int sample_rate) const;
  int HopSamples(int sample_rate) const;
};

struct MagnitudeSpectrogram {
  Matrix<float> frames;  // [num_frames, num_bins], non-negative unless log
  double frame_length_ms = 0;
  double hop_ms = 0;
  std::string window;

  int num_frames() const { return frames.rows(); }
  int num_bins() const { return frames.cols(); }
};

// w[n] = sin(pi * (n + 0.5) / length).
std::vector<double> SineWindow(int length);

// floor((samples - frame_len) / hop) + 1, or 0 when shorter than a frame.
int NumFrames(size_t samples, int frame_len, int hop);

// Magnitude of the DFT of each windowed frame; fft size = window length,
// bins = fft_size / 2 + 1, no centering or padding.
MagnitudeSpectrogram StftMagnitude(const Waveform& w, const StftConfig& cfg);

// Energy floor added to the residual after both signals are mean-removed and
// scaled to unit energy; bounds the result to about +80 dB.
constexpr double kSiSnrEps = 1e-8;
// Result floor, reached only by degenerate (zero or orthogonal) estimates.
constexpr double kSiSnrFloorDb = -80.0;

// Scale-invariant SNR in dB. If grad is non-null it receives d(dB)/d(estimate).
template <typename T>
double SiSnr(std::span<const T> estimate, std::span<const T> reference,
             std::vector<double>* grad = nullptr);

double SiSnrImprovement(std::span<const float> mixture,
                        std::span<const float> estimate,
                        std::span<const float> reference);

}  // namespace sccm

#endif  // SCCM_SIGNAL_H_
