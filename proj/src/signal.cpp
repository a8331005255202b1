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

#include "sccm/signal.h"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "sccm/error.h"

namespace sccm {
namespace {

// FFTW planning is not thread-safe.
std::mutex g_fftw_mutex;

int MsToSamples(double ms, int sample_rate, const char* what) {
  const double exact = ms * sample_rate / 1000.0;
  const long rounded = std::lround(exact);
  if (rounded <= 0 || std::abs(exact - rounded) > 1e-6) {
    throw ConfigError(std::string(what) + " of " + std::to_string(ms) +
                      " ms is not a whole number of samples at " +
                      std::to_string(sample_rate) + " Hz");
  }
  return static_cast<int>(rounded);
}

}  // namespace

void ValidateWaveform(const Waveform& w) {
  if (w.sample_rate <= 0) throw DataError("sample_rate must be positive");
  for (float s : w.samples) {
    if (!std::isfinite(s)) throw DataError("waveform contains non-finite samples");
  }
}

double LimitPeak(Waveform* w, double peak) {
  float mx = 0;
  for (float s : w->samples) mx = std::max(mx, std::abs(s));
  if (mx <= peak || mx == 0) return 1.0;
  const double gain = peak / mx;
  for (float& s : w->samples) s = static_cast<float>(s * gain);
  return gain;
}

int StftConfig::WindowSamples(int sample_rate) const {
  return MsToSamples(window_ms, sample_rate, "window");
}
int StftConfig::HopSamples(int sample_rate) const {
  return MsToSamples(hop_ms, sample_rate, "hop");
}

std::vector<double> SineWindow(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n) {
    w[n] = std::sin(std::numbers::pi * (n + 0.5) / length);
  }
  return w;
}

int NumFrames(size_t samples, int frame_len, int hop) {
  if (samples < static_cast<size_t>(frame_len)) return 0;
  return static_cast<int>((samples - frame_len) / hop) + 1;
}

MagnitudeSpectrogram StftMagnitude(const Waveform& w, const StftConfig& cfg) {
  ValidateWaveform(w);
  if (cfg.window != "sine") throw ConfigError("unsupported window: " + cfg.window);
  const int len = cfg.WindowSamples(w.sample_rate);
  const int hop = cfg.HopSamples(w.sample_rate);
  const int frames = NumFrames(w.size(), len, hop);
  if (frames == 0) {
    throw DataError("input too short: " + std::to_string(w.size()) +
                    " samples, need at least " + std::to_string(len));
  }
  const int bins = len / 2 + 1;
  const std::vector<double> window = SineWindow(len);

  double* in = fftw_alloc_real(len);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    plan = fftw_plan_dft_r2c_1d(len, in, out, FFTW_ESTIMATE);
  }
  MagnitudeSpectrogram spec;
  spec.frames.Resize(frames, bins);
  spec.frame_length_ms = cfg.window_ms;
  spec.hop_ms = cfg.hop_ms;
  spec.window = cfg.window;
  for (int f = 0; f < frames; ++f) {
    const float* src = w.samples.data() + static_cast<size_t>(f) * hop;
    for (int n = 0; n < len; ++n) in[n] = src[n] * window[n];
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) {
      double mag = std::hypot(out[k][0], out[k][1]);
      if (cfg.log_magnitude) mag = std::log(mag + 1e-6);
      spec.frames(f, k) = static_cast<float>(mag);
    }
  }
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return spec;
}

template <typename T>
double SiSnr(std::span<const T> estimate, std::span<const T> reference,
             std::vector<double>* grad) {
  if (estimate.size() != reference.size()) {
    throw DataError("si_snr: length mismatch (" + std::to_string(estimate.size()) +
                    " vs " + std::to_string(reference.size()) + ")");
  }
  const size_t n = estimate.size();
  if (n == 0) throw DataError("si_snr: empty signals");
  double mean_e = 0, mean_r = 0;
  for (size_t i = 0; i < n; ++i) {
    mean_e += estimate[i];
    mean_r += reference[i];
  }
  mean_e /= n;
  mean_r /= n;
  double energy_e = 0, energy_r = 0;
  for (size_t i = 0; i < n; ++i) {
    energy_e += (estimate[i] - mean_e) * (estimate[i] - mean_e);
    energy_r += (reference[i] - mean_r) * (reference[i] - mean_r);
  }
  if (!(energy_r > 0)) throw DataError("si_snr: undefined reference (zero after mean removal)");
  if (grad != nullptr) grad->assign(n, 0.0);
  if (!(energy_e > 0)) return kSiSnrFloorDb;

  // Unit-energy, zero-mean copies: u (estimate) and v (reference).
  const double norm_e = std::sqrt(energy_e), norm_r = std::sqrt(energy_r);
  double proj = 0;
  for (size_t i = 0; i < n; ++i) {
    proj += (estimate[i] - mean_e) / norm_e * ((reference[i] - mean_r) / norm_r);
  }
  double target = proj * proj;
  double noise = 0;
  for (size_t i = 0; i < n; ++i) {
    const double u = (estimate[i] - mean_e) / norm_e;
    const double v = (reference[i] - mean_r) / norm_r;
    const double e = u - proj * v;
    noise += e * e;
  }
  const double ratio = target / (noise + kSiSnrEps);
  const double floor_ratio = std::pow(10.0, kSiSnrFloorDb / 10.0);
  if (ratio <= floor_ratio) return kSiSnrFloorDb;
  const double db = 10.0 * std::log10(ratio);
  if (grad == nullptr) return db;

  // d(dB)/du = c * (2 v / proj - 2 e / (noise + eps)), c = 10 / ln 10; then
  // through u = (x - mean) / |x - mean|.
  const double c = 10.0 / std::numbers::ln10;
  std::vector<double>& g = *grad;
  double dot_gu = 0;
  for (size_t i = 0; i < n; ++i) {
    const double u = (estimate[i] - mean_e) / norm_e;
    const double v = (reference[i] - mean_r) / norm_r;
    const double e = u - proj * v;
    g[i] = c * (2.0 * v / proj - 2.0 * e / (noise + kSiSnrEps));
    dot_gu += g[i] * u;
  }
  double mean_g = 0;
  for (size_t i = 0; i < n; ++i) {
    const double u = (estimate[i] - mean_e) / norm_e;
    g[i] = (g[i] - dot_gu * u) / norm_e;
    mean_g += g[i];
  }
  mean_g /= n;
  for (size_t i = 0; i < n; ++i) g[i] -= mean_g;
  return db;
}

template double SiSnr<float>(std::span<const float>, std::span<const float>,
                             std::vector<double>*);
template double SiSnr<double>(std::span<const double>, std::span<const double>,
                              std::vector<double>*);

double SiSnrImprovement(std::span<const float> mixture,
                        std::span<const float> estimate,
                        std::span<const float> reference) {
  if (mixture.size() != estimate.size()) {
    throw DataError("si_snr_improvement: mixture/estimate length mismatch");
  }
  return SiSnr(estimate, reference) - SiSnr(mixture, reference);
}

}  // namespace sccm
