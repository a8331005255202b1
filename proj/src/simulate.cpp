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

#include "sccm/simulate.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "json.hpp"
#include "sccm/error.h"
#include "sccm/random.h"
#include "sccm/wav.h"

namespace sccm {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kUtterancePeak = 0.9;
// Mixtures are kept strictly inside the 16-bit range.
constexpr double kMixturePeak = 0.99;
constexpr int kAmplitudeBlock = 32;

double Uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double FormantEnvelope(const SyntheticSpeaker& spk, double f) {
  double a = 0;
  for (const Formant& fm : spk.formants) {
    const double x = (f - fm.center_hz) / fm.bandwidth_hz;
    a += fm.gain / std::sqrt(1.0 + x * x);
  }
  return a;
}

// Sources are scaled jointly so no mixture or source peak exceeds kMixturePeak,
// then quantized to the 16-bit grid. The mixture is their exact sum, which
// also survives a WAV round trip.
void Finalize(MixtureRecord* rec, int sample_rate) {
  const size_t n = rec->sources.front().size();
  double peak = 0;
  for (size_t t = 0; t < n; ++t) {
    double s = 0;
    for (const Waveform& src : rec->sources) s += src.samples[t];
    peak = std::max(peak, std::abs(s));
  }
  for (const Waveform& src : rec->sources) {
    for (float v : src.samples) peak = std::max(peak, static_cast<double>(std::abs(v)));
  }
  rec->gain = peak > kMixturePeak ? kMixturePeak / peak : 1.0;
  for (Waveform& src : rec->sources) {
    for (float& v : src.samples) v = QuantizePcm16(static_cast<float>(v * rec->gain));
    src.sample_rate = sample_rate;
  }
  rec->mixture.sample_rate = sample_rate;
  rec->mixture.samples.assign(n, 0.0f);
  for (const Waveform& src : rec->sources) {
    for (size_t t = 0; t < n; ++t) rec->mixture.samples[t] += src.samples[t];
  }
}

void CheckDistinct(const std::vector<SyntheticSpeaker>& speakers) {
  if (speakers.empty()) throw DataError("mixture needs at least one speaker");
  std::set<int> ids;
  for (const auto& s : speakers) {
    if (!ids.insert(s.speaker_id).second) {
      throw DataError("duplicate speaker " + std::to_string(s.speaker_id) + " in mixture");
    }
  }
}

}  // namespace

std::vector<SyntheticSpeaker> MakeSpeakerPool(int count, uint64_t seed) {
  // f0 grid 80..300 Hz in 5 Hz steps.
  std::vector<double> f0_grid;
  for (int f = 80; f <= 300; f += 5) f0_grid.push_back(f);
  if (count < 0 || count > static_cast<int>(f0_grid.size())) {
    throw ConfigError("speaker pool size must be in [0, " + std::to_string(f0_grid.size()) + "]");
  }
  Rng rng(DeriveSeed(seed, {0x5045414bULL}));
  std::shuffle(f0_grid.begin(), f0_grid.end(), rng);
  std::vector<SyntheticSpeaker> pool(count);
  for (int i = 0; i < count; ++i) {
    SyntheticSpeaker& s = pool[i];
    s.speaker_id = i;
    s.f0_hz = f0_grid[i];
    s.formants[0] = {Uniform(rng, 300, 850), Uniform(rng, 60, 120), 1.0};
    s.formants[1] = {Uniform(rng, 900, 2300), Uniform(rng, 80, 160), Uniform(rng, 0.4, 0.9)};
    s.formants[2] = {Uniform(rng, 2400, 3500), Uniform(rng, 100, 200), Uniform(rng, 0.2, 0.5)};
    s.tilt = Uniform(rng, 0.3, 1.0);
    s.syllable_rate_hz = Uniform(rng, 3.0, 6.0);
    s.vibrato_hz = Uniform(rng, 4.0, 7.0);
    s.vibrato_depth = Uniform(rng, 0.005, 0.02);
    s.seed = rng();
  }
  return pool;
}

Waveform SynthUtterance(const SyntheticSpeaker& spk, double duration_s, uint64_t seed,
                        int sample_rate) {
  if (!(duration_s >= 0.5 && duration_s <= 10.0)) {
    throw DataError("utterance duration must be in [0.5, 10] s, got " + std::to_string(duration_s));
  }
  if (spk.f0_hz <= 0 || sample_rate <= 0) throw DataError("invalid speaker parameters");
  Rng rng(DeriveSeed(spk.seed, {seed}));
  const size_t n = static_cast<size_t>(std::llround(duration_s * sample_rate));
  const double sr = sample_rate;

  // Per-utterance prosody.
  const double base_f0 = spk.f0_hz * (1.0 + Uniform(rng, -0.02, 0.02));
  const double declination = Uniform(rng, 0.0, 0.06);
  const double vib_phase = Uniform(rng, 0, kTwoPi);
  const double syl_rate = spk.syllable_rate_hz * (1.0 + Uniform(rng, -0.15, 0.15));
  const double syl_phase = Uniform(rng, 0, kTwoPi);
  const double drift_phase = Uniform(rng, 0, kTwoPi);

  const int max_harmonics = static_cast<int>(0.45 * sr / (base_f0 * 1.05));
  std::vector<double> amp(max_harmonics + 1, 0.0);
  std::vector<double> out(n, 0.0);
  const size_t ramp = std::min<size_t>(n / 4, static_cast<size_t>(0.02 * sr));

  double phase = Uniform(rng, 0, kTwoPi);
  for (size_t t = 0; t < n; ++t) {
    const double time = t / sr;
    const double f0 = base_f0 * (1.0 + spk.vibrato_depth * std::sin(kTwoPi * spk.vibrato_hz * time + vib_phase) +
                                 0.015 * std::sin(kTwoPi * 0.7 * time + drift_phase) -
                                 declination * time / duration_s);
    if (t % kAmplitudeBlock == 0) {
      for (int k = 1; k <= max_harmonics; ++k) {
        const double f = k * f0;
        amp[k] = f < 0.48 * sr ? FormantEnvelope(spk, f) * std::pow(k, -spk.tilt) : 0.0;
      }
    }
    phase += kTwoPi * f0 / sr;
    if (phase > kTwoPi) phase -= kTwoPi;
    // sin(k phase) by the Chebyshev recurrence.
    const double c2 = 2.0 * std::cos(phase);
    double s_prev = 0.0, s_cur = std::sin(phase), acc = 0.0;
    for (int k = 1; k <= max_harmonics; ++k) {
      acc += amp[k] * s_cur;
      const double s_next = c2 * s_cur - s_prev;
      s_prev = s_cur;
      s_cur = s_next;
    }
    const double syllable = 0.5 * (1.0 - std::cos(kTwoPi * syl_rate * time + syl_phase));
    double env = 0.2 + 0.8 * syllable * syllable;
    if (t < ramp) env *= (t + 1.0) / (ramp + 1.0);
    if (n - 1 - t < ramp) env *= (n - t) / (ramp + 1.0);
    out[t] = acc * env;
  }

  double peak = 0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  const double g = peak > 0 ? kUtterancePeak / peak : 0.0;
  for (size_t t = 0; t < n; ++t) w.samples[t] = static_cast<float>(out[t] * g);
  return w;
}

MixtureRecord MixFullyOverlapped(const std::vector<SyntheticSpeaker>& speakers, SnrRange snr,
                                 double duration_s, uint64_t seed, int sample_rate) {
  CheckDistinct(speakers);
  if (speakers.size() > 4) throw DataError("fully overlapped mixtures hold at most 4 speakers");
  Rng rng(DeriveSeed(seed, {0x4d4958ULL}));
  MixtureRecord rec;
  for (size_t i = 0; i < speakers.size(); ++i) {
    Waveform utt = SynthUtterance(speakers[i], duration_s, rng(), sample_rate);
    const double r = Uniform(rng, snr.lo_db, snr.hi_db);
    const double scale = std::pow(10.0, r / 20.0);
    for (float& v : utt.samples) v = static_cast<float>(v * scale);
    rec.speakers.push_back(speakers[i].speaker_id);
    rec.utterances.push_back({static_cast<int>(i), 0, static_cast<int64_t>(utt.size()), r});
    rec.sources.push_back(std::move(utt));
  }
  Finalize(&rec, sample_rate);
  rec.overlap_ratio = speakers.size() > 1 ? OverlapRatio(rec) : 0.0;
  return rec;
}

MixtureRecord SimulateMultiround(const std::vector<SyntheticSpeaker>& speakers,
                                 const MultiroundConfig& cfg, SnrRange snr, uint64_t seed,
                                 int sample_rate) {
  CheckDistinct(speakers);
  if (cfg.k_min < 1 || cfg.k_min > cfg.k_max) throw DataError("need 1 <= k_min <= k_max");
  if (cfg.beta_s < 0) throw DataError("beta must be non-negative");
  Rng rng(DeriveSeed(seed, {0x4d52ULL}));
  const int rounds = std::uniform_int_distribution<int>(cfg.k_min, cfg.k_max)(rng);
  const double beta = cfg.beta_s * sample_rate;

  MixtureRecord rec;
  for (const auto& s : speakers) rec.speakers.push_back(s.speaker_id);
  std::vector<std::vector<float>> placed(speakers.size());
  std::vector<int> order(speakers.size());
  std::iota(order.begin(), order.end(), 0);

  int64_t cursor = 0, length = 0;
  for (int k = 0; k < rounds; ++k) {
    if (cfg.shuffle_order) std::shuffle(order.begin(), order.end(), rng);
    for (int idx : order) {
      const double dur = Uniform(rng, cfg.utterance_min_s, cfg.utterance_max_s);
      Waveform utt = SynthUtterance(speakers[idx], dur, rng(), sample_rate);
      const double r = Uniform(rng, snr.lo_db, snr.hi_db);
      const float scale = static_cast<float>(std::pow(10.0, r / 20.0));
      const int64_t len = static_cast<int64_t>(utt.size());
      std::vector<float>& dst = placed[idx];
      if (static_cast<int64_t>(dst.size()) < cursor + len) dst.resize(cursor + len, 0.0f);
      for (int64_t t = 0; t < len; ++t) dst[cursor + t] += utt.samples[t] * scale;
      rec.utterances.push_back({idx, cursor, len, r});
      length = std::max(length, cursor + len);
      // One draw per step whatever beta is, so seeds line up across betas.
      const double u = std::generate_canonical<double, 53>(rng);
      cursor = length + std::llround((2.0 * u - 1.0) * beta);
      if (cursor < 0) {
        cursor = 0;
        ++rec.clamped_shifts;
      }
    }
  }
  for (auto& p : placed) {
    p.resize(length, 0.0f);
    rec.sources.push_back(Waveform{std::move(p), sample_rate});
  }
  Finalize(&rec, sample_rate);
  rec.overlap_ratio = OverlapRatio(rec);
  return rec;
}

std::vector<uint8_t> SpeakerActivity(const MixtureRecord& rec, int index) {
  const Waveform& src = rec.sources.at(index);
  std::vector<uint8_t> active(src.size(), 0);
  for (const auto& u : rec.utterances) {
    if (u.speaker_index != index) continue;
    for (int64_t t = u.offset; t < u.offset + u.length && t < static_cast<int64_t>(src.size()); ++t) {
      active[t] = 1;
    }
  }
  // Within a span, activity means a nonzero placed sample.
  for (size_t t = 0; t < active.size(); ++t) {
    if (active[t] && src.samples[t] == 0.0f) active[t] = 0;
  }
  return active;
}

double OverlapRatio(const MixtureRecord& rec) {
  const size_t n = rec.mixture.size();
  if (n == 0) return 0.0;
  std::vector<uint8_t> count(n, 0);
  for (int i = 0; i < rec.num_speakers(); ++i) {
    const auto a = SpeakerActivity(rec, i);
    for (size_t t = 0; t < n; ++t) count[t] += a[t];
  }
  size_t overlapped = 0;
  for (uint8_t c : count) overlapped += c >= 2;
  return static_cast<double>(overlapped) / n;
}

double CalibrateBeta(const MultiroundConfig& base, int num_speakers, double target, int records,
                     uint64_t seed) {
  const auto pool = MakeSpeakerPool(num_speakers, seed);
  double best = 0.0;
  for (int step = 0; step <= 40; ++step) {
    MultiroundConfig cfg = base;
    cfg.beta_s = 0.05 * step;
    double mean = 0;
    for (int r = 0; r < records; ++r) {
      mean += SimulateMultiround(pool, cfg, SnrRange{}, DeriveSeed(seed, {uint64_t(step), uint64_t(r)}))
                  .overlap_ratio;
    }
    mean /= records;
    best = cfg.beta_s;
    if (mean >= target) break;
  }
  return best;
}

std::vector<MixtureRecord> GenerateSplit(const DatasetConfig& cfg,
                                         const std::vector<SyntheticSpeaker>& pool,
                                         const std::string& split, int count, int workers) {
  if (count < 0) throw ConfigError("split size must be non-negative");
  if (cfg.speakers_per_mixture.empty()) throw ConfigError("speakers_per_mixture is empty");
  for (int i : cfg.speakers_per_mixture) {
    if (i < 1 || i > static_cast<int>(pool.size())) {
      throw ConfigError("speakers_per_mixture value " + std::to_string(i) +
                        " exceeds the speaker pool of split " + split);
    }
  }
  uint64_t split_tag = 0;
  for (char c : split) split_tag = split_tag * 131 + static_cast<unsigned char>(c);
  std::vector<MixtureRecord> out(count);
  const bool multiround = cfg.mixture_type == "multiround";
  if (!multiround && cfg.mixture_type != "fully_overlapped") {
    throw ConfigError("unknown mixture_type '" + cfg.mixture_type + "'");
  }
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (int r = 0; r < count; ++r) {
    const uint64_t rec_seed = DeriveSeed(cfg.seed, {split_tag, static_cast<uint64_t>(r)});
    Rng rng(rec_seed);
    // Speaker counts cycle so every count is equally represented.
    const int num = cfg.speakers_per_mixture[r % cfg.speakers_per_mixture.size()];
    std::vector<int> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<SyntheticSpeaker> chosen;
    for (int i = 0; i < num; ++i) chosen.push_back(pool[idx[i]]);
    out[r] = multiround
                 ? SimulateMultiround(chosen, cfg.multiround, cfg.snr, rng(), cfg.sample_rate)
                 : MixFullyOverlapped(chosen, cfg.snr, cfg.duration_s, rng(), cfg.sample_rate);
  }
  return out;
}

ManifestEntry ToEntry(const MixtureRecord& rec, const std::string& split, bool open_condition) {
  ManifestEntry e;
  e.speaker_ids = rec.speakers;
  for (const auto& u : rec.utterances) {
    e.offsets.push_back(u.offset);
    e.snr_db.push_back(u.snr_db);
    e.utterance_speakers.push_back(u.speaker_index);
    e.utterance_lengths.push_back(u.length);
  }
  e.overlap_ratio = rec.overlap_ratio;
  e.duration_s = rec.mixture.duration_s();
  e.split = split;
  e.open_condition = open_condition;
  e.clamped_shifts = rec.clamped_shifts;
  e.gain = rec.gain;
  return e;
}

namespace {

json EntryToJson(const ManifestEntry& e) {
  return json{{"mixture_path", e.mixture_path},
              {"source_paths", e.source_paths},
              {"speaker_ids", e.speaker_ids},
              {"offsets", e.offsets},
              {"snr_db", e.snr_db},
              {"utterance_speakers", e.utterance_speakers},
              {"utterance_lengths", e.utterance_lengths},
              {"overlap_ratio", e.overlap_ratio},
              {"duration_s", e.duration_s},
              {"split", e.split},
              {"open_condition", e.open_condition},
              {"clamped_shifts", e.clamped_shifts},
              {"gain", e.gain}};
}

ManifestEntry EntryFromJson(const json& j) {
  ManifestEntry e;
  j.at("mixture_path").get_to(e.mixture_path);
  j.at("source_paths").get_to(e.source_paths);
  j.at("speaker_ids").get_to(e.speaker_ids);
  j.at("offsets").get_to(e.offsets);
  j.at("snr_db").get_to(e.snr_db);
  e.utterance_speakers = j.value("utterance_speakers", std::vector<int>{});
  e.utterance_lengths = j.value("utterance_lengths", std::vector<int64_t>{});
  j.at("overlap_ratio").get_to(e.overlap_ratio);
  j.at("duration_s").get_to(e.duration_s);
  j.at("split").get_to(e.split);
  j.at("open_condition").get_to(e.open_condition);
  e.clamped_shifts = j.value("clamped_shifts", 0);
  e.gain = j.value("gain", 1.0);
  if (e.source_paths.size() != e.speaker_ids.size()) {
    throw DataError("manifest entry " + e.mixture_path + ": source_paths and speaker_ids differ in length");
  }
  return e;
}

json SpeakerToJson(const SyntheticSpeaker& s) {
  json formants = json::array();
  for (const auto& f : s.formants) formants.push_back({f.center_hz, f.bandwidth_hz, f.gain});
  return json{{"speaker_id", s.speaker_id}, {"f0_hz", s.f0_hz},
              {"formants", formants},       {"tilt", s.tilt},
              {"syllable_rate_hz", s.syllable_rate_hz},
              {"vibrato_hz", s.vibrato_hz}, {"vibrato_depth", s.vibrato_depth},
              {"seed", s.seed}};
}

}  // namespace

void SaveManifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& e : entries) out << EntryToJson(e).dump() << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

Manifest LoadManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(EntryFromJson(json::parse(line)));
    } catch (const json::exception& ex) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

MixtureRecord LoadRecord(const Manifest& manifest, const ManifestEntry& entry) {
  MixtureRecord rec;
  rec.mixture = ReadWav(manifest.base_dir / entry.mixture_path);
  for (const auto& p : entry.source_paths) {
    rec.sources.push_back(ReadWav(manifest.base_dir / p));
    if (rec.sources.back().size() != rec.mixture.size()) {
      throw DataError("source " + p + " length differs from its mixture");
    }
  }
  rec.speakers = entry.speaker_ids;
  const size_t nu = entry.offsets.size();
  for (size_t u = 0; u < nu; ++u) {
    UtterancePlacement pl;
    pl.offset = entry.offsets[u];
    pl.snr_db = u < entry.snr_db.size() ? entry.snr_db[u] : 0.0;
    pl.speaker_index = u < entry.utterance_speakers.size() ? entry.utterance_speakers[u] : static_cast<int>(u);
    pl.length = u < entry.utterance_lengths.size() ? entry.utterance_lengths[u]
                                                   : static_cast<int64_t>(rec.mixture.size()) - pl.offset;
    rec.utterances.push_back(pl);
  }
  rec.overlap_ratio = entry.overlap_ratio;
  rec.clamped_shifts = entry.clamped_shifts;
  rec.gain = entry.gain;
  return rec;
}

Manifest BuildDataset(const DatasetConfig& cfg, const fs::path& out_dir, bool force, int workers) {
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw ConfigError("output directory " + out_dir.string() + " is not empty (use --force)");
    for (const char* split : {"train", "valid", "test"}) fs::remove_all(out_dir / split);
  }
  fs::create_directories(out_dir);
  const int total = cfg.num_speakers + cfg.num_open_speakers;
  const auto pool = MakeSpeakerPool(total, cfg.seed);
  const std::vector<SyntheticSpeaker> closed(pool.begin(), pool.begin() + cfg.num_speakers);
  const std::vector<SyntheticSpeaker> open(pool.begin() + cfg.num_speakers, pool.end());

  {
    json speakers = json::array();
    for (const auto& s : pool) speakers.push_back(SpeakerToJson(s));
    std::ofstream(out_dir / "speakers.json")
        << json{{"num_speakers", cfg.num_speakers}, {"speakers", speakers}}.dump(2) << '\n';
  }

  Manifest manifest;
  manifest.base_dir = out_dir;
  struct Split {
    const char* name;
    int size;
    bool open;
  };
  for (const Split& sp : {Split{"train", cfg.train_size, false}, Split{"valid", cfg.valid_size, false},
                          Split{"test", cfg.test_size, cfg.test_open_condition}}) {
    const auto& speakers = sp.open ? open : closed;
    if (sp.size > 0 && speakers.empty()) {
      throw ConfigError(std::string("split ") + sp.name + " has no speakers to draw from");
    }
    const auto records = GenerateSplit(cfg, speakers, sp.name, sp.size, workers);
    std::vector<ManifestEntry> entries(records.size());
    fs::create_directories(out_dir / sp.name);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (int r = 0; r < static_cast<int>(records.size()); ++r) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "rec%05d", r);
      ManifestEntry e = ToEntry(records[r], sp.name, sp.open);
      e.mixture_path = (fs::path(sp.name) / (std::string(stem) + "_mix.wav")).generic_string();
      WriteWav(out_dir / e.mixture_path, records[r].mixture);
      for (int i = 0; i < records[r].num_speakers(); ++i) {
        const std::string p =
            (fs::path(sp.name) / (std::string(stem) + "_s" + std::to_string(i) + ".wav")).generic_string();
        WriteWav(out_dir / p, records[r].sources[i]);
        e.source_paths.push_back(p);
      }
      entries[r] = std::move(e);
    }
    SaveManifest(out_dir / (std::string(sp.name) + ".jsonl"), entries);
    manifest.entries.insert(manifest.entries.end(), entries.begin(), entries.end());
  }
  SaveManifest(out_dir / "manifest.jsonl", manifest.entries);
  return manifest;
}

uint64_t CorpusHash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
      files.push_back(fs::relative(e.path(), dir));
    }
  }
  std::sort(files.begin(), files.end());
  Fnv1a h;
  std::vector<char> buf(1 << 16);
  for (const auto& f : files) {
    const std::string name = f.generic_string();
    h.Update(name.data(), name.size());
    std::ifstream in(dir / f, std::ios::binary);
    while (in) {
      in.read(buf.data(), buf.size());
      h.Update(buf.data(), static_cast<size_t>(in.gcount()));
    }
  }
  return h.digest();
}

}  // namespace sccm
