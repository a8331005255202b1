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

#include "sccm/eval.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "sccm/error.h"
#include "sccm/training.h"

namespace sccm {

using json = nlohmann::json;

ScoredRecord ScoreRecord(std::span<const float> mixture, const std::vector<std::vector<float>>& estimates,
                         const std::vector<std::span<const float>>& targets) {
  const size_t k = estimates.size();
  const size_t n = targets.size();
  if (n == 0) throw DataError("cannot score a record without targets");
  for (const auto& t : targets) {
    if (t.size() != mixture.size()) throw DataError("target and mixture lengths differ");
  }
  for (const auto& e : estimates) {
    if (e.size() != mixture.size()) throw DataError("estimate and mixture lengths differ");
  }
  const size_t m = std::max(k, n);
  const std::vector<float> silence(mixture.size(), 0.0f);
  std::vector<std::vector<double>> scores(m, std::vector<double>(m, 0.0));
  for (size_t i = 0; i < m; ++i) {
    const std::span<const float> est = i < k ? std::span<const float>(estimates[i]) : std::span<const float>(silence);
    for (size_t j = 0; j < n; ++j) scores[i][j] = SiSnr<float>(est, targets[j]);
  }
  const PermutationAssignment best = BestPermutationFromScores(scores);
  ScoredRecord out;
  out.si_snri.assign(n, 0.0);
  out.pairing.assign(n, -1);
  double best_sum = 0, identity_sum = 0;
  for (size_t i = 0; i < m; ++i) {
    const int j = best.theta[i];
    if (j >= static_cast<int>(n)) continue;
    out.pairing[j] = i < k ? static_cast<int>(i) : -1;
    out.si_snri[j] = scores[i][j] - SiSnr<float>(mixture, targets[j]);
    best_sum -= scores[i][j];
  }
  for (size_t j = 0; j < n; ++j) identity_sum -= scores[j][j];
  out.best_loss = best_sum / n;
  out.identity_loss = identity_sum / n;
  double s = 0;
  for (double v : out.si_snri) s += v;
  out.mean_si_snri = s / n;
  return out;
}

double MicroF1(const std::vector<std::vector<int>>& predicted, const std::vector<std::vector<int>>& truth,
               bool open_condition) {
  if (open_condition) {
    throw DataError("micro-F1 is undefined for open-condition speakers; use counting accuracy instead");
  }
  if (predicted.size() != truth.size()) throw DataError("micro-F1 needs aligned prediction and truth lists");
  long tp = 0, fp = 0, fn = 0;
  for (size_t r = 0; r < truth.size(); ++r) {
    const std::set<int> p(predicted[r].begin(), predicted[r].end());
    const std::set<int> t(truth[r].begin(), truth[r].end());
    for (int c : p) (t.count(c) ? tp : fp) += 1;
    for (int c : t) fn += p.count(c) ? 0 : 1;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * tp / denom;
}

double CountingAccuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw DataError("counting accuracy needs aligned count lists");
  if (truth.empty()) return 0.0;
  size_t hit = 0;
  for (size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / truth.size();
}

EvalReport Aggregate(std::vector<RecordResult> records, const EvalConfig& cfg, bool closed_condition) {
  EvalReport rep;
  rep.n_records = static_cast<int>(records.size());
  rep.histogram_min_db = cfg.histogram_min_db;
  rep.histogram_bin_db = 1.0;
  const int bins = static_cast<int>(std::ceil(cfg.histogram_max_db - cfg.histogram_min_db));
  rep.si_snri_histogram.assign(bins, 0);
  std::vector<int> pc, tc;
  std::vector<std::vector<int>> ps, ts;
  int below = 0;
  double sum = 0;
  for (const auto& r : records) {
    const double v = r.score.mean_si_snri;
    sum += v;
    if (v < cfg.split_db) ++below;
    const int b = std::clamp(static_cast<int>(std::floor(v - cfg.histogram_min_db)), 0, bins - 1);
    ++rep.si_snri_histogram[b];
    pc.push_back(r.inferred_count);
    tc.push_back(r.true_count);
    ps.push_back(r.predicted_classes);
    ts.push_back(r.true_classes);
  }
  if (!records.empty()) {
    rep.si_snri_mean = sum / records.size();
    rep.frac_below_5db = static_cast<double>(below) / records.size();
    rep.frac_above_5db = 1.0 - rep.frac_below_5db;
    rep.counting_accuracy = CountingAccuracy(pc, tc);
  }
  if (closed_condition) {
    rep.has_micro_f1 = true;
    rep.micro_f1 = MicroF1(ps, ts);
  }
  rep.records = std::move(records);
  return rep;
}

json EvalReport::ToJson() const {
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back({{"manifest_index", r.manifest_index},
                    {"true_count", r.true_count},
                    {"inferred_count", r.inferred_count},
                    {"truncated", r.truncated},
                    {"true_classes", r.true_classes},
                    {"predicted_classes", r.predicted_classes},
                    {"si_snri", r.score.si_snri},
                    {"pairing", r.score.pairing},
                    {"mean_si_snri", r.score.mean_si_snri}});
  }
  return {{"n_records", n_records},
          {"si_snri_mean", si_snri_mean},
          {"si_snri_histogram", {{"min_db", histogram_min_db}, {"bin_db", histogram_bin_db}, {"counts", si_snri_histogram}}},
          {"frac_below_5db", frac_below_5db},
          {"frac_above_5db", frac_above_5db},
          {"micro_f1", has_micro_f1 ? json(micro_f1) : json(nullptr)},
          {"counting_accuracy", counting_accuracy},
          {"records", recs}};
}

EvalReport EvaluateSeparation(const Model& model, const Manifest& manifest, const std::string& split,
                              bool use_cascade) {
  const auto& cfg = model.config();
  const int vocab = cfg.inference_net.num_speakers;
  bool closed = model.is_sccm();
  std::vector<RecordResult> results;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (!split.empty() && e.split != split) continue;
    const MixtureRecord rec = LoadRecord(manifest, e);
    if (rec.mixture.sample_rate != cfg.dataset.sample_rate) {
      throw DataError("record " + std::to_string(i) + " is sampled at " + std::to_string(rec.mixture.sample_rate) +
                      " Hz but the checkpoint expects " + std::to_string(cfg.dataset.sample_rate) + " Hz");
    }
    if (e.open_condition) closed = false;
    if (!e.open_condition && model.is_sccm()) {
      for (int id : e.speaker_ids) {
        if (id < 0 || id >= vocab) {
          throw DataError("closed-condition record " + std::to_string(i) + " has speaker " + std::to_string(id) +
                          " outside the checkpoint's " + std::to_string(vocab) + "-speaker vocabulary");
        }
      }
    }
    if (rec.sources.empty()) continue;
    const Separation sep = model.Separate(rec.mixture, use_cascade);
    RecordResult r;
    r.manifest_index = i;
    r.true_count = static_cast<int>(rec.sources.size());
    r.inferred_count = static_cast<int>(sep.sources.size());
    r.truncated = sep.truncated;
    r.true_classes = e.speaker_ids;
    std::vector<std::vector<float>> estimates;
    for (const auto& s : sep.sources) {
      estimates.push_back(s.waveform.samples);
      if (s.class_index >= 0) r.predicted_classes.push_back(s.class_index);
    }
    std::vector<std::span<const float>> targets;
    for (const auto& s : rec.sources) targets.push_back(s.samples);
    r.score = ScoreRecord(rec.mixture.samples, estimates, targets);
    results.push_back(std::move(r));
  }
  return Aggregate(std::move(results), cfg.eval, closed);
}

double AttentionMassOnActive(std::span<const float> attention, const std::vector<uint8_t>& activity, int frame_len,
                             int hop) {
  double on = 0, total = 0;
  for (size_t t = 0; t < attention.size(); ++t) {
    const size_t begin = t * static_cast<size_t>(hop);
    const size_t end = std::min(activity.size(), begin + static_cast<size_t>(frame_len));
    size_t active = 0;
    for (size_t s = begin; s < end; ++s) active += activity[s] != 0;
    total += attention[t];
    if (end > begin && 2 * active >= end - begin) on += attention[t];
  }
  return total > 0 ? on / total : 0.0;
}

void WritePng(const std::filesystem::path& path, int width, int height, const std::vector<uint8_t>& rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<size_t>(width) * height * 3) {
    throw ShapeError("PNG buffer does not match its dimensions");
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("failed encoding " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(y) * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

namespace {

// Log spectrogram on top, attention bars below, sharing the frame axis.
void RenderAttention(const Matrix<float>& spec, std::span<const float> attention, const std::filesystem::path& path) {
  const int frames = spec.rows();
  const int bins = spec.cols();
  const int px = std::max(1, 480 / std::max(frames, 1));
  const int width = frames * px;
  const int bar_h = 96;
  const int height = bins + bar_h;
  std::vector<uint8_t> rgb(static_cast<size_t>(width) * height * 3, 255);
  double lo = INFINITY, hi = -INFINITY;
  for (float v : spec.flat()) {
    const double l = std::log10(std::abs(v) + 1e-6);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  const double range = std::max(hi - lo, 1e-9);
  auto put = [&](int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    uint8_t* p = &rgb[(static_cast<size_t>(y) * width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  };
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < bins; ++f) {
      const double l = (std::log10(std::abs(spec(t, f)) + 1e-6) - lo) / range;
      const auto g = static_cast<uint8_t>(255 - std::clamp(l, 0.0, 1.0) * 255);
      for (int d = 0; d < px; ++d) put(t * px + d, bins - 1 - f, g, g, g);
    }
  }
  float peak = 0;
  for (float a : attention) peak = std::max(peak, a);
  for (int t = 0; t < frames && t < static_cast<int>(attention.size()); ++t) {
    const int h = peak > 0 ? static_cast<int>(std::lround(attention[t] / peak * (bar_h - 4))) : 0;
    for (int y = 0; y < h; ++y) {
      for (int d = 0; d < px; ++d) put(t * px + d, height - 1 - y, 200, 40, 40);
    }
  }
  WritePng(path, width, height, rgb);
}

}  // namespace

std::vector<std::filesystem::path> ExportAttention(const Model& model, const Waveform& observation,
                                                   const std::filesystem::path& out_dir) {
  if (!model.is_sccm()) throw ConfigError("attention export needs a speaker-inference checkpoint");
  std::filesystem::create_directories(out_dir);
  const Matrix<float> spec = model.Features(observation);
  const InferenceResult inferred = InferSpeakers(model.inference(), spec);
  std::vector<std::filesystem::path> written;
  for (size_t k = 0; k < inferred.steps.size(); ++k) {
    const auto& att = inferred.steps[k].attention;
    const auto csv = out_dir / ("attention_" + std::to_string(k) + ".csv");
    std::ofstream out(csv);
    if (!out) throw DataError("cannot write " + csv.string());
    out << "frame_index,weight\n";
    for (size_t t = 0; t < att.size(); ++t) out << t << ',' << att[t] << '\n';
    written.push_back(csv);
    const auto png = out_dir / ("attention_" + std::to_string(k) + ".png");
    RenderAttention(spec, att, png);
    written.push_back(png);
  }
  json meta = json::array();
  for (const auto& s : inferred.steps) meta.push_back({{"class_index", s.class_index}});
  std::ofstream(out_dir / "attention.json")
      << json{{"frames", spec.rows()}, {"truncated", inferred.truncated}, {"speakers", meta}}.dump(2) << '\n';
  return written;
}

}  // namespace sccm
