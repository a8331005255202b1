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

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sccm/error.h"
#include "sccm/eval.h"
#include "sccm/wav.h"

namespace sccm {
namespace {

namespace fs = std::filesystem;

TEST_CASE("micro-F1 pools counts over records") {
  CHECK(MicroF1({{1, 2}}, {{1, 2}}) == 1.0);
  // TP 1, FP 1, FN 1.
  CHECK(MicroF1({{1, 3}}, {{1, 2}}) == doctest::Approx(0.5));
  // Record 1: TP 2; record 2: TP 1, FP 1, FN 2 -> 6 / (6 + 1 + 2).
  CHECK(MicroF1({{0, 1}, {2, 3}}, {{0, 1}, {2, 0, 1}}) == doctest::Approx(6.0 / 9.0));
  CHECK(MicroF1({{}}, {{}}) == 1.0);
  CHECK(MicroF1({{}}, {{4}}) == 0.0);
  CHECK_THROWS_AS(MicroF1({{1}}, {{1}}, true), DataError);
  CHECK_THROWS_AS(MicroF1({{1}}, {}), DataError);
}

TEST_CASE("micro-F1 agrees with a per-class count oracle") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<int>> pred, truth;
  for (int r = 0; r < 50; ++r) {
    std::vector<int> all{0, 1, 2, 3, 4, 5};
    std::shuffle(all.begin(), all.end(), rng);
    truth.emplace_back(all.begin(), all.begin() + 2 + rng() % 3);
    std::shuffle(all.begin(), all.end(), rng);
    pred.emplace_back(all.begin(), all.begin() + 1 + rng() % 4);
  }
  // Per class c: TP_c, FP_c, FN_c, then pooled.
  long tp = 0, fp = 0, fn = 0;
  for (int c = 0; c < 6; ++c) {
    for (size_t r = 0; r < truth.size(); ++r) {
      const bool p = std::find(pred[r].begin(), pred[r].end(), c) != pred[r].end();
      const bool t = std::find(truth[r].begin(), truth[r].end(), c) != truth[r].end();
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
  }
  const double precision = double(tp) / (tp + fp), recall = double(tp) / (tp + fn);
  CHECK(MicroF1(pred, truth) == doctest::Approx(2 * precision * recall / (precision + recall)).epsilon(1e-12));
}

TEST_CASE("counting accuracy") {
  CHECK(CountingAccuracy({2, 3, 2, 2}, {2, 3, 3, 2}) == doctest::Approx(0.75));
  CHECK(CountingAccuracy({}, {}) == 0.0);
  CHECK_THROWS_AS(CountingAccuracy({1}, {1, 2}), DataError);
}

struct Toy {
  std::vector<float> a, b, mix;
  Toy() {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> normal;
    a.resize(800);
    b.resize(800);
    mix.resize(800);
    for (size_t i = 0; i < a.size(); ++i) {
      a[i] = normal(rng);
      b[i] = 0.7f * normal(rng);
      mix[i] = a[i] + b[i];
    }
  }
};

TEST_CASE("perfect estimates score their full improvement in either order") {
  Toy t;
  const std::vector<std::span<const float>> targets{t.a, t.b};
  const auto r = ScoreRecord(t.mix, {t.b, t.a}, targets);
  CHECK(r.pairing == std::vector<int>{1, 0});
  for (int j = 0; j < 2; ++j) {
    const double want = SiSnr<float>(targets[j], targets[j]) - SiSnr<float>(t.mix, targets[j]);
    CHECK(r.si_snri[j] == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK(r.best_loss <= r.identity_loss);
  CHECK(r.mean_si_snri > 60);
}

TEST_CASE("copying the mixture improves nothing") {
  Toy t;
  const auto r = ScoreRecord(t.mix, {t.mix, t.mix}, {t.a, t.b});
  CHECK(r.si_snri[0] == 0.0);
  CHECK(r.si_snri[1] == 0.0);
}

TEST_CASE("missing estimates are zero signals and surplus ones are unpaired") {
  Toy t;
  const auto missing = ScoreRecord(t.mix, {t.a}, {t.a, t.b});
  CHECK(missing.pairing == std::vector<int>{0, -1});
  CHECK(missing.si_snri[1] == doctest::Approx(kSiSnrFloorDb - SiSnr<float>(t.mix, t.b)));

  const auto surplus = ScoreRecord(t.mix, {t.mix, t.b, t.a}, {t.a, t.b});
  CHECK(surplus.pairing == std::vector<int>{2, 1});
  CHECK(surplus.mean_si_snri > 60);
  CHECK_THROWS_AS(ScoreRecord(t.mix, {}, {}), DataError);
}

TEST_CASE("aggregate histogram and thresholds") {
  std::vector<RecordResult> recs(4);
  const double means[] = {-30.0, 4.9, 5.0, 55.0};
  for (int i = 0; i < 4; ++i) {
    recs[i].score.mean_si_snri = means[i];
    recs[i].true_count = 2;
    recs[i].inferred_count = i == 0 ? 3 : 2;
    recs[i].true_classes = {0, 1};
    recs[i].predicted_classes = {0, 1};
  }
  EvalConfig cfg;
  const EvalReport rep = Aggregate(recs, cfg, true);
  CHECK(rep.n_records == 4);
  CHECK(rep.si_snri_histogram.size() == 60);
  CHECK(rep.si_snri_histogram.front() == 1);  // clamped from -30
  CHECK(rep.si_snri_histogram.back() == 1);   // clamped from 55
  CHECK(rep.si_snri_histogram[24] == 1);      // [4, 5)
  CHECK(rep.si_snri_histogram[25] == 1);      // [5, 6)
  CHECK(rep.frac_below_5db == doctest::Approx(0.5));
  CHECK(rep.frac_above_5db == doctest::Approx(0.5));
  CHECK(rep.counting_accuracy == doctest::Approx(0.75));
  CHECK(rep.has_micro_f1);
  CHECK(rep.micro_f1 == 1.0);
  CHECK(rep.si_snri_mean == doctest::Approx((-30 + 4.9 + 5 + 55) / 4.0));
  const auto j = rep.ToJson();
  CHECK(j.at("records").size() == 4);
  CHECK(Aggregate(recs, cfg, false).ToJson().at("micro_f1").is_null());
}

TEST_CASE("attention mass counts frames that are mostly active") {
  std::vector<uint8_t> act(40, 0);
  for (int i = 10; i < 30; ++i) act[i] = 1;
  // frame_len 8, hop 4: frames start at 0, 4, ..., 32.
  std::vector<float> att(9, 0.0f);
  att[3] = 0.5f;  // [12, 20) fully active
  att[0] = 0.5f;  // [0, 8) silent
  CHECK(AttentionMassOnActive(att, act, 8, 4) == doctest::Approx(0.5));
  att[2] = 1.0f;  // [8, 16): 6 of 8 active
  CHECK(AttentionMassOnActive(att, act, 8, 4) == doctest::Approx(0.75));
  CHECK(AttentionMassOnActive(std::vector<float>(9, 0.0f), act, 8, 4) == 0.0);
}

ExperimentConfig TinyConfig() {
  ExperimentConfig c = ExperimentConfig::Profile("desk");
  c.dataset.duration_s = 0.5;
  c.inference_net.d_model = 16;
  c.inference_net.heads = 2;
  c.inference_net.d_k = 8;
  c.inference_net.d_v = 8;
  c.inference_net.d_ff = 32;
  c.extraction_net.n_filters = 16;
  c.extraction_net.bottleneck = 16;
  c.extraction_net.hidden = 32;
  c.extraction_net.blocks = 2;
  c.extraction_net.repeats = 1;
  c.extraction_net.cond_dim = 16;
  return c;
}

TEST_CASE("attention export writes one csv and png per inferred speaker") {
  ExperimentConfig cfg = TinyConfig();
  Model model(cfg, 2);
  const auto pool = MakeSpeakerPool(cfg.dataset.num_speakers, 1);
  const auto rec = MixFullyOverlapped({pool[0], pool[1]}, {}, 0.5, 3);
  const fs::path dir = fs::temp_directory_path() / "sccm_eval_attention";
  fs::remove_all(dir);
  const auto files = ExportAttention(model, rec.mixture, dir);
  const auto sep = model.Separate(rec.mixture);
  REQUIRE(!sep.sources.empty());
  REQUIRE(files.size() == 2 * sep.sources.size());
  for (size_t k = 0; k < sep.sources.size(); ++k) {
    std::ifstream in(dir / ("attention_" + std::to_string(k) + ".csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "frame_index,weight");
    int rows = 0;
    double sum = 0;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      int idx;
      char comma;
      double w;
      ss >> idx >> comma >> w;
      CHECK(idx == rows);
      CHECK(w >= 0);
      sum += w;
      ++rows;
    }
    CHECK(rows == sep.num_frames);
    CHECK(sum == doctest::Approx(cfg.inference_net.heads).epsilon(1e-4));
    std::ifstream png(dir / ("attention_" + std::to_string(k) + ".png"), std::ios::binary);
    char magic[8];
    png.read(magic, 8);
    CHECK(std::string(magic + 1, 3) == "PNG");
  }
  cfg.train.model = "pit";
  CHECK_THROWS_AS(ExportAttention(Model(cfg, 1), rec.mixture, dir), ConfigError);
}

TEST_CASE("evaluation refuses speakers outside the vocabulary") {
  const ExperimentConfig cfg = TinyConfig();
  Model model(cfg, 2);
  const fs::path dir = fs::temp_directory_path() / "sccm_eval_vocab";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto pool = MakeSpeakerPool(8, 1);
  auto rec = MixFullyOverlapped({pool[0], pool[6]}, {}, 0.5, 3);
  Manifest m;
  m.base_dir = dir;
  m.entries.push_back(ToEntry(rec, "test", false));
  m.entries[0].mixture_path = "mix.wav";
  m.entries[0].source_paths = {"s0.wav", "s1.wav"};
  WriteWav(dir / "mix.wav", rec.mixture);
  for (size_t i = 0; i < rec.sources.size(); ++i) WriteWav(dir / m.entries[0].source_paths[i], rec.sources[i]);
  CHECK_THROWS_AS(EvaluateSeparation(model, m), DataError);
  m.entries[0].open_condition = true;
  const EvalReport rep = EvaluateSeparation(model, m);
  CHECK(rep.n_records == 1);
  CHECK_FALSE(rep.has_micro_f1);
}

TEST_CASE("png writer validates its buffer") {
  const fs::path p = fs::temp_directory_path() / "sccm_eval_px.png";
  WritePng(p, 2, 1, {255, 0, 0, 0, 255, 0});
  CHECK(fs::file_size(p) > 8);
  CHECK_THROWS_AS(WritePng(p, 2, 2, {0, 0, 0}), ShapeError);
}

}  // namespace
}  // namespace sccm
