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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Training-based criteria run the desk profile
// on synthetic corpora; expect a long runtime on one core.

#include <omp.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.h"
#include "../test_util.h"
#include "json.hpp"
#include "sccm/eval.h"
#include "sccm/training.h"

namespace sccm {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

std::vector<TrainRecord> Prepare(const Model& model, std::vector<MixtureRecord> recs) {
  std::vector<TrainRecord> out;
  for (size_t i = 0; i < recs.size(); ++i) out.push_back(MakeTrainRecord(model, std::move(recs[i]), i));
  return out;
}

TrainCallbacks Quiet(const std::string& tag) {
  TrainCallbacks cb;
  cb.log = [tag](const std::string& line) { std::fprintf(stderr, "  [%s] %s\n", tag.c_str(), line.c_str()); };
  return cb;
}

// Scores every record of `set` with the model's own decode.
EvalReport Score(const Model& model, const std::vector<MixtureRecord>& set, bool use_cascade, bool closed) {
  std::vector<RecordResult> results;
  for (size_t i = 0; i < set.size(); ++i) {
    const auto& r = set[i];
    const Separation sep = model.Separate(r.mixture, use_cascade);
    RecordResult x;
    x.manifest_index = i;
    x.true_count = r.num_speakers();
    x.inferred_count = static_cast<int>(sep.sources.size());
    x.truncated = sep.truncated;
    x.true_classes = r.speakers;
    std::vector<std::vector<float>> est;
    for (const auto& s : sep.sources) {
      est.push_back(s.waveform.samples);
      if (s.class_index >= 0) x.predicted_classes.push_back(s.class_index);
    }
    std::vector<std::span<const float>> tg;
    for (const auto& s : r.sources) tg.push_back(s.samples);
    x.score = ScoreRecord(r.mixture.samples, est, tg);
    results.push_back(std::move(x));
  }
  return Aggregate(std::move(results), model.config().eval, closed);
}

ExperimentConfig DeskConfig() {
  ExperimentConfig c = ExperimentConfig::Profile("desk");
  c.train.max_epochs = 1000000;
  c.train.decay_every_epochs = 1000000;
  return c;
}

// ---- 1 -------------------------------------------------------------------

Outcome SiSnrProperties() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  double worst_scale = 0, worst_offset = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(2000), e(2000);
    for (size_t i = 0; i < s.size(); ++i) {
      s[i] = normal(rng);
      e[i] = s[i] + (0.05 + 0.02 * trial) * normal(rng);
    }
    const double base = SiSnr<double>(e, s);
    for (double c : {1e-3, 0.37, 2.0, 850.0}) {
      std::vector<double> scaled(e);
      for (auto& v : scaled) v *= c;
      worst_scale = std::max(worst_scale, std::abs(SiSnr<double>(scaled, s) - base));
    }
    for (double d : {-3.0, 0.5, 40.0}) {
      std::vector<double> shifted(e);
      for (auto& v : shifted) v += d;
      worst_offset = std::max(worst_offset, std::abs(SiSnr<double>(shifted, s) - base));
    }
  }
  const std::vector<double> ref{1, -1, 1, -1}, est{1, -1, 1, 0};
  const double hand = SiSnr<double>(est, ref);
  const double secs = Since(t0);
  Outcome o;
  o.pass = worst_scale < 1e-6 && worst_offset < 1e-6 && std::abs(hand - 6.53) <= 0.01 && secs < 1.0;
  o.detail = Fmt("scale dev %.2e dB, offset dev %.2e dB, example %.4f dB, %.3f s", worst_scale, worst_offset, hand,
                 secs);
  return o;
}

// ---- 2 -------------------------------------------------------------------

Outcome PermutationOracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  int agree = 0;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const auto inst = test::RandomPermutationInstance(n, 256, &rng);
    std::vector<std::span<const double>> est, tgt;
    for (const auto& e : inst.estimates) est.emplace_back(e);
    for (const auto& t : inst.targets) tgt.emplace_back(t);
    const auto got = BestPermutation<double>(est, tgt);
    const auto want = test::EnumerateBestPermutation(inst.estimates, inst.targets);
    const double d = std::abs(got.reconstruction_loss - want.loss);
    worst = std::max(worst, d);
    agree += got.theta == want.theta && d < 1e-9;
  }
  const double secs = Since(t0);
  return {agree == 200 && secs < 30, Fmt("%d/200 agree, max loss diff %.1e, %.2f s", agree, worst, secs)};
}

// ---- 3 -------------------------------------------------------------------

Outcome GradientCheck() {
  const auto t0 = Clock::now();
  InferenceNetConfig icfg;
  icfg.num_bins = 5;
  icfg.d_model = 8;
  icfg.heads = 2;
  icfg.d_k = 4;
  icfg.d_v = 4;
  icfg.d_ff = 16;
  icfg.num_speakers = 4;
  icfg.max_steps = 5;
  icfg.dropout = 0;
  ExtractorConfig ecfg;
  ecfg.n_filters = 8;
  ecfg.kernel = 4;
  ecfg.bottleneck = 8;
  ecfg.hidden = 16;
  ecfg.blocks = 2;
  ecfg.repeats = 1;
  ecfg.cond_dim = 8;
  InferenceNet<double> inf(icfg, 21);
  Extractor<double> ext(ecfg, 22);
  std::mt19937_64 rng(3);
  Matrix<double> feats = test::RandomMatrix<double>(7, 5, &rng);
  for (auto& v : feats.flat()) v = std::abs(v);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> targets(2, std::vector<double>(48));
  std::vector<double> mix(48, 0.0);
  for (auto& t : targets) {
    for (size_t k = 0; k < t.size(); ++k) {
      t[k] = normal(rng);
      mix[k] += t[k];
    }
  }
  const std::vector<int> classes{3, 1};
  auto loss = [&] {
    const auto enc = inf.Encode(feats, nn::Context::Eval());
    std::vector<ag::Var<double>> logits, est;
    const auto analysis = ext.Analyze(ag::Var<double>(Matrix<double>::RowVector(mix)));
    for (auto& s : inf.Decode(enc, 3, nn::Context::Eval())) {
      logits.push_back(s.logits);
      if (est.size() < 2) est.push_back(ext.Extract(analysis, s.hidden));
    }
    std::vector<std::span<const double>> tg{targets[0], targets[1]};
    return JointLoss<double>(logits, est, tg, classes, icfg.eos(), 50.0).total;
  };
  std::vector<ag::Var<double>> params;
  for (auto& [n, v] : inf.Params()) params.push_back(v);
  for (auto& [n, v] : ext.Params()) params.push_back(v);
  const double err = test::GradCheck(loss, params, 20, 4, 1e-5, 1e-6);
  const double secs = Since(t0);
  return {err < 1e-4 && secs < 120, Fmt("max relative error %.2e over 20 probes, %.2f s", err, secs)};
}

// ---- 4 and 7 -------------------------------------------------------------

struct OverfitRun {
  std::unique_ptr<Model> model;
  std::vector<MixtureRecord> records;
  int steps = 0;
  double seconds = 0;
};

OverfitRun TrainOverfit() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = DeskConfig();
  cfg.dataset.train_size = 8;
  cfg.train.batch_size = 2;
  cfg.train.max_steps = 400;
  cfg.train.cascade_epochs = 100;
  cfg.train.log_every_steps = 100;
  OverfitRun run;
  run.model = std::make_unique<Model>(cfg, cfg.train.seed);
  const auto pool = MakeSpeakerPool(cfg.dataset.num_speakers, cfg.dataset.seed);
  run.records = GenerateSplit(cfg.dataset, pool, "train", 8);
  Trainer trainer(run.model.get(), Quiet("overfit"));
  const auto rep = trainer.Run(Prepare(*run.model, run.records), {});
  run.steps = rep.total_steps;
  run.seconds = Since(t0);
  return run;
}

Outcome Overfit(const OverfitRun& run) {
  const EvalReport rep = Score(*run.model, run.records, /*use_cascade=*/false, true);
  int exact_two = 0;
  for (const auto& r : rep.records) exact_two += r.inferred_count == 2 && !r.truncated;
  Outcome o;
  o.pass = run.steps <= 2000 && rep.si_snri_mean > 5 && rep.micro_f1 == 1.0 && exact_two == 8 && run.seconds <= 1800;
  o.detail = Fmt("%d steps, SI-SNRi %.2f dB, micro-F1 %.3f, %d/8 decode 2 then EOS, %.0f s", run.steps,
                 rep.si_snri_mean, rep.micro_f1, exact_two, run.seconds);
  return o;
}

Outcome Cascade(const OverfitRun& run) {
  const double one = Score(*run.model, run.records, false, true).si_snri_mean;
  const double two = Score(*run.model, run.records, true, true).si_snri_mean;
  return {two >= one, Fmt("stage one %.3f dB, refined %.3f dB", one, two)};
}

// ---- 5 -------------------------------------------------------------------

Outcome VariableCount() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = DeskConfig();
  cfg.dataset.speakers_per_mixture = {2, 3};
  cfg.train.batch_size = 4;
  cfg.train.max_steps = 1500;
  cfg.train.log_every_steps = 250;
  Model model(cfg, cfg.train.seed);
  const auto pool = MakeSpeakerPool(cfg.dataset.num_speakers, cfg.dataset.seed);
  const auto train = GenerateSplit(cfg.dataset, pool, "train", 64);
  const auto test = GenerateSplit(cfg.dataset, pool, "test", 100);
  Trainer trainer(&model, Quiet("count"));
  trainer.Run(Prepare(model, train), {});
  const EvalReport rep = Score(model, test, false, true);
  const double secs = Since(t0);
  return {rep.counting_accuracy >= 0.9 && secs <= 7200,
          Fmt("held-out counting accuracy %.3f on %d records, %.0f s", rep.counting_accuracy, rep.n_records, secs)};
}

// ---- 6 and 10 ------------------------------------------------------------

struct MultiroundRun {
  std::unique_ptr<Model> sccm;
  std::vector<MixtureRecord> train, test;
  EvalReport sccm_report, pit_report;
};

constexpr int kMultiroundSpeakers = 8;
constexpr int kMultiroundTrain = 48;
constexpr int kMultiroundTest = 20;
constexpr int kMultiroundSteps = 1200;

MultiroundRun TrainMultiround() {
  MultiroundRun run;
  ExperimentConfig cfg = DeskConfig();
  cfg.dataset.mixture_type = "multiround";
  cfg.dataset.num_speakers = kMultiroundSpeakers;
  cfg.inference_net.num_speakers = kMultiroundSpeakers;
  cfg.train.batch_size = 2;
  cfg.train.max_steps = kMultiroundSteps;
  cfg.train.log_every_steps = 100;
  const auto pool = MakeSpeakerPool(cfg.dataset.num_speakers, cfg.dataset.seed);
  run.train = GenerateSplit(cfg.dataset, pool, "train", kMultiroundTrain);
  run.test = GenerateSplit(cfg.dataset, pool, "test", kMultiroundTest);

  run.sccm = std::make_unique<Model>(cfg, cfg.train.seed);
  Trainer t1(run.sccm.get(), Quiet("multiround sccm"));
  t1.Run(Prepare(*run.sccm, run.train), {});
  run.sccm_report = Score(*run.sccm, run.test, false, true);

  ExperimentConfig pcfg = cfg;
  pcfg.train.model = "pit";
  pcfg.train.pit_outputs = 2;
  Model pit(pcfg, pcfg.train.seed);
  Trainer t2(&pit, Quiet("multiround pit"));
  t2.Run(Prepare(pit, run.train), {});
  run.pit_report = Score(pit, run.test, false, false);
  return run;
}

Outcome MultiroundTrend(const MultiroundRun& run) {
  const auto& s = run.sccm_report;
  const auto& p = run.pit_report;
  return {s.si_snri_mean >= p.si_snri_mean + 1.0 && s.frac_above_5db > p.frac_above_5db,
          Fmt("SCCM %.2f dB (>5 dB: %.2f) vs PIT %.2f dB (>5 dB: %.2f) on %d held-out records", s.si_snri_mean,
              s.frac_above_5db, p.si_snri_mean, p.frac_above_5db, s.n_records)};
}

Outcome AttentionDiagnostic(const MultiroundRun& run) {
  const Model& model = *run.sccm;
  const auto& stft = model.config().stft;
  const int sr = model.config().dataset.sample_rate;
  double worst = 1.0, sum = 0;
  int count = 0, missing = 0;
  for (const auto& r : run.train) {
    const Separation sep = model.Separate(r.mixture, false);
    std::vector<std::vector<float>> est;
    for (const auto& s : sep.sources) est.push_back(s.waveform.samples);
    std::vector<std::span<const float>> tg;
    for (const auto& s : r.sources) tg.push_back(s.samples);
    const ScoredRecord sc = ScoreRecord(r.mixture.samples, est, tg);
    for (int j = 0; j < r.num_speakers(); ++j) {
      // The inferred step for target j is the one whose class is j's speaker.
      int step = -1;
      for (size_t k = 0; k < sep.sources.size(); ++k) {
        if (sep.sources[k].class_index == r.speakers[j]) step = static_cast<int>(k);
      }
      if (step < 0) step = sc.pairing[j];
      if (step < 0) {
        ++missing;
        worst = 0;
        continue;
      }
      const double m = AttentionMassOnActive(sep.sources[step].attention, SpeakerActivity(r, j),
                                             stft.WindowSamples(sr), stft.HopSamples(sr));
      worst = std::min(worst, m);
      sum += m;
      ++count;
    }
  }
  return {missing == 0 && worst > 0.6,
          Fmt("min per-speaker attention mass on active frames %.3f (mean %.3f, %d speakers, %d missing)", worst,
              count ? sum / count : 0.0, count, missing)};
}

// ---- 8 -------------------------------------------------------------------

Outcome SimulatorStatistics() {
  const DatasetConfig defaults;
  const auto pool = MakeSpeakerPool(8, 5);
  double mean = 0;
  bool exact = true;
  int zero_ok = 0;
  for (int i = 0; i < 200; ++i) {
    const std::vector<SyntheticSpeaker> pair{pool[(2 * i) % 8], pool[(2 * i + 1) % 8]};
    const auto r = SimulateMultiround(pair, defaults.multiround, defaults.snr, DeriveSeed(9, {uint64_t(i)}));
    mean += r.overlap_ratio / 200;
    MultiroundConfig flat = defaults.multiround;
    flat.beta_s = 0;
    const auto z = SimulateMultiround(pair, flat, defaults.snr, DeriveSeed(9, {uint64_t(i)}));
    zero_ok += z.overlap_ratio == 0.0;
    for (const auto* rec : {&r, &z}) {
      for (size_t k = 0; k < rec->mixture.samples.size(); ++k) {
        float s = 0;
        for (const auto& src : rec->sources) s += src.samples[k];
        exact = exact && s == rec->mixture.samples[k];
      }
    }
  }
  return {mean >= 0.10 && mean <= 0.20 && zero_ok == 200 && exact,
          Fmt("mean overlap %.3f at beta %.2f s, beta 0 gives zero overlap on %d/200, exact sums %s", mean,
              defaults.multiround.beta_s, zero_ok, exact ? "yes" : "no")};
}

// ---- 9 -------------------------------------------------------------------

Outcome Determinism() {
  DatasetConfig d;
  d.train_size = 6;
  d.valid_size = 2;
  d.test_size = 2;
  const fs::path root = fs::temp_directory_path() / "sccm_acceptance_determinism";
  fs::remove_all(root);
  BuildDataset(d, root / "a", false, 1);
  BuildDataset(d, root / "b", false, 1);
  const bool same_corpus = CorpusHash(root / "a") == CorpusHash(root / "b");

  std::vector<std::vector<double>> losses;
  for (int run = 0; run < 2; ++run) {
    ExperimentConfig cfg = DeskConfig();
    cfg.train.batch_size = 2;
    cfg.train.max_steps = 50;
    Model model(cfg, cfg.train.seed);
    const Manifest m = LoadManifest(root / (run ? "b" : "a") / "manifest.jsonl");
    const auto train = PrepareRecords(model, m, "train", true, nullptr, 1);
    Trainer trainer(&model);
    losses.push_back(trainer.Run(train, {}).step_loss);
  }
  double worst = 0;
  const bool fifty = losses[0].size() == 50 && losses[1].size() == 50;
  for (size_t i = 0; fifty && i < 50; ++i) worst = std::max(worst, std::abs(losses[0][i] - losses[1][i]));
  fs::remove_all(root);
  return {same_corpus && fifty && worst <= 1e-7,
          Fmt("corpus hashes %s, first 50 losses max diff %.1e", same_corpus ? "equal" : "differ", worst)};
}

// With arguments, runs only the listed criteria (e.g. "acceptance 1 2 8").
int Main(int argc, char** argv) {
  omp_set_num_threads(1);
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto start = Clock::now();
  json summary = json::array();
  int failures = 0, ran = 0;

  // Shared training runs, started on first use.
  std::optional<OverfitRun> overfit;
  std::optional<MultiroundRun> multiround;
  auto need_overfit = [&]() -> const OverfitRun& {
    if (!overfit) overfit = TrainOverfit();
    return *overfit;
  };
  auto need_multiround = [&]() -> const MultiroundRun& {
    if (!multiround) multiround = TrainMultiround();
    return *multiround;
  };

  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.count(id)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failures += !o.pass;
    std::printf("criterion %2d %-24s %s  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    summary.push_back({{"criterion", id}, {"name", name}, {"pass", o.pass}, {"detail", o.detail},
                       {"seconds", Since(t0)}});
  };

  report(1, "si-snr properties", SiSnrProperties);
  report(2, "permutation oracle", PermutationOracle);
  report(3, "gradient checks", GradientCheck);
  report(4, "overfit smoke test", [&] { return Overfit(need_overfit()); });
  report(5, "variable speaker count", VariableCount);
  report(6, "multi-round trend", [&] { return MultiroundTrend(need_multiround()); });
  report(7, "cascade trend", [&] { return Cascade(need_overfit()); });
  report(8, "simulator statistics", SimulatorStatistics);
  report(9, "determinism", Determinism);
  report(10, "attention diagnostic", [&] { return AttentionDiagnostic(need_multiround()); });

  std::printf("acceptance: %d/%d passed in %.0f s\n", ran - failures, ran, Since(start));
  std::ofstream("acceptance_report.json") << summary.dump(2) << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace sccm

int main(int argc, char** argv) { return sccm::Main(argc, argv); }
