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

// Permutation search, joint loss, optimizer, checkpoints, config validation
// and trainer determinism.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.h"
#include "sccm/checkpoint.h"
#include "sccm/config.h"
#include "sccm/error.h"
#include "sccm/training.h"
#include "test_util.h"

namespace sccm {
namespace {

namespace fs = std::filesystem;
using test::GradCheck;
using test::RandomMatrix;

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sccm_training_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::span<const double>> Spans(const std::vector<std::vector<double>>& v) {
  std::vector<std::span<const double>> out;
  for (const auto& x : v) out.emplace_back(x);
  return out;
}

TEST_CASE("best permutation matches an independent enumerator") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const auto inst = test::RandomPermutationInstance(n, 48, &rng);
    const auto got = BestPermutation<double>(Spans(inst.estimates), Spans(inst.targets));
    const auto want = test::EnumerateBestPermutation(inst.estimates, inst.targets);
    CHECK(got.theta == want.theta);
    CHECK(std::abs(got.reconstruction_loss - want.loss) < 1e-9);
  }
}

TEST_CASE("ties resolve to the lexicographically smallest pairing") {
  std::vector<std::vector<double>> flat(3, std::vector<double>(3, 1.0));
  CHECK(BestPermutationFromScores(flat).theta == std::vector<int>{0, 1, 2});
  std::vector<std::vector<double>> s = {{5, 5, 0}, {5, 5, 0}, {0, 0, 5}};
  CHECK(BestPermutationFromScores(s).theta == std::vector<int>{0, 1, 2});
  // Both cyclic shifts score 15.
  std::vector<std::vector<double>> c = {{0, 5, 5}, {5, 0, 5}, {5, 5, 0}};
  CHECK(BestPermutationFromScores(c).theta == std::vector<int>{1, 2, 0});
  CHECK(BestPermutationFromScores({}).theta.empty());
  CHECK_THROWS_AS(BestPermutationFromScores({{1, 2}}), DataError);
}

TEST_CASE("permutation search is covariant and never worse than identity") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 3;
    const auto inst = test::RandomPermutationInstance(n, 32, &rng);
    const auto base = BestPermutation<double>(Spans(inst.estimates), Spans(inst.targets));
    std::vector<int> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::shuffle(sigma.begin(), sigma.end(), rng);

    std::vector<std::vector<double>> est(n), tgt(n);
    for (int i = 0; i < n; ++i) {
      est[i] = inst.estimates[sigma[i]];
      tgt[i] = inst.targets[sigma[i]];
    }
    const auto pe = BestPermutation<double>(Spans(est), Spans(inst.targets));
    for (int i = 0; i < n; ++i) CHECK(pe.theta[i] == base.theta[sigma[i]]);
    CHECK(pe.reconstruction_loss == doctest::Approx(base.reconstruction_loss).epsilon(1e-12));

    std::vector<int> inv(n);
    for (int i = 0; i < n; ++i) inv[sigma[i]] = i;
    const auto pt = BestPermutation<double>(Spans(inst.estimates), Spans(tgt));
    for (int i = 0; i < n; ++i) CHECK(pt.theta[i] == inv[base.theta[i]]);

    double identity = 0;
    for (int i = 0; i < n; ++i) identity -= SiSnr<double>(inst.estimates[i], inst.targets[i]);
    CHECK(base.reconstruction_loss <= identity / n + 1e-12);
  }
}

TEST_CASE("best permutation rejects unequal counts") {
  std::vector<double> a(16, 1.0), b(16, 2.0);
  a[3] = 0;
  b[5] = 0;
  std::vector<std::span<const double>> one{a}, two{a, b};
  CHECK_THROWS_AS(BestPermutation<double>(one, two), DataError);
}

TEST_CASE("energy order sorts targets by decreasing energy") {
  std::vector<double> a{1, 0, 0, 0}, b{3, 0, 0, 0}, c{2, 0, 0, 0};
  std::vector<std::span<const double>> t{a, b, c};
  CHECK(EnergyOrder<double>(t) == std::vector<int>{1, 2, 0});
}

struct TinyJoint {
  InferenceNetConfig icfg;
  ExtractorConfig ecfg;
  std::unique_ptr<InferenceNet<double>> inf;
  std::unique_ptr<Extractor<double>> ext;
  Matrix<double> features;
  std::vector<std::vector<double>> targets;
  std::vector<double> mixture;
  std::vector<int> classes{2, 0};

  TinyJoint() {
    icfg.num_bins = 5;
    icfg.d_model = 8;
    icfg.heads = 2;
    icfg.d_k = 4;
    icfg.d_v = 4;
    icfg.d_ff = 16;
    icfg.encoder_blocks = 1;
    icfg.num_speakers = 3;
    icfg.max_steps = 5;
    icfg.dropout = 0.0;
    ecfg.n_filters = 8;
    ecfg.kernel = 4;
    ecfg.bottleneck = 8;
    ecfg.hidden = 16;
    ecfg.conv_kernel = 3;
    ecfg.blocks = 2;
    ecfg.repeats = 1;
    ecfg.cond_dim = 8;
    inf = std::make_unique<InferenceNet<double>>(icfg, 3);
    ext = std::make_unique<Extractor<double>>(ecfg, 4);
    std::mt19937_64 rng(9);
    features = RandomMatrix<double>(6, 5, &rng);
    for (auto& v : features.flat()) v = std::abs(v);
    std::normal_distribution<double> normal;
    targets.assign(2, std::vector<double>(40));
    mixture.assign(40, 0.0);
    for (auto& t : targets) {
      for (size_t k = 0; k < t.size(); ++k) {
        t[k] = normal(rng);
        mixture[k] += t[k];
      }
    }
  }

  nn::NamedParams<double> Params() const {
    auto p = inf->Params();
    auto q = ext->Params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  JointLossTerms<double> Loss(double alpha) const {
    const auto enc = inf->Encode(features, nn::Context::Eval());
    std::vector<ag::Var<double>> logits, hidden;
    for (auto& s : inf->Decode(enc, 3, nn::Context::Eval())) {
      logits.push_back(s.logits);
      hidden.push_back(s.hidden);
    }
    const auto analysis = ext->Analyze(ag::Var<double>(Matrix<double>::RowVector(mixture)));
    std::vector<ag::Var<double>> est;
    for (int i = 0; i < 2; ++i) est.push_back(ext->Extract(analysis, hidden[i]));
    return JointLoss<double>(logits, est, Spans(targets), classes, icfg.eos(), alpha);
  }
};

TEST_CASE("joint loss gradients match finite differences") {
  TinyJoint tj;
  std::vector<ag::Var<double>> params;
  for (auto& [name, v] : tj.Params()) params.push_back(v);
  const double err = GradCheck([&] { return tj.Loss(50.0).total; }, params, 20, 17, 1e-5, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("alpha scales only the classification term") {
  TinyJoint tj;
  const auto a0 = tj.Loss(0.0);
  const auto a50 = tj.Loss(50.0);
  CHECK(a0.total.item() == doctest::Approx(a0.reconstruction.item()).epsilon(1e-12));
  CHECK(a50.total.item() - a0.total.item() ==
        doctest::Approx(50.0 * a50.classification.item()).epsilon(1e-10));
  CHECK(a50.assignment.theta == a0.assignment.theta);
  CHECK(a50.classification.item() > 0);
}

TEST_CASE("joint loss classification term follows the chosen pairing") {
  // Perfect estimates in swapped order: theta = (1, 0), so step 1 is scored
  // against the class of target 1.
  std::vector<double> t0(32), t1(32);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (auto& v : t0) v = normal(rng);
  for (auto& v : t1) v = normal(rng);
  std::vector<ag::Var<double>> est{ag::Var<double>(Matrix<double>::RowVector(t1), true),
                                   ag::Var<double>(Matrix<double>::RowVector(t0), true)};
  auto onehot = [](int k) {
    Matrix<double> m(1, 4);
    for (int c = 0; c < 4; ++c) m(0, c) = c == k ? 30.0 : -30.0;
    return ag::Var<double>(m, true);
  };
  std::vector<std::span<const double>> tg{t0, t1};
  const std::vector<int> classes{2, 1};
  const auto good = JointLoss<double>({onehot(1), onehot(2), onehot(3)}, est, tg, classes, 3, 50.0);
  CHECK(good.assignment.theta == std::vector<int>{1, 0});
  CHECK(good.classification.item() < 1e-20);
  CHECK(good.reconstruction.item() < -70.0);
  const auto bad = JointLoss<double>({onehot(2), onehot(1), onehot(3)}, est, tg, classes, 3, 50.0);
  CHECK(bad.classification.item() > 10.0);
  const std::vector<int> identity{0, 1};
  const auto fixed = JointLoss<double>({onehot(2), onehot(1), onehot(3)}, est, tg, classes, 3, 50.0, &identity);
  CHECK(fixed.assignment.theta == identity);
  CHECK(fixed.classification.item() < 1e-20);
  CHECK_THROWS_AS(JointLoss<double>({onehot(1), onehot(2)}, est, tg, classes, 3, 50.0), DataError);
}

TEST_CASE("pit loss pads with dummy targets") {
  std::vector<double> t0(24);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (auto& v : t0) v = normal(rng);
  std::vector<double> noise(24);
  for (auto& v : noise) v = normal(rng);
  std::vector<ag::Var<double>> est{ag::Var<double>(Matrix<double>::RowVector(noise), true),
                                   ag::Var<double>(Matrix<double>::RowVector(t0), true)};
  PermutationAssignment a;
  const auto loss = PitLoss<double>(est, {std::span<const double>(t0)}, &a);
  CHECK(a.theta == std::vector<int>{-1, 0});
  CHECK(loss.item() < -70.0);
  std::vector<std::span<const double>> three{t0, t0, t0};
  CHECK_THROWS_AS(PitLoss<double>(est, three), DataError);
}

TEST_CASE("adam follows the bias-corrected update") {
  ag::Var<double> w(Matrix<double>(1, 2), true);
  w.mutable_value()(0, 0) = 1.0;
  w.mutable_value()(0, 1) = -2.0;
  Adam<double> opt({{"w", w}}, 0.9, 0.999, 1e-8);
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  const double grads[3][2] = {{0.5, -1.0}, {0.2, 0.3}, {-0.7, 0.1}};
  for (int t = 1; t <= 3; ++t) {
    w.grad()(0, 0) = grads[t - 1][0];
    w.grad()(0, 1) = grads[t - 1][1];
    opt.Step(0.01);
    opt.ZeroGrad();
    for (int k = 0; k < 2; ++k) {
      const double g = grads[t - 1][k];
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mh = m[k] / (1 - std::pow(0.9, t));
      const double vh = v[k] / (1 - std::pow(0.999, t));
      x[k] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(w.value()(0, 0) == doctest::Approx(x[0]).epsilon(1e-12));
    CHECK(w.value()(0, 1) == doctest::Approx(x[1]).epsilon(1e-12));
  }
  CHECK(opt.steps() == 3);
}

TEST_CASE("adam skips frozen parameters and clips the global norm") {
  ag::Var<double> a(Matrix<double>(1, 1), true), b(Matrix<double>(1, 1), true);
  Adam<double> opt({{"inference.a", a}, {"extractor.b", b}});
  a.grad()(0, 0) = 6.0;
  b.grad()(0, 0) = 8.0;
  CHECK(opt.ClipGradNorm(5.0) == doctest::Approx(10.0));
  CHECK(a.grad()(0, 0) == doctest::Approx(3.0));
  CHECK(b.grad()(0, 0) == doctest::Approx(4.0));
  CHECK(opt.ClipGradNorm(100.0) == doctest::Approx(5.0));
  CHECK(a.grad()(0, 0) == doctest::Approx(3.0));

  opt.SetFrozen("inference.", true);
  opt.Step(0.1);
  CHECK(a.value()(0, 0) == 0.0);
  CHECK(b.value()(0, 0) != 0.0);
  // Frozen gradients do not count toward the norm.
  a.grad()(0, 0) = 1e6;
  CHECK(opt.ClipGradNorm(1e9) == doctest::Approx(4.0));
}

TEST_CASE("learning rate decays by steps") {
  TrainConfig c;
  CHECK(LearningRate(c, 0) == doctest::Approx(1e-3));
  CHECK(LearningRate(c, 19) == doctest::Approx(1e-3));
  CHECK(LearningRate(c, 20) == doctest::Approx(2e-4));
  CHECK(LearningRate(c, 40) == doctest::Approx(4e-5));
}

TEST_CASE("checkpoint round trip and corruption") {
  const fs::path dir = TempDir("ckpt");
  Checkpoint c;
  c.header["note"] = "x";
  Matrix<float> m(2, 3);
  for (size_t i = 0; i < m.size(); ++i) m[i] = 0.5f * i - 1;
  c.Put("w", m);
  c.Put("b", Matrix<float>(1, 1));
  SaveCheckpoint(c, dir / "a.ckpt");
  const Checkpoint r = LoadCheckpoint(dir / "a.ckpt");
  CHECK(r.header.at("note") == "x");
  REQUIRE(r.Find("w") != nullptr);
  CHECK(test::MaxAbsDiff(*r.Find("w"), m) == 0.0);
  CHECK(r.Find("missing") == nullptr);

  std::string bytes;
  {
    std::ifstream in(dir / "a.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  std::string flipped = bytes;
  flipped[flipped.size() - 12] ^= 0x40;
  CHECK_THROWS_AS(LoadCheckpoint(write("flip.ckpt", flipped)), DataError);
  CHECK_THROWS_AS(LoadCheckpoint(write("short.ckpt", bytes.substr(0, bytes.size() - 5))), DataError);
  CHECK_THROWS_AS(LoadCheckpoint(write("magic.ckpt", "NOTACKPT" + bytes.substr(8))), DataError);
  CHECK_THROWS_AS(LoadCheckpoint(write("tail.ckpt", bytes + "zz")), DataError);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "absent.ckpt"), DataError);
}

TEST_CASE("config validation names the offending fields") {
  ExperimentConfig c = ExperimentConfig::Profile("desk");
  CHECK(c.Validate().empty());
  c.inference_net.d_model = 32;
  const auto errs = c.Validate();
  REQUIRE(!errs.empty());
  const std::string all = JoinErrors(errs);
  CHECK(all.find("inference_net.d_model") != std::string::npos);
  CHECK(all.find("extraction_net.cond_dim") != std::string::npos);

  nlohmann::json j = ConfigToJson(ExperimentConfig::Profile("desk"));
  j["train"]["learning_rate"] = 0.1;
  j["train"]["alpha"] = "big";
  std::vector<std::string> parse;
  ConfigFromJson(j, &parse);
  const std::string p = JoinErrors(parse);
  CHECK(p.find("train.learning_rate") != std::string::npos);
  CHECK(p.find("train.alpha") != std::string::npos);

  const fs::path dir = TempDir("config");
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK_THROWS_AS(LoadConfig(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK_THROWS_AS(LoadConfig(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::Profile("huge"), ConfigError);

  ExperimentConfig good = ExperimentConfig::Profile("paper");
  SaveConfig(good, dir / "paper.json");
  const ExperimentConfig back = LoadConfig(dir / "paper.json");
  CHECK(ConfigToJson(back) == ConfigToJson(good));
}

ExperimentConfig TinyTrainConfig() {
  ExperimentConfig c = ExperimentConfig::Profile("desk");
  c.dataset.duration_s = 0.5;
  c.dataset.train_size = 4;
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
  c.train.batch_size = 2;
  c.train.segment_seconds = 0.5;
  c.train.max_epochs = 3;
  return c;
}

std::vector<TrainRecord> TinyRecords(const Model& model) {
  const auto& cfg = model.config();
  const auto pool = MakeSpeakerPool(cfg.dataset.num_speakers, cfg.dataset.seed);
  std::vector<TrainRecord> out;
  auto recs = GenerateSplit(cfg.dataset, pool, "train", cfg.dataset.train_size);
  for (size_t i = 0; i < recs.size(); ++i) out.push_back(MakeTrainRecord(model, std::move(recs[i]), i));
  return out;
}

TEST_CASE("training is deterministic for a fixed seed") {
  const ExperimentConfig cfg = TinyTrainConfig();
  std::vector<double> first;
  for (int run = 0; run < 2; ++run) {
    Model model(cfg, cfg.train.seed);
    const auto train = TinyRecords(model);
    Trainer trainer(&model);
    const auto rep = trainer.Run(train, {});
    REQUIRE(rep.step_loss.size() == 6);
    if (run == 0) {
      first = rep.step_loss;
    } else {
      for (size_t i = 0; i < first.size(); ++i) CHECK(rep.step_loss[i] == first[i]);
    }
  }
}

TEST_CASE("resuming from an epoch-end snapshot continues the same trajectory") {
  ExperimentConfig cfg = TinyTrainConfig();
  cfg.train.max_epochs = 2;
  Model straight(cfg, 1);
  const auto train = TinyRecords(straight);
  Trainer full(&straight);
  const auto all = full.Run(train, {});

  ExperimentConfig half_cfg = cfg;
  half_cfg.train.max_epochs = 1;
  Model a(half_cfg, 1);
  Trainer first(&a);
  first.Run(train, {});
  const Checkpoint snap = first.Snapshot();

  Model b = Model::FromCheckpoint(snap);
  b.mutable_config().train.max_epochs = 2;
  Trainer second(&b);
  second.Resume(snap);
  const auto rest = second.Run(train, {});
  REQUIRE(rest.step_loss.size() == 2);
  CHECK(rest.step_loss[0] == all.step_loss[2]);
  CHECK(rest.step_loss[1] == all.step_loss[3]);
}

TEST_CASE("model checkpoints reproduce separations") {
  const ExperimentConfig cfg = TinyTrainConfig();
  Model model(cfg, 4);
  model.EnableCascade(5);
  const fs::path dir = TempDir("model");
  SaveCheckpoint(model.ToCheckpoint({}), dir / "m.ckpt");
  const Model back = Model::Load(dir / "m.ckpt");
  const auto train = TinyRecords(model);
  const auto& mix = train[0].record.mixture;
  const auto s1 = model.Separate(mix);
  const auto s2 = back.Separate(mix);
  REQUIRE(s1.sources.size() == s2.sources.size());
  for (size_t i = 0; i < s1.sources.size(); ++i) {
    CHECK(s1.sources[i].class_index == s2.sources[i].class_index);
    CHECK(s1.sources[i].waveform.samples == s2.sources[i].waveform.samples);
  }
}

TEST_CASE("segments stay inside the record and avoid silent sources") {
  ExperimentConfig cfg = TinyTrainConfig();
  cfg.dataset.mixture_type = "multiround";
  const auto pool = MakeSpeakerPool(cfg.dataset.num_speakers, 3);
  const auto recs = GenerateSplit(cfg.dataset, pool, "train", 3);
  Rng rng(4);
  for (const auto& r : recs) {
    const auto n = static_cast<int64_t>(r.mixture.samples.size());
    for (int k = 0; k < 20; ++k) {
      const Segment s = SampleSegment(r, 8000, &rng);
      CHECK(s.start >= 0);
      CHECK(s.length == std::min<int64_t>(8000, n));
      CHECK(s.start + s.length <= n);
    }
    const Segment whole = SampleSegment(r, n + 100, &rng);
    CHECK(whole.start == 0);
    CHECK(whole.length == n);
  }
}

}  // namespace
}  // namespace sccm
