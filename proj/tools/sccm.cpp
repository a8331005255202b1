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

// sccm: simulate corpora, train, evaluate, separate and visualize.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sccm/checkpoint.h"
#include "sccm/config.h"
#include "sccm/error.h"
#include "sccm/eval.h"
#include "sccm/model.h"
#include "sccm/random.h"
#include "sccm/simulate.h"
#include "sccm/training.h"
#include "sccm/wav.h"
#include "sccm_source_hash.h"

namespace sccm {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string UtcNow() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string Hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string FileDigest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  Fnv1a h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.Update(buf, static_cast<size_t>(in.gcount()));
  return Hex(h.digest());
}

void WriteJson(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

// Options shared by every subcommand.
struct Common {
  int workers = 1;
  bool force = false;
  std::vector<std::string> overrides;  // key.path=value
};

// Sets one scalar field. The value is parsed as JSON when possible, so
// numbers and booleans keep their type; anything else is a string.
void ApplyOverride(json* cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got \"" + kv + "\"");
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  if (value.is_structured()) throw ConfigError("--set " + key + ": only scalar fields may be overridden");
  json* node = cfg;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("--set: " + key + " is not a known field");
    node = &(*node)[parts[i]];
  }
  if (node->is_structured()) throw ConfigError("--set " + key + ": only scalar fields may be overridden");
  *node = value;
}

// Loads the config file, applies --set overrides and SCCM_SEED, and
// validates. Every problem is reported at once.
ExperimentConfig ResolveConfig(const fs::path& path, const Common& common, json* echo) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  // Fill defaults first so overrides can address any field.
  std::vector<std::string> errors;
  ExperimentConfig cfg = ConfigFromJson(j, &errors);
  if (!errors.empty()) throw ConfigError(JoinErrors(errors));
  json full = ConfigToJson(cfg);
  for (const auto& kv : common.overrides) ApplyOverride(&full, kv);
  if (const char* env = std::getenv("SCCM_SEED")) {
    try {
      const uint64_t seed = std::stoull(env);
      full["dataset"]["seed"] = seed;
      full["train"]["seed"] = seed;
    } catch (const std::exception&) {
      throw ConfigError(std::string("SCCM_SEED must be a non-negative integer, got \"") + env + "\"");
    }
  }
  cfg = ConfigFromJson(full, &errors);
  const auto invalid = cfg.Validate();
  errors.insert(errors.end(), invalid.begin(), invalid.end());
  if (!errors.empty()) throw ConfigError(JoinErrors(errors));
  *echo = ConfigToJson(cfg);
  return cfg;
}

void PrepareOutDir(const fs::path& dir, bool force, bool allow_existing = false) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force && !allow_existing) {
    throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

// Records everything needed to re-run the command.
class RunManifest {
 public:
  RunManifest(std::string subcommand, int argc, char** argv) {
    j_["tool"] = "sccm";
    j_["subcommand"] = std::move(subcommand);
    std::vector<std::string> args(argv, argv + argc);
    j_["argv"] = args;
    j_["cwd"] = fs::current_path().string();
    j_["source_hash"] = SCCM_SOURCE_HASH;
    j_["started_at"] = UtcNow();
    const char* env = std::getenv("SCCM_SEED");
    j_["env"] = {{"SCCM_SEED", env ? json(env) : json(nullptr)}};
  }
  json& operator[](const std::string& k) { return j_[k]; }
  void Write(const fs::path& dir) {
    j_["finished_at"] = UtcNow();
    WriteJson(dir / "run_manifest.json", j_);
  }

 private:
  json j_;
};

int Simulate(const fs::path& config, const fs::path& out, const Common& c, RunManifest* rm) {
  json echo;
  const ExperimentConfig cfg = ResolveConfig(config, c, &echo);
  PrepareOutDir(out, c.force);
  const Manifest m = BuildDataset(cfg.dataset, out, c.force, c.workers);
  WriteJson(out / "config.json", echo);
  (*rm)["config"] = echo;
  (*rm)["seed"] = cfg.dataset.seed;
  (*rm)["workers"] = c.workers;
  (*rm)["records"] = m.entries.size();
  (*rm)["corpus_hash"] = Hex(CorpusHash(out));
  rm->Write(out);
  std::cout << "wrote " << m.entries.size() << " records to " << out.string() << '\n';
  return 0;
}

// The architecture sections of a resumed checkpoint must match the config.
void CheckResumeCompatible(const ExperimentConfig& ckpt_cfg, const ExperimentConfig& cfg) {
  json a = ConfigToJson(ckpt_cfg), b = ConfigToJson(cfg);
  std::vector<std::string> diffs;
  for (const char* section : {"stft", "inference_net", "extraction_net"}) {
    if (a[section] != b[section]) diffs.push_back(std::string(section) + " differs from the checkpoint");
  }
  if (a["train"]["model"] != b["train"]["model"]) diffs.push_back("train.model differs from the checkpoint");
  if (a["dataset"]["sample_rate"] != b["dataset"]["sample_rate"]) {
    diffs.push_back("dataset.sample_rate differs from the checkpoint");
  }
  if (!diffs.empty()) throw ConfigError("cannot resume:\n" + JoinErrors(diffs));
}

int Train(const fs::path& config, const fs::path& data, const fs::path& out, const std::string& resume,
          const Common& c, RunManifest* rm) {
  json echo;
  const ExperimentConfig cfg = ResolveConfig(config, c, &echo);
  PrepareOutDir(out, c.force, !resume.empty());
  const fs::path manifest_path = data / "manifest.jsonl";
  const Manifest manifest = LoadManifest(manifest_path);

  std::unique_ptr<Model> model;
  Checkpoint resumed;
  if (resume.empty()) {
    model = std::make_unique<Model>(cfg, cfg.train.seed);
  } else {
    resumed = LoadCheckpoint(resume);
    model = std::make_unique<Model>(Model::FromCheckpoint(resumed));
    CheckResumeCompatible(model->config(), cfg);
    model->mutable_config().train = cfg.train;
    model->mutable_config().eval = cfg.eval;
    (*rm)["resumed_from"] = {{"path", fs::absolute(resume).string()}, {"digest", FileDigest(resume)}};
  }

  std::vector<std::string> warnings;
  const auto train = PrepareRecords(*model, manifest, "train", model->is_sccm(), &warnings, c.workers);
  const auto valid = PrepareRecords(*model, manifest, "valid", model->is_sccm(), &warnings, c.workers);
  const fs::path ckpt_dir = out / "checkpoints";
  fs::create_directories(ckpt_dir);
  std::ofstream log(out / "train.log", std::ios::app);
  TrainCallbacks cb;
  cb.checkpoint = [&](const std::string& tag, const Checkpoint& ckpt) {
    SaveCheckpoint(ckpt, ckpt_dir / (tag + ".ckpt"));
  };
  cb.log = [&](const std::string& line) {
    log << line << '\n' << std::flush;
    std::cerr << line << '\n';
  };
  for (const auto& w : warnings) cb.log("warning: " + w);

  Trainer trainer(model.get(), cb);
  if (!resume.empty()) trainer.Resume(resumed);
  TrainingReport report = trainer.Run(train, valid);
  report.warnings.insert(report.warnings.end(), warnings.begin(), warnings.end());
  WriteJson(out / "training_report.json", report.ToJson());
  WriteJson(out / "config.json", echo);

  (*rm)["config"] = echo;
  (*rm)["seed"] = cfg.train.seed;
  (*rm)["workers"] = c.workers;
  (*rm)["data"] = {{"manifest", fs::absolute(manifest_path).string()}, {"corpus_hash", Hex(CorpusHash(data))}};
  (*rm)["steps"] = report.total_steps;
  rm->Write(out);
  std::cout << "trained " << report.total_steps << " steps; checkpoints in " << ckpt_dir.string() << '\n';
  return 0;
}

int Evaluate(const fs::path& ckpt, const fs::path& manifest_path, const fs::path& out, const std::string& split,
             bool no_cascade, const Common& c, RunManifest* rm) {
  const Model model = Model::Load(ckpt);
  const Manifest manifest = LoadManifest(manifest_path);
  PrepareOutDir(out, c.force);
  const EvalReport rep = EvaluateSeparation(model, manifest, split, !no_cascade);
  WriteJson(out / "eval_report.json", rep.ToJson());
  (*rm)["config"] = ConfigToJson(model.config());
  (*rm)["checkpoint"] = {{"path", fs::absolute(ckpt).string()}, {"digest", FileDigest(ckpt)}};
  (*rm)["manifest"] = {{"path", fs::absolute(manifest_path).string()}, {"digest", FileDigest(manifest_path)}};
  (*rm)["split"] = split;
  (*rm)["use_cascade"] = !no_cascade;
  rm->Write(out);
  std::cout << std::fixed << std::setprecision(3) << "records " << rep.n_records << "  SI-SNRi " << rep.si_snri_mean
            << " dB  >5 dB " << rep.frac_above_5db << "  counting " << rep.counting_accuracy;
  if (rep.has_micro_f1) std::cout << "  micro-F1 " << rep.micro_f1;
  std::cout << '\n';
  return 0;
}

int Separate(const fs::path& ckpt, const fs::path& in, const fs::path& out, bool open, bool no_cascade,
             const Common& c, RunManifest* rm) {
  const Model model = Model::Load(ckpt);
  Waveform obs = ReadWav(in);
  PrepareOutDir(out, c.force);
  const Separation sep = model.Separate(obs, !no_cascade);
  json sources = json::array();
  for (size_t k = 0; k < sep.sources.size(); ++k) {
    const auto& s = sep.sources[k];
    const std::string name = "source_" + std::to_string(k) + ".wav";
    WriteWav(out / name, s.waveform);
    json e = {{"file", name}};
    e["class_index"] = (open || s.class_index < 0) ? json("open") : json(s.class_index);
    e["embedding"] = s.embedding;
    sources.push_back(e);
  }
  WriteJson(out / "separation.json",
            {{"input", fs::absolute(in).string()}, {"truncated", sep.truncated}, {"sources", sources}});
  (*rm)["config"] = ConfigToJson(model.config());
  (*rm)["checkpoint"] = {{"path", fs::absolute(ckpt).string()}, {"digest", FileDigest(ckpt)}};
  (*rm)["input"] = {{"path", fs::absolute(in).string()}, {"digest", FileDigest(in)}};
  rm->Write(out);
  std::cout << "wrote " << sep.sources.size() << " sources to " << out.string() << '\n';
  return 0;
}

int Visualize(const fs::path& ckpt, const fs::path& in, const fs::path& out, const Common& c, RunManifest* rm) {
  const Model model = Model::Load(ckpt);
  const Waveform obs = ReadWav(in);
  PrepareOutDir(out, c.force);
  const auto files = ExportAttention(model, obs, out);
  (*rm)["config"] = ConfigToJson(model.config());
  (*rm)["checkpoint"] = {{"path", fs::absolute(ckpt).string()}, {"digest", FileDigest(ckpt)}};
  (*rm)["input"] = {{"path", fs::absolute(in).string()}, {"digest", FileDigest(in)}};
  rm->Write(out);
  std::cout << "wrote " << files.size() << " files to " << out.string() << '\n';
  return 0;
}

const char* KindName(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kRuntime:
      return "runtime";
  }
  return "runtime";
}

int Fail(ErrorKind kind, const std::string& message) {
  const int code = static_cast<int>(kind);
  std::cerr << json{{"error", {{"kind", KindName(kind)}, {"exit_code", code}, {"message", message}}}}.dump() << '\n';
  return code;
}

int Main(int argc, char** argv) {
  CLI::App app{"Speaker-conditional chain model: simulate, train, evaluate, separate, visualize"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--workers", common.workers, "Data worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--force", common.force, "Overwrite a non-empty output directory");
  };

  fs::path config, out, data, ckpt, in, manifest;
  std::string resume, split;
  bool no_cascade = false, open = false;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic corpus");
  sim->add_option("--config", config, "Experiment config (JSON)")->required();
  sim->add_option("--out", out, "Corpus directory")->required();
  sim->add_option("--set", common.overrides, "Override a scalar config field, e.g. dataset.train_size=16");
  add_common(sim);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Experiment config (JSON)")->required();
  train->add_option("--data", data, "Corpus directory from simulate")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--set", common.overrides, "Override a scalar config field, e.g. train.lr=0.0005");
  add_common(train);

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a manifest");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--manifest", manifest, "manifest.jsonl or <split>.jsonl")->required();
  eval->add_option("--out", out, "Report directory")->required();
  eval->add_option("--split", split, "Only entries of this split");
  eval->add_flag("--no-cascade", no_cascade, "Skip the refinement stage");
  add_common(eval);

  auto* sep = app.add_subcommand("separate", "Separate one recording");
  sep->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sep->add_option("--in", in, "Input WAV")->required();
  sep->add_option("--out-dir", out, "Output directory")->required();
  sep->add_flag("--open", open, "Speakers are outside the training vocabulary");
  sep->add_flag("--no-cascade", no_cascade, "Skip the refinement stage");
  add_common(sep);

  auto* vis = app.add_subcommand("visualize", "Export attention status per inferred speaker");
  vis->add_option("--ckpt", ckpt, "Checkpoint")->required();
  vis->add_option("--in", in, "Input WAV")->required();
  vis->add_option("--out", out, "Output directory")->required();
  add_common(vis);

  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    std::cerr << app.help() << '\n';
    return Fail(ErrorKind::kConfig, std::string("unknown subcommand \"") + argv[1] + "\"");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    return Fail(ErrorKind::kConfig, e.what());
  }

  omp_set_num_threads(common.workers);
  try {
    const std::string name = app.get_subcommands().front()->get_name();
    RunManifest rm(name, argc, argv);
    rm["workers"] = common.workers;
    if (name == "simulate") return Simulate(config, out, common, &rm);
    if (name == "train") return Train(config, data, out, resume, common, &rm);
    if (name == "evaluate") return Evaluate(ckpt, manifest, out, split, no_cascade, common, &rm);
    if (name == "separate") return Separate(ckpt, in, out, open, no_cascade, common, &rm);
    return Visualize(ckpt, in, out, common, &rm);
  } catch (const Error& e) {
    return Fail(e.kind(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return Fail(ErrorKind::kData, e.what());
  } catch (const std::exception& e) {
    return Fail(ErrorKind::kRuntime, e.what());
  }
}

}  // namespace
}  // namespace sccm

int main(int argc, char** argv) { return sccm::Main(argc, argv); }
