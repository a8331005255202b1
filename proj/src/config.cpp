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

#include "sccm/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include "sccm/error.h"

namespace sccm {

using json = nlohmann::json;

std::vector<std::string> TrainConfig::Validate() const {
  std::vector<std::string> errs;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back("train." + msg);
  };
  need(model == "sccm" || model == "pit", "model must be \"sccm\" or \"pit\"");
  need(alpha > 0, "alpha must be > 0");
  need(lr > 0, "lr must be > 0");
  need(decay_factor > 0 && decay_factor <= 1, "decay_factor must be in (0, 1]");
  need(decay_every_epochs >= 1, "decay_every_epochs must be >= 1");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(max_epochs >= 1, "max_epochs must be >= 1");
  need(max_steps >= 0, "max_steps must be >= 0");
  need(segment_seconds > 0, "segment_seconds must be > 0");
  need(early_stop_patience >= 1, "early_stop_patience must be >= 1");
  need(validate_every_epochs >= 1, "validate_every_epochs must be >= 1");
  need(clip_norm > 0, "clip_norm must be > 0");
  need(order == "model" || order == "fixed" || order == "energy",
       "order must be \"model\", \"fixed\" or \"energy\"");
  need(cascade_epochs >= 0, "cascade_epochs must be >= 0");
  need(pit_outputs >= 1, "pit_outputs must be >= 1");
  need(log_every_steps >= 0, "log_every_steps must be >= 0");
  return errs;
}

std::vector<std::string> EvalConfig::Validate() const {
  std::vector<std::string> errs;
  if (histogram_max_db <= histogram_min_db) {
    errs.push_back("eval.histogram_max_db must exceed eval.histogram_min_db");
  }
  return errs;
}

ExperimentConfig ExperimentConfig::Profile(const std::string& name) {
  ExperimentConfig c;
  c.profile = name;
  if (name == "desk") {
    c.inference_net.num_bins = c.SpectrogramBins();
    return c;
  }
  if (name != "paper") throw ConfigError("profile must be \"desk\" or \"paper\", got \"" + name + "\"");
  auto& inf = c.inference_net;
  inf.d_model = 512;
  inf.heads = 8;
  inf.d_k = 64;
  inf.d_v = 64;
  inf.d_ff = 2048;
  inf.encoder_blocks = 1;
  inf.num_bins = c.SpectrogramBins();
  auto& ex = c.extraction_net;
  ex.n_filters = 256;
  ex.kernel = 20;
  ex.bottleneck = 256;
  ex.hidden = 512;
  ex.conv_kernel = 3;
  ex.blocks = 8;
  ex.repeats = 4;
  ex.cond_dim = 512;
  return c;
}

int ExperimentConfig::SpectrogramBins() const {
  return stft.WindowSamples(dataset.sample_rate) / 2 + 1;
}

std::vector<std::string> ExperimentConfig::Validate() const {
  std::vector<std::string> errs;
  auto add = [&](const std::vector<std::string>& more) { errs.insert(errs.end(), more.begin(), more.end()); };
  if (profile != "desk" && profile != "paper") errs.push_back("profile must be \"desk\" or \"paper\"");
  if (stft.window != "sine") errs.push_back("stft.window must be \"sine\"");
  if (stft.window_ms <= 0 || stft.hop_ms <= 0) errs.push_back("stft.window_ms and stft.hop_ms must be > 0");
  const auto& d = dataset;
  if (d.mixture_type != "fully_overlapped" && d.mixture_type != "multiround") {
    errs.push_back("dataset.mixture_type must be \"fully_overlapped\" or \"multiround\"");
  }
  if (d.sample_rate <= 0) errs.push_back("dataset.sample_rate must be > 0");
  if (d.num_speakers < 1) errs.push_back("dataset.num_speakers must be >= 1");
  if (d.num_open_speakers < 0) errs.push_back("dataset.num_open_speakers must be >= 0");
  if (d.speakers_per_mixture.empty()) errs.push_back("dataset.speakers_per_mixture must not be empty");
  int max_i = 0;
  for (int i : d.speakers_per_mixture) {
    max_i = std::max(max_i, i);
    if (i < 1 || i > 4) errs.push_back("dataset.speakers_per_mixture entries must be in [1, 4]");
    if (i > d.num_speakers) errs.push_back("dataset.speakers_per_mixture entry exceeds dataset.num_speakers");
  }
  if (d.duration_s < 0.5 || d.duration_s > 10) errs.push_back("dataset.duration_s must be in [0.5, 10]");
  if (d.snr.lo_db > d.snr.hi_db) errs.push_back("dataset.snr.lo_db must not exceed dataset.snr.hi_db");
  const auto& mr = d.multiround;
  if (mr.k_min < 1 || mr.k_min > mr.k_max) errs.push_back("dataset.multiround needs 1 <= k_min <= k_max");
  if (mr.beta_s < 0) errs.push_back("dataset.multiround.beta_s must be >= 0");
  if (mr.utterance_min_s < 0.5 || mr.utterance_min_s > mr.utterance_max_s || mr.utterance_max_s > 10) {
    errs.push_back("dataset.multiround utterance lengths must satisfy 0.5 <= min <= max <= 10");
  }
  if (d.train_size < 0 || d.valid_size < 0 || d.test_size < 0) errs.push_back("dataset split sizes must be >= 0");
  if (d.num_speakers + d.num_open_speakers > 45) {
    errs.push_back("dataset.num_speakers + dataset.num_open_speakers must be <= 45");
  }
  add(inference_net.Validate());
  add(extraction_net.Validate());
  add(train.Validate());
  add(eval.Validate());
  // Cross-section consistency.
  if (inference_net.d_model != extraction_net.cond_dim) {
    errs.push_back("inference_net.d_model (" + std::to_string(inference_net.d_model) +
                   ") must equal extraction_net.cond_dim (" + std::to_string(extraction_net.cond_dim) + ")");
  }
  if (inference_net.num_speakers != d.num_speakers) {
    errs.push_back("inference_net.num_speakers (" + std::to_string(inference_net.num_speakers) +
                   ") must equal dataset.num_speakers (" + std::to_string(d.num_speakers) + ")");
  }
  if (stft.window_ms > 0 && d.sample_rate > 0 && inference_net.num_bins != SpectrogramBins()) {
    errs.push_back("inference_net.num_bins (" + std::to_string(inference_net.num_bins) +
                   ") must equal the stft bin count (" + std::to_string(SpectrogramBins()) + ")");
  }
  if (max_i + 1 > inference_net.max_steps) {
    errs.push_back("inference_net.max_steps must be at least the largest dataset.speakers_per_mixture + 1");
  }
  if (train.model == "pit" && d.speakers_per_mixture.size() == 1 && d.speakers_per_mixture[0] > train.pit_outputs) {
    errs.push_back("train.pit_outputs is smaller than dataset.speakers_per_mixture");
  }
  return errs;
}

namespace {

// Writes fields into a JSON object.
class Writer {
 public:
  explicit Writer(json* out) : out_(out) {}
  template <typename V>
  void operator()(const char* key, V& value) {
    (*out_)[key] = value;
  }
  template <typename Fn>
  void Nested(const char* key, Fn&& fn) {
    json sub = json::object();
    Writer w(&sub);
    fn(w);
    (*out_)[key] = std::move(sub);
  }

 private:
  json* out_;
};

// Reads fields present in a JSON object, collecting type errors and keys it
// does not know.
class Reader {
 public:
  Reader(const json& in, std::string path, std::vector<std::string>* errors)
      : in_(in), path_(std::move(path)), errors_(errors) {
    if (!in_.is_object()) errors_->push_back((path_.empty() ? "config" : path_) + " must be an object");
  }
  ~Reader() {
    if (!in_.is_object()) return;
    for (const auto& [key, value] : in_.items()) {
      if (!seen_.count(key)) errors_->push_back(Join(key) + " is not a known field");
    }
  }
  template <typename V>
  void operator()(const char* key, V& value) {
    seen_.insert(key);
    if (!in_.is_object() || !in_.contains(key)) return;
    try {
      value = in_.at(key).get<V>();
    } catch (const json::exception&) {
      errors_->push_back(Join(key) + " has the wrong type");
    }
  }
  template <typename Fn>
  void Nested(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!in_.is_object() || !in_.contains(key)) return;
    Reader r(in_.at(key), Join(key), errors_);
    fn(r);
  }

 private:
  std::string Join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& in_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> seen_;
};

template <typename F>
void VisitStft(StftConfig& c, F& f) {
  f("window_ms", c.window_ms);
  f("hop_ms", c.hop_ms);
  f("window", c.window);
  f("log_magnitude", c.log_magnitude);
}

template <typename F>
void VisitDataset(DatasetConfig& c, F& f) {
  f("mixture_type", c.mixture_type);
  f("sample_rate", c.sample_rate);
  f("num_speakers", c.num_speakers);
  f("num_open_speakers", c.num_open_speakers);
  f("speakers_per_mixture", c.speakers_per_mixture);
  f("duration_s", c.duration_s);
  f.Nested("snr", [&](auto& g) {
    g("lo_db", c.snr.lo_db);
    g("hi_db", c.snr.hi_db);
  });
  f.Nested("multiround", [&](auto& g) {
    g("k_min", c.multiround.k_min);
    g("k_max", c.multiround.k_max);
    g("beta_s", c.multiround.beta_s);
    g("utterance_min_s", c.multiround.utterance_min_s);
    g("utterance_max_s", c.multiround.utterance_max_s);
    g("shuffle_order", c.multiround.shuffle_order);
  });
  f("train_size", c.train_size);
  f("valid_size", c.valid_size);
  f("test_size", c.test_size);
  f("test_open_condition", c.test_open_condition);
  f("seed", c.seed);
}

template <typename F>
void VisitInference(InferenceNetConfig& c, F& f) {
  f("num_bins", c.num_bins);
  f("d_model", c.d_model);
  f("heads", c.heads);
  f("d_k", c.d_k);
  f("d_v", c.d_v);
  f("d_ff", c.d_ff);
  f("encoder_blocks", c.encoder_blocks);
  f("num_speakers", c.num_speakers);
  f("max_steps", c.max_steps);
  f("dropout", c.dropout);
  f("pre_norm", c.pre_norm);
}

template <typename F>
void VisitExtractor(ExtractorConfig& c, F& f) {
  f("n_filters", c.n_filters);
  f("kernel", c.kernel);
  f("bottleneck", c.bottleneck);
  f("hidden", c.hidden);
  f("conv_kernel", c.conv_kernel);
  f("blocks", c.blocks);
  f("repeats", c.repeats);
  f("cond_dim", c.cond_dim);
}

template <typename F>
void VisitTrain(TrainConfig& c, F& f) {
  f("model", c.model);
  f("alpha", c.alpha);
  f("lr", c.lr);
  f("decay_factor", c.decay_factor);
  f("decay_every_epochs", c.decay_every_epochs);
  f("batch_size", c.batch_size);
  f("max_epochs", c.max_epochs);
  f("max_steps", c.max_steps);
  f("segment_seconds", c.segment_seconds);
  f("early_stop_patience", c.early_stop_patience);
  f("validate_every_epochs", c.validate_every_epochs);
  f("clip_norm", c.clip_norm);
  f("order", c.order);
  f("cascade_epochs", c.cascade_epochs);
  f("pit_outputs", c.pit_outputs);
  f("log_every_steps", c.log_every_steps);
  f("seed", c.seed);
}

template <typename F>
void VisitEval(EvalConfig& c, F& f) {
  f("use_cascade", c.use_cascade);
  f("split_db", c.split_db);
  f("histogram_min_db", c.histogram_min_db);
  f("histogram_max_db", c.histogram_max_db);
}

template <typename F>
void VisitSections(ExperimentConfig& c, F& f) {
  f.Nested("stft", [&](auto& g) { VisitStft(c.stft, g); });
  f.Nested("dataset", [&](auto& g) { VisitDataset(c.dataset, g); });
  f.Nested("inference_net", [&](auto& g) { VisitInference(c.inference_net, g); });
  f.Nested("extraction_net", [&](auto& g) { VisitExtractor(c.extraction_net, g); });
  f.Nested("train", [&](auto& g) { VisitTrain(c.train, g); });
  f.Nested("eval", [&](auto& g) { VisitEval(c.eval, g); });
}

}  // namespace

json ConfigToJson(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  json out = json::object();
  out["profile"] = copy.profile;
  Writer w(&out);
  VisitSections(copy, w);
  return out;
}

ExperimentConfig ConfigFromJson(const json& j, std::vector<std::string>* errors) {
  std::string profile = "desk";
  if (j.is_object() && j.contains("profile")) {
    if (j.at("profile").is_string()) {
      profile = j.at("profile").get<std::string>();
    } else {
      errors->push_back("profile has the wrong type");
    }
  }
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::Profile(profile);
  } catch (const ConfigError& e) {
    errors->push_back(e.what());
  }
  Reader r(j, "", errors);
  std::string ignored;
  r("profile", ignored);
  VisitSections(cfg, r);
  return cfg;
}

std::string JoinErrors(const std::vector<std::string>& errors) {
  std::ostringstream os;
  for (size_t i = 0; i < errors.size(); ++i) os << (i ? "\n" : "") << errors[i];
  return os.str();
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  std::vector<std::string> errors;
  ExperimentConfig cfg = ConfigFromJson(j, &errors);
  const auto invariants = cfg.Validate();
  errors.insert(errors.end(), invariants.begin(), invariants.end());
  if (!errors.empty()) throw ConfigError(JoinErrors(errors));
  return cfg;
}

void SaveConfig(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << ConfigToJson(cfg).dump(2) << '\n';
}

}  // namespace sccm
