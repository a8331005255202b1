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

#include "sccm/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "sccm/error.h"

namespace sccm {

using json = nlohmann::json;

PermutationAssignment BestPermutationFromScores(const std::vector<std::vector<double>>& scores) {
  const int n = static_cast<int>(scores.size());
  for (const auto& row : scores) {
    if (static_cast<int>(row.size()) != n) throw DataError("permutation search needs a square score matrix");
  }
  PermutationAssignment best;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  bool first = true;
  do {
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += -scores[i][perm[i]];
    const double loss = n ? sum / n : 0.0;
    if (first || loss < best.reconstruction_loss) {
      best.theta = perm;
      best.reconstruction_loss = loss;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

template <typename T>
PermutationAssignment BestPermutation(const std::vector<std::span<const T>>& estimates,
                                      const std::vector<std::span<const T>>& targets) {
  if (estimates.size() != targets.size()) {
    throw DataError("permutation search needs equal counts (" + std::to_string(estimates.size()) +
                    " estimates, " + std::to_string(targets.size()) + " targets)");
  }
  std::vector<std::vector<double>> scores(estimates.size(), std::vector<double>(targets.size()));
  for (size_t i = 0; i < estimates.size(); ++i) {
    for (size_t j = 0; j < targets.size(); ++j) {
      if (estimates[i].size() != targets[j].size()) throw DataError("estimate and target lengths differ");
      scores[i][j] = SiSnr<T>(estimates[i], targets[j]);
    }
  }
  return BestPermutationFromScores(scores);
}

PermutationAssignment BestPermutation(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets) {
  std::vector<std::span<const float>> e, t;
  for (const auto& w : estimates) e.push_back(w.view());
  for (const auto& w : targets) t.push_back(w.view());
  return BestPermutation<float>(e, t);
}

template <typename T>
std::vector<int> EnergyOrder(const std::vector<std::span<const T>>& targets) {
  std::vector<double> energy;
  for (const auto& t : targets) {
    double e = 0;
    for (T v : t) e += double(v) * double(v);
    energy.push_back(e);
  }
  std::vector<int> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return energy[a] > energy[b]; });
  return order;
}

template <typename T>
JointLossTerms<T> JointLoss(const std::vector<ag::Var<T>>& logits, const std::vector<ag::Var<T>>& estimates,
                            const std::vector<std::span<const T>>& targets, const std::vector<int>& classes,
                            int eos, double alpha, const std::vector<int>* fixed_theta) {
  const size_t n = targets.size();
  if (n == 0) throw DataError("joint loss on a record without speakers");
  if (estimates.size() != n || classes.size() != n) {
    throw DataError("joint loss needs one estimate and one class per target");
  }
  if (logits.size() != n + 1) throw DataError("joint loss needs I + 1 decoder steps");
  JointLossTerms<T> out;
  if (fixed_theta) {
    if (fixed_theta->size() != n) throw DataError("fixed order has the wrong length");
    out.assignment.theta = *fixed_theta;
    double sum = 0;
    for (size_t i = 0; i < n; ++i) sum -= SiSnr<T>(estimates[i].value().flat(), targets[(*fixed_theta)[i]]);
    out.assignment.reconstruction_loss = sum / n;
  } else {
    std::vector<std::span<const T>> est;
    for (const auto& e : estimates) est.push_back(e.value().flat());
    out.assignment = BestPermutation<T>(est, targets);
  }
  const auto& theta = out.assignment.theta;
  std::vector<ag::Var<T>> rec, cls;
  for (size_t i = 0; i < n; ++i) {
    rec.push_back(ag::SiSnr(estimates[i], targets[theta[i]]));
    cls.push_back(ag::CrossEntropy(logits[i], classes[theta[i]]));
  }
  out.reconstruction = ag::Scale(ag::AddN(rec), static_cast<T>(-1.0 / n));
  out.classification = ag::Add(ag::Scale(ag::AddN(cls), static_cast<T>(1.0 / n)), ag::CrossEntropy(logits[n], eos));
  out.total = ag::Add(out.reconstruction, ag::Scale(out.classification, static_cast<T>(alpha)));
  return out;
}

template <typename T>
ag::Var<T> PitLoss(const std::vector<ag::Var<T>>& estimates, const std::vector<std::span<const T>>& targets,
                   PermutationAssignment* assignment) {
  const size_t k = estimates.size();
  const size_t n = targets.size();
  if (n == 0 || n > k) {
    throw DataError("baseline with " + std::to_string(k) + " outputs cannot score " + std::to_string(n) +
                    " targets");
  }
  // Dummy targets score zero against every output so they do not affect
  // the choice among real pairings.
  std::vector<std::vector<double>> scores(k, std::vector<double>(k, 0.0));
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = 0; j < n; ++j) scores[i][j] = SiSnr<T>(estimates[i].value().flat(), targets[j]);
  }
  PermutationAssignment best = BestPermutationFromScores(scores);
  std::vector<ag::Var<T>> terms;
  double sum = 0;
  for (size_t i = 0; i < k; ++i) {
    if (best.theta[i] >= static_cast<int>(n)) {
      best.theta[i] = -1;
      continue;
    }
    terms.push_back(ag::SiSnr(estimates[i], targets[best.theta[i]]));
    sum -= scores[i][best.theta[i]];
  }
  best.reconstruction_loss = sum / n;
  if (assignment) *assignment = best;
  return ag::Scale(ag::AddN(terms), static_cast<T>(-1.0 / n));
}

template <typename T>
Adam<T>::Adam(nn::NamedParams<T> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), frozen_(params_.size(), false), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, v] : params_) {
    m_.emplace_back(v.rows(), v.cols());
    v_.emplace_back(v.rows(), v.cols());
  }
}

template <typename T>
void Adam<T>::SetFrozen(const std::string& prefix, bool frozen) {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].first.rfind(prefix, 0) == 0) frozen_[i] = frozen;
  }
}

template <typename T>
double Adam<T>::ClipGradNorm(double max_norm) {
  double sq = 0;
  for (size_t i = 0; i < params_.size(); ++i) {
    if (frozen_[i] || !params_[i].second.has_grad()) continue;
    for (T g : params_[i].second.grad().flat()) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-6));
    for (size_t i = 0; i < params_.size(); ++i) {
      if (frozen_[i] || !params_[i].second.has_grad()) continue;
      for (T& g : params_[i].second.grad().flat()) g *= scale;
    }
  }
  return norm;
}

template <typename T>
void Adam<T>::Step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (frozen_[i] || !p.has_grad()) continue;
    const auto g = p.grad().flat();
    auto w = p.mutable_value().flat();
    auto m = m_[i].flat();
    auto v = v_[i].flat();
    for (size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<T>(beta1_ * m[k] + (1 - beta1_) * gk);
      v[k] = static_cast<T>(beta2_ * v[k] + (1 - beta2_) * gk * gk);
      const double mh = m[k] / c1;
      const double vh = v[k] / c2;
      w[k] = static_cast<T>(w[k] - lr * mh / (std::sqrt(vh) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::ZeroGrad() {
  for (auto& [name, p] : params_) p.ZeroGrad();
}

template <typename T>
void Adam<T>::SaveState(Checkpoint* ckpt) const {
  ckpt->header["optimizer"] = {{"steps", t_}};
  for (size_t i = 0; i < params_.size(); ++i) {
    ckpt->Put("adam.m." + params_[i].first, m_[i].template Cast<float>());
    ckpt->Put("adam.v." + params_[i].first, v_[i].template Cast<float>());
  }
}

template <typename T>
void Adam<T>::LoadState(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("optimizer")) throw DataError("checkpoint has no optimizer state");
  t_ = ckpt.header.at("optimizer").at("steps").get<int64_t>();
  for (size_t i = 0; i < params_.size(); ++i) {
    const Matrix<float>* m = ckpt.Find("adam.m." + params_[i].first);
    const Matrix<float>* v = ckpt.Find("adam.v." + params_[i].first);
    auto same = [&](const Matrix<float>* a, const Matrix<T>& b) {
      return a && a->rows() == b.rows() && a->cols() == b.cols();
    };
    if (!same(m, m_[i]) || !same(v, v_[i])) {
      throw DataError("checkpoint optimizer state does not match parameter " + params_[i].first);
    }
    m_[i] = m->template Cast<T>();
    v_[i] = v->template Cast<T>();
  }
}

template class Adam<float>;
template class Adam<double>;

double LearningRate(const TrainConfig& cfg, int completed_epochs) {
  return cfg.lr * std::pow(cfg.decay_factor, completed_epochs / cfg.decay_every_epochs);
}

std::vector<TrainRecord> PrepareRecords(const Model& model, const Manifest& manifest, const std::string& split,
                                        bool require_vocabulary, std::vector<std::string>* warnings,
                                        int /*workers*/) {
  std::vector<TrainRecord> out;
  const int vocab = model.config().inference_net.num_speakers;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (!split.empty() && e.split != split) continue;
    if (e.speaker_ids.empty()) {
      if (warnings) warnings->push_back("record " + std::to_string(i) + " has no speakers; skipped");
      continue;
    }
    TrainRecord r;
    r.record = LoadRecord(manifest, e);
    r.manifest_index = i;
    r.classes = e.speaker_ids;
    if (require_vocabulary) {
      for (int id : r.classes) {
        if (id < 0 || id >= vocab) {
          throw DataError("record " + std::to_string(i) + " has speaker " + std::to_string(id) +
                          " outside the " + std::to_string(vocab) + "-speaker vocabulary");
        }
      }
    }
    if (model.is_sccm()) r.features = model.Features(r.record.mixture);
    out.push_back(std::move(r));
  }
  return out;
}

TrainRecord MakeTrainRecord(const Model& model, MixtureRecord record, size_t index) {
  TrainRecord r;
  r.classes.assign(record.speakers.begin(), record.speakers.end());
  r.record = std::move(record);
  r.manifest_index = index;
  if (model.is_sccm()) r.features = model.Features(r.record.mixture);
  return r;
}

Segment SampleSegment(const MixtureRecord& rec, int64_t segment_samples, Rng* rng) {
  const auto len = static_cast<int64_t>(rec.mixture.size());
  if (len <= segment_samples) return {0, len};
  std::uniform_int_distribution<int64_t> start(0, len - segment_samples);
  Segment best{0, segment_samples};
  double best_min = -1;
  for (int attempt = 0; attempt < 16; ++attempt) {
    const Segment s{start(*rng), segment_samples};
    double min_energy = std::numeric_limits<double>::infinity();
    for (const auto& src : rec.sources) {
      double e = 0;
      for (int64_t k = s.start; k < s.start + s.length; ++k) e += double(src.samples[k]) * src.samples[k];
      min_energy = std::min(min_energy, e);
    }
    if (min_energy > 0) return s;
    if (min_energy > best_min) {
      best_min = min_energy;
      best = s;
    }
  }
  return best;
}

json TrainState::ToJson() const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"epoch", epoch},
          {"step", step},
          {"best_valid_classification", finite_or_null(best_valid_classification)},
          {"best_valid_si_snri", finite_or_null(best_valid_si_snri)},
          {"stale_validations", stale_validations},
          {"inference_frozen", inference_frozen},
          {"stage_one_done", stage_one_done}};
}

TrainState TrainState::FromJson(const json& j) {
  TrainState s;
  s.epoch = j.value("epoch", 0);
  s.step = j.value("step", 0);
  if (j.contains("best_valid_classification") && j.at("best_valid_classification").is_number()) {
    s.best_valid_classification = j.at("best_valid_classification").get<double>();
  }
  if (j.contains("best_valid_si_snri") && j.at("best_valid_si_snri").is_number()) {
    s.best_valid_si_snri = j.at("best_valid_si_snri").get<double>();
  }
  s.stale_validations = j.value("stale_validations", 0);
  s.inference_frozen = j.value("inference_frozen", false);
  s.stage_one_done = j.value("stage_one_done", false);
  return s;
}

namespace {

json EpochJson(const EpochSummary& e) {
  json j = {{"epoch", e.epoch},
            {"steps", e.steps},
            {"lr", e.lr},
            {"loss", e.loss},
            {"reconstruction", e.reconstruction},
            {"classification", e.classification},
            {"theta_stability", e.theta_stability < 0 ? json(nullptr) : json(e.theta_stability)},
            {"inference_frozen", e.inference_frozen}};
  if (e.validated) {
    j["valid_classification"] = e.valid_classification;
    j["valid_si_snri"] = e.valid_si_snri;
  }
  return j;
}

std::string RngState(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void SetRngState(Rng* rng, const std::string& s) {
  std::istringstream is(s);
  is >> *rng;
  if (!is) throw DataError("checkpoint has a malformed random state");
}

std::vector<float> Crop(const std::vector<float>& v, const Segment& s) {
  return {v.begin() + s.start, v.begin() + s.start + s.length};
}

}  // namespace

json TrainingReport::ToJson() const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json epochs_json = json::array();
  for (const auto& e : epochs) epochs_json.push_back(EpochJson(e));
  json cascade_json = json::array();
  for (const auto& e : cascade_epochs) cascade_json.push_back(EpochJson(e));
  return {{"model", model},
          {"total_steps", total_steps},
          {"seconds", seconds},
          {"frozen_at_epoch", frozen_at_epoch < 0 ? json(nullptr) : json(frozen_at_epoch)},
          {"best_valid_classification", finite_or_null(best_valid_classification)},
          {"best_valid_si_snri", finite_or_null(best_valid_si_snri)},
          {"step_loss", step_loss},
          {"step_reconstruction", step_reconstruction},
          {"step_classification", step_classification},
          {"step_lr", step_lr},
          {"epochs", epochs_json},
          {"cascade_step_loss", cascade_step_loss},
          {"cascade_epochs", cascade_json},
          {"warnings", warnings}};
}

struct Trainer::Totals {
  double loss = 0, reconstruction = 0, classification = 0;
  int records = 0;
  int theta_compared = 0, theta_stable = 0;
};

Trainer::Trainer(Model* model, TrainCallbacks callbacks)
    : model_(model),
      callbacks_(std::move(callbacks)),
      cfg_(model->config().train),
      optimizer_(model->Params()),
      data_rng_(DeriveSeed(cfg_.seed, {0x44415441ULL})),
      dropout_rng_(DeriveSeed(cfg_.seed, {0x44524f50ULL})) {}

void Trainer::Resume(const Checkpoint& ckpt) {
  const json& s = ckpt.header.value("training_state", json::object());
  state_ = TrainState::FromJson(s);
  if (s.contains("data_rng")) SetRngState(&data_rng_, s.at("data_rng").get<std::string>());
  if (s.contains("dropout_rng")) SetRngState(&dropout_rng_, s.at("dropout_rng").get<std::string>());
  optimizer_.LoadState(ckpt);
  if (state_.inference_frozen) optimizer_.SetFrozen("inference.", true);
  // A larger epoch or step budget reopens stage one.
  if (state_.epoch < cfg_.max_epochs && StepBudgetLeft()) state_.stage_one_done = false;
}

Checkpoint Trainer::Snapshot() const {
  json s = state_.ToJson();
  s["data_rng"] = RngState(data_rng_);
  s["dropout_rng"] = RngState(dropout_rng_);
  Checkpoint ckpt = model_->ToCheckpoint(s);
  optimizer_.SaveState(&ckpt);
  return ckpt;
}

void Trainer::Emit(const std::string& tag) {
  if (callbacks_.checkpoint) callbacks_.checkpoint(tag, Snapshot());
}

void Trainer::Log(const std::string& line) const {
  if (callbacks_.log) callbacks_.log(line);
}

bool Trainer::StepBudgetLeft() const { return cfg_.max_steps == 0 || state_.step < cfg_.max_steps; }

std::vector<std::vector<size_t>> Trainer::Batches(const std::vector<TrainRecord>& records) {
  // Records are grouped by speaker count so every batch has one I.
  std::map<size_t, std::vector<size_t>> groups;
  for (size_t i = 0; i < records.size(); ++i) groups[records[i].classes.size()].push_back(i);
  std::vector<std::vector<size_t>> batches;
  for (auto& [count, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), data_rng_);
    for (size_t b = 0; b < idx.size(); b += cfg_.batch_size) {
      batches.emplace_back(idx.begin() + b, idx.begin() + std::min(idx.size(), b + cfg_.batch_size));
    }
  }
  std::shuffle(batches.begin(), batches.end(), data_rng_);
  return batches;
}

namespace {

std::string IndexList(const std::vector<TrainRecord>& records, const std::vector<size_t>& batch) {
  std::string s;
  for (size_t i : batch) s += (s.empty() ? "" : ",") + std::to_string(records[i].manifest_index);
  return s;
}

}  // namespace

void Trainer::RunSccmEpoch(const std::vector<TrainRecord>& train, TrainingReport* report, Totals* totals) {
  const auto& inf = model_->inference();
  const auto& ext = model_->extractor();
  const auto& icfg = model_->config().inference_net;
  const double lr = LearningRate(cfg_, state_.epoch);
  const auto seg_samples = static_cast<int64_t>(std::llround(cfg_.segment_seconds * model_->config().dataset.sample_rate));
  for (const auto& batch : Batches(train)) {
    if (!StepBudgetLeft()) break;
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    double bl = 0, br = 0, bc = 0;
    for (size_t idx : batch) {
      const TrainRecord& r = train[idx];
      const int n = static_cast<int>(r.classes.size());
      std::vector<ag::Var<float>> logits, hidden;
      {
        std::optional<ag::NoGradGuard> guard;
        if (state_.inference_frozen) guard.emplace();
        nn::Context ctx;
        ctx.training = !state_.inference_frozen;
        ctx.dropout = icfg.dropout;
        ctx.rng = &dropout_rng_;
        const auto enc = inf.Encode(r.features, ctx);
        for (auto& step : inf.Decode(enc, n + 1, ctx)) {
          logits.push_back(step.logits);
          hidden.push_back(step.hidden);
        }
      }
      const Segment seg = SampleSegment(r.record, seg_samples, &data_rng_);
      const auto obs = Crop(r.record.mixture.samples, seg);
      std::vector<std::span<const float>> targets;
      for (const auto& s : r.record.sources) {
        targets.push_back(std::span<const float>(s.samples).subspan(seg.start, seg.length));
      }
      const auto analysis = ext.Analyze(ag::Var<float>(Matrix<float>::RowVector(obs)));
      std::vector<ag::Var<float>> estimates;
      for (int i = 0; i < n; ++i) estimates.push_back(ext.Extract(analysis, hidden[i]));

      std::vector<int> order;
      const std::vector<int>* fixed = nullptr;
      if (cfg_.order == "fixed") {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        fixed = &order;
      } else if (cfg_.order == "energy") {
        order = EnergyOrder<float>(targets);
        fixed = &order;
      }
      const auto jl = JointLoss<float>(logits, estimates, targets, r.classes, icfg.eos(), cfg_.alpha, fixed);
      const double total = jl.total.item();
      if (!std::isfinite(total)) {
        throw RuntimeError("non-finite loss at step " + std::to_string(state_.step) + " (manifest records " +
                           IndexList(train, batch) + ")");
      }
      ag::Backward(ag::Scale(jl.total, inv_b));
      bl += total * inv_b;
      br += jl.reconstruction.item() * inv_b;
      bc += jl.classification.item() * inv_b;

      auto& last = last_theta_[idx];
      if (!last.empty()) {
        ++totals->theta_compared;
        if (last == jl.assignment.theta) ++totals->theta_stable;
      }
      last = jl.assignment.theta;
    }
    const double norm = optimizer_.ClipGradNorm(cfg_.clip_norm);
    if (!std::isfinite(norm)) {
      throw RuntimeError("non-finite gradient at step " + std::to_string(state_.step) + " (manifest records " +
                         IndexList(train, batch) + ")");
    }
    optimizer_.Step(lr);
    optimizer_.ZeroGrad();
    ++state_.step;
    report->step_loss.push_back(bl);
    report->step_reconstruction.push_back(br);
    report->step_classification.push_back(bc);
    report->step_lr.push_back(lr);
    totals->loss += bl * batch.size();
    totals->reconstruction += br * batch.size();
    totals->classification += bc * batch.size();
    totals->records += static_cast<int>(batch.size());
    if (cfg_.log_every_steps > 0 && state_.step % cfg_.log_every_steps == 0) {
      std::ostringstream os;
      os << "step " << state_.step << " loss " << bl << " L_r " << br << " L_c " << bc << " lr " << lr;
      Log(os.str());
    }
  }
}

void Trainer::RunPitEpoch(const std::vector<TrainRecord>& train, TrainingReport* report, Totals* totals) {
  const auto& pit = model_->pit();
  const double lr = LearningRate(cfg_, state_.epoch);
  const auto seg_samples = static_cast<int64_t>(std::llround(cfg_.segment_seconds * model_->config().dataset.sample_rate));
  for (const auto& batch : Batches(train)) {
    if (!StepBudgetLeft()) break;
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    double bl = 0;
    for (size_t idx : batch) {
      const TrainRecord& r = train[idx];
      const Segment seg = SampleSegment(r.record, seg_samples, &data_rng_);
      const auto obs = Crop(r.record.mixture.samples, seg);
      std::vector<std::span<const float>> targets;
      for (const auto& s : r.record.sources) {
        targets.push_back(std::span<const float>(s.samples).subspan(seg.start, seg.length));
      }
      PermutationAssignment a;
      const auto loss = PitLoss<float>(pit.Separate(ag::Var<float>(Matrix<float>::RowVector(obs))), targets, &a);
      const double v = loss.item();
      if (!std::isfinite(v)) {
        throw RuntimeError("non-finite loss at step " + std::to_string(state_.step) + " (manifest records " +
                           IndexList(train, batch) + ")");
      }
      ag::Backward(ag::Scale(loss, inv_b));
      bl += v * inv_b;
      auto& last = last_theta_[idx];
      if (!last.empty()) {
        ++totals->theta_compared;
        if (last == a.theta) ++totals->theta_stable;
      }
      last = a.theta;
    }
    const double norm = optimizer_.ClipGradNorm(cfg_.clip_norm);
    if (!std::isfinite(norm)) {
      throw RuntimeError("non-finite gradient at step " + std::to_string(state_.step) + " (manifest records " +
                         IndexList(train, batch) + ")");
    }
    optimizer_.Step(lr);
    optimizer_.ZeroGrad();
    ++state_.step;
    report->step_loss.push_back(bl);
    report->step_reconstruction.push_back(bl);
    report->step_classification.push_back(0.0);
    report->step_lr.push_back(lr);
    totals->loss += bl * batch.size();
    totals->reconstruction += bl * batch.size();
    totals->records += static_cast<int>(batch.size());
    if (cfg_.log_every_steps > 0 && state_.step % cfg_.log_every_steps == 0) {
      std::ostringstream os;
      os << "step " << state_.step << " loss " << bl << " lr " << lr;
      Log(os.str());
    }
  }
}

void Trainer::Validate(const std::vector<TrainRecord>& valid, EpochSummary* summary) const {
  ag::NoGradGuard no_grad;
  double lc = 0, sisnri = 0;
  for (const auto& r : valid) {
    const auto& mix = r.record.mixture.samples;
    std::vector<std::span<const float>> targets;
    for (const auto& s : r.record.sources) targets.push_back(s.samples);
    const auto obs = ag::Var<float>(Matrix<float>::RowVector(mix));
    std::vector<ag::Var<float>> estimates;
    PermutationAssignment a;
    if (model_->is_sccm()) {
      const int n = static_cast<int>(r.classes.size());
      const auto enc = model_->inference().Encode(r.features, nn::Context::Eval());
      std::vector<ag::Var<float>> logits;
      const auto analysis = model_->extractor().Analyze(obs);
      for (auto& step : model_->inference().Decode(enc, n + 1, nn::Context::Eval())) {
        logits.push_back(step.logits);
        if (static_cast<int>(estimates.size()) < n) estimates.push_back(model_->extractor().Extract(analysis, step.hidden));
      }
      const auto jl = JointLoss<float>(logits, estimates, targets, r.classes, model_->config().inference_net.eos(),
                                       cfg_.alpha);
      lc += jl.classification.item();
      a = jl.assignment;
    } else {
      estimates = model_->pit().Separate(obs);
      PitLoss<float>(estimates, targets, &a);
    }
    double rec = 0;
    int counted = 0;
    for (size_t i = 0; i < estimates.size(); ++i) {
      if (a.theta[i] < 0) continue;
      rec += SiSnrImprovement(mix, estimates[i].value().flat(), targets[a.theta[i]]);
      ++counted;
    }
    sisnri += rec / counted;
  }
  summary->validated = true;
  summary->valid_classification = model_->is_sccm() ? lc / valid.size() : 0.0;
  summary->valid_si_snri = sisnri / valid.size();
}

void Trainer::RunCascade(const std::vector<TrainRecord>& train, TrainingReport* report) {
  if (!model_->cascade()) model_->EnableCascade(DeriveSeed(cfg_.seed, {0x43415343ULL}));
  Adam<float> opt(model_->CascadeParams());
  const auto& casc = *model_->cascade();
  // Stage-one outputs on whole recordings, aligned to targets, computed once.
  std::vector<std::vector<std::vector<float>>> stage_one(train.size());
  {
    ag::NoGradGuard no_grad;
    for (size_t k = 0; k < train.size(); ++k) {
      const auto& r = train[k];
      const int n = static_cast<int>(r.classes.size());
      std::vector<std::span<const float>> targets;
      for (const auto& s : r.record.sources) targets.push_back(s.samples);
      const auto enc = model_->inference().Encode(r.features, nn::Context::Eval());
      const auto analysis = model_->extractor().Analyze(ag::Var<float>(Matrix<float>::RowVector(r.record.mixture.samples)));
      std::vector<ag::Var<float>> logits, estimates;
      for (auto& step : model_->inference().Decode(enc, n + 1, nn::Context::Eval())) {
        logits.push_back(step.logits);
        if (static_cast<int>(estimates.size()) < n) estimates.push_back(model_->extractor().Extract(analysis, step.hidden));
      }
      const auto jl = JointLoss<float>(logits, estimates, targets, r.classes, model_->config().inference_net.eos(),
                                       cfg_.alpha);
      stage_one[k].resize(n);
      for (int i = 0; i < n; ++i) {
        const auto flat = estimates[i].value().flat();
        stage_one[k][jl.assignment.theta[i]].assign(flat.begin(), flat.end());
      }
    }
  }
  const auto seg_samples = static_cast<int64_t>(std::llround(cfg_.segment_seconds * model_->config().dataset.sample_rate));
  for (int epoch = 0; epoch < cfg_.cascade_epochs; ++epoch) {
    const double lr = LearningRate(cfg_, epoch);
    double sum = 0;
    int records = 0;
    for (const auto& batch : Batches(train)) {
      const float inv_b = 1.0f / static_cast<float>(batch.size());
      double bl = 0;
      for (size_t idx : batch) {
        const auto& r = train[idx];
        const Segment seg = SampleSegment(r.record, seg_samples, &data_rng_);
        const ag::Var<float> obs(Matrix<float>::RowVector(Crop(r.record.mixture.samples, seg)));
        std::vector<ag::Var<float>> terms;
        for (size_t j = 0; j < r.record.sources.size(); ++j) {
          const ag::Var<float> est(Matrix<float>::RowVector(Crop(stage_one[idx][j], seg)));
          const auto target = std::span<const float>(r.record.sources[j].samples).subspan(seg.start, seg.length);
          terms.push_back(ag::SiSnr(casc.Refine(obs, est), target));
        }
        const auto loss = ag::Scale(ag::AddN(terms), -1.0f / static_cast<float>(terms.size()));
        const double v = loss.item();
        if (!std::isfinite(v)) throw RuntimeError("non-finite refinement loss (manifest records " + IndexList(train, batch) + ")");
        ag::Backward(ag::Scale(loss, inv_b));
        bl += v * inv_b;
      }
      opt.ClipGradNorm(cfg_.clip_norm);
      opt.Step(lr);
      opt.ZeroGrad();
      report->cascade_step_loss.push_back(bl);
      sum += bl * batch.size();
      records += static_cast<int>(batch.size());
    }
    EpochSummary e;
    e.epoch = epoch + 1;
    e.steps = static_cast<int>(report->cascade_step_loss.size());
    e.lr = lr;
    e.loss = e.reconstruction = sum / std::max(records, 1);
    report->cascade_epochs.push_back(e);
    std::ostringstream os;
    os << "refinement epoch " << e.epoch << " loss " << e.loss;
    Log(os.str());
  }
}

TrainingReport Trainer::Run(const std::vector<TrainRecord>& train, const std::vector<TrainRecord>& valid) {
  const auto t0 = std::chrono::steady_clock::now();
  if (train.empty()) throw DataError("training split is empty");
  TrainingReport report;
  report.model = model_->kind();
  last_theta_.assign(train.size(), {});
  const auto inference_params = model_->InferenceParams();
  std::vector<Matrix<float>> best_inference;

  while (!state_.stage_one_done && state_.epoch < cfg_.max_epochs && StepBudgetLeft()) {
    Totals totals;
    EpochSummary summary;
    summary.lr = LearningRate(cfg_, state_.epoch);
    if (model_->is_sccm()) {
      RunSccmEpoch(train, &report, &totals);
    } else {
      RunPitEpoch(train, &report, &totals);
    }
    ++state_.epoch;
    summary.epoch = state_.epoch;
    summary.steps = state_.step;
    const int n = std::max(totals.records, 1);
    summary.loss = totals.loss / n;
    summary.reconstruction = totals.reconstruction / n;
    summary.classification = totals.classification / n;
    if (totals.theta_compared > 0) summary.theta_stability = double(totals.theta_stable) / totals.theta_compared;

    if (!valid.empty() && state_.epoch % cfg_.validate_every_epochs == 0) {
      Validate(valid, &summary);
      if (summary.valid_si_snri > state_.best_valid_si_snri) {
        state_.best_valid_si_snri = summary.valid_si_snri;
        Emit("best_si_snri");
      }
      if (model_->is_sccm() && !state_.inference_frozen) {
        if (summary.valid_classification < state_.best_valid_classification) {
          state_.best_valid_classification = summary.valid_classification;
          state_.stale_validations = 0;
          best_inference.clear();
          for (const auto& [name, v] : inference_params) best_inference.push_back(v.value());
          Emit("best_classification");
        } else if (++state_.stale_validations >= cfg_.early_stop_patience) {
          state_.inference_frozen = true;
          report.frozen_at_epoch = state_.epoch;
          if (!best_inference.empty()) {
            for (size_t i = 0; i < inference_params.size(); ++i) {
              const_cast<ag::Var<float>&>(inference_params[i].second).mutable_value() = best_inference[i];
            }
          }
          optimizer_.SetFrozen("inference.", true);
          Log("speaker inference frozen after epoch " + std::to_string(state_.epoch));
        }
      }
    }
    summary.inference_frozen = state_.inference_frozen;
    report.epochs.push_back(summary);
    std::ostringstream os;
    os << "epoch " << summary.epoch << " steps " << summary.steps << " loss " << summary.loss;
    if (summary.validated) os << " valid L_c " << summary.valid_classification << " valid SI-SNRi " << summary.valid_si_snri;
    Log(os.str());
  }
  state_.stage_one_done = true;
  if (model_->is_sccm() && cfg_.cascade_epochs > 0) RunCascade(train, &report);
  Emit("last");

  report.total_steps = state_.step;
  report.best_valid_classification = state_.best_valid_classification;
  report.best_valid_si_snri = state_.best_valid_si_snri;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

template PermutationAssignment BestPermutation<float>(const std::vector<std::span<const float>>&,
                                                      const std::vector<std::span<const float>>&);
template PermutationAssignment BestPermutation<double>(const std::vector<std::span<const double>>&,
                                                       const std::vector<std::span<const double>>&);
template std::vector<int> EnergyOrder<float>(const std::vector<std::span<const float>>&);
template std::vector<int> EnergyOrder<double>(const std::vector<std::span<const double>>&);
template JointLossTerms<float> JointLoss<float>(const std::vector<ag::Var<float>>&, const std::vector<ag::Var<float>>&,
                                                const std::vector<std::span<const float>>&, const std::vector<int>&,
                                                int, double, const std::vector<int>*);
template JointLossTerms<double> JointLoss<double>(const std::vector<ag::Var<double>>&,
                                                  const std::vector<ag::Var<double>>&,
                                                  const std::vector<std::span<const double>>&,
                                                  const std::vector<int>&, int, double, const std::vector<int>*);
template ag::Var<float> PitLoss<float>(const std::vector<ag::Var<float>>&, const std::vector<std::span<const float>>&,
                                       PermutationAssignment*);
template ag::Var<double> PitLoss<double>(const std::vector<ag::Var<double>>&,
                                         const std::vector<std::span<const double>>&, PermutationAssignment*);

}  // namespace sccm
