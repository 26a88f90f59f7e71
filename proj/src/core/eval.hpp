#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/poison.hpp"
#include "core/trigger.hpp"

namespace sblab {

struct PredictionRecord {
  std::string id;
  int ground_truth = 0;
  int prediction = 0;
  bool triggered = false;
};

// Headline metrics plus the per-sample records they were counted from.
// Recomputing the ratios from `per_sample` must reproduce them exactly.
struct EvalReport {
  double benign_accuracy = 0.0;
  double attack_success_rate = 0.0;
  std::vector<PredictionRecord> per_sample;
  int target_label = 0;
  std::string trigger_id;
  size_t n_eval_benign = 0;
  size_t n_eval_attack = 0;
};

// Pure counting over records; the model-driven entry points below produce
// their ratios through these, so tests can check both against brute force.
double benign_accuracy_from_records(const std::vector<PredictionRecord>& records);
double attack_success_rate_from_records(const std::vector<PredictionRecord>& records,
                                        int target_label);

double benign_accuracy(const TrainedModel& model, const LabeledDataset& clean_test);

// Triggers every test sample whose ground truth differs from `target_label`
// and counts predictions flipped to it. Ground-truth-target samples are
// excluded from numerator and denominator.
double attack_success_rate(const TrainedModel& model, const LabeledDataset& clean_test,
                           const TriggerSpec& trigger, int target_label,
                           const TriggerContext& ctx = {});

EvalReport evaluate_model(const TrainedModel& model, const LabeledDataset& clean_test,
                          const TriggerSpec& trigger, int target_label,
                          const TriggerContext& ctx = {});

// One pipeline config shared by every sweep point; the axis overrides one
// field at a time.
struct AttackSetup {
  double poisoning_rate = 0.01;
  int target_label = 0;
  bool exclude_target_class = true;
  TriggerSpec trigger;
  ModelSpec model_spec;
  TrainConfig train_config;
};

// Poison -> train -> evaluate. `seed` keys poison selection directly (so
// subsets nest across rates) and is remixed for training.
EvalReport run_attack_once(const LabeledDataset& train_set, const LabeledDataset& test_set,
                           const AttackSetup& setup, uint64_t seed,
                           const TriggerContext& ctx = {});

enum class SweepAxis { poisoning_rate, target_label, target_speech };

struct SweepPoint {
  double axis_value = 0.0;
  std::string axis_label;  // label name or speech path where relevant
  uint64_t seed = 0;
  EvalReport report;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::poisoning_rate;
  std::vector<SweepPoint> points;  // sorted by axis value, then seed
  std::vector<uint64_t> seeds;
};

// Resume support: before computing a point the sweep asks `lookup`; after
// computing it calls `store`. Keys are stable strings like
// "rate=0.0100/seed=7".
struct SweepHooks {
  std::function<std::optional<EvalReport>(const std::string& key)> lookup;
  std::function<void(const std::string& key, const EvalReport& report)> store;
};

std::vector<uint64_t> default_sweep_seeds();  // five, per the evaluation protocol

SweepResult run_poisoning_rate_sweep(const LabeledDataset& train_set,
                                     const LabeledDataset& test_set,
                                     const std::vector<double>& rates,
                                     const AttackSetup& setup,
                                     const std::vector<uint64_t>& seeds,
                                     const TriggerContext& ctx = {},
                                     const SweepHooks& hooks = {});

SweepResult run_target_label_sweep(const LabeledDataset& train_set,
                                   const LabeledDataset& test_set,
                                   const std::vector<int>& labels,
                                   const AttackSetup& setup,
                                   const std::vector<uint64_t>& seeds,
                                   const TriggerContext& ctx = {},
                                   const SweepHooks& hooks = {});

SweepResult run_target_speech_sweep(const LabeledDataset& train_set,
                                    const LabeledDataset& test_set,
                                    const std::vector<std::string>& speech_paths,
                                    const AttackSetup& setup,
                                    const std::vector<uint64_t>& seeds,
                                    const TriggerContext& ctx = {},
                                    const SweepHooks& hooks = {});

// Conditions `base` on a different target speech. Surrogate triggers derive
// their shift parameters from the path so distinct speech gives distinct
// triggers without any external tool; VC triggers swap the path verbatim.
TriggerSpec trigger_for_speech(const TriggerSpec& base, const std::string& speech_path);

struct ScenarioCell {
  std::string probe_trigger_id;
  TriggerKind kind = TriggerKind::none;
  double asr = 0.0;
  size_t n = 0;
};

// ASR of each probe trigger against one trained model; a kind=none probe is
// the clean-speech row.
std::vector<ScenarioCell> scenario_matrix(const TrainedModel& model,
                                          const std::vector<TriggerSpec>& probe_triggers,
                                          const LabeledDataset& clean_probe,
                                          int target_label,
                                          const TriggerContext& ctx = {});

// External quality scorer: command with an {input} placeholder printing one
// number on stdout. Empty command selects the built-in proxy.
struct QualityScorerConfig {
  std::string command;
  std::string workdir = ".";
  double timeout_s = 60.0;
};

struct QualityPair {
  std::string id;
  double score = 0.0;
  bool ok = false;
  std::string error;
};

struct QualityReport {
  std::vector<QualityPair> pairs;
  double mean_score = 0.0;  // over successful pairs
  size_t n_failed = 0;
  bool used_proxy = true;
  std::string scorer_label;  // "smr-proxy" or the external command
};

// Paired by sample id. The proxy is a signal-to-modification ratio in dB,
// capped at +100 for identical pairs; it is NOT a perceptual score.
double smr_proxy_db(const AudioSample& clean, const AudioSample& modified);

QualityReport quality_report(const std::vector<AudioSample>& clean,
                             const std::vector<AudioSample>& poisoned,
                             const QualityScorerConfig& scorer = {});

}  // namespace sblab
