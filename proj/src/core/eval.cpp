#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <unordered_map>

#include "core/audio.hpp"
#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/vc_adapter.hpp"

namespace fs = std::filesystem;

namespace sblab {

double benign_accuracy_from_records(const std::vector<PredictionRecord>& records) {
  size_t total = 0, correct = 0;
  for (const auto& r : records) {
    if (r.triggered) continue;
    ++total;
    if (r.prediction == r.ground_truth) ++correct;
  }
  if (total == 0) fail(ErrorCode::invalid_argument, "no benign records to count");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double attack_success_rate_from_records(const std::vector<PredictionRecord>& records,
                                        int target_label) {
  size_t total = 0, hits = 0;
  for (const auto& r : records) {
    if (!r.triggered) continue;
    if (r.ground_truth == target_label) continue;  // excluded by definition
    ++total;
    if (r.prediction == target_label) ++hits;
  }
  if (total == 0) {
    fail(ErrorCode::invalid_argument,
         "attack set is degenerate: every record has the target ground truth");
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

namespace {

void append_benign_records(const TrainedModel& model, const LabeledDataset& clean_test,
                           std::vector<PredictionRecord>& records) {
  for (const auto& s : clean_test.samples) {
    Prediction p = predict(model, s);
    records.push_back({s.id, s.label, p.label, false});
  }
}

void append_attack_records(const TrainedModel& model, const LabeledDataset& clean_test,
                           const TriggerSpec& trigger, int target_label,
                           const TriggerContext& ctx,
                           std::vector<PredictionRecord>& records) {
  trigger.validate();
  size_t eligible = 0;
  for (const auto& s : clean_test.samples) {
    if (s.label == target_label) continue;
    ++eligible;
    AudioSample triggered = apply_trigger(s, trigger, ctx);
    Prediction p = predict(model, triggered);
    records.push_back({s.id, s.label, p.label, true});
  }
  if (eligible == 0) {
    fail(ErrorCode::invalid_argument,
         "attack set is degenerate: every test sample already has label " +
             std::to_string(target_label));
  }
}

void check_nonempty_test(const LabeledDataset& clean_test) {
  validate_dataset(clean_test);
  if (clean_test.samples.empty()) {
    fail(ErrorCode::invalid_argument, "evaluation set is empty");
  }
}

}  // namespace

double benign_accuracy(const TrainedModel& model, const LabeledDataset& clean_test) {
  check_nonempty_test(clean_test);
  std::vector<PredictionRecord> records;
  records.reserve(clean_test.samples.size());
  append_benign_records(model, clean_test, records);
  return benign_accuracy_from_records(records);
}

double attack_success_rate(const TrainedModel& model, const LabeledDataset& clean_test,
                           const TriggerSpec& trigger, int target_label,
                           const TriggerContext& ctx) {
  check_nonempty_test(clean_test);
  std::vector<PredictionRecord> records;
  append_attack_records(model, clean_test, trigger, target_label, ctx, records);
  return attack_success_rate_from_records(records, target_label);
}

EvalReport evaluate_model(const TrainedModel& model, const LabeledDataset& clean_test,
                          const TriggerSpec& trigger, int target_label,
                          const TriggerContext& ctx) {
  check_nonempty_test(clean_test);
  EvalReport report;
  report.target_label = target_label;
  report.trigger_id = trigger.trigger_id();
  append_benign_records(model, clean_test, report.per_sample);
  report.n_eval_benign = report.per_sample.size();
  append_attack_records(model, clean_test, trigger, target_label, ctx, report.per_sample);
  report.n_eval_attack = report.per_sample.size() - report.n_eval_benign;
  report.benign_accuracy = benign_accuracy_from_records(report.per_sample);
  report.attack_success_rate =
      attack_success_rate_from_records(report.per_sample, target_label);
  return report;
}

EvalReport run_attack_once(const LabeledDataset& train_set, const LabeledDataset& test_set,
                           const AttackSetup& setup, uint64_t seed,
                           const TriggerContext& ctx) {
  PoisonPlan plan = select_poison_subset(train_set, setup.poisoning_rate,
                                         setup.target_label, seed,
                                         setup.exclude_target_class, setup.trigger);
  LabeledDataset backdoor = build_backdoor_dataset(train_set, plan, ctx);
  TrainConfig cfg = setup.train_config;
  cfg.seed = mix_seed(seed, 0x747261696e736474ULL);
  TrainedModel model = train_classifier(backdoor, setup.model_spec, cfg);
  return evaluate_model(model, test_set, setup.trigger, setup.target_label, ctx);
}

std::vector<uint64_t> default_sweep_seeds() { return {1, 2, 3, 4, 5}; }

namespace {

std::string format_axis_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct AxisPoint {
  double value = 0.0;
  std::string label;
  AttackSetup setup;
  std::string key_stem;
};

SweepResult run_sweep(SweepAxis axis, const std::vector<AxisPoint>& axis_points,
                      const LabeledDataset& train_set, const LabeledDataset& test_set,
                      const std::vector<uint64_t>& seeds, const TriggerContext& ctx,
                      const SweepHooks& hooks) {
  if (axis_points.empty()) fail(ErrorCode::invalid_argument, "sweep has no axis values");
  if (seeds.empty()) fail(ErrorCode::invalid_argument, "sweep needs at least one seed");

  SweepResult result;
  result.axis = axis;
  result.seeds = seeds;
  for (const auto& ap : axis_points) {
    for (uint64_t seed : seeds) {
      std::string key = ap.key_stem + "/seed=" + std::to_string(seed);
      SweepPoint point;
      point.axis_value = ap.value;
      point.axis_label = ap.label;
      point.seed = seed;

      std::optional<EvalReport> cached;
      if (hooks.lookup) cached = hooks.lookup(key);
      if (cached) {
        point.report = std::move(*cached);
      } else {
        try {
          point.report = run_attack_once(train_set, test_set, ap.setup, seed, ctx);
        } catch (const Error& e) {
          fail(e.code(), "sweep point " + key + ": " + e.what());
        }
        if (hooks.store) hooks.store(key, point.report);
      }
      result.points.push_back(std::move(point));
    }
  }
  return result;
}

}  // namespace

SweepResult run_poisoning_rate_sweep(const LabeledDataset& train_set,
                                     const LabeledDataset& test_set,
                                     const std::vector<double>& rates,
                                     const AttackSetup& setup,
                                     const std::vector<uint64_t>& seeds,
                                     const TriggerContext& ctx, const SweepHooks& hooks) {
  if (!std::is_sorted(rates.begin(), rates.end())) {
    fail(ErrorCode::invalid_argument, "poisoning rates must be sorted ascending");
  }
  std::vector<AxisPoint> axis_points;
  for (double rate : rates) {
    if (!(rate >= 0.0) || rate > 1.0) {
      fail(ErrorCode::invalid_argument, "poisoning rate outside [0, 1]");
    }
    AxisPoint ap;
    ap.value = rate;
    ap.label = format_axis_value(rate);
    ap.setup = setup;
    ap.setup.poisoning_rate = rate;
    ap.key_stem = "rate=" + format_axis_value(rate);
    axis_points.push_back(std::move(ap));
  }
  return run_sweep(SweepAxis::poisoning_rate, axis_points, train_set, test_set, seeds,
                   ctx, hooks);
}

SweepResult run_target_label_sweep(const LabeledDataset& train_set,
                                   const LabeledDataset& test_set,
                                   const std::vector<int>& labels,
                                   const AttackSetup& setup,
                                   const std::vector<uint64_t>& seeds,
                                   const TriggerContext& ctx, const SweepHooks& hooks) {
  std::vector<AxisPoint> axis_points;
  for (int label : labels) {
    if (label < 0 || label >= train_set.num_classes) {
      fail(ErrorCode::invalid_argument,
           "target label " + std::to_string(label) + " outside the dataset's range");
    }
    AxisPoint ap;
    ap.value = label;
    ap.label = label < static_cast<int>(train_set.label_names.size())
                   ? train_set.label_names[static_cast<size_t>(label)]
                   : std::to_string(label);
    ap.setup = setup;
    ap.setup.target_label = label;
    ap.key_stem = "label=" + std::to_string(label);
    axis_points.push_back(std::move(ap));
  }
  std::sort(axis_points.begin(), axis_points.end(),
            [](const AxisPoint& a, const AxisPoint& b) { return a.value < b.value; });
  return run_sweep(SweepAxis::target_label, axis_points, train_set, test_set, seeds, ctx,
                   hooks);
}

TriggerSpec trigger_for_speech(const TriggerSpec& base, const std::string& speech_path) {
  if (speech_path.empty()) fail(ErrorCode::invalid_argument, "target speech path is empty");
  TriggerSpec spec = base;
  switch (base.kind) {
    case TriggerKind::voice_conversion:
      spec.target_speech_path = speech_path;
      return spec;
    case TriggerKind::surrogate_identity_shift: {
      // Distinct speech must produce a distinct transformation. Without an
      // external converter, the path seeds the shift parameters.
      uint64_t h = fnv1a64(speech_path);
      auto unit = [](uint64_t bits) {
        return static_cast<double>(bits % 1000) / 999.0;
      };
      spec.shift.pitch_ratio = 1.10 + 0.35 * unit(h);
      spec.shift.low_band_gain = 0.50 + 0.30 * unit(h >> 10);
      spec.shift.high_band_gain = 1.30 + 0.60 * unit(h >> 20);
      spec.target_speech_path = speech_path;
      return spec;
    }
    default:
      fail(ErrorCode::invalid_argument,
           "target-speech sweeps need a speech-conditioned trigger kind");
  }
}

SweepResult run_target_speech_sweep(const LabeledDataset& train_set,
                                    const LabeledDataset& test_set,
                                    const std::vector<std::string>& speech_paths,
                                    const AttackSetup& setup,
                                    const std::vector<uint64_t>& seeds,
                                    const TriggerContext& ctx, const SweepHooks& hooks) {
  std::vector<AxisPoint> axis_points;
  for (size_t i = 0; i < speech_paths.size(); ++i) {
    AxisPoint ap;
    ap.value = static_cast<double>(i);
    ap.label = speech_paths[i];
    ap.setup = setup;
    ap.setup.trigger = trigger_for_speech(setup.trigger, speech_paths[i]);
    ap.key_stem = "speech=" + to_hex(fnv1a64(speech_paths[i]));
    axis_points.push_back(std::move(ap));
  }
  return run_sweep(SweepAxis::target_speech, axis_points, train_set, test_set, seeds, ctx,
                   hooks);
}

std::vector<ScenarioCell> scenario_matrix(const TrainedModel& model,
                                          const std::vector<TriggerSpec>& probe_triggers,
                                          const LabeledDataset& clean_probe,
                                          int target_label, const TriggerContext& ctx) {
  if (probe_triggers.empty()) fail(ErrorCode::invalid_argument, "no probe triggers given");
  check_nonempty_test(clean_probe);

  size_t eligible = 0;
  for (const auto& s : clean_probe.samples) {
    if (s.label != target_label) ++eligible;
  }

  std::vector<ScenarioCell> cells;
  cells.reserve(probe_triggers.size());
  for (const auto& probe : probe_triggers) {
    ScenarioCell cell;
    cell.probe_trigger_id = probe.trigger_id();
    cell.kind = probe.kind;
    cell.asr = attack_success_rate(model, clean_probe, probe, target_label, ctx);
    cell.n = eligible;
    cells.push_back(std::move(cell));
  }
  return cells;
}

double smr_proxy_db(const AudioSample& clean, const AudioSample& modified) {
  size_t n = std::min(clean.waveform.size(), modified.waveform.size());
  double signal = 0.0, diff = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double x = clean.waveform[i];
    double d = x - static_cast<double>(modified.waveform[i]);
    signal += x * x;
    diff += d * d;
  }
  // A length change is a modification too.
  for (size_t i = n; i < clean.waveform.size(); ++i) {
    double x = clean.waveform[i];
    signal += x * x;
    diff += x * x;
  }
  for (size_t i = n; i < modified.waveform.size(); ++i) {
    double y = modified.waveform[i];
    diff += y * y;
  }
  if (diff == 0.0) return 100.0;
  if (signal == 0.0) return -100.0;
  double db = 10.0 * std::log10(signal / diff);
  return std::clamp(db, -100.0, 100.0);
}

namespace {

bool parse_last_number(const std::string& text, double* out) {
  const char* begin = text.c_str();
  const char* best_end = nullptr;
  double best = 0.0;
  for (const char* p = begin; *p != '\0';) {
    char* end = nullptr;
    double v = std::strtod(p, &end);
    if (end != p) {
      best = v;
      best_end = end;
      p = end;
    } else {
      ++p;
    }
  }
  if (best_end == nullptr) return false;
  *out = best;
  return true;
}

}  // namespace

QualityReport quality_report(const std::vector<AudioSample>& clean,
                             const std::vector<AudioSample>& poisoned,
                             const QualityScorerConfig& scorer) {
  if (clean.empty() || poisoned.empty()) {
    fail(ErrorCode::invalid_argument, "quality report needs clean and poisoned samples");
  }
  std::unordered_map<std::string, const AudioSample*> by_id;
  for (const auto& s : clean) by_id[s.id] = &s;

  QualityReport report;
  report.used_proxy = scorer.command.empty();
  report.scorer_label = report.used_proxy ? "smr-proxy" : scorer.command;

  fs::path tmp_dir;
  if (!report.used_proxy) {
    tmp_dir = fs::path(scorer.workdir) / "tmp";
    std::error_code ec;
    fs::create_directories(tmp_dir, ec);
  }

  double sum = 0.0;
  size_t ok_count = 0;
  for (const auto& p : poisoned) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      fail(ErrorCode::invalid_argument,
           "poisoned sample '" + p.id + "' has no clean counterpart");
    }
    QualityPair pair;
    pair.id = p.id;
    if (report.used_proxy) {
      pair.score = smr_proxy_db(*it->second, p);
      pair.ok = true;
    } else {
      fs::path wav = tmp_dir / ("score-" + to_hex(fnv1a64(p.id)) + ".wav");
      try {
        write_wav_float32(wav.string(), p.waveform, p.sample_rate);
        std::string command = scorer.command;
        size_t pos = command.find("{input}");
        if (pos == std::string::npos) {
          fail(ErrorCode::invalid_argument, "scorer command lacks an {input} placeholder");
        }
        command.replace(pos, 7, wav.string());
        std::string tail;
        bool timed_out = false;
        int code = run_command_with_timeout(command, scorer.timeout_s, &tail, &timed_out);
        if (timed_out) fail(ErrorCode::timeout, "scorer timed out");
        if (code != 0) fail(ErrorCode::trigger, "scorer exited with " + std::to_string(code));
        if (!parse_last_number(tail, &pair.score)) {
          fail(ErrorCode::format, "scorer printed no number");
        }
        pair.ok = true;
      } catch (const Error& e) {
        pair.ok = false;
        pair.error = e.what();
      }
      std::error_code ec;
      fs::remove(wav, ec);
    }
    if (pair.ok) {
      sum += pair.score;
      ++ok_count;
    } else {
      ++report.n_failed;
    }
    report.pairs.push_back(std::move(pair));
  }
  report.mean_score = ok_count > 0 ? sum / static_cast<double>(ok_count) : 0.0;
  return report;
}

}  // namespace sblab
