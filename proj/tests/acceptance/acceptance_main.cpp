// Acceptance gate for the laboratory. Each criterion prints one PASS/FAIL
// line with its elapsed time and pinned budget; the exit code is the number
// of failed criteria. Criteria 2-5 share one desk-scale experiment so the
// whole gate stays inside its budgets.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "core/corpus.hpp"
#include "core/dataset.hpp"
#include "core/defense.hpp"
#include "core/dsp.hpp"
#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/hash.hpp"
#include "core/model.hpp"
#include "core/poison.hpp"
#include "core/rng.hpp"
#include "core/trigger.hpp"
#include "core/vc_adapter.hpp"
#include "support/test_util.hpp"

using namespace sblab;

namespace {

struct Outcome {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    notes.push_back(std::string(cond ? "ok   " : "FAIL ") + what);
    ok = ok && cond;
  }
  void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(double v, int places = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return buf;
}

// ---- desk-scale experiment shared by criteria 2-5 --------------------------

struct DeskScale {
  LabeledDataset train;
  LabeledDataset test;
  TriggerSpec trigger = TriggerSpec::surrogate({1.25, 0.7, 1.6});
  ModelSpec spec;
  TrainConfig train_config;  // defaults: sgd, lr 0.01, batch 32, 30 epochs
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::map<std::string, EvalReport> sweep_cache;
  std::optional<TrainedModel> backdoored;
  bool ready = false;

  void ensure_corpus() {
    if (ready) return;
    CorpusConfig corpus_config;  // 8 classes x 100 utterances, 1.0 s each
    LabeledDataset corpus = make_corpus(corpus_config);
    auto [tr, te] = split_dataset(corpus, 0.9, 42);
    train = std::move(tr);
    test = std::move(te);
    spec.num_classes = corpus.num_classes;
    ready = true;
  }

  AttackSetup setup() const { return {0.05, 0, true, trigger, spec, train_config}; }

  // Points computed by one criterion are served to the next from memory.
  SweepHooks caching_hooks() {
    SweepHooks hooks;
    hooks.lookup = [this](const std::string& key) -> std::optional<EvalReport> {
      auto it = sweep_cache.find(key);
      if (it == sweep_cache.end()) return std::nullopt;
      return it->second;
    };
    hooks.store = [this](const std::string& key, const EvalReport& report) {
      sweep_cache[key] = report;
    };
    return hooks;
  }

  // One backdoored checkpoint (rate 0.05, seed 1) shared by criteria 4 and 5.
  const TrainedModel& backdoored_model() {
    ensure_corpus();
    if (!backdoored) {
      PoisonPlan plan = select_poison_subset(train, 0.05, 0, 1, true, trigger);
      LabeledDataset backdoor = build_backdoor_dataset(train, plan);
      TrainConfig cfg = train_config;
      cfg.seed = 1;
      backdoored = train_classifier(backdoor, spec, cfg);
    }
    return *backdoored;
  }
};

double mean_metric(const SweepResult& sweep, double rate, bool want_asr) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& p : sweep.points) {
    if (std::abs(p.axis_value - rate) > 1e-12) continue;
    sum += want_asr ? p.report.attack_success_rate : p.report.benign_accuracy;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double spectral_rel_change(const Spectrogram& a, const Spectrogram& b,
                           size_t bin_lo, size_t bin_hi) {
  double num = 0.0, den = 0.0;
  for (size_t bin = bin_lo; bin < std::min(bin_hi, a.bins()); ++bin) {
    for (size_t f = 0; f < a.frames(); ++f) {
      double d = b.magnitudes(bin, f) - a.magnitudes(bin, f);
      num += d * d;
      den += a.magnitudes(bin, f) * a.magnitudes(bin, f);
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// ---- criterion 1: construction properties over randomized instances --------

void criterion_construction(DeskScale&, Outcome& out) {
  DetRng rng(0xACCE97);
  int bad_trials = 0;
  std::string first_failure;

  for (int trial = 0; trial < 200; ++trial) {
    int classes = 2 + static_cast<int>(rng.uniform_index(5));
    int per_class = 3 + static_cast<int>(rng.uniform_index(10));
    LabeledDataset data =
        testutil::make_noise_dataset(classes, per_class, rng.next_u64());
    double rate = rng.uniform(0.005, 0.5);
    int target = static_cast<int>(rng.uniform_index(classes));
    bool exclude = rng.uniform_index(2) == 0;
    TriggerSpec trigger =
        (trial % 2 == 0)
            ? TriggerSpec::badnets(rng.uniform(0.4, 1.5))
            : TriggerSpec::surrogate({rng.uniform(0.6, 1.9), rng.uniform(0.3, 3.5),
                                      rng.uniform(0.3, 3.5)});
    uint64_t seed = rng.next_u64();

    const size_t N = data.size();
    size_t want = static_cast<size_t>(std::floor(rate * static_cast<double>(N)));
    if (want == 0) want = 1;  // rate > 0 must poison something

    auto blame = [&](const std::string& what) {
      ++bad_trials;
      if (first_failure.empty()) {
        first_failure = "trial " + std::to_string(trial) + ": " + what;
      }
    };

    PoisonPlan plan = select_poison_subset(data, rate, target, seed, exclude, trigger);
    if (plan.poison_count() != want) {
      blame("selected " + std::to_string(plan.poison_count()) + ", expected " +
            std::to_string(want));
      continue;
    }

    std::unordered_set<std::string> planned(plan.poison_ids.begin(),
                                            plan.poison_ids.end());
    if (planned.size() != plan.poison_ids.size()) {
      blame("duplicate ids in the plan");
      continue;
    }

    LabeledDataset backdoor = build_backdoor_dataset(data, plan);
    if (backdoor.size() != N) {
      blame("backdoor size changed");
      continue;
    }

    bool rows_ok = true;
    std::string row_problem;
    for (size_t i = 0; i < N && rows_ok; ++i) {
      const AudioSample& src = data.samples[i];
      const AudioSample& dst = backdoor.samples[i];
      if (dst.id != src.id) {
        rows_ok = false;
        row_problem = "row order changed";
      } else if (planned.count(src.id)) {
        if (dst.label != target) {
          rows_ok = false;
          row_problem = "poisoned row kept its label";
        } else if (dst.provenance != Provenance::poisoned || !dst.trigger_id ||
                   *dst.trigger_id != trigger.trigger_id()) {
          rows_ok = false;
          row_problem = "poisoned row lost its provenance";
        } else if (!dst.source_id || *dst.source_id != src.id) {
          rows_ok = false;
          row_problem = "poisoned row lost its lineage";
        } else if (dst.waveform == src.waveform) {
          rows_ok = false;
          row_problem = "poisoned waveform unchanged";
        } else if (exclude && src.label == target) {
          rows_ok = false;
          row_problem = "target-class sample selected despite exclusion";
        }
      } else if (dst.label != src.label || dst.provenance != Provenance::clean ||
                 dst.waveform != src.waveform) {
        rows_ok = false;
        row_problem = "clean row was modified";
      }
    }
    if (!rows_ok) {
      blame(row_problem);
      continue;
    }

    PoisonPlan half = select_poison_subset(data, rate / 2, target, seed, exclude, trigger);
    if (half.poison_count() > plan.poison_count() ||
        !std::equal(half.poison_ids.begin(), half.poison_ids.end(),
                    plan.poison_ids.begin())) {
      blame("half-rate subset is not a prefix");
      continue;
    }

    PoisonPlan again = select_poison_subset(data, rate, target, seed, exclude, trigger);
    if (again.poison_ids != plan.poison_ids) {
      blame("re-selection differed");
      continue;
    }
  }

  out.note("200 randomized datasets, alternating badnets/surrogate triggers");
  out.expect(bad_trials == 0,
             "size, relabeling, provenance, eligibility, nesting and "
             "determinism hold on every instance");
  if (bad_trials > 0) {
    out.note(std::to_string(bad_trials) + " failing trials; first: " + first_failure);
  }
}

// ---- criterion 2: desk-scale attack ----------------------------------------

void criterion_desk_attack(DeskScale& desk, Outcome& out) {
  desk.ensure_corpus();
  SweepResult sweep =
      run_poisoning_rate_sweep(desk.train, desk.test, {0.0, 0.05}, desk.setup(),
                               desk.seeds, {}, desk.caching_hooks());
  double asr = mean_metric(sweep, 0.05, true);
  double ba = mean_metric(sweep, 0.05, false);
  double ba_clean = mean_metric(sweep, 0.0, false);
  out.note("rate 0.05 over seeds {1,2,3}: mean ASR " + fmt(asr) + ", mean BA " +
           fmt(ba));
  out.note("clean baseline BA " + fmt(ba_clean));
  out.expect(asr >= 0.90, "mean ASR >= 0.90");
  out.expect(ba >= ba_clean - 0.05, "mean BA >= clean baseline - 0.05");
}

// ---- criterion 3: dose response over the poisoning rate --------------------

void criterion_rate_sweep(DeskScale& desk, Outcome& out) {
  desk.ensure_corpus();
  std::vector<double> rates = {0.0, 0.01, 0.02, 0.05, 0.1};
  SweepResult sweep = run_poisoning_rate_sweep(desk.train, desk.test, rates,
                                               desk.setup(), desk.seeds, {},
                                               desk.caching_hooks());
  for (double rate : rates) {
    out.note("rate " + fmt(rate, 2) + ": mean ASR " + fmt(mean_metric(sweep, rate, true)) +
             ", mean BA " + fmt(mean_metric(sweep, rate, false)));
  }
  double asr0 = mean_metric(sweep, 0.0, true);
  double asr10 = mean_metric(sweep, 0.1, true);
  out.expect(asr0 <= 0.25, "unpoisoned ASR stays at chance level (<= 0.25)");
  out.expect(asr10 >= asr0 + 0.5, "ASR at rate 0.10 >= unpoisoned ASR + 0.5");
}

// ---- criterion 4: scenario matrix ------------------------------------------

void criterion_scenarios(DeskScale& desk, Outcome& out) {
  const TrainedModel& model = desk.backdoored_model();
  LabeledDataset probe_set = desk.test;
  probe_set.role = DatasetRole::probe;

  std::vector<TriggerSpec> probes = {desk.trigger,
                                     TriggerSpec::surrogate({0.8, 1.5, 0.6}),
                                     TriggerSpec::none()};
  std::vector<ScenarioCell> cells = scenario_matrix(model, probes, probe_set, 0);

  out.note("training trigger ASR " + fmt(cells[0].asr) + " over " +
           std::to_string(cells[0].n) + " probes");
  out.note("different-parameter trigger ASR " + fmt(cells[1].asr));
  out.note("clean speech ASR " + fmt(cells[2].asr));
  out.expect(cells[0].asr >= 0.9, "training trigger activates (>= 0.9)");
  out.expect(cells[1].asr <= 0.3,
             "materially different trigger stays quiet (<= 0.3)");
  out.expect(cells[2].asr <= 0.05, "clean speech stays quiet (<= 0.05)");
}

// ---- criterion 5: fine-tuning defense curve ---------------------------------

void criterion_defense(DeskScale& desk, Outcome& out) {
  const TrainedModel& model = desk.backdoored_model();
  auto [finetune, rest] = split_dataset(desk.train, 0.1, mix_seed(42, 0xf17e));
  (void)rest;
  TrainConfig ft_cfg = default_finetune_config(desk.train_config);  // 20 epochs
  ft_cfg.seed = mix_seed(1, 0xdefe);

  DefenseCurve curve =
      fine_tune_defense(model, finetune, ft_cfg, desk.test, desk.trigger, 0);
  EvalReport direct = evaluate_model(model, desk.test, desk.trigger, 0);

  out.note("epoch 0: ASR " + fmt(curve.asr.front()) + ", BA " + fmt(curve.ba.front()));
  out.note("epoch " + std::to_string(curve.epochs.back()) + ": ASR " +
           fmt(curve.asr.back()) + ", BA " + fmt(curve.ba.back()));
  out.expect(curve.epochs.size() == 21, "curve covers epochs 0..20");
  out.expect(curve.asr.front() == direct.attack_success_rate,
             "epoch-0 ASR equals the direct evaluation bit for bit");
  out.expect(curve.ba.front() == direct.benign_accuracy,
             "epoch-0 BA equals the direct evaluation bit for bit");

  DefenseCurve rerun =
      fine_tune_defense(model, finetune, ft_cfg, desk.test, desk.trigger, 0);
  out.expect(rerun.asr == curve.asr && rerun.ba == curve.ba &&
                 rerun.epochs == curve.epochs,
             "the curve is bit-identical across runs");
}

// ---- criterion 6: numeric verification --------------------------------------

void criterion_numerics(DeskScale&, Outcome& out) {
  // Gradients against central finite differences on a small probe network.
  ModelSpec spec;
  spec.n_mels = 8;
  spec.num_classes = 2;
  spec.conv1_channels = 2;
  spec.conv2_channels = 3;
  spec.hidden_units = 10;
  auto net = make_network(spec);
  out.note("gradient probe network: " + std::to_string(net->param_count()) +
           " parameters");
  out.expect(net->param_count() <= 500, "probe network has <= 500 parameters");

  DetRng rng(4242);
  std::vector<double> params;
  net->init_params(params, rng);
  Matrix2D features(8, 12);
  for (size_t r = 0; r < features.rows(); ++r) {
    for (size_t c = 0; c < features.cols(); ++c) {
      features(r, c) = rng.uniform(-8.0, 2.0);
    }
  }

  double worst_rel = 0.0;
  const double h = 1e-5;
  for (int label : {0, 1}) {
    std::vector<double> grad(params.size(), 0.0);
    net->loss_and_gradient(features, label, params, grad);
    std::vector<double> bumped = params;
    for (size_t i = 0; i < params.size(); ++i) {
      std::vector<double> scratch(params.size(), 0.0);
      bumped[i] = params[i] + h;
      double up = net->loss_and_gradient(features, label, bumped, scratch);
      bumped[i] = params[i] - h;
      double down = net->loss_and_gradient(features, label, bumped, scratch);
      bumped[i] = params[i];
      double numeric = (up - down) / (2.0 * h);
      double rel = std::abs(grad[i] - numeric) /
                   std::max(1e-6, std::abs(grad[i]) + std::abs(numeric));
      worst_rel = std::max(worst_rel, rel);
    }
  }
  out.note("worst relative gradient deviation: " + fmt(worst_rel, 9));
  out.expect(worst_rel <= 1e-3, "analytic gradients within 1e-3 of finite differences");

  // stft -> istft reconstruction.
  double worst_rt = 0.0;
  for (size_t len : {size_t(5000), size_t(4963)}) {
    std::vector<float> x = testutil::make_noise(len, 0x57f7 + len, 0.4);
    std::vector<float> back = istft(stft(x, 512, 128, kCanonicalSampleRate));
    if (back.size() != x.size()) {
      worst_rt = 1.0;
      break;
    }
    for (size_t i = 0; i < x.size(); ++i) {
      worst_rt = std::max(worst_rt,
                          std::abs(static_cast<double>(x[i]) - static_cast<double>(back[i])));
    }
  }
  out.note("worst stft/istft reconstruction error: " + fmt(worst_rt, 9));
  out.expect(worst_rt <= 1e-4, "stft -> istft reconstructs within 1e-4");

  // BadNets pattern: placed exactly, leak-free, idempotent.
  std::vector<float> input = testutil::make_noise(8000, 0xb0ad, 0.15);
  std::vector<float> tone = testutil::make_tone(700.0, 0.5, kCanonicalSampleRate, 0.2);
  for (size_t i = 0; i < input.size() && i < tone.size(); ++i) input[i] += tone[i];
  clip_amplitude(input);

  Spectrogram before = stft(input, 512, 128, kCanonicalSampleRate);
  double amplitude = 1.5 * before.magnitudes(20, before.frames() / 2);
  std::vector<float> once = badnets_trigger(input, amplitude);
  std::vector<float> twice = badnets_trigger(once, amplitude);
  Spectrogram after = stft(once, 512, 128, kCanonicalSampleRate);
  Spectrogram after2 = stft(twice, 512, 128, kCanonicalSampleRate);

  // Oracle placement check: correlating the output against each comb line
  // recovers the requested amplitude in magnitude units.
  size_t n = once.size();
  const double pi = 3.14159265358979323846;
  double worst_line = 0.0;
  for (size_t k : {1u, 3u, 5u, 7u}) {
    size_t m = (2 * k * (n - 1) + 256) / 512;
    double num = 0.0, den = 0.0;
    for (size_t t = 0; t < n; ++t) {
      double b = std::cos(pi * static_cast<double>(m) * t / (n - 1));
      num += b * once[t];
      den += b * b;
    }
    worst_line =
        std::max(worst_line, std::abs((num / den) * 128.0 - amplitude) / amplitude);
  }
  double leak = spectral_rel_change(before, after, kBadnetsBins, before.bins());
  double drift = spectral_rel_change(after, after2, 0, after.bins());
  out.note("pattern-line deviation " + fmt(worst_line, 7) + ", non-target leak " +
           fmt(leak, 7) + ", re-application drift " + fmt(drift, 7));
  out.expect(worst_line <= 1e-3, "pattern lines sit at the requested amplitude");
  out.expect(leak <= 1e-3, "bins outside the pattern move by <= 1e-3 relative");
  out.expect(drift <= 1e-3, "re-applying the trigger is a spectral no-op");
}

// ---- criterion 7: metric oracle equivalence ---------------------------------

void criterion_metric_oracle(DeskScale&, Outcome& out) {
  DetRng rng(777);
  int exact = 0;
  int tables = 0;
  while (tables < 50) {
    int classes = 2 + static_cast<int>(rng.uniform_index(5));
    int target = static_cast<int>(rng.uniform_index(classes));
    size_t n_benign = 4 + rng.uniform_index(40);
    size_t n_attack = 4 + rng.uniform_index(40);

    std::vector<PredictionRecord> records;
    for (size_t i = 0; i < n_benign; ++i) {
      records.push_back({"b" + std::to_string(i),
                         static_cast<int>(rng.uniform_index(classes)),
                         static_cast<int>(rng.uniform_index(classes)), false});
    }
    for (size_t i = 0; i < n_attack; ++i) {
      records.push_back({"a" + std::to_string(i),
                         static_cast<int>(rng.uniform_index(classes)),
                         static_cast<int>(rng.uniform_index(classes)), true});
    }

    size_t benign_total = 0, benign_correct = 0, attack_total = 0, attack_hits = 0;
    for (const auto& r : records) {
      if (!r.triggered) {
        ++benign_total;
        if (r.prediction == r.ground_truth) ++benign_correct;
      } else if (r.ground_truth != target) {
        ++attack_total;
        if (r.prediction == target) ++attack_hits;
      }
    }
    if (attack_total == 0) continue;  // degenerate table, draw another
    ++tables;

    double want_ba =
        static_cast<double>(benign_correct) / static_cast<double>(benign_total);
    double want_asr =
        static_cast<double>(attack_hits) / static_cast<double>(attack_total);
    if (benign_accuracy_from_records(records) == want_ba &&
        attack_success_rate_from_records(records, target) == want_asr) {
      ++exact;
    }
  }
  out.note(std::to_string(exact) + "/50 tables match the brute-force recount exactly");
  out.expect(exact == 50, "BA and ASR equal independent recounts, bit for bit");
}

// ---- criterion 8: voice-conversion adapter contract -------------------------

void criterion_vc_contract(DeskScale&, Outcome& out) {
  testutil::TempDir tmp;
  std::string source = tmp.file("source.wav");
  write_wav_float32(source, testutil::make_tone(320.0, 0.2), kCanonicalSampleRate);
  std::string target = tmp.file("target.wav");
  write_wav_float32(target, testutil::make_tone(180.0, 0.2), kCanonicalSampleRate);
  std::vector<float> foreign_wave = testutil::make_tone(260.0, 0.2, 22050);
  std::string foreign = tmp.file("foreign.wav");
  write_wav_float32(foreign, foreign_wave, 22050);

  int workdirs = 0;
  auto config = [&](const std::string& script, double timeout) {
    VCAdapterConfig c;
    c.command = script + " {source} {target} {output}";
    c.workdir = tmp.file("work-" + std::to_string(++workdirs));
    c.timeout_s = timeout;
    return c;
  };

  std::string copy_sh = tmp.file("copy.sh");
  testutil::write_script(copy_sh, "cp \"$1\" \"$3\"\n");
  VCAdapterConfig copy_cfg = config(copy_sh, 10.0);
  {
    VCAdapter adapter(copy_cfg);
    std::vector<float> got = adapter.convert_file(source, target);
    int sr = 0;
    std::vector<float> want = read_wav(source, &sr);
    out.expect(got == want, "copy-through conversion returns the source audio");
    adapter.convert_file(source, target);
    out.expect(adapter.invocation_count() == 1,
               "the repeat conversion is served from cache");
  }
  {
    VCAdapter fresh(copy_cfg);
    fresh.convert_file(source, target);
    out.expect(fresh.invocation_count() == 0,
               "a fresh adapter reuses the on-disk cache");
  }

  std::string resample_sh = tmp.file("resample.sh");
  testutil::write_script(resample_sh, "cp \"" + foreign + "\" \"$3\"\n");
  VCAdapter resampling(config(resample_sh, 10.0));
  std::vector<float> converted = resampling.convert_file(source, target);
  size_t want_len =
      static_cast<size_t>(std::lround(static_cast<double>(foreign_wave.size()) *
                                      16000.0 / 22050.0));
  out.expect(converted.size() == want_len,
             "22050 Hz converter output is resampled to the canonical rate");

  std::string fail_sh = tmp.file("fail.sh");
  testutil::write_script(fail_sh, "echo conversion exploded >&2\nexit 3\n");
  bool failed_right = false;
  std::string failure_msg;
  try {
    VCAdapter broken(config(fail_sh, 10.0));
    broken.convert_file(source, target);
  } catch (const Error& e) {
    failure_msg = e.what();
    failed_right = e.code() == ErrorCode::trigger &&
                   failure_msg.find("3") != std::string::npos &&
                   failure_msg.find("conversion exploded") != std::string::npos;
  }
  out.expect(failed_right,
             "a nonzero exit surfaces as a trigger error carrying the code and output");

  std::string slow_sh = tmp.file("slow.sh");
  testutil::write_script(slow_sh, "sleep 30\n");
  bool timed_out_right = false;
  try {
    VCAdapter stuck(config(slow_sh, 0.4));
    stuck.convert_file(source, target);
  } catch (const Error& e) {
    timed_out_right = e.code() == ErrorCode::timeout;
  }
  out.expect(timed_out_right, "a stalled converter hits the deadline as a timeout");
}

struct CriterionDef {
  int number;
  const char* name;
  double budget_s;
  std::function<void(DeskScale&, Outcome&)> fn;
};

}  // namespace

int main() {
  DeskScale desk;
  std::vector<CriterionDef> criteria = {
      {1, "backdoor construction properties", 60, criterion_construction},
      {2, "desk-scale attack reaches the headline metrics", 600, criterion_desk_attack},
      {3, "poisoning-rate dose response", 2400, criterion_rate_sweep},
      {4, "trigger scenario matrix", 300, criterion_scenarios},
      {5, "fine-tuning defense curve", 600, criterion_defense},
      {6, "numeric verification", 120, criterion_numerics},
      {7, "metric oracle equivalence", 60, criterion_metric_oracle},
      {8, "voice-conversion adapter contract", 120, criterion_vc_contract},
  };

  int failures = 0;
  for (auto& criterion : criteria) {
    Outcome out;
    auto started = std::chrono::steady_clock::now();
    try {
      criterion.fn(desk, out);
    } catch (const std::exception& e) {
      out.expect(false, std::string("unexpected error: ") + e.what());
    }
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    bool in_budget = elapsed <= criterion.budget_s;
    bool pass = out.ok && in_budget;
    std::printf("[%s] criterion %d: %s (%.1fs, budget %.0fs)\n",
                pass ? "PASS" : "FAIL", criterion.number, criterion.name, elapsed,
                criterion.budget_s);
    for (const auto& line : out.notes) std::printf("    %s\n", line.c_str());
    if (!in_budget) {
      std::printf("    FAIL exceeded the %.0fs budget\n", criterion.budget_s);
    }
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  std::printf("%d/8 criteria passed\n", 8 - failures);
  return failures;
}
