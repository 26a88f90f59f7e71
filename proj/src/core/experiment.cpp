#include "core/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_set>

#include "core/defense.hpp"
#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/hash.hpp"
#include "core/json_io.hpp"
#include "core/poison.hpp"
#include "core/render.hpp"

namespace fs = std::filesystem;

namespace sblab {

std::string ExperimentConfig::resolve(const std::string& path) const {
  if (path.empty() || base_dir.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

namespace {

nlohmann::json corpus_to_json(const CorpusConfig& c) {
  return {{"num_classes", c.num_classes},
          {"samples_per_class", c.samples_per_class},
          {"num_speakers", c.num_speakers},
          {"seconds", c.seconds},
          {"seed", c.seed}};
}

CorpusConfig corpus_from_json(const nlohmann::json& j) {
  CorpusConfig c;
  c.num_classes = j.value("num_classes", c.num_classes);
  c.samples_per_class = j.value("samples_per_class", c.samples_per_class);
  c.num_speakers = j.value("num_speakers", c.num_speakers);
  c.seconds = j.value("seconds", c.seconds);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json vc_to_json(const VCAdapterConfig& v) {
  return {{"command", v.command},
          {"workdir", v.workdir},
          {"timeout_s", v.timeout_s},
          {"expected_sample_rate", v.expected_sample_rate},
          {"max_parallel", v.max_parallel},
          {"adapter_version", v.adapter_version}};
}

VCAdapterConfig vc_from_json(const nlohmann::json& j) {
  VCAdapterConfig v;
  v.command = j.at("command").get<std::string>();
  v.workdir = j.value("workdir", v.workdir);
  v.timeout_s = j.value("timeout_s", v.timeout_s);
  v.expected_sample_rate = j.value("expected_sample_rate", v.expected_sample_rate);
  v.max_parallel = j.value("max_parallel", v.max_parallel);
  v.adapter_version = j.value("adapter_version", v.adapter_version);
  return v;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("experiment config is not valid JSON: ") + e.what());
  }

  ExperimentConfig c;
  try {
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != 1) {
      fail(ErrorCode::schema,
           "unsupported config schema_version " + std::to_string(c.schema_version));
    }
    c.dataset_manifest = j.at("dataset_manifest").get<std::string>();
    c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("split")) {
      c.train_fraction = j["split"].value("train_fraction", c.train_fraction);
      c.split_seed = j["split"].value("seed", c.split_seed);
    }
    if (j.contains("poison")) {
      const auto& p = j["poison"];
      c.poisoning_rate = p.value("rate", c.poisoning_rate);
      c.target_label = p.value("target_label", c.target_label);
      c.exclude_target_class = p.value("exclude_target_class", c.exclude_target_class);
      c.poison_seed = p.value("seed", c.poison_seed);
      if (p.contains("trigger")) c.trigger = TriggerSpec::from_json(p["trigger"].dump());
    }
    if (j.contains("model")) c.model = j["model"].get<ModelSpec>();
    if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.eval_seeds = e.value("seeds", c.eval_seeds);
      c.sweep_rates = e.value("sweep_rates", c.sweep_rates);
      c.sweep_labels = e.value("sweep_labels", c.sweep_labels);
      c.sweep_speech = e.value("sweep_speech", c.sweep_speech);
      c.defense_epochs = e.value("defense_epochs", c.defense_epochs);
      c.finetune_fraction = e.value("finetune_fraction", c.finetune_fraction);
      c.scenario_probe_count = e.value("scenario_probe_count", c.scenario_probe_count);
    }
    if (j.contains("corpus")) c.corpus = corpus_from_json(j["corpus"]);
    if (j.contains("vc")) c.vc = vc_from_json(j["vc"]);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, std::string("experiment config: ") + e.what());
  }

  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    fail(ErrorCode::invalid_argument, "split train_fraction must be in (0, 1)");
  }
  if (!(c.finetune_fraction > 0.0 && c.finetune_fraction < 1.0)) {
    fail(ErrorCode::invalid_argument, "finetune_fraction must be in (0, 1)");
  }
  if (c.defense_epochs < 0) fail(ErrorCode::invalid_argument, "defense_epochs must be >= 0");
  if (c.eval_seeds.empty()) fail(ErrorCode::invalid_argument, "eval.seeds must be non-empty");
  c.trigger.validate();
  c.model.validate();
  c.train.validate();
  c.corpus.validate();
  if (c.vc) c.vc->validate();
  return c;
}

std::string serialize_experiment_config(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["dataset_manifest"] = c.dataset_manifest;
  j["output_dir"] = c.output_dir;
  j["split"] = {{"train_fraction", c.train_fraction}, {"seed", c.split_seed}};
  j["poison"] = {{"rate", c.poisoning_rate},
                 {"target_label", c.target_label},
                 {"exclude_target_class", c.exclude_target_class},
                 {"seed", c.poison_seed},
                 {"trigger", nlohmann::json::parse(c.trigger.canonical_json())}};
  j["model"] = c.model;
  j["train"] = c.train;
  j["eval"] = {{"seeds", c.eval_seeds},
               {"sweep_rates", c.sweep_rates},
               {"sweep_labels", c.sweep_labels},
               {"sweep_speech", c.sweep_speech},
               {"defense_epochs", c.defense_epochs},
               {"finetune_fraction", c.finetune_fraction},
               {"scenario_probe_count", c.scenario_probe_count}};
  j["corpus"] = corpus_to_json(c.corpus);
  if (c.vc) j["vc"] = vc_to_json(*c.vc);
  return j.dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ExperimentConfig c = parse_experiment_config(text);
  c.base_dir = fs::absolute(fs::path(path)).parent_path().string();

  const char* vc_cmd = std::getenv("SBLAB_VC_COMMAND");
  if (vc_cmd != nullptr && vc_cmd[0] != '\0') {
    if (!c.vc) {
      VCAdapterConfig v;
      v.workdir = c.output_dir + "/vc";
      c.vc = v;
    }
    c.vc->command = vc_cmd;
    c.vc->validate();
  }
  return c;
}

std::string experiment_config_digest(const ExperimentConfig& config) {
  return hex_digest128(serialize_experiment_config(config));
}

void validate_config_paths(const ExperimentConfig& config, bool need_manifest) {
  if (need_manifest && !fs::exists(config.manifest_path())) {
    fail(ErrorCode::io, "dataset manifest '" + config.manifest_path() +
                            "' does not exist (mkcorpus builds the bundled one)");
  }
  for (const auto& speech : config.sweep_speech) {
    if (!fs::exists(config.resolve(speech))) {
      fail(ErrorCode::io, "sweep speech file '" + config.resolve(speech) + "' does not exist");
    }
  }
  if (config.trigger.kind == TriggerKind::voice_conversion) {
    const auto& target = config.trigger.target_speech_path;
    if (target && !fs::exists(config.resolve(*target))) {
      fail(ErrorCode::io, "trigger target speech '" + config.resolve(*target) + "' does not exist");
    }
  }
}

Stage stage_from_name(const std::string& name) {
  static const std::map<std::string, Stage> kStages = {
      {"mkcorpus", Stage::mkcorpus}, {"poison", Stage::poison},
      {"train", Stage::train},       {"eval", Stage::eval},
      {"sweep", Stage::sweep},       {"defend", Stage::defend},
      {"scenarios", Stage::scenarios}, {"verify", Stage::verify}};
  auto it = kStages.find(name);
  if (it == kStages.end()) fail(ErrorCode::invalid_argument, "unknown stage '" + name + "'");
  return it->second;
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::mkcorpus: return "mkcorpus";
    case Stage::poison: return "poison";
    case Stage::train: return "train";
    case Stage::eval: return "eval";
    case Stage::sweep: return "sweep";
    case Stage::defend: return "defend";
    case Stage::scenarios: return "scenarios";
    case Stage::verify: return "verify";
  }
  return "?";
}

DirLock::DirLock(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create directory '" + dir + "'");
  path_ = (fs::path(dir) / ".lock").string();
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    std::string msg = "output directory is locked by '" + path_ +
                      "' (another run is active, or remove the stale lock)";
    path_.clear();
    fail(ErrorCode::state, msg);
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  ssize_t n = ::write(fd, pid.data(), pid.size());
  (void)n;
  ::close(fd);
}

DirLock::~DirLock() {
  if (!path_.empty()) ::unlink(path_.c_str());
}

namespace {

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorCode::io, "cannot write '" + tmp + "'");
    out << content;
    if (!out) fail(ErrorCode::io, "short write on '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "cannot move '" + tmp + "' into place");
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) fail(ErrorCode::io, "cannot append to '" + path + "'");
  out << line << "\n";
}

std::string ledger_path(const std::string& out_dir) {
  return (fs::path(out_dir) / "run.json").string();
}

nlohmann::json load_ledger(const std::string& out_dir) {
  std::ifstream in(ledger_path(out_dir), std::ios::binary);
  if (!in) return nlohmann::json::object();
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json::object();  // corrupt ledger: start over
  }
  if (!j.is_object()) return nlohmann::json::object();
  return j;
}

// Records artifact digests keyed by path relative to the output dir. Each
// entry remembers the config digest it was produced under so `verify` can
// flag stale outputs after a config edit.
void record_artifacts(const std::string& out_dir, const std::string& config_digest,
                      const char* stage, const std::vector<std::string>& paths) {
  nlohmann::json ledger = load_ledger(out_dir);
  ledger["config_digest"] = config_digest;
  if (!ledger.contains("artifacts") || !ledger["artifacts"].is_object()) {
    ledger["artifacts"] = nlohmann::json::object();
  }
  for (const auto& path : paths) {
    std::string rel = fs::relative(path, out_dir).string();
    ledger["artifacts"][rel] = {{"digest", file_digest(path)},
                                {"stage", stage},
                                {"config_digest", config_digest}};
  }
  write_text_atomic(ledger_path(out_dir), ledger.dump(2) + "\n");
}

void require_artifact(const std::string& path, const char* producing_stage) {
  if (!fs::exists(path)) {
    fail(ErrorCode::state, "missing artifact '" + path + "'; run `" +
                               std::string(producing_stage) + "` first");
  }
}

std::string sanitize_filename(const std::string& id) {
  std::string out;
  bool changed = false;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
    changed |= !ok;
  }
  if (changed) out += "-" + to_hex(fnv1a64(id));
  return out;
}

struct TriggerRuntime {
  std::unique_ptr<VCAdapter> adapter;
  TriggerContext context() const {
    TriggerContext ctx;
    ctx.vc_adapter = adapter.get();
    return ctx;
  }
};

TriggerRuntime make_trigger_runtime(const ExperimentConfig& config) {
  TriggerRuntime rt;
  if (config.trigger.kind != TriggerKind::voice_conversion) return rt;
  if (!config.vc) {
    fail(ErrorCode::invalid_argument,
         "voice_conversion trigger needs a vc adapter (config `vc` block or SBLAB_VC_COMMAND)");
  }
  VCAdapterConfig a = *config.vc;
  a.workdir = config.resolve(a.workdir.empty() ? config.output_dir + "/vc" : a.workdir);
  std::error_code ec;
  fs::create_directories(a.workdir, ec);
  rt.adapter = std::make_unique<VCAdapter>(a);
  return rt;
}

struct Splits {
  LabeledDataset train;
  LabeledDataset test;
};

Splits load_splits(const ExperimentConfig& config) {
  LabeledDataset corpus = load_dataset(config.manifest_path());
  auto [train, test] = split_dataset(corpus, config.train_fraction, config.split_seed);
  return {std::move(train), std::move(test)};
}

uint64_t effective_poison_seed(const ExperimentConfig& config, const StageOptions& opts) {
  return opts.seed ? *opts.seed : config.poison_seed;
}

TrainConfig effective_train_config(const ExperimentConfig& config, const StageOptions& opts) {
  TrainConfig cfg = config.train;
  if (opts.seed) cfg.seed = *opts.seed;
  return cfg;
}

PoisonPlan make_plan(const ExperimentConfig& config, const StageOptions& opts,
                     const LabeledDataset& train_split) {
  return select_poison_subset(train_split, config.poisoning_rate, config.target_label,
                              effective_poison_seed(config, opts),
                              config.exclude_target_class, config.trigger);
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& rec : r.per_sample) {
    per.push_back({{"id", rec.id},
                   {"ground_truth", rec.ground_truth},
                   {"prediction", rec.prediction},
                   {"triggered", rec.triggered}});
  }
  return {{"benign_accuracy", r.benign_accuracy},
          {"attack_success_rate", r.attack_success_rate},
          {"target_label", r.target_label},
          {"trigger_id", r.trigger_id},
          {"n_eval_benign", r.n_eval_benign},
          {"n_eval_attack", r.n_eval_attack},
          {"per_sample", std::move(per)}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.benign_accuracy = j.at("benign_accuracy").get<double>();
  r.attack_success_rate = j.at("attack_success_rate").get<double>();
  r.target_label = j.at("target_label").get<int>();
  r.trigger_id = j.at("trigger_id").get<std::string>();
  r.n_eval_benign = j.at("n_eval_benign").get<size_t>();
  r.n_eval_attack = j.at("n_eval_attack").get<size_t>();
  for (const auto& rec : j.at("per_sample")) {
    r.per_sample.push_back({rec.at("id").get<std::string>(),
                            rec.at("ground_truth").get<int>(),
                            rec.at("prediction").get<int>(),
                            rec.at("triggered").get<bool>()});
  }
  return r;
}

std::string fmt_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

StageResult run_mkcorpus(const ExperimentConfig& config, const StageOptions& opts) {
  StageResult result;
  fs::path manifest(config.manifest_path());
  if (opts.dry_run) {
    result.summary = "dry run: would synthesize " + std::to_string(config.corpus.num_classes) +
                     " classes x " + std::to_string(config.corpus.samples_per_class) +
                     " samples into " + manifest.parent_path().string();
    return result;
  }
  if (fs::exists(manifest)) {
    result.summary = "corpus already present at " + manifest.string();
    return result;
  }
  LabeledDataset corpus = make_corpus(config.corpus);
  DirLock lock(manifest.parent_path().string());
  std::string written =
      write_corpus(corpus, manifest.parent_path().string(), manifest.filename().string());
  result.summary = "synthesized " + std::to_string(corpus.samples.size()) + " samples (" +
                   std::to_string(corpus.num_classes) + " classes) -> " + written;
  result.artifacts.push_back(written);
  return result;
}

StageResult run_poison(const ExperimentConfig& config, const StageOptions& opts) {
  validate_config_paths(config);
  Splits splits = load_splits(config);
  PoisonPlan plan = make_plan(config, opts, splits.train);
  std::string digest = experiment_config_digest(config);

  StageResult result;
  std::string label_name = config.target_label < static_cast<int>(splits.train.label_names.size())
                               ? splits.train.label_names[static_cast<size_t>(config.target_label)]
                               : std::to_string(config.target_label);
  result.summary = "train split N=" + std::to_string(splits.train.size()) +
                   "\npoison n=" + std::to_string(plan.poison_count()) +
                   " (rate=" + fmt_ratio(config.poisoning_rate) + ")" +
                   "\ntarget label y_t=" + std::to_string(config.target_label) + " (" +
                   label_name + ")" + "\ntrigger " + plan.trigger.trigger_id();
  if (opts.dry_run) {
    result.summary = "dry run\n" + result.summary;
    return result;
  }

  DirLock lock(config.out_dir());
  TriggerRuntime rt = make_trigger_runtime(config);
  LabeledDataset backdoor = build_backdoor_dataset(splits.train, plan, rt.context(), opts.jobs);

  fs::path out_root(config.out_dir());
  fs::path bd_dir = out_root / "backdoor";
  fs::path audio_dir = bd_dir / "audio";
  std::error_code ec;
  fs::create_directories(audio_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create '" + audio_dir.string() + "'");

  std::vector<std::string> rel_paths;
  std::vector<std::string> artifacts;
  rel_paths.reserve(backdoor.samples.size());
  for (const auto& s : backdoor.samples) {
    std::string rel = "audio/" + sanitize_filename(s.id) + ".wav";
    std::string abs = (bd_dir / rel).string();
    write_wav_float32(abs, s.waveform, s.sample_rate);
    rel_paths.push_back(rel);
    artifacts.push_back(abs);
  }

  std::string bd_manifest = (bd_dir / "backdoor.csv").string();
  write_manifest(backdoor, bd_manifest, rel_paths, {"config_digest: " + digest});
  artifacts.push_back(bd_manifest);
  artifacts.push_back(vocab_path_for(bd_manifest));

  std::string poison_manifest = (out_root / "poison_manifest.json").string();
  write_poison_manifest(plan, backdoor, splits.train, poison_manifest, digest);
  artifacts.push_back(poison_manifest);

  record_artifacts(config.out_dir(), digest, "poison", artifacts);
  result.summary += "\nbackdoor dataset digest " + dataset_digest(backdoor);
  result.artifacts = std::move(artifacts);
  return result;
}

// The CSV round trip drops provenance, so it is restored from the poison
// manifest; the digest recorded at poison time must then match exactly.
LabeledDataset load_backdoor_dataset(const ExperimentConfig& config) {
  fs::path out_root(config.out_dir());
  std::string bd_manifest = (out_root / "backdoor" / "backdoor.csv").string();
  std::string pm_path = (out_root / "poison_manifest.json").string();
  require_artifact(bd_manifest, "poison");
  require_artifact(pm_path, "poison");

  LabeledDataset backdoor = load_dataset(bd_manifest);
  PoisonManifest pm = read_poison_manifest(pm_path, &backdoor);

  std::string trigger_id = pm.plan.trigger.trigger_id();
  std::unordered_set<std::string> poisoned(pm.plan.poison_ids.begin(),
                                           pm.plan.poison_ids.end());
  for (auto& s : backdoor.samples) {
    if (poisoned.count(s.id)) {
      s.provenance = Provenance::poisoned;
      s.trigger_id = trigger_id;
      s.source_id = s.id;
    }
  }
  backdoor.role = DatasetRole::backdoor_train;
  if (dataset_digest(backdoor) != pm.dataset_digest) {
    fail(ErrorCode::contract,
         "backdoor dataset on disk does not match its poison manifest digest");
  }
  return backdoor;
}

StageResult run_train(const ExperimentConfig& config, const StageOptions& opts) {
  validate_config_paths(config);
  DirLock lock(config.out_dir());
  LabeledDataset backdoor = load_backdoor_dataset(config);
  std::string digest = experiment_config_digest(config);
  std::string checkpoint = (fs::path(config.out_dir()) / "model.json").string();
  TrainConfig train_cfg = effective_train_config(config, opts);

  StageResult result;
  if (opts.dry_run) {
    result.summary = "dry run: would train " + config.model.architecture + " on " +
                     std::to_string(backdoor.size()) + " samples for " +
                     std::to_string(train_cfg.epochs) + " epochs";
    return result;
  }

  std::string current_digest = dataset_digest(backdoor);
  if (fs::exists(checkpoint)) {
    try {
      TrainedModel existing = load_model(checkpoint);
      nlohmann::json a = existing.spec, b = config.model;
      nlohmann::json ta = existing.config, tb = train_cfg;
      if (existing.dataset_digest == current_digest && a == b && ta == tb) {
        result.summary = "checkpoint up to date; skipping training";
        result.artifacts.push_back(checkpoint);
        return result;
      }
    } catch (const Error&) {
      // unreadable checkpoint: retrain over it
    }
  }

  TrainedModel model = train_classifier(backdoor, config.model, train_cfg);
  save_model(model, checkpoint, digest);
  record_artifacts(config.out_dir(), digest, "train", {checkpoint});

  const EpochStats& last = model.training_log.back();
  result.summary = "trained " + std::to_string(model.parameters.size()) + " parameters, " +
                   std::to_string(train_cfg.epochs) + " epochs" +
                   "\nfinal train loss " + fmt_ratio(last.loss) + ", accuracy " +
                   fmt_ratio(last.accuracy);
  result.artifacts.push_back(checkpoint);
  return result;
}

StageResult run_eval(const ExperimentConfig& config, const StageOptions& opts) {
  validate_config_paths(config);
  DirLock lock(config.out_dir());
  std::string checkpoint = (fs::path(config.out_dir()) / "model.json").string();
  require_artifact(checkpoint, "train");

  StageResult result;
  if (opts.dry_run) {
    result.summary = "dry run: would evaluate " + checkpoint;
    return result;
  }

  TrainedModel model = load_model(checkpoint);
  Splits splits = load_splits(config);
  TriggerRuntime rt = make_trigger_runtime(config);
  EvalReport report = evaluate_model(model, splits.test, config.trigger,
                                     config.target_label, rt.context());
  std::string digest = experiment_config_digest(config);

  nlohmann::json j = eval_report_to_json(report);
  j["config_digest"] = digest;
  std::string json_path = (fs::path(config.out_dir()) / "eval_report.json").string();
  write_text_atomic(json_path, j.dump(2) + "\n");

  std::string table = render_table(
      {"metric", "value"},
      {{"benign_accuracy", fmt_ratio(report.benign_accuracy)},
       {"attack_success_rate", fmt_ratio(report.attack_success_rate)},
       {"n_eval_benign", std::to_string(report.n_eval_benign)},
       {"n_eval_attack", std::to_string(report.n_eval_attack)},
       {"target_label", std::to_string(report.target_label)},
       {"trigger_id", report.trigger_id}});
  std::string txt_path = (fs::path(config.out_dir()) / "eval_report.txt").string();
  write_text_atomic(txt_path, "# config_digest: " + digest + "\n" + table);

  record_artifacts(config.out_dir(), digest, "eval", {json_path, txt_path});
  result.summary = "BA " + fmt_ratio(report.benign_accuracy) + ", ASR " +
                   fmt_ratio(report.attack_success_rate) + " on " +
                   std::to_string(splits.test.size()) + " test samples";
  result.artifacts = {json_path, txt_path};
  return result;
}

struct AxisStats {
  double value = 0.0;
  std::string label;
  double asr_mean = 0.0, asr_std = 0.0;
  double ba_mean = 0.0, ba_std = 0.0;
};

std::vector<AxisStats> collect_axis_stats(const SweepResult& sweep) {
  std::map<double, std::vector<const SweepPoint*>> grouped;
  for (const auto& p : sweep.points) grouped[p.axis_value].push_back(&p);
  std::vector<AxisStats> out;
  for (const auto& [value, points] : grouped) {
    AxisStats s;
    s.value = value;
    s.label = points.front()->axis_label;
    double asr_sum = 0.0, ba_sum = 0.0;
    for (const auto* p : points) {
      asr_sum += p->report.attack_success_rate;
      ba_sum += p->report.benign_accuracy;
    }
    double n = static_cast<double>(points.size());
    s.asr_mean = asr_sum / n;
    s.ba_mean = ba_sum / n;
    double asr_var = 0.0, ba_var = 0.0;
    for (const auto* p : points) {
      asr_var += std::pow(p->report.attack_success_rate - s.asr_mean, 2);
      ba_var += std::pow(p->report.benign_accuracy - s.ba_mean, 2);
    }
    s.asr_std = std::sqrt(asr_var / n);
    s.ba_std = std::sqrt(ba_var / n);
    out.push_back(std::move(s));
  }
  return out;
}

const char* axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::poisoning_rate: return "poisoning_rate";
    case SweepAxis::target_label: return "target_label";
    case SweepAxis::target_speech: return "target_speech";
  }
  return "?";
}

std::vector<std::string> write_sweep_artifacts(const ExperimentConfig& config,
                                               const std::string& digest,
                                               const std::string& stem,
                                               const SweepResult& sweep) {
  fs::path sweep_dir = fs::path(config.out_dir()) / "sweep";
  std::error_code ec;
  fs::create_directories(sweep_dir, ec);

  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : sweep.points) {
    points.push_back({{"axis_value", p.axis_value},
                      {"axis_label", p.axis_label},
                      {"seed", p.seed},
                      {"report", eval_report_to_json(p.report)}});
  }
  nlohmann::json j = {{"config_digest", digest},
                      {"axis", axis_name(sweep.axis)},
                      {"seeds", sweep.seeds},
                      {"points", std::move(points)}};
  std::string json_path = (sweep_dir / (stem + ".json")).string();
  write_text_atomic(json_path, j.dump(2) + "\n");

  std::vector<AxisStats> stats = collect_axis_stats(sweep);
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : stats) {
    rows.push_back({s.label, fmt_ratio(s.asr_mean), fmt_ratio(s.asr_std),
                    fmt_ratio(s.ba_mean), fmt_ratio(s.ba_std)});
  }
  std::string table = render_table({axis_name(sweep.axis), "asr_mean", "asr_std",
                                    "ba_mean", "ba_std"},
                                   rows);
  std::string txt_path = (sweep_dir / (stem + ".txt")).string();
  write_text_atomic(txt_path, "# config_digest: " + digest + "\n" + table);

  ChartSeries asr{"ASR", {}, {}}, ba{"BA", {}, {}};
  for (const auto& s : stats) {
    asr.x.push_back(s.value);
    asr.y.push_back(s.asr_mean);
    ba.x.push_back(s.value);
    ba.y.push_back(s.ba_mean);
  }
  std::string svg_path = (sweep_dir / (stem + ".svg")).string();
  write_line_chart(svg_path, stem, axis_name(sweep.axis), "ratio", {asr, ba}, digest);

  return {json_path, txt_path, svg_path};
}

StageResult run_sweep_stage(const ExperimentConfig& config, const StageOptions& opts) {
  validate_config_paths(config);
  DirLock lock(config.out_dir());
  std::string digest = experiment_config_digest(config);

  StageResult result;
  if (opts.dry_run) {
    result.summary = "dry run: would sweep " + std::to_string(config.sweep_rates.size()) +
                     " rates x " + std::to_string(config.eval_seeds.size()) + " seeds";
    return result;
  }

  Splits splits = load_splits(config);
  TriggerRuntime rt = make_trigger_runtime(config);
  AttackSetup setup{config.poisoning_rate, config.target_label, config.exclude_target_class,
                    config.trigger, config.model, config.train};

  fs::path points_dir = fs::path(config.out_dir()) / "sweep" / "points";
  std::error_code ec;
  fs::create_directories(points_dir, ec);
  std::string log_path = (fs::path(config.out_dir()) / "sweep" / "sweep_log.txt").string();

  auto key_file = [&](const std::string& key) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '/', '_');
    return (points_dir / (name + ".json")).string();
  };
  SweepHooks hooks;
  hooks.lookup = [&](const std::string& key) -> std::optional<EvalReport> {
    std::ifstream in(key_file(key), std::ios::binary);
    if (!in) return std::nullopt;
    try {
      nlohmann::json j;
      in >> j;
      if (j.value("config_digest", "") != digest) return std::nullopt;
      append_line(log_path, "cached " + key);
      return eval_report_from_json(j.at("report"));
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable point: recompute
    }
  };
  hooks.store = [&](const std::string& key, const EvalReport& report) {
    nlohmann::json j = {{"config_digest", digest},
                        {"key", key},
                        {"report", eval_report_to_json(report)}};
    write_text_atomic(key_file(key), j.dump(2) + "\n");
    append_line(log_path, "trained " + key);
  };

  std::vector<std::string> artifacts;
  std::string summary;

  SweepResult rate_sweep =
      run_poisoning_rate_sweep(splits.train, splits.test, config.sweep_rates, setup,
                               config.eval_seeds, rt.context(), hooks);
  for (auto& p : write_sweep_artifacts(config, digest, "rate_sweep", rate_sweep)) {
    artifacts.push_back(std::move(p));
  }
  for (const auto& s : collect_axis_stats(rate_sweep)) {
    summary += "rate " + s.label + ": ASR " + fmt_ratio(s.asr_mean) + " +- " +
               fmt_ratio(s.asr_std) + ", BA " + fmt_ratio(s.ba_mean) + "\n";
  }

  if (!config.sweep_labels.empty()) {
    SweepResult label_sweep =
        run_target_label_sweep(splits.train, splits.test, config.sweep_labels, setup,
                               config.eval_seeds, rt.context(), hooks);
    for (auto& p : write_sweep_artifacts(config, digest, "label_sweep", label_sweep)) {
      artifacts.push_back(std::move(p));
    }
    for (const auto& s : collect_axis_stats(label_sweep)) {
      summary += "label " + s.label + ": ASR " + fmt_ratio(s.asr_mean) + ", BA " +
                 fmt_ratio(s.ba_mean) + "\n";
    }
  }

  if (!config.sweep_speech.empty()) {
    std::vector<std::string> speech;
    for (const auto& p : config.sweep_speech) speech.push_back(config.resolve(p));
    SweepResult speech_sweep = run_target_speech_sweep(
        splits.train, splits.test, speech, setup, config.eval_seeds, rt.context(), hooks);
    for (auto& p : write_sweep_artifacts(config, digest, "speech_sweep", speech_sweep)) {
      artifacts.push_back(std::move(p));
    }
    for (const auto& s : collect_axis_stats(speech_sweep)) {
      summary += "speech " + fs::path(s.label).filename().string() + ": ASR " +
                 fmt_ratio(s.asr_mean) + ", BA " + fmt_ratio(s.ba_mean) + "\n";
    }
  }

  record_artifacts(config.out_dir(), digest, "sweep", artifacts);
  while (!summary.empty() && summary.back() == '\n') summary.pop_back();
  result.summary = summary;
  result.artifacts = std::move(artifacts);
  return result;
}

StageResult run_defend(const ExperimentConfig& config, const StageOptions& opts) {
  validate_config_paths(config);
  DirLock lock(config.out_dir());
  std::string checkpoint = (fs::path(config.out_dir()) / "model.json").string();
  require_artifact(checkpoint, "train");

  StageResult result;
  if (opts.dry_run) {
    result.summary = "dry run: would fine-tune for " +
                     std::to_string(config.defense_epochs) + " epochs";
    return result;
  }

  TrainedModel model = load_model(checkpoint);
  Splits splits = load_splits(config);
  auto [ft_subset, rest] = split_dataset(splits.train, config.finetune_fraction,
                                         mix_seed(config.split_seed, 0xf17e));
  (void)rest;
  TriggerRuntime rt = make_trigger_runtime(config);

  TrainConfig ft_cfg = default_finetune_config(config.train);
  ft_cfg.epochs = config.defense_epochs;
  ft_cfg.seed = mix_seed(effective_train_config(config, opts).seed, 0xdefe);

  DefenseCurve curve = fine_tune_defense(model, ft_subset, ft_cfg, splits.test,
                                         config.trigger, config.target_label, rt.context());
  std::string digest = experiment_config_digest(config);

  nlohmann::json j = {{"config_digest", digest},
                      {"epochs", curve.epochs},
                      {"asr", curve.asr},
                      {"ba", curve.ba},
                      {"finetune_config", curve.finetune_config},
                      {"clean_subset_digest", curve.clean_subset_digest}};
  std::string json_path = (fs::path(config.out_dir()) / "defense_curve.json").string();
  write_text_atomic(json_path, j.dump(2) + "\n");

  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < curve.epochs.size(); ++i) {
    rows.push_back({std::to_string(curve.epochs[i]), fmt_ratio(curve.asr[i]),
                    fmt_ratio(curve.ba[i])});
  }
  std::string txt_path = (fs::path(config.out_dir()) / "defense_curve.txt").string();
  write_text_atomic(txt_path, "# config_digest: " + digest + "\n" +
                                  render_table({"epoch", "asr", "ba"}, rows));

  ChartSeries asr{"ASR", {}, {}}, ba{"BA", {}, {}};
  for (size_t i = 0; i < curve.epochs.size(); ++i) {
    asr.x.push_back(curve.epochs[i]);
    asr.y.push_back(curve.asr[i]);
    ba.x.push_back(curve.epochs[i]);
    ba.y.push_back(curve.ba[i]);
  }
  std::string svg_path = (fs::path(config.out_dir()) / "defense_curve.svg").string();
  write_line_chart(svg_path, "fine-tuning defense", "epoch", "ratio", {asr, ba}, digest);

  record_artifacts(config.out_dir(), digest, "defend", {json_path, txt_path, svg_path});
  result.summary = "epoch 0: ASR " + fmt_ratio(curve.asr.front()) + ", BA " +
                   fmt_ratio(curve.ba.front()) + "\nepoch " +
                   std::to_string(curve.epochs.back()) + ": ASR " +
                   fmt_ratio(curve.asr.back()) + ", BA " + fmt_ratio(curve.ba.back());
  result.artifacts = {json_path, txt_path, svg_path};
  return result;
}

// A probe that shares nothing material with the training trigger, for the
// cross-activation row of the scenario matrix.
TriggerSpec material_variant(const TriggerSpec& training) {
  switch (training.kind) {
    case TriggerKind::badnets_spectrogram:
      return TriggerSpec::badnets(training.pattern_amplitude > 0.0
                                      ? training.pattern_amplitude * 0.2
                                      : 0.1);
    case TriggerKind::surrogate_identity_shift:
    case TriggerKind::voice_conversion:
    case TriggerKind::none:
      return TriggerSpec::surrogate({0.8, 1.5, 0.6});
  }
  return TriggerSpec::surrogate({0.8, 1.5, 0.6});
}

StageResult run_scenarios(const ExperimentConfig& config, const StageOptions& opts) {
  validate_config_paths(config);
  DirLock lock(config.out_dir());
  std::string checkpoint = (fs::path(config.out_dir()) / "model.json").string();
  require_artifact(checkpoint, "train");

  StageResult result;
  if (opts.dry_run) {
    result.summary = "dry run: would probe 3 trigger variants";
    return result;
  }

  TrainedModel model = load_model(checkpoint);
  Splits splits = load_splits(config);
  LabeledDataset probe_set = splits.test;
  probe_set.role = DatasetRole::probe;
  if (config.scenario_probe_count > 0 &&
      config.scenario_probe_count < probe_set.samples.size()) {
    probe_set.samples.resize(config.scenario_probe_count);
  }
  TriggerRuntime rt = make_trigger_runtime(config);

  std::vector<TriggerSpec> probes = {config.trigger, material_variant(config.trigger),
                                     TriggerSpec::none()};
  std::vector<std::string> roles = {"training_trigger", "different_params", "clean_speech"};
  std::vector<ScenarioCell> cells =
      scenario_matrix(model, probes, probe_set, config.target_label, rt.context());

  std::string digest = experiment_config_digest(config);
  nlohmann::json jcells = nlohmann::json::array();
  std::vector<std::vector<std::string>> rows;
  std::string summary;
  for (size_t i = 0; i < cells.size(); ++i) {
    jcells.push_back({{"role", roles[i]},
                      {"trigger_id", cells[i].probe_trigger_id},
                      {"asr", cells[i].asr},
                      {"n", cells[i].n}});
    rows.push_back({roles[i], cells[i].probe_trigger_id, fmt_ratio(cells[i].asr),
                    std::to_string(cells[i].n)});
    summary += roles[i] + ": ASR " + fmt_ratio(cells[i].asr) + "\n";
  }
  nlohmann::json j = {{"config_digest", digest},
                      {"target_label", config.target_label},
                      {"cells", std::move(jcells)}};
  std::string json_path = (fs::path(config.out_dir()) / "scenario_matrix.json").string();
  write_text_atomic(json_path, j.dump(2) + "\n");
  std::string txt_path = (fs::path(config.out_dir()) / "scenario_matrix.txt").string();
  write_text_atomic(txt_path, "# config_digest: " + digest + "\n" +
                                  render_table({"probe", "trigger_id", "asr", "n"}, rows));

  record_artifacts(config.out_dir(), digest, "scenarios", {json_path, txt_path});
  while (!summary.empty() && summary.back() == '\n') summary.pop_back();
  result.summary = summary;
  result.artifacts = {json_path, txt_path};
  return result;
}

StageResult run_verify(const ExperimentConfig& config, const StageOptions& opts) {
  DirLock lock(config.out_dir());
  nlohmann::json ledger = load_ledger(config.out_dir());
  if (!ledger.contains("artifacts") || ledger["artifacts"].empty()) {
    fail(ErrorCode::state,
         "no recorded artifacts under '" + config.out_dir() + "'; run a stage first");
  }

  StageResult result;
  std::string digest = experiment_config_digest(config);
  std::vector<std::string> problems;
  size_t checked = 0;
  for (const auto& [rel, entry] : ledger["artifacts"].items()) {
    std::string path = (fs::path(config.out_dir()) / rel).string();
    if (!fs::exists(path)) {
      problems.push_back(rel + ": missing");
      continue;
    }
    if (opts.dry_run) continue;
    std::string want = entry.value("digest", "");
    std::string got = file_digest(path);
    if (got != want) {
      problems.push_back(rel + ": digest mismatch");
    } else if (entry.value("config_digest", "") != digest) {
      problems.push_back(rel + ": produced under a different config");
    }
    ++checked;
  }
  if (!problems.empty()) {
    std::string msg = "verification failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorCode::contract, msg);
  }
  result.summary = opts.dry_run
                       ? "dry run: " + std::to_string(ledger["artifacts"].size()) +
                             " artifacts recorded"
                       : "verified " + std::to_string(checked) + " artifacts against " +
                             "config digest " + digest;
  return result;
}

}  // namespace

StageResult run_stage(Stage stage, const ExperimentConfig& config,
                      const StageOptions& options) {
  if (options.jobs < 1) fail(ErrorCode::invalid_argument, "jobs must be >= 1");
  ExperimentConfig effective = config;
  // An explicit override is caller-relative, unlike paths inside the file.
  if (options.out) effective.output_dir = fs::absolute(*options.out).string();
  switch (stage) {
    case Stage::mkcorpus: return run_mkcorpus(effective, options);
    case Stage::poison: return run_poison(effective, options);
    case Stage::train: return run_train(effective, options);
    case Stage::eval: return run_eval(effective, options);
    case Stage::sweep: return run_sweep_stage(effective, options);
    case Stage::defend: return run_defend(effective, options);
    case Stage::scenarios: return run_scenarios(effective, options);
    case Stage::verify: return run_verify(effective, options);
  }
  fail(ErrorCode::internal, "unhandled stage");
}

}  // namespace sblab
