#include "sblab.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <utility>

#include "core/corpus.hpp"
#include "core/dataset.hpp"
#include "core/defense.hpp"
#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/experiment.hpp"
#include "core/json_io.hpp"
#include "core/model.hpp"
#include "core/poison.hpp"
#include "core/trigger.hpp"
#include "core/vc_adapter.hpp"

// Opaque handle definitions. Each wraps exactly one core value; ownership is
// with the caller via the matching *_free.
struct sblab_dataset {
  sblab::LabeledDataset value;
};
struct sblab_trigger {
  sblab::TriggerSpec value;
};
struct sblab_plan {
  sblab::PoisonPlan value;
};
struct sblab_model {
  sblab::TrainedModel value;
};
struct sblab_report {
  sblab::EvalReport value;
};
struct sblab_curve {
  sblab::DefenseCurve value;
};
struct sblab_vc {
  sblab::VCAdapter adapter;
  explicit sblab_vc(sblab::VCAdapterConfig config) : adapter(std::move(config)) {}
};

namespace {

thread_local std::string g_last_error;

sblab_status status_from(sblab::ErrorCode code) {
  using EC = sblab::ErrorCode;
  switch (code) {
    case EC::invalid_argument: return SBLAB_E_INVALID_ARGUMENT;
    case EC::io: return SBLAB_E_IO;
    case EC::format: return SBLAB_E_FORMAT;
    case EC::schema: return SBLAB_E_SCHEMA;
    case EC::capacity: return SBLAB_E_CAPACITY;
    case EC::trigger: return SBLAB_E_TRIGGER;
    case EC::timeout: return SBLAB_E_TIMEOUT;
    case EC::state: return SBLAB_E_STATE;
    case EC::diverged: return SBLAB_E_DIVERGED;
    case EC::contract: return SBLAB_E_CONTRACT;
    case EC::internal: return SBLAB_E_INTERNAL;
  }
  return SBLAB_E_INTERNAL;
}

template <typename Fn>
sblab_status guarded(Fn&& fn) {
  try {
    fn();
    return SBLAB_OK;
  } catch (const sblab::Error& e) {
    g_last_error = e.what();
    return status_from(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SBLAB_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return SBLAB_E_INTERNAL;
  }
}

sblab_status null_arg(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return SBLAB_E_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_json(const char* text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    sblab::fail(sblab::ErrorCode::format,
                std::string(what) + " is not valid JSON: " + e.what());
  }
}

sblab::VCAdapterConfig vc_config_from_json(const nlohmann::json& j) {
  sblab::VCAdapterConfig config;
  try {
    config.command = j.at("command").get<std::string>();
    config.workdir = j.value("workdir", config.workdir);
    config.timeout_s = j.value("timeout_s", config.timeout_s);
    config.expected_sample_rate =
        j.value("expected_sample_rate", config.expected_sample_rate);
    config.max_parallel = j.value("max_parallel", config.max_parallel);
    config.adapter_version = j.value("adapter_version", config.adapter_version);
  } catch (const nlohmann::json::exception& e) {
    sblab::fail(sblab::ErrorCode::schema,
                std::string("vc adapter config: ") + e.what());
  }
  config.validate();
  return config;
}

sblab::TriggerContext context_for(sblab_vc* vc) {
  sblab::TriggerContext ctx;
  if (vc != nullptr) ctx.vc_adapter = &vc->adapter;
  return ctx;
}

}  // namespace

extern "C" {

const char* sblab_version(void) { return "0.1.0"; }

const char* sblab_last_error(void) { return g_last_error.c_str(); }

void sblab_string_free(char* s) { std::free(s); }

/* ---- datasets ---------------------------------------------------------- */

sblab_status sblab_dataset_load(const char* manifest_path, sblab_dataset** out) {
  if (manifest_path == nullptr) return null_arg("manifest_path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto handle = std::make_unique<sblab_dataset>();
    handle->value = sblab::load_dataset(manifest_path);
    *out = handle.release();
  });
}

sblab_status sblab_dataset_split(const sblab_dataset* dataset,
                                 double train_fraction, uint64_t seed,
                                 sblab_dataset** train_out,
                                 sblab_dataset** test_out) {
  if (dataset == nullptr) return null_arg("dataset");
  if (train_out == nullptr) return null_arg("train_out");
  if (test_out == nullptr) return null_arg("test_out");
  return guarded([&] {
    auto [train, test] = sblab::split_dataset(dataset->value, train_fraction, seed);
    auto train_handle = std::make_unique<sblab_dataset>();
    auto test_handle = std::make_unique<sblab_dataset>();
    train_handle->value = std::move(train);
    test_handle->value = std::move(test);
    *train_out = train_handle.release();
    *test_out = test_handle.release();
  });
}

sblab_status sblab_dataset_digest(const sblab_dataset* dataset, char** digest_out) {
  if (dataset == nullptr) return null_arg("dataset");
  if (digest_out == nullptr) return null_arg("digest_out");
  return guarded([&] { *digest_out = dup_string(sblab::dataset_digest(dataset->value)); });
}

sblab_status sblab_dataset_size(const sblab_dataset* dataset, size_t* out) {
  if (dataset == nullptr) return null_arg("dataset");
  if (out == nullptr) return null_arg("out");
  *out = dataset->value.size();
  return SBLAB_OK;
}

sblab_status sblab_dataset_num_classes(const sblab_dataset* dataset, int* out) {
  if (dataset == nullptr) return null_arg("dataset");
  if (out == nullptr) return null_arg("out");
  *out = dataset->value.num_classes;
  return SBLAB_OK;
}

void sblab_dataset_free(sblab_dataset* dataset) { delete dataset; }

sblab_status sblab_mkcorpus(const char* config_json, const char* out_dir,
                            char** manifest_path_out) {
  if (out_dir == nullptr) return null_arg("out_dir");
  if (manifest_path_out == nullptr) return null_arg("manifest_path_out");
  return guarded([&] {
    sblab::CorpusConfig config;
    if (config_json != nullptr && config_json[0] != '\0') {
      nlohmann::json j = parse_json(config_json, "corpus config");
      config.num_classes = j.value("num_classes", config.num_classes);
      config.samples_per_class = j.value("samples_per_class", config.samples_per_class);
      config.num_speakers = j.value("num_speakers", config.num_speakers);
      config.seconds = j.value("seconds", config.seconds);
      config.seed = j.value("seed", config.seed);
    }
    sblab::LabeledDataset corpus = sblab::make_corpus(config);
    *manifest_path_out = dup_string(sblab::write_corpus(corpus, out_dir));
  });
}

/* ---- triggers and the external converter ------------------------------- */

sblab_status sblab_trigger_from_json(const char* json, sblab_trigger** out) {
  if (json == nullptr) return null_arg("json");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto handle = std::make_unique<sblab_trigger>();
    handle->value = sblab::TriggerSpec::from_json(json);
    *out = handle.release();
  });
}

sblab_status sblab_trigger_id(const sblab_trigger* trigger, char** id_out) {
  if (trigger == nullptr) return null_arg("trigger");
  if (id_out == nullptr) return null_arg("id_out");
  return guarded([&] { *id_out = dup_string(trigger->value.trigger_id()); });
}

void sblab_trigger_free(sblab_trigger* trigger) { delete trigger; }

sblab_status sblab_vc_create(const char* config_json, sblab_vc** out) {
  if (config_json == nullptr) return null_arg("config_json");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    nlohmann::json j = parse_json(config_json, "vc adapter config");
    *out = new sblab_vc(vc_config_from_json(j));
  });
}

sblab_status sblab_vc_invocation_count(const sblab_vc* vc, int* out) {
  if (vc == nullptr) return null_arg("vc");
  if (out == nullptr) return null_arg("out");
  *out = vc->adapter.invocation_count();
  return SBLAB_OK;
}

void sblab_vc_free(sblab_vc* vc) { delete vc; }

/* ---- poisoning --------------------------------------------------------- */

sblab_status sblab_plan_select(const sblab_dataset* dataset, double rate,
                               int target_label, uint64_t seed,
                               int exclude_target_class,
                               const sblab_trigger* trigger, sblab_plan** out) {
  if (dataset == nullptr) return null_arg("dataset");
  if (trigger == nullptr) return null_arg("trigger");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto handle = std::make_unique<sblab_plan>();
    handle->value =
        sblab::select_poison_subset(dataset->value, rate, target_label, seed,
                                    exclude_target_class != 0, trigger->value);
    *out = handle.release();
  });
}

sblab_status sblab_plan_count(const sblab_plan* plan, size_t* out) {
  if (plan == nullptr) return null_arg("plan");
  if (out == nullptr) return null_arg("out");
  *out = plan->value.poison_count();
  return SBLAB_OK;
}

sblab_status sblab_plan_poison_id(const sblab_plan* plan, size_t index,
                                  char** id_out) {
  if (plan == nullptr) return null_arg("plan");
  if (id_out == nullptr) return null_arg("id_out");
  return guarded([&] {
    if (index >= plan->value.poison_ids.size()) {
      sblab::fail(sblab::ErrorCode::invalid_argument,
                  "poison id index " + std::to_string(index) + " out of range (" +
                      std::to_string(plan->value.poison_ids.size()) + " planned)");
    }
    *id_out = dup_string(plan->value.poison_ids[index]);
  });
}

void sblab_plan_free(sblab_plan* plan) { delete plan; }

sblab_status sblab_build_backdoor(const sblab_dataset* dataset,
                                  const sblab_plan* plan, sblab_vc* vc,
                                  int jobs, sblab_dataset** out) {
  if (dataset == nullptr) return null_arg("dataset");
  if (plan == nullptr) return null_arg("plan");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto handle = std::make_unique<sblab_dataset>();
    handle->value = sblab::build_backdoor_dataset(dataset->value, plan->value,
                                                  context_for(vc), jobs);
    *out = handle.release();
  });
}

/* ---- training, inference, evaluation ----------------------------------- */

sblab_status sblab_train(const sblab_dataset* train_set,
                         const char* model_spec_json,
                         const char* train_config_json, sblab_model** out) {
  if (train_set == nullptr) return null_arg("train_set");
  if (model_spec_json == nullptr) return null_arg("model_spec_json");
  if (train_config_json == nullptr) return null_arg("train_config_json");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    sblab::ModelSpec spec;
    sblab::TrainConfig config;
    try {
      spec = parse_json(model_spec_json, "model spec").get<sblab::ModelSpec>();
      config = parse_json(train_config_json, "train config").get<sblab::TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
      sblab::fail(sblab::ErrorCode::schema, e.what());
    }
    auto handle = std::make_unique<sblab_model>();
    handle->value = sblab::train_classifier(train_set->value, spec, config);
    *out = handle.release();
  });
}

sblab_status sblab_model_save(const sblab_model* model, const char* path) {
  if (model == nullptr) return null_arg("model");
  if (path == nullptr) return null_arg("path");
  return guarded([&] { sblab::save_model(model->value, path); });
}

sblab_status sblab_model_load(const char* path, sblab_model** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto handle = std::make_unique<sblab_model>();
    handle->value = sblab::load_model(path);
    *out = handle.release();
  });
}

sblab_status sblab_model_predict(const sblab_model* model,
                                 const float* waveform, size_t length,
                                 int sample_rate, int* label_out) {
  if (model == nullptr) return null_arg("model");
  if (waveform == nullptr) return null_arg("waveform");
  if (label_out == nullptr) return null_arg("label_out");
  return guarded([&] {
    sblab::AudioSample sample;
    sample.id = "capi-predict";
    sample.waveform.assign(waveform, waveform + length);
    sample.sample_rate = sample_rate;
    *label_out = sblab::predict(model->value, sample).label;
  });
}

void sblab_model_free(sblab_model* model) { delete model; }

sblab_status sblab_evaluate(const sblab_model* model,
                            const sblab_dataset* test,
                            const sblab_trigger* trigger, int target_label,
                            sblab_vc* vc, sblab_report** out) {
  if (model == nullptr) return null_arg("model");
  if (test == nullptr) return null_arg("test");
  if (trigger == nullptr) return null_arg("trigger");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto handle = std::make_unique<sblab_report>();
    handle->value = sblab::evaluate_model(model->value, test->value, trigger->value,
                                          target_label, context_for(vc));
    *out = handle.release();
  });
}

sblab_status sblab_report_benign_accuracy(const sblab_report* report, double* out) {
  if (report == nullptr) return null_arg("report");
  if (out == nullptr) return null_arg("out");
  *out = report->value.benign_accuracy;
  return SBLAB_OK;
}

sblab_status sblab_report_attack_success_rate(const sblab_report* report,
                                              double* out) {
  if (report == nullptr) return null_arg("report");
  if (out == nullptr) return null_arg("out");
  *out = report->value.attack_success_rate;
  return SBLAB_OK;
}

sblab_status sblab_report_json(const sblab_report* report, char** json_out) {
  if (report == nullptr) return null_arg("report");
  if (json_out == nullptr) return null_arg("json_out");
  return guarded([&] {
    const sblab::EvalReport& r = report->value;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& rec : r.per_sample) {
      per.push_back({{"id", rec.id},
                     {"ground_truth", rec.ground_truth},
                     {"prediction", rec.prediction},
                     {"triggered", rec.triggered}});
    }
    nlohmann::json j = {{"benign_accuracy", r.benign_accuracy},
                        {"attack_success_rate", r.attack_success_rate},
                        {"target_label", r.target_label},
                        {"trigger_id", r.trigger_id},
                        {"n_eval_benign", r.n_eval_benign},
                        {"n_eval_attack", r.n_eval_attack},
                        {"per_sample", std::move(per)}};
    *json_out = dup_string(j.dump(2));
  });
}

void sblab_report_free(sblab_report* report) { delete report; }

/* ---- fine-tuning defense ------------------------------------------------ */

sblab_status sblab_defense_curve(const sblab_model* model,
                                 const sblab_dataset* clean_data,
                                 const sblab_dataset* clean_test,
                                 const sblab_trigger* trigger,
                                 int target_label, int epochs, uint64_t seed,
                                 sblab_vc* vc, sblab_curve** out) {
  if (model == nullptr) return null_arg("model");
  if (clean_data == nullptr) return null_arg("clean_data");
  if (clean_test == nullptr) return null_arg("clean_test");
  if (trigger == nullptr) return null_arg("trigger");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    sblab::TrainConfig ft = sblab::default_finetune_config(model->value.config);
    ft.epochs = epochs;
    ft.seed = seed;
    auto handle = std::make_unique<sblab_curve>();
    handle->value =
        sblab::fine_tune_defense(model->value, clean_data->value, ft,
                                 clean_test->value, trigger->value, target_label,
                                 context_for(vc));
    *out = handle.release();
  });
}

sblab_status sblab_curve_length(const sblab_curve* curve, size_t* out) {
  if (curve == nullptr) return null_arg("curve");
  if (out == nullptr) return null_arg("out");
  *out = curve->value.epochs.size();
  return SBLAB_OK;
}

sblab_status sblab_curve_point(const sblab_curve* curve, size_t index,
                               int* epoch_out, double* asr_out, double* ba_out) {
  if (curve == nullptr) return null_arg("curve");
  return guarded([&] {
    if (index >= curve->value.epochs.size()) {
      sblab::fail(sblab::ErrorCode::invalid_argument,
                  "curve index " + std::to_string(index) + " out of range (" +
                      std::to_string(curve->value.epochs.size()) + " points)");
    }
    if (epoch_out != nullptr) *epoch_out = curve->value.epochs[index];
    if (asr_out != nullptr) *asr_out = curve->value.asr[index];
    if (ba_out != nullptr) *ba_out = curve->value.ba[index];
  });
}

void sblab_curve_free(sblab_curve* curve) { delete curve; }

/* ---- experiment orchestration ------------------------------------------ */

sblab_status sblab_run_stage(const char* stage, const char* config_path,
                             const char* overrides_json, char** summary_out) {
  if (stage == nullptr) return null_arg("stage");
  if (config_path == nullptr) return null_arg("config_path");
  if (summary_out == nullptr) return null_arg("summary_out");
  return guarded([&] {
    sblab::Stage which = sblab::stage_from_name(stage);
    sblab::ExperimentConfig config = sblab::load_experiment_config(config_path);
    sblab::StageOptions options;
    if (overrides_json != nullptr && overrides_json[0] != '\0') {
      nlohmann::json j = parse_json(overrides_json, "stage overrides");
      try {
        if (j.contains("seed")) options.seed = j["seed"].get<uint64_t>();
        if (j.contains("out")) options.out = j["out"].get<std::string>();
        options.dry_run = j.value("dry_run", false);
        options.jobs = j.value("jobs", 1);
      } catch (const nlohmann::json::exception& e) {
        sblab::fail(sblab::ErrorCode::schema, std::string("stage overrides: ") + e.what());
      }
    }
    sblab::StageResult result = sblab::run_stage(which, config, options);
    *summary_out = dup_string(result.summary);
  });
}

} /* extern "C" */
