/* Public C interface for the speech-backdoor laboratory.
 *
 * Conventions:
 *   - Every fallible call returns sblab_status; SBLAB_OK is 0.
 *   - On failure the thread-local message from sblab_last_error() describes
 *     what went wrong; output parameters are left untouched.
 *   - Objects come back through out-parameters as opaque handles and must be
 *     released with the matching *_free function. Strings returned through
 *     char** out-parameters are heap copies; release them with
 *     sblab_string_free.
 *   - NULL handles are rejected with SBLAB_E_INVALID_ARGUMENT, never
 *     dereferenced.
 */
#ifndef SBLAB_H
#define SBLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sblab_status {
  SBLAB_OK = 0,
  SBLAB_E_INVALID_ARGUMENT = 1, /* bad parameter value or malformed input */
  SBLAB_E_IO = 2,               /* filesystem read/write failure */
  SBLAB_E_FORMAT = 3,           /* unparseable or version-mismatched file */
  SBLAB_E_SCHEMA = 4,           /* structurally valid file violating the schema */
  SBLAB_E_CAPACITY = 5,         /* requested more than the data can provide */
  SBLAB_E_TRIGGER = 6,          /* trigger generator / adapter failure */
  SBLAB_E_TIMEOUT = 7,          /* external adapter exceeded its deadline */
  SBLAB_E_STATE = 8,            /* operation needs a missing upstream artifact */
  SBLAB_E_DIVERGED = 9,         /* training produced a non-finite loss */
  SBLAB_E_CONTRACT = 10,        /* caller violated a documented precondition */
  SBLAB_E_INTERNAL = 11
} sblab_status;

typedef struct sblab_dataset sblab_dataset;
typedef struct sblab_trigger sblab_trigger;
typedef struct sblab_plan sblab_plan;
typedef struct sblab_model sblab_model;
typedef struct sblab_report sblab_report;
typedef struct sblab_curve sblab_curve;
typedef struct sblab_vc sblab_vc;

/* Library version string, e.g. "0.1.0". Static storage; do not free. */
const char* sblab_version(void);

/* Message for the most recent failure on the calling thread. Static
 * thread-local storage; valid until the thread's next failing call. */
const char* sblab_last_error(void);

void sblab_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

/* Loads a CSV manifest (id,path,label,speaker rows plus a sidecar .vocab). */
sblab_status sblab_dataset_load(const char* manifest_path, sblab_dataset** out);

/* Deterministic disjoint split; the train side gets floor(fraction * N). */
sblab_status sblab_dataset_split(const sblab_dataset* dataset,
                                 double train_fraction, uint64_t seed,
                                 sblab_dataset** train_out,
                                 sblab_dataset** test_out);

sblab_status sblab_dataset_digest(const sblab_dataset* dataset, char** digest_out);
sblab_status sblab_dataset_size(const sblab_dataset* dataset, size_t* out);
sblab_status sblab_dataset_num_classes(const sblab_dataset* dataset, int* out);
void sblab_dataset_free(sblab_dataset* dataset);

/* Synthesizes the bundled corpus. `config_json` mirrors the `corpus` block of
 * the experiment config ({"num_classes":8,"samples_per_class":100,...}); pass
 * NULL or "" for the defaults. Writes WAVs plus manifest under `out_dir` and
 * returns the manifest path. */
sblab_status sblab_mkcorpus(const char* config_json, const char* out_dir,
                            char** manifest_path_out);

/* ---- triggers and the external converter ------------------------------- */

/* Builds a trigger from its JSON description, e.g.
 *   {"kind":"badnets_spectrogram","pattern_amplitude":0.8}
 *   {"kind":"surrogate_identity_shift",
 *    "shift":{"pitch_ratio":1.25,"low_band_gain":0.7,"high_band_gain":1.6}}
 *   {"kind":"voice_conversion","target_speech":"t.wav"}
 *   {"kind":"none"} */
sblab_status sblab_trigger_from_json(const char* json, sblab_trigger** out);
sblab_status sblab_trigger_id(const sblab_trigger* trigger, char** id_out);
void sblab_trigger_free(sblab_trigger* trigger);

/* Voice-conversion adapter around an external command template (see the
 * README for the {source}/{target}/{output} contract). `config_json` example:
 *   {"command":"convert.sh {source} {target} {output}",
 *    "workdir":"/tmp/vc-cache","timeout_s":60,"max_parallel":2} */
sblab_status sblab_vc_create(const char* config_json, sblab_vc** out);
sblab_status sblab_vc_invocation_count(const sblab_vc* vc, int* out);
void sblab_vc_free(sblab_vc* vc);

/* ---- poisoning --------------------------------------------------------- */

/* Selects the poison subset: floor(rate * N) samples (at least 1 when
 * rate > 0), drawn without replacement from the non-target classes when
 * exclude_target_class is nonzero. Subsets nest across rates for a fixed
 * seed. */
sblab_status sblab_plan_select(const sblab_dataset* dataset, double rate,
                               int target_label, uint64_t seed,
                               int exclude_target_class,
                               const sblab_trigger* trigger, sblab_plan** out);
sblab_status sblab_plan_count(const sblab_plan* plan, size_t* out);
sblab_status sblab_plan_poison_id(const sblab_plan* plan, size_t index,
                                  char** id_out);
void sblab_plan_free(sblab_plan* plan);

/* Applies the plan: planned samples get the trigger and the target label,
 * everything else is copied through. `vc` may be NULL except for
 * voice_conversion triggers. `jobs` is the worker thread count (>= 1). */
sblab_status sblab_build_backdoor(const sblab_dataset* dataset,
                                  const sblab_plan* plan, sblab_vc* vc,
                                  int jobs, sblab_dataset** out);

/* ---- training, inference, evaluation ----------------------------------- */

/* Trains a classifier. `model_spec_json` example:
 *   {"architecture":"small_conv","input_features":"log_mel","n_mels":40,
 *    "num_classes":8}
 * `train_config_json` example:
 *   {"optimizer":"sgd","learning_rate":0.01,"batch_size":32,"epochs":30,
 *    "seed":1,"loss":"cross_entropy"} */
sblab_status sblab_train(const sblab_dataset* train_set,
                         const char* model_spec_json,
                         const char* train_config_json, sblab_model** out);

sblab_status sblab_model_save(const sblab_model* model, const char* path);
sblab_status sblab_model_load(const char* path, sblab_model** out);

/* Predicted label for a waveform at the canonical sample rate (16 kHz). */
sblab_status sblab_model_predict(const sblab_model* model,
                                 const float* waveform, size_t length,
                                 int sample_rate, int* label_out);
void sblab_model_free(sblab_model* model);

/* Benign accuracy over `test` plus attack success rate over the triggered
 * copies of its non-target samples. */
sblab_status sblab_evaluate(const sblab_model* model,
                            const sblab_dataset* test,
                            const sblab_trigger* trigger, int target_label,
                            sblab_vc* vc, sblab_report** out);

sblab_status sblab_report_benign_accuracy(const sblab_report* report,
                                          double* out);
sblab_status sblab_report_attack_success_rate(const sblab_report* report,
                                              double* out);
/* Full report (per-sample records included) as a JSON document. */
sblab_status sblab_report_json(const sblab_report* report, char** json_out);
void sblab_report_free(sblab_report* report);

/* ---- fine-tuning defense ------------------------------------------------ */

/* Fine-tunes `model` on `clean_data` for `epochs` epochs at a tenth of the
 * checkpoint's training learning rate, measuring ASR/BA against `clean_test`
 * after every epoch. Row 0 is the unmodified input model. */
sblab_status sblab_defense_curve(const sblab_model* model,
                                 const sblab_dataset* clean_data,
                                 const sblab_dataset* clean_test,
                                 const sblab_trigger* trigger,
                                 int target_label, int epochs, uint64_t seed,
                                 sblab_vc* vc, sblab_curve** out);

sblab_status sblab_curve_length(const sblab_curve* curve, size_t* out);
sblab_status sblab_curve_point(const sblab_curve* curve, size_t index,
                               int* epoch_out, double* asr_out,
                               double* ba_out);
void sblab_curve_free(sblab_curve* curve);

/* ---- experiment orchestration ------------------------------------------ */

/* Runs one pipeline stage against a config file. `stage` is one of
 * "mkcorpus", "poison", "train", "eval", "sweep", "defend", "scenarios",
 * "verify". `overrides_json` may be NULL or carry any of
 *   {"seed":7,"out":"runs/alt","dry_run":true,"jobs":4}.
 * On success *summary_out holds a human-readable stage summary. */
sblab_status sblab_run_stage(const char* stage, const char* config_path,
                             const char* overrides_json, char** summary_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SBLAB_H */
