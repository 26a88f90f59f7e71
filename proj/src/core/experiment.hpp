#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/model.hpp"
#include "core/trigger.hpp"
#include "core/vc_adapter.hpp"

namespace sblab {

// Everything one experiment needs, parsed from a schema-versioned JSON file.
// Relative paths inside the file resolve against the file's directory.
struct ExperimentConfig {
  int schema_version = 1;
  std::string dataset_manifest;
  std::string output_dir;

  double train_fraction = 0.9;
  uint64_t split_seed = 42;

  double poisoning_rate = 0.01;
  int target_label = 0;
  bool exclude_target_class = true;
  uint64_t poison_seed = 7;
  TriggerSpec trigger;

  ModelSpec model;
  TrainConfig train;

  std::vector<uint64_t> eval_seeds = {1, 2, 3};
  std::vector<double> sweep_rates = {0.0, 0.01, 0.02, 0.05, 0.1};
  std::vector<int> sweep_labels;
  std::vector<std::string> sweep_speech;
  int defense_epochs = 20;
  double finetune_fraction = 0.1;
  size_t scenario_probe_count = 0;  // 0 = whole test split

  CorpusConfig corpus;
  std::optional<VCAdapterConfig> vc;

  std::string base_dir = ".";  // resolution root, not serialized

  std::string resolve(const std::string& path) const;
  std::string manifest_path() const { return resolve(dataset_manifest); }
  std::string out_dir() const { return resolve(output_dir); }
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string serialize_experiment_config(const ExperimentConfig& config);

// Reads the file, resolves against its directory and applies the
// SBLAB_VC_COMMAND environment override.
ExperimentConfig load_experiment_config(const std::string& path);

// Digest of the canonical serialization; embedded in every text artifact.
std::string experiment_config_digest(const ExperimentConfig& config);

// Existence checks for every path the config references. `need_manifest`
// is off for the stage that creates the corpus.
void validate_config_paths(const ExperimentConfig& config, bool need_manifest = true);

enum class Stage { mkcorpus, poison, train, eval, sweep, defend, scenarios, verify };

Stage stage_from_name(const std::string& name);
const char* stage_name(Stage stage);

struct StageOptions {
  bool dry_run = false;
  int jobs = 1;
  std::optional<uint64_t> seed;      // overrides poison + train seeds
  std::optional<std::string> out;    // overrides output_dir
};

struct StageResult {
  std::string summary;                 // human-readable, one line per fact
  std::vector<std::string> artifacts;  // absolute paths written
};

StageResult run_stage(Stage stage, const ExperimentConfig& config,
                      const StageOptions& options = {});

// Exclusive-creation lock file; a second writer on the same directory gets
// a state error naming the lock path.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

}  // namespace sblab
