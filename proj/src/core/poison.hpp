#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/trigger.hpp"

namespace sblab {

// A resolved poisoning decision: which samples to replace, with what trigger,
// relabeled to which target. Selection is the first n entries of a seed-keyed
// permutation of the eligible pool, so plans with the same seed nest across
// rates.
struct PoisonPlan {
  std::vector<std::string> poison_ids;  // ordered selection
  int target_label = 0;
  double poisoning_rate = 0.0;
  uint64_t seed = 0;
  TriggerSpec trigger;
  bool exclude_target_class = true;

  size_t poison_count() const { return poison_ids.size(); }
};

// n = floor(p * N), promoted to 1 when p > 0 would otherwise select nothing.
size_t poison_subset_size(double rate, size_t dataset_size);

// Uniform selection without replacement over the eligible pool (all samples,
// or label != target when exclude_target_class). Deterministic per
// (dataset ids, rate, target, seed).
PoisonPlan select_poison_subset(const LabeledDataset& dataset, double rate,
                                int target_label, uint64_t seed,
                                bool exclude_target_class,
                                const TriggerSpec& trigger);

// Constructs the backdoor dataset: selected samples are trigger-transformed,
// relabeled to the target and marked poisoned; everything else is untouched.
// Transactional: any trigger failure aborts with the offending sample id.
LabeledDataset build_backdoor_dataset(const LabeledDataset& dataset,
                                      const PoisonPlan& plan,
                                      const TriggerContext& ctx = {},
                                      int jobs = 1);

// Per-sample provenance row persisted next to the plan.
struct ProvenanceRow {
  std::string id;
  int label = 0;
  Provenance provenance = Provenance::clean;
  std::string trigger_id;  // empty when clean
  int source_label = 0;    // label before relabeling
};

// Plan + provenance table; everything needed to reconstruct the experiment.
void write_poison_manifest(const PoisonPlan& plan,
                           const LabeledDataset& backdoor_dataset,
                           const LabeledDataset& source_dataset,
                           const std::string& path,
                           const std::string& config_digest = "");

struct PoisonManifest {
  PoisonPlan plan;
  std::vector<ProvenanceRow> rows;
  std::string dataset_digest;
  std::string config_digest;
};

// Parses and validates a poison manifest; ids must exist in
// `source_dataset` when provided.
PoisonManifest read_poison_manifest(const std::string& path,
                                    const LabeledDataset* source_dataset = nullptr);

}  // namespace sblab
