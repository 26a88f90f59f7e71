#pragma once

#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/eval.hpp"
#include "core/model.hpp"
#include "core/trigger.hpp"

namespace sblab {

// ASR/BA after each epoch of continued clean training. Row 0 is the
// untouched input model.
struct DefenseCurve {
  std::vector<int> epochs;
  std::vector<double> asr;
  std::vector<double> ba;
  TrainConfig finetune_config;
  std::string clean_subset_digest;
};

// Conventional fine-tuning hyperparameters: one tenth of the original
// learning rate, 20 epochs.
TrainConfig default_finetune_config(const TrainConfig& original);

// Continues training a copy of `model` on `clean_data` and evaluates the
// attack after every epoch; `finetune_config.epochs` sets the curve length.
// `clean_data` must be free of poisoned samples and disjoint from
// `clean_test`, both enforced.
DefenseCurve fine_tune_defense(const TrainedModel& model,
                               const LabeledDataset& clean_data,
                               const TrainConfig& finetune_config,
                               const LabeledDataset& clean_test,
                               const TriggerSpec& trigger, int target_label,
                               const TriggerContext& ctx = {});

}  // namespace sblab
