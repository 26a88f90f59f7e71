#include "core/defense.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "core/errors.hpp"
#include "core/hash.hpp"

namespace sblab {

TrainConfig default_finetune_config(const TrainConfig& original) {
  TrainConfig cfg = original;
  cfg.learning_rate = original.learning_rate * 0.1;
  cfg.epochs = 20;
  return cfg;
}

DefenseCurve fine_tune_defense(const TrainedModel& model,
                               const LabeledDataset& clean_data,
                               const TrainConfig& finetune_config,
                               const LabeledDataset& clean_test,
                               const TriggerSpec& trigger, int target_label,
                               const TriggerContext& ctx) {
  finetune_config.validate();
  trigger.validate();
  validate_dataset(clean_data);
  validate_dataset(clean_test);
  if (clean_test.samples.empty()) {
    fail(ErrorCode::invalid_argument, "defense evaluation set is empty");
  }

  for (const auto& s : clean_data.samples) {
    if (s.provenance == Provenance::poisoned) {
      fail(ErrorCode::contract,
           "fine-tuning data contains poisoned sample '" + s.id + "'");
    }
  }
  std::unordered_set<std::string> eval_ids;
  for (const auto& s : clean_test.samples) eval_ids.insert(s.id);
  for (const auto& s : clean_data.samples) {
    if (eval_ids.count(s.id)) {
      fail(ErrorCode::contract,
           "fine-tuning data overlaps the evaluation set at sample '" + s.id + "'");
    }
  }

  auto net = make_network(model.spec);
  if (model.parameters.size() != net->param_count()) {
    fail(ErrorCode::state, "model parameters do not fit its architecture");
  }

  // Features and triggered waveforms do not change across epochs, so they
  // are built once; each epoch is then pure forward passes.
  struct EvalItem {
    Matrix2D features;
    int ground_truth = 0;
  };
  std::vector<EvalItem> benign, attack;
  benign.reserve(clean_test.samples.size());
  for (const auto& s : clean_test.samples) {
    benign.push_back({features_for_sample(model.spec, s), s.label});
  }
  for (const auto& s : clean_test.samples) {
    if (s.label == target_label) continue;
    AudioSample triggered = apply_trigger(s, trigger, ctx);
    attack.push_back({features_for_sample(model.spec, triggered), s.label});
  }
  if (attack.empty()) {
    fail(ErrorCode::invalid_argument,
         "attack set is degenerate: every test sample already has label " +
             std::to_string(target_label));
  }

  std::vector<double> scores;
  auto evaluate_params = [&](const std::vector<double>& params, double* ba, double* asr) {
    size_t correct = 0;
    for (const auto& item : benign) {
      net->forward(item.features, params, scores);
      int pred = static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                  scores.begin());
      if (pred == item.ground_truth) ++correct;
    }
    size_t hits = 0;
    for (const auto& item : attack) {
      net->forward(item.features, params, scores);
      int pred = static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                  scores.begin());
      if (pred == target_label) ++hits;
    }
    *ba = static_cast<double>(correct) / static_cast<double>(benign.size());
    *asr = static_cast<double>(hits) / static_cast<double>(attack.size());
  };

  DefenseCurve curve;
  curve.finetune_config = finetune_config;
  curve.clean_subset_digest = dataset_digest(clean_data);

  double ba = 0.0, asr = 0.0;
  evaluate_params(model.parameters, &ba, &asr);
  curve.epochs.push_back(0);
  curve.ba.push_back(ba);
  curve.asr.push_back(asr);

  TrainedModel cursor = model;
  for (int epoch = 1; epoch <= finetune_config.epochs; ++epoch) {
    TrainConfig step = finetune_config;
    step.epochs = 1;
    step.seed = mix_seed(finetune_config.seed, static_cast<uint64_t>(epoch));
    cursor = continue_training(cursor, clean_data, step);
    evaluate_params(cursor.parameters, &ba, &asr);
    curve.epochs.push_back(epoch);
    curve.ba.push_back(ba);
    curve.asr.push_back(asr);
  }
  return curve;
}

}  // namespace sblab
