#include "core/poison.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace sblab {

size_t poison_subset_size(double rate, size_t dataset_size) {
  if (!(rate >= 0.0) || rate > 1.0) {
    fail(ErrorCode::invalid_argument,
         "poisoning rate must be in [0, 1], got " + std::to_string(rate));
  }
  if (rate == 0.0 || dataset_size == 0) return 0;
  size_t n = static_cast<size_t>(std::floor(rate * static_cast<double>(dataset_size)));
  if (n == 0) n = 1;  // a nonzero rate always poisons at least one sample
  return n;
}

PoisonPlan select_poison_subset(const LabeledDataset& dataset, double rate,
                                int target_label, uint64_t seed,
                                bool exclude_target_class,
                                const TriggerSpec& trigger) {
  validate_dataset(dataset);
  trigger.validate();
  if (target_label < 0 || target_label >= dataset.num_classes) {
    fail(ErrorCode::invalid_argument,
         "target label " + std::to_string(target_label) + " outside [0, " +
             std::to_string(dataset.num_classes) + ")");
  }

  std::vector<std::string> eligible;
  eligible.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) {
    if (exclude_target_class && s.label == target_label) continue;
    eligible.push_back(s.id);
  }

  size_t n = poison_subset_size(rate, dataset.size());
  if (n > eligible.size()) {
    fail(ErrorCode::capacity,
         "need " + std::to_string(n) + " poison candidates but only " +
             std::to_string(eligible.size()) + " samples are eligible");
  }

  // Key the permutation on the eligible pool, not the rate: the first-n
  // prefix then nests across rates for a fixed seed.
  Fnv1a pool_hash;
  for (const auto& id : eligible) {
    pool_hash.update(id);
    pool_hash.update(static_cast<uint64_t>(0x1f));
  }
  DetRng rng(mix_seed(seed, pool_hash.value()));
  rng.shuffle(eligible);

  PoisonPlan plan;
  plan.poison_ids.assign(eligible.begin(), eligible.begin() + static_cast<long>(n));
  plan.target_label = target_label;
  plan.poisoning_rate = rate;
  plan.seed = seed;
  plan.trigger = trigger;
  plan.exclude_target_class = exclude_target_class;
  return plan;
}

LabeledDataset build_backdoor_dataset(const LabeledDataset& dataset,
                                      const PoisonPlan& plan,
                                      const TriggerContext& ctx, int jobs) {
  validate_dataset(dataset);
  plan.trigger.validate();
  if (plan.target_label < 0 || plan.target_label >= dataset.num_classes) {
    fail(ErrorCode::invalid_argument, "plan target label outside dataset range");
  }
  if (jobs < 1) fail(ErrorCode::invalid_argument, "jobs must be >= 1");

  std::unordered_set<std::string> selected(plan.poison_ids.begin(),
                                           plan.poison_ids.end());
  if (selected.size() != plan.poison_ids.size()) {
    fail(ErrorCode::invalid_argument, "poison plan lists a duplicate id");
  }
  for (const auto& id : plan.poison_ids) {
    if (dataset.find(id) == nullptr) {
      fail(ErrorCode::invalid_argument,
           "poison plan references unknown id '" + id + "'");
    }
  }

  LabeledDataset out;
  out.num_classes = dataset.num_classes;
  out.role = DatasetRole::backdoor_train;
  out.label_names = dataset.label_names;
  out.samples = dataset.samples;  // clean rows are byte-identical copies

  std::vector<size_t> work;
  work.reserve(selected.size());
  for (size_t i = 0; i < out.samples.size(); ++i) {
    if (selected.count(out.samples[i].id)) work.push_back(i);
  }

  // The VC path shells out per sample, so parallel workers help; the
  // in-process triggers are cheap enough that jobs=1 is typical. Failures
  // are collected and the first one aborts the whole build.
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(work.size());
  std::vector<bool> failed(work.size(), false);
  auto worker = [&]() {
    for (;;) {
      size_t w = next.fetch_add(1);
      if (w >= work.size()) return;
      size_t i = work[w];
      try {
        AudioSample poisoned = apply_trigger(out.samples[i], plan.trigger, ctx);
        poisoned.label = plan.target_label;
        out.samples[i] = std::move(poisoned);
      } catch (const std::exception& e) {
        failed[w] = true;
        errors[w] = "sample '" + out.samples[i].id + "': " + e.what();
      }
    }
  };

  int n_threads = std::min<int>(jobs, static_cast<int>(work.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (size_t w = 0; w < work.size(); ++w) {
    if (failed[w]) fail(ErrorCode::trigger, "trigger failed on " + errors[w]);
  }

  validate_dataset(out);
  return out;
}

namespace {

nlohmann::json plan_to_json(const PoisonPlan& plan) {
  nlohmann::json j;
  j["poison_ids"] = plan.poison_ids;
  j["target_label"] = plan.target_label;
  j["poisoning_rate"] = plan.poisoning_rate;
  j["seed"] = plan.seed;
  j["trigger"] = nlohmann::json::parse(plan.trigger.canonical_json());
  j["exclude_target_class"] = plan.exclude_target_class;
  return j;
}

PoisonPlan plan_from_json(const nlohmann::json& j) {
  PoisonPlan plan;
  plan.poison_ids = j.at("poison_ids").get<std::vector<std::string>>();
  plan.target_label = j.at("target_label").get<int>();
  plan.poisoning_rate = j.at("poisoning_rate").get<double>();
  plan.seed = j.at("seed").get<uint64_t>();
  plan.trigger = TriggerSpec::from_json(j.at("trigger").dump());
  plan.exclude_target_class = j.at("exclude_target_class").get<bool>();
  return plan;
}

}  // namespace

void write_poison_manifest(const PoisonPlan& plan,
                           const LabeledDataset& backdoor_dataset,
                           const LabeledDataset& source_dataset,
                           const std::string& path,
                           const std::string& config_digest) {
  nlohmann::json j;
  j["version"] = 1;
  j["plan"] = plan_to_json(plan);
  j["dataset_digest"] = dataset_digest(backdoor_dataset);
  if (!config_digest.empty()) j["config_digest"] = config_digest;

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : backdoor_dataset.samples) {
    const AudioSample* src = source_dataset.find(s.id);
    nlohmann::json r;
    r["id"] = s.id;
    r["label"] = s.label;
    r["provenance"] = s.provenance == Provenance::poisoned ? "poisoned" : "clean";
    r["trigger_id"] = s.trigger_id ? *s.trigger_id : "";
    r["source_label"] = src ? src->label : s.label;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write poison manifest '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorCode::io, "short write on poison manifest '" + path + "'");
}

PoisonManifest read_poison_manifest(const std::string& path,
                                    const LabeledDataset* source_dataset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read poison manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "poison manifest '" + path + "': " + e.what());
  }

  PoisonManifest m;
  try {
    if (j.at("version").get<int>() != 1) {
      fail(ErrorCode::schema, "poison manifest version unsupported");
    }
    m.plan = plan_from_json(j.at("plan"));
    m.dataset_digest = j.at("dataset_digest").get<std::string>();
    m.config_digest = j.value("config_digest", "");
    for (const auto& r : j.at("rows")) {
      ProvenanceRow row;
      row.id = r.at("id").get<std::string>();
      row.label = r.at("label").get<int>();
      std::string prov = r.at("provenance").get<std::string>();
      if (prov == "poisoned") {
        row.provenance = Provenance::poisoned;
      } else if (prov == "clean") {
        row.provenance = Provenance::clean;
      } else {
        fail(ErrorCode::schema, "row '" + row.id + "': bad provenance '" + prov + "'");
      }
      row.trigger_id = r.at("trigger_id").get<std::string>();
      row.source_label = r.at("source_label").get<int>();
      m.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, "poison manifest '" + path + "': " + e.what());
  }

  // Internal consistency: every planned id must appear as a poisoned row
  // carrying the plan's trigger and target label.
  std::unordered_set<std::string> planned(m.plan.poison_ids.begin(),
                                          m.plan.poison_ids.end());
  std::string want_trigger = m.plan.trigger.trigger_id();
  size_t poisoned_rows = 0;
  for (const auto& row : m.rows) {
    bool is_planned = planned.count(row.id) > 0;
    bool is_poisoned = row.provenance == Provenance::poisoned;
    if (is_planned != is_poisoned) {
      fail(ErrorCode::schema,
           "row '" + row.id + "' provenance disagrees with the plan");
    }
    if (is_poisoned) {
      ++poisoned_rows;
      if (row.label != m.plan.target_label) {
        fail(ErrorCode::schema,
             "poisoned row '" + row.id + "' is not relabeled to the target");
      }
      if (row.trigger_id != want_trigger) {
        fail(ErrorCode::schema,
             "poisoned row '" + row.id + "' carries trigger '" + row.trigger_id +
                 "', plan says '" + want_trigger + "'");
      }
    }
    if (source_dataset != nullptr && source_dataset->find(row.id) == nullptr) {
      fail(ErrorCode::schema,
           "row '" + row.id + "' does not exist in the source dataset");
    }
  }
  if (poisoned_rows != m.plan.poison_ids.size()) {
    fail(ErrorCode::schema, "poisoned row count disagrees with the plan");
  }
  return m;
}

}  // namespace sblab
