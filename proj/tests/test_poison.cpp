#include <algorithm>
#include <map>
#include <set>

#include "core/errors.hpp"
#include "core/poison.hpp"
#include "doctest.h"
#include "support/test_util.hpp"

using namespace sblab;
using testutil::TempDir;

namespace {

const TriggerSpec kTrigger = TriggerSpec::surrogate({1.25, 0.7, 1.6});

bool is_prefix(const std::vector<std::string>& small,
               const std::vector<std::string>& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.begin());
}

}  // namespace

TEST_CASE("poison subset size floors and promotes") {
  CHECK(poison_subset_size(0.0, 100) == 0);
  CHECK(poison_subset_size(0.01, 800) == 8);
  CHECK(poison_subset_size(0.05, 100) == 5);
  CHECK(poison_subset_size(0.033, 100) == 3);   // floor(3.3)
  CHECK(poison_subset_size(0.001, 100) == 1);   // floor gives 0, promoted
  CHECK(poison_subset_size(0.0001, 50) == 1);
  CHECK(poison_subset_size(1.0, 100) == 100);
  CHECK(poison_subset_size(0.5, 0) == 0);
  CHECK_THROWS_AS(poison_subset_size(-0.1, 100), Error);
  CHECK_THROWS_AS(poison_subset_size(1.5, 100), Error);
}

TEST_CASE("selection respects the eligible pool and is deterministic") {
  LabeledDataset data = testutil::make_noise_dataset(4, 10, 21);
  PoisonPlan plan = select_poison_subset(data, 0.1, 2, 99, true, kTrigger);

  CHECK(plan.poison_count() == 4);  // floor(0.1 * 40)
  CHECK(plan.target_label == 2);
  CHECK(plan.poisoning_rate == 0.1);
  CHECK(plan.seed == 99);
  CHECK(plan.exclude_target_class);

  std::set<std::string> unique(plan.poison_ids.begin(), plan.poison_ids.end());
  CHECK(unique.size() == plan.poison_ids.size());
  for (const auto& id : plan.poison_ids) {
    const AudioSample* s = data.find(id);
    REQUIRE(s != nullptr);
    CHECK(s->label != 2);  // target class never poisoned when excluded
  }

  PoisonPlan again = select_poison_subset(data, 0.1, 2, 99, true, kTrigger);
  CHECK(again.poison_ids == plan.poison_ids);

  PoisonPlan other_seed = select_poison_subset(data, 0.1, 2, 100, true, kTrigger);
  CHECK(other_seed.poison_ids != plan.poison_ids);
}

TEST_CASE("subsets nest across rates for a fixed seed") {
  LabeledDataset data = testutil::make_noise_dataset(4, 25, 33);
  std::vector<double> rates = {0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<std::vector<std::string>> selections;
  for (double rate : rates) {
    selections.push_back(
        select_poison_subset(data, rate, 0, 7, true, kTrigger).poison_ids);
  }
  for (size_t i = 1; i < selections.size(); ++i) {
    CHECK(selections[i - 1].size() < selections[i].size());
    CHECK(is_prefix(selections[i - 1], selections[i]));
  }
}

TEST_CASE("selection frequencies are roughly uniform over the pool") {
  LabeledDataset data = testutil::make_noise_dataset(4, 10, 13);
  std::map<std::string, int> hits;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    PoisonPlan plan = select_poison_subset(
        data, 0.1, 0, static_cast<uint64_t>(t), true, kTrigger);
    for (const auto& id : plan.poison_ids) ++hits[id];
  }
  // 200 trials x 4 picks over 30 eligible ids: ~26.7 expected per id.
  CHECK(hits.size() == 30);
  for (const auto& [id, count] : hits) {
    INFO("id ", id, " picked ", count, " times");
    CHECK(count > 5);
    CHECK(count < 80);
  }
}

TEST_CASE("demanding more poison than the pool holds is a capacity error") {
  LabeledDataset data = testutil::make_noise_dataset(2, 10, 3);
  // rate 1.0 needs 20 samples but only 10 are outside the target class.
  try {
    select_poison_subset(data, 1.0, 0, 1, true, kTrigger);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::capacity);
  }
  // Without the exclusion the full dataset is eligible.
  CHECK_NOTHROW(select_poison_subset(data, 1.0, 0, 1, false, kTrigger));
}

TEST_CASE("build_backdoor_dataset transforms exactly the planned rows") {
  LabeledDataset data = testutil::make_noise_dataset(3, 6, 55, 2000);
  PoisonPlan plan = select_poison_subset(data, 0.2, 1, 4, true, kTrigger);
  REQUIRE(plan.poison_count() == 3);

  LabeledDataset backdoor = build_backdoor_dataset(data, plan);
  CHECK(backdoor.size() == data.size());
  CHECK(backdoor.num_classes == data.num_classes);
  CHECK(backdoor.role == DatasetRole::backdoor_train);

  std::set<std::string> planned(plan.poison_ids.begin(), plan.poison_ids.end());
  size_t poisoned_count = 0;
  for (size_t i = 0; i < backdoor.size(); ++i) {
    const AudioSample& out = backdoor.samples[i];
    const AudioSample& src = data.samples[i];
    CHECK(out.id == src.id);  // order preserved
    if (planned.count(out.id)) {
      ++poisoned_count;
      CHECK(out.label == 1);
      CHECK(out.provenance == Provenance::poisoned);
      CHECK(out.trigger_id == kTrigger.trigger_id());
      CHECK(out.source_id == src.id);
      CHECK(out.waveform != src.waveform);
    } else {
      CHECK(out.label == src.label);
      CHECK(out.provenance == Provenance::clean);
      CHECK(out.waveform == src.waveform);
    }
  }
  CHECK(poisoned_count == plan.poison_count());

  // Multithreaded build produces the identical dataset.
  LabeledDataset parallel = build_backdoor_dataset(data, plan, {}, 4);
  CHECK(dataset_digest(parallel) == dataset_digest(backdoor));
}

TEST_CASE("build rejects plans that do not match the dataset") {
  LabeledDataset data = testutil::make_noise_dataset(2, 4, 5);
  PoisonPlan plan = select_poison_subset(data, 0.25, 0, 2, true, kTrigger);

  PoisonPlan unknown = plan;
  unknown.poison_ids.push_back("ghost");
  CHECK_THROWS_AS(build_backdoor_dataset(data, unknown), Error);

  PoisonPlan duplicate = plan;
  duplicate.poison_ids.push_back(duplicate.poison_ids.front());
  CHECK_THROWS_AS(build_backdoor_dataset(data, duplicate), Error);

  PoisonPlan bad_target = plan;
  bad_target.target_label = 9;
  CHECK_THROWS_AS(build_backdoor_dataset(data, bad_target), Error);
}

TEST_CASE("poison manifest round trips and validates") {
  TempDir dir;
  LabeledDataset data = testutil::make_noise_dataset(3, 5, 70, 1600);
  PoisonPlan plan = select_poison_subset(data, 0.2, 0, 11, true, kTrigger);
  LabeledDataset backdoor = build_backdoor_dataset(data, plan);

  std::string path = dir.file("poison_manifest.json");
  write_poison_manifest(plan, backdoor, data, path, "cfg123");

  PoisonManifest manifest = read_poison_manifest(path, &backdoor);
  CHECK(manifest.plan.poison_ids == plan.poison_ids);
  CHECK(manifest.plan.target_label == plan.target_label);
  CHECK(manifest.plan.poisoning_rate == plan.poisoning_rate);
  CHECK(manifest.plan.seed == plan.seed);
  CHECK(manifest.plan.trigger.trigger_id() == kTrigger.trigger_id());
  CHECK(manifest.dataset_digest == dataset_digest(backdoor));
  CHECK(manifest.config_digest == "cfg123");
  REQUIRE(manifest.rows.size() == backdoor.size());

  size_t poisoned_rows = 0;
  for (const auto& row : manifest.rows) {
    if (row.provenance == Provenance::poisoned) {
      ++poisoned_rows;
      CHECK(row.label == plan.target_label);
      CHECK(row.trigger_id == kTrigger.trigger_id());
      CHECK(row.source_label != plan.target_label);
    } else {
      CHECK(row.trigger_id.empty());
      CHECK(row.label == row.source_label);
    }
  }
  CHECK(poisoned_rows == plan.poison_count());
}

TEST_CASE("tampered poison manifests are rejected") {
  TempDir dir;
  LabeledDataset data = testutil::make_noise_dataset(2, 6, 71, 1600);
  PoisonPlan plan = select_poison_subset(data, 0.25, 0, 3, true, kTrigger);
  LabeledDataset backdoor = build_backdoor_dataset(data, plan);
  std::string path = dir.file("poison_manifest.json");
  write_poison_manifest(plan, backdoor, data, path);

  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  // Flip a poisoned row's label away from the target.
  std::string tampered = text;
  size_t pos = tampered.find("\"provenance\": \"poisoned\"");
  REQUIRE(pos != std::string::npos);
  size_t label_pos = tampered.rfind("\"label\": 0", pos);
  REQUIRE(label_pos != std::string::npos);
  tampered.replace(label_pos, 10, "\"label\": 1");
  std::string bad_path = dir.file("tampered.json");
  testutil::write_file(bad_path, tampered);
  CHECK_THROWS_AS(read_poison_manifest(bad_path, &backdoor), Error);

  CHECK_THROWS_AS(read_poison_manifest(dir.file("missing.json"), nullptr), Error);

  std::string junk_path = dir.file("junk.json");
  testutil::write_file(junk_path, "{\"version\": 99}");
  CHECK_THROWS_AS(read_poison_manifest(junk_path, nullptr), Error);
}
