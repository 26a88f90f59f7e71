// Exercises the shared library exactly as an external consumer would: only
// sblab.h, no internal headers.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sblab.h"

namespace {

struct CTempDir {
  std::string path;
  CTempDir() {
    char buf[] = "/tmp/sblab-capi-XXXXXX";
    char* p = ::mkdtemp(buf);
    REQUIRE(p != nullptr);
    path = p;
  }
  ~CTempDir() { std::filesystem::remove_all(path); }
};

std::string take_string(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  sblab_string_free(s);
  return out;
}

const char* kSurrogateTriggerJson =
    "{\"kind\":\"surrogate_identity_shift\","
    "\"shift\":{\"pitch_ratio\":1.25,\"low_band_gain\":0.7,"
    "\"high_band_gain\":1.6}}";

}  // namespace

TEST_CASE("version and error channel") {
  const char* version = sblab_version();
  REQUIRE(version != nullptr);
  CHECK(std::string(version).size() > 0);
  CHECK(sblab_last_error() != nullptr);
}

TEST_CASE("NULL arguments are rejected by name") {
  sblab_dataset* ds = nullptr;
  CHECK(sblab_dataset_load(nullptr, &ds) == SBLAB_E_INVALID_ARGUMENT);
  CHECK(std::string(sblab_last_error()).find("manifest_path") != std::string::npos);
  CHECK(ds == nullptr);

  size_t n = 0;
  CHECK(sblab_dataset_size(nullptr, &n) == SBLAB_E_INVALID_ARGUMENT);

  sblab_trigger* trig = nullptr;
  CHECK(sblab_trigger_from_json(kSurrogateTriggerJson, nullptr) ==
        SBLAB_E_INVALID_ARGUMENT);
  CHECK(sblab_trigger_from_json(nullptr, &trig) == SBLAB_E_INVALID_ARGUMENT);
  CHECK(trig == nullptr);
}

TEST_CASE("trigger construction and identity") {
  sblab_trigger* trig = nullptr;
  REQUIRE(sblab_trigger_from_json(kSurrogateTriggerJson, &trig) == SBLAB_OK);
  char* id = nullptr;
  REQUIRE(sblab_trigger_id(trig, &id) == SBLAB_OK);
  CHECK(take_string(id).rfind("sur-", 0) == 0);
  sblab_trigger_free(trig);

  sblab_trigger* bad = nullptr;
  CHECK(sblab_trigger_from_json("{nope", &bad) == SBLAB_E_FORMAT);
  CHECK(bad == nullptr);
  CHECK(sblab_trigger_from_json("{\"kind\":\"sorcery\"}", &bad) != SBLAB_OK);
  CHECK(bad == nullptr);
}

TEST_CASE("attack workflow through opaque handles") {
  CTempDir tmp;

  char* manifest_raw = nullptr;
  REQUIRE(sblab_mkcorpus(
              "{\"num_classes\":3,\"samples_per_class\":6,\"num_speakers\":3,"
              "\"seconds\":0.4,\"seed\":11}",
              (tmp.path + "/corpus").c_str(), &manifest_raw) == SBLAB_OK);
  std::string manifest = take_string(manifest_raw);

  sblab_dataset* corpus = nullptr;
  REQUIRE(sblab_dataset_load(manifest.c_str(), &corpus) == SBLAB_OK);
  size_t n = 0;
  REQUIRE(sblab_dataset_size(corpus, &n) == SBLAB_OK);
  CHECK(n == 18);
  int classes = 0;
  REQUIRE(sblab_dataset_num_classes(corpus, &classes) == SBLAB_OK);
  CHECK(classes == 3);
  char* digest_raw = nullptr;
  REQUIRE(sblab_dataset_digest(corpus, &digest_raw) == SBLAB_OK);
  std::string corpus_digest = take_string(digest_raw);
  CHECK(corpus_digest.size() == 32);

  sblab_dataset* train = nullptr;
  sblab_dataset* test = nullptr;
  REQUIRE(sblab_dataset_split(corpus, 0.75, 3, &train, &test) == SBLAB_OK);
  size_t n_train = 0, n_test = 0;
  REQUIRE(sblab_dataset_size(train, &n_train) == SBLAB_OK);
  REQUIRE(sblab_dataset_size(test, &n_test) == SBLAB_OK);
  CHECK(n_train == 13);
  CHECK(n_test == 5);

  sblab_trigger* trig = nullptr;
  REQUIRE(sblab_trigger_from_json(kSurrogateTriggerJson, &trig) == SBLAB_OK);

  sblab_plan* plan = nullptr;
  REQUIRE(sblab_plan_select(train, 0.25, 0, 7, 1, trig, &plan) == SBLAB_OK);
  size_t planned = 0;
  REQUIRE(sblab_plan_count(plan, &planned) == SBLAB_OK);
  CHECK(planned == 3);
  char* first_id = nullptr;
  REQUIRE(sblab_plan_poison_id(plan, 0, &first_id) == SBLAB_OK);
  CHECK(!take_string(first_id).empty());
  char* oob = nullptr;
  CHECK(sblab_plan_poison_id(plan, 99, &oob) == SBLAB_E_INVALID_ARGUMENT);
  CHECK(oob == nullptr);

  sblab_dataset* backdoor = nullptr;
  REQUIRE(sblab_build_backdoor(train, plan, nullptr, 2, &backdoor) == SBLAB_OK);
  size_t n_backdoor = 0;
  REQUIRE(sblab_dataset_size(backdoor, &n_backdoor) == SBLAB_OK);
  CHECK(n_backdoor == n_train);
  REQUIRE(sblab_dataset_digest(backdoor, &digest_raw) == SBLAB_OK);
  std::string train_digest;
  {
    char* raw = nullptr;
    REQUIRE(sblab_dataset_digest(train, &raw) == SBLAB_OK);
    train_digest = take_string(raw);
  }
  CHECK(take_string(digest_raw) != train_digest);

  sblab_model* model = nullptr;
  REQUIRE(sblab_train(backdoor,
                      "{\"architecture\":\"small_conv\","
                      "\"input_features\":\"log_mel\",\"n_mels\":12,"
                      "\"num_classes\":3,\"conv1_channels\":2,"
                      "\"conv2_channels\":4,\"hidden_units\":16}",
                      "{\"optimizer\":\"sgd\",\"learning_rate\":0.02,"
                      "\"batch_size\":8,\"epochs\":2,\"seed\":1,"
                      "\"loss\":\"cross_entropy\"}",
                      &model) == SBLAB_OK);

  std::string checkpoint = tmp.path + "/model.json";
  REQUIRE(sblab_model_save(model, checkpoint.c_str()) == SBLAB_OK);
  sblab_model* reloaded = nullptr;
  REQUIRE(sblab_model_load(checkpoint.c_str(), &reloaded) == SBLAB_OK);

  const double tau = 6.283185307179586;
  std::vector<float> sine(4800);
  for (size_t i = 0; i < sine.size(); ++i) {
    sine[i] = 0.4f * static_cast<float>(
                         std::sin(tau * 500.0 * static_cast<double>(i) / 16000.0));
  }
  int label = -1;
  REQUIRE(sblab_model_predict(reloaded, sine.data(), sine.size(), 16000, &label) ==
          SBLAB_OK);
  CHECK(label >= 0);
  CHECK(label < 3);
  CHECK(sblab_model_predict(reloaded, sine.data(), sine.size(), 8000, &label) !=
        SBLAB_OK);

  sblab_report* report = nullptr;
  REQUIRE(sblab_evaluate(reloaded, test, trig, 0, nullptr, &report) == SBLAB_OK);
  double ba = -1.0, asr = -1.0;
  REQUIRE(sblab_report_benign_accuracy(report, &ba) == SBLAB_OK);
  REQUIRE(sblab_report_attack_success_rate(report, &asr) == SBLAB_OK);
  CHECK(ba >= 0.0);
  CHECK(ba <= 1.0);
  CHECK(asr >= 0.0);
  CHECK(asr <= 1.0);
  char* report_json_raw = nullptr;
  REQUIRE(sblab_report_json(report, &report_json_raw) == SBLAB_OK);
  std::string report_json = take_string(report_json_raw);
  CHECK(report_json.find("benign_accuracy") != std::string::npos);
  CHECK(nlohmann::json::parse(report_json).contains("per_sample"));

  sblab_curve* curve = nullptr;
  REQUIRE(sblab_defense_curve(reloaded, train, test, trig, 0, 1, 9, nullptr,
                              &curve) == SBLAB_OK);
  size_t points = 0;
  REQUIRE(sblab_curve_length(curve, &points) == SBLAB_OK);
  CHECK(points == 2);
  int epoch = -1;
  double curve_asr = -1.0, curve_ba = -1.0;
  REQUIRE(sblab_curve_point(curve, 1, &epoch, &curve_asr, &curve_ba) == SBLAB_OK);
  CHECK(epoch == 1);
  CHECK(curve_asr >= 0.0);
  CHECK(curve_ba >= 0.0);
  CHECK(sblab_curve_point(curve, 5, &epoch, &curve_asr, &curve_ba) ==
        SBLAB_E_INVALID_ARGUMENT);

  sblab_curve_free(curve);
  sblab_report_free(report);
  sblab_model_free(reloaded);
  sblab_model_free(model);
  sblab_dataset_free(backdoor);
  sblab_plan_free(plan);
  sblab_trigger_free(trig);
  sblab_dataset_free(test);
  sblab_dataset_free(train);
  sblab_dataset_free(corpus);
}

TEST_CASE("stage runner over a config file") {
  CTempDir tmp;
  nlohmann::json cfg = {
      {"schema_version", 1},
      {"dataset_manifest", "corpus/corpus.csv"},
      {"output_dir", "out"},
      {"split", {{"train_fraction", 0.8}, {"seed", 5}}},
      {"poison",
       {{"rate", 0.2},
        {"target_label", 0},
        {"exclude_target_class", true},
        {"seed", 7},
        {"trigger", nlohmann::json::parse(kSurrogateTriggerJson)}}},
      {"model",
       {{"architecture", "small_conv"},
        {"input_features", "log_mel"},
        {"n_mels", 12},
        {"num_classes", 3},
        {"conv1_channels", 2},
        {"conv2_channels", 4},
        {"hidden_units", 16}}},
      {"train",
       {{"optimizer", "sgd"},
        {"learning_rate", 0.02},
        {"batch_size", 8},
        {"epochs", 1},
        {"seed", 1},
        {"loss", "cross_entropy"}}},
      {"eval", {{"seeds", {1}}}},
      {"corpus",
       {{"num_classes", 3},
        {"samples_per_class", 8},
        {"num_speakers", 3},
        {"seconds", 0.4},
        {"seed", 11}}}};
  std::string cfg_path = tmp.path + "/experiment.json";
  {
    std::ofstream out(cfg_path);
    out << cfg.dump(2) << "\n";
  }

  char* summary_raw = nullptr;
  REQUIRE(sblab_run_stage("mkcorpus", cfg_path.c_str(), nullptr, &summary_raw) ==
          SBLAB_OK);
  CHECK(take_string(summary_raw).find("synthesized") != std::string::npos);

  REQUIRE(sblab_run_stage("poison", cfg_path.c_str(), "{\"dry_run\":true}",
                          &summary_raw) == SBLAB_OK);
  CHECK(take_string(summary_raw).rfind("dry run", 0) == 0);

  CHECK(sblab_run_stage("transmogrify", cfg_path.c_str(), nullptr, &summary_raw) ==
        SBLAB_E_INVALID_ARGUMENT);
  CHECK(sblab_run_stage("poison", cfg_path.c_str(), "{\"seed\":\"x\"}",
                        &summary_raw) == SBLAB_E_SCHEMA);
}
