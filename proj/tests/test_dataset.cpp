#include <algorithm>
#include <set>

#include "core/corpus.hpp"
#include "core/dataset.hpp"
#include "core/errors.hpp"
#include "doctest.h"
#include "support/test_util.hpp"

using namespace sblab;
using testutil::TempDir;

TEST_CASE("corpus write then load reproduces the dataset digest") {
  TempDir dir;
  LabeledDataset corpus = testutil::tiny_corpus(3, 5, 0.3);
  std::string manifest = write_corpus(corpus, dir.path());

  LabeledDataset back = load_dataset(manifest);
  REQUIRE(back.size() == corpus.size());
  CHECK(back.num_classes == corpus.num_classes);
  CHECK(back.label_names == corpus.label_names);
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back.samples[i].id == corpus.samples[i].id);
    CHECK(back.samples[i].label == corpus.samples[i].label);
    CHECK(back.samples[i].speaker_id == corpus.samples[i].speaker_id);
  }
  // float32 WAVs round-trip bit exact, so the content digest must too.
  CHECK(dataset_digest(back) == dataset_digest(corpus));
}

TEST_CASE("load_dataset fails cleanly on a missing manifest") {
  TempDir dir;
  CHECK_THROWS_WITH_AS(load_dataset(dir.file("nope.csv")),
                       doctest::Contains("nope.csv"), Error);
}

TEST_CASE("split is deterministic, disjoint and order preserving") {
  LabeledDataset corpus = testutil::make_noise_dataset(4, 10, 5);
  auto [train_a, test_a] = split_dataset(corpus, 0.8, 99);
  auto [train_b, test_b] = split_dataset(corpus, 0.8, 99);

  CHECK(train_a.size() == 32);  // floor(0.8 * 40)
  CHECK(test_a.size() == 8);
  CHECK(train_a.role == DatasetRole::clean_train);
  CHECK(test_a.role == DatasetRole::clean_test);

  auto ids = [](const LabeledDataset& d) {
    std::vector<std::string> out;
    for (const auto& s : d.samples) out.push_back(s.id);
    return out;
  };
  CHECK(ids(train_a) == ids(train_b));
  CHECK(ids(test_a) == ids(test_b));

  std::vector<std::string> train_id_list = ids(train_a);
  std::set<std::string> train_ids(train_id_list.begin(), train_id_list.end());
  for (const auto& id : ids(test_a)) CHECK(train_ids.count(id) == 0);
  CHECK(train_ids.size() + test_a.size() == corpus.size());

  // Both sides keep the source ordering.
  auto index_of = [&](const std::string& id) {
    for (size_t i = 0; i < corpus.size(); ++i) {
      if (corpus.samples[i].id == id) return i;
    }
    return corpus.size();
  };
  for (const auto& side : {ids(train_a), ids(test_a)}) {
    for (size_t i = 1; i < side.size(); ++i) {
      CHECK(index_of(side[i - 1]) < index_of(side[i]));
    }
  }

  auto [train_c, test_c] = split_dataset(corpus, 0.8, 100);
  CHECK(ids(train_c) != ids(train_a));  // seed changes the membership
}

TEST_CASE("dataset digest reacts to content changes") {
  LabeledDataset d = testutil::make_noise_dataset(2, 4, 8);
  std::string base = dataset_digest(d);
  CHECK(base.size() == 32);

  LabeledDataset label_flip = d;
  label_flip.samples[2].label = 1 - label_flip.samples[2].label;
  CHECK(dataset_digest(label_flip) != base);

  LabeledDataset wave_flip = d;
  wave_flip.samples[5].waveform[10] += 0.001f;
  CHECK(dataset_digest(wave_flip) != base);

  LabeledDataset speaker_flip = d;
  speaker_flip.samples[0].speaker_id = "other";
  CHECK(dataset_digest(speaker_flip) != base);
}

TEST_CASE("validate_dataset rejects duplicate ids and bad labels") {
  LabeledDataset d = testutil::make_noise_dataset(2, 3, 1);
  CHECK_NOTHROW(validate_dataset(d));

  LabeledDataset dup = d;
  dup.samples[1].id = dup.samples[0].id;
  CHECK_THROWS_AS(validate_dataset(dup), Error);

  LabeledDataset bad_label = d;
  bad_label.samples[0].label = 7;  // out of num_classes range
  CHECK_THROWS_AS(validate_dataset(bad_label), Error);
}

TEST_CASE("write_manifest embeds comments and resolves relative audio paths") {
  TempDir dir;
  LabeledDataset corpus = testutil::tiny_corpus(2, 3, 0.25);
  std::string manifest = write_corpus(corpus, dir.path());

  std::ifstream in(manifest);
  std::string first_line;
  std::getline(in, first_line);
  CHECK(first_line.rfind("#", 0) == 0);  // directive/comment header

  // Loading from a different working directory still works because paths
  // resolve against the manifest location.
  LabeledDataset back = load_dataset(manifest);
  CHECK(back.size() == corpus.size());
}
