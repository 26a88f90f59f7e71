#include "core/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace sblab {

const char* dataset_role_name(DatasetRole role) {
  switch (role) {
    case DatasetRole::clean_train: return "clean_train";
    case DatasetRole::clean_test: return "clean_test";
    case DatasetRole::backdoor_train: return "backdoor_train";
    case DatasetRole::probe: return "probe";
  }
  return "unknown";
}

const AudioSample* LabeledDataset::find(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return &s;
  return nullptr;
}

void validate_dataset(const LabeledDataset& dataset) {
  if (dataset.num_classes < 1)
    fail(ErrorCode::contract, "dataset declares no classes");
  std::unordered_set<std::string> seen;
  for (const auto& s : dataset.samples) {
    if (s.label >= dataset.num_classes)
      fail(ErrorCode::contract,
           "sample " + s.id + ": label out of range");
    if (!seen.insert(s.id).second)
      fail(ErrorCode::contract, "duplicate sample id: " + s.id);
  }
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  return out;
}

std::vector<std::string> read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open vocabulary file: " + path);
  std::vector<std::string> labels;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!seen.insert(t).second)
      fail(ErrorCode::schema, "duplicate label in vocabulary: " + t);
    labels.push_back(t);
  }
  if (labels.empty())
    fail(ErrorCode::schema, "vocabulary file declares no labels: " + path);
  return labels;
}

}  // namespace

std::string vocab_path_for(const std::string& manifest_path) {
  fs::path p(manifest_path);
  p.replace_extension(".vocab");
  return p.string();
}

LabeledDataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::io, "cannot open manifest: " + manifest_path);

  fs::path base = fs::path(manifest_path).parent_path();
  std::vector<std::string> vocab = read_vocab(vocab_path_for(manifest_path));
  std::unordered_map<std::string, int> label_index;
  for (size_t i = 0; i < vocab.size(); ++i)
    label_index[vocab[i]] = static_cast<int>(i);

  int target_rate = kCanonicalSampleRate;
  bool header_seen = false;
  LabeledDataset dataset;
  dataset.num_classes = static_cast<int>(vocab.size());
  dataset.label_names = vocab;

  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      auto colon = t.find(':');
      if (colon != std::string::npos) {
        std::string key = trim(t.substr(1, colon - 1));
        if (key == "sample_rate") {
          target_rate = std::stoi(trim(t.substr(colon + 1)));
          if (target_rate <= 0)
            fail(ErrorCode::schema, "manifest declares non-positive rate");
        }
      }
      continue;
    }
    if (!header_seen) {
      if (t != "id,path,label,speaker")
        fail(ErrorCode::schema,
             "manifest header must be 'id,path,label,speaker', got: " + t);
      header_seen = true;
      continue;
    }
    ++row;
    auto fields = split_csv_row(t);
    if (fields.size() != 4)
      fail(ErrorCode::schema, "manifest row " + std::to_string(row) +
                                  ": expected 4 columns");
    AudioSample sample;
    sample.id = fields[0];
    std::string rel_path = fields[1];
    auto it = label_index.find(fields[2]);
    if (it == label_index.end())
      fail(ErrorCode::schema, "manifest row " + std::to_string(row) +
                                  ": label '" + fields[2] +
                                  "' not in vocabulary");
    sample.label = it->second;
    sample.speaker_id = fields[3];

    fs::path audio_path = fs::path(rel_path).is_absolute()
                              ? fs::path(rel_path)
                              : base / rel_path;
    if (!fs::exists(audio_path))
      fail(ErrorCode::io, "manifest row " + std::to_string(row) + " (id " +
                              sample.id + "): missing audio file " +
                              audio_path.string());
    int rate = 0;
    sample.waveform = read_wav(audio_path.string(), &rate);
    if (rate != target_rate)
      sample.waveform = resample(sample.waveform, rate, target_rate);
    sample.sample_rate = target_rate;
    clip_amplitude(sample.waveform);
    dataset.samples.push_back(std::move(sample));
  }
  if (!header_seen)
    fail(ErrorCode::schema, "manifest has no header row: " + manifest_path);

  validate_dataset(dataset);
  return dataset;
}

void write_manifest(const LabeledDataset& dataset,
                    const std::string& manifest_path,
                    const std::vector<std::string>& audio_paths,
                    const std::vector<std::string>& header_comments) {
  if (audio_paths.size() != dataset.samples.size())
    fail(ErrorCode::invalid_argument,
         "write_manifest: path list size mismatch");
  if (dataset.label_names.size() != static_cast<size_t>(dataset.num_classes))
    fail(ErrorCode::invalid_argument,
         "write_manifest: dataset lacks label names");

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write manifest: " + manifest_path);
  out << "# sblab dataset manifest v1\n";
  out << "# sample_rate: " << kCanonicalSampleRate << "\n";
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "id,path,label,speaker\n";
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    out << s.id << ',' << audio_paths[i] << ','
        << dataset.label_names[static_cast<size_t>(s.label)] << ','
        << s.speaker_id << "\n";
  }
  if (!out) fail(ErrorCode::io, "short write: " + manifest_path);

  std::ofstream vout(vocab_path_for(manifest_path), std::ios::trunc);
  if (!vout)
    fail(ErrorCode::io, "cannot write vocabulary for " + manifest_path);
  for (const auto& name : dataset.label_names) vout << name << "\n";
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(
    const LabeledDataset& dataset, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail(ErrorCode::invalid_argument,
         "split: train_fraction must lie in (0,1)");
  if (dataset.samples.empty())
    fail(ErrorCode::invalid_argument, "split: dataset is empty");

  size_t n = dataset.samples.size();
  size_t n_train = static_cast<size_t>(train_fraction * static_cast<double>(n));

  Fnv1a id_hash;
  for (const auto& s : dataset.samples) id_hash.update(s.id);
  DetRng rng(mix_seed(seed, id_hash.value()));

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<bool> in_train(n, false);
  for (size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  LabeledDataset train, test;
  train.num_classes = test.num_classes = dataset.num_classes;
  train.label_names = test.label_names = dataset.label_names;
  train.role = DatasetRole::clean_train;
  test.role = DatasetRole::clean_test;
  for (size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : test).samples.push_back(dataset.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

std::string dataset_digest(const LabeledDataset& dataset) {
  Fnv1a a(0xcbf29ce484222325ULL);
  Fnv1a b(0x84222325cbf29ce4ULL);
  auto feed = [&](auto&& value) {
    a.update(value);
    b.update(value);
  };
  feed(static_cast<uint64_t>(dataset.num_classes));
  for (const auto& s : dataset.samples) {
    feed(s.id);
    feed(static_cast<uint64_t>(s.label));
    feed(s.speaker_id);
    feed(static_cast<uint64_t>(s.sample_rate));
    feed(static_cast<uint64_t>(s.provenance == Provenance::poisoned));
    if (s.trigger_id) feed(*s.trigger_id);
    feed(s.waveform);
  }
  return to_hex(a.value()) + to_hex(b.value());
}

}  // namespace sblab
