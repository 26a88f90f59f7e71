#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/audio.hpp"

namespace sblab {

enum class DatasetRole { clean_train, clean_test, backdoor_train, probe };

const char* dataset_role_name(DatasetRole role);

// Ordered sample collection plus label vocabulary. Houses every dataset role
// in the pipeline (clean pool, splits, backdoor dataset, probe sets).
struct LabeledDataset {
  std::vector<AudioSample> samples;
  int num_classes = 0;
  DatasetRole role = DatasetRole::clean_train;
  std::vector<std::string> label_names;  // index -> label string

  size_t size() const { return samples.size(); }
  const AudioSample* find(const std::string& id) const;
};

// Throws when a sample label is out of range or ids collide.
void validate_dataset(const LabeledDataset& dataset);

// Loads a manifest (see README for the format): '#' directive lines, a
// `id,path,label,speaker` header, one row per sample. Labels resolve against
// the sidecar vocabulary (<manifest stem>.vocab); audio is resampled to the
// manifest's declared rate (default canonical 16 kHz).
LabeledDataset load_dataset(const std::string& manifest_path);

// Writes manifest + vocabulary for `dataset`. Waveform files must already
// exist; `audio_paths` maps sample index -> path relative to the manifest.
void write_manifest(const LabeledDataset& dataset,
                    const std::string& manifest_path,
                    const std::vector<std::string>& audio_paths,
                    const std::vector<std::string>& header_comments = {});

std::string vocab_path_for(const std::string& manifest_path);

// Deterministic disjoint split; |train| = floor(fraction * N). Sides keep
// the source ordering.
std::pair<LabeledDataset, LabeledDataset> split_dataset(
    const LabeledDataset& dataset, double train_fraction, uint64_t seed);

// Content digest over ids, labels, speakers, rates and waveform bytes.
std::string dataset_digest(const LabeledDataset& dataset);

}  // namespace sblab
