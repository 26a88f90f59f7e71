#pragma once

#include <cstdint>
#include <string>

#include "core/dataset.hpp"

namespace sblab {

// Synthesizes the bundled toy corpus: every class has its own fundamental,
// harmonic profile and modulation rate; every speaker has its own spectral
// tilt, resonance and pitch scale. Entirely deterministic per seed, so the
// whole acceptance suite runs without downloading any real speech.
struct CorpusConfig {
  int num_classes = 8;
  int samples_per_class = 100;
  int num_speakers = 10;
  double seconds = 1.0;
  uint64_t seed = 0x5eed;

  void validate() const;
};

LabeledDataset make_corpus(const CorpusConfig& config);

// Writes one WAV per sample plus the manifest and label vocabulary.
// Returns the manifest path.
std::string write_corpus(const LabeledDataset& corpus, const std::string& dir,
                         const std::string& manifest_name = "corpus.csv");

}  // namespace sblab
