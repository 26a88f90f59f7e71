#pragma once

#include <sys/stat.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "core/audio.hpp"
#include "core/corpus.hpp"
#include "core/dataset.hpp"
#include "core/rng.hpp"

namespace testutil {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "sblab-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

inline std::vector<float> make_tone(double freq_hz, double seconds = 0.5,
                                    int sample_rate = sblab::kCanonicalSampleRate,
                                    double amplitude = 0.3) {
  size_t n = static_cast<size_t>(seconds * sample_rate);
  std::vector<float> wave(n);
  for (size_t i = 0; i < n; ++i) {
    wave[i] = static_cast<float>(
        amplitude * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / sample_rate));
  }
  return wave;
}

inline std::vector<float> make_noise(size_t n, uint64_t seed, double amplitude = 0.3) {
  sblab::DetRng rng(seed);
  std::vector<float> wave(n);
  for (auto& v : wave) v = static_cast<float>(rng.uniform(-amplitude, amplitude));
  return wave;
}

inline sblab::AudioSample make_sample(const std::string& id, int label,
                                      std::vector<float> waveform,
                                      const std::string& speaker = "spk0") {
  sblab::AudioSample s;
  s.id = id;
  s.label = label;
  s.waveform = std::move(waveform);
  s.speaker_id = speaker;
  return s;
}

// Random-noise dataset for structural tests (selection, counting,
// manifests). Not learnable; use tiny_corpus for anything that trains.
inline sblab::LabeledDataset make_noise_dataset(int num_classes, int per_class,
                                                uint64_t seed,
                                                size_t waveform_len = 800) {
  sblab::LabeledDataset d;
  d.num_classes = num_classes;
  for (int c = 0; c < num_classes; ++c) d.label_names.push_back("class" + std::to_string(c));
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      uint64_t k = seed ^ (static_cast<uint64_t>(c) << 32) ^ static_cast<uint64_t>(i);
      std::string id = "c" + std::to_string(c) + "-" + std::to_string(i);
      d.samples.push_back(make_sample(id, c, make_noise(waveform_len, k),
                                      "spk" + std::to_string(i % 3)));
    }
  }
  return d;
}

// Small but learnable synthetic speech. Kept short so suites that train
// finish in seconds.
inline sblab::LabeledDataset tiny_corpus(int num_classes = 3, int per_class = 8,
                                         double seconds = 0.4, uint64_t seed = 77) {
  sblab::CorpusConfig config;
  config.num_classes = num_classes;
  config.samples_per_class = per_class;
  config.num_speakers = 3;
  config.seconds = seconds;
  config.seed = seed;
  return sblab::make_corpus(config);
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline void write_script(const std::string& path, const std::string& body) {
  write_file(path, "#!/bin/sh\n" + body);
  ::chmod(path.c_str(), 0755);
}

}  // namespace testutil
