#pragma once

#include <optional>
#include <string>
#include <vector>

namespace sblab {

// All audio inside the laboratory lives at this rate; loaders resample on
// the way in so trigger math never has to branch on rate.
constexpr int kCanonicalSampleRate = 16000;

enum class Provenance { clean, poisoned };

// One utterance. `trigger_id` is set iff provenance == poisoned; `source_id`
// records lineage when the waveform was derived from another sample.
struct AudioSample {
  std::string id;
  std::vector<float> waveform;  // amplitudes in [-1, 1]
  int sample_rate = kCanonicalSampleRate;
  int label = 0;
  std::string speaker_id;
  Provenance provenance = Provenance::clean;
  std::optional<std::string> trigger_id;
  std::optional<std::string> source_id;
};

// Throws contract error when the sample breaks its own invariants
// (empty waveform, non-finite values, poisoned without trigger_id, ...).
void validate_sample(const AudioSample& sample);

// Hard-clip to [-1, 1] and squash non-finite values to 0. Applied after
// every transform before a waveform re-enters the dataset model.
void clip_amplitude(std::vector<float>& waveform);

// RIFF WAV, mono, PCM16 or IEEE float32.
std::vector<float> read_wav(const std::string& path, int* sample_rate_out);
void write_wav_float32(const std::string& path, const std::vector<float>& waveform,
                       int sample_rate);
void write_wav_pcm16(const std::string& path, const std::vector<float>& waveform,
                     int sample_rate);

// Linear-interpolation resampler; output length = round(n * to / from).
std::vector<float> resample(const std::vector<float>& waveform, int from_rate,
                            int to_rate);

}  // namespace sblab
