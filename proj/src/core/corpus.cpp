#include "core/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "core/audio.hpp"
#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace sblab {

void CorpusConfig::validate() const {
  if (num_classes < 2 || num_classes > 16) {
    fail(ErrorCode::invalid_argument, "corpus num_classes must be in [2, 16]");
  }
  if (samples_per_class < 1) {
    fail(ErrorCode::invalid_argument, "corpus samples_per_class must be >= 1");
  }
  if (num_speakers < 1) {
    fail(ErrorCode::invalid_argument, "corpus num_speakers must be >= 1");
  }
  if (!(seconds >= 0.2 && seconds <= 10.0)) {
    fail(ErrorCode::invalid_argument, "corpus seconds must be in [0.2, 10]");
  }
}

namespace {

const char* kWordNames[16] = {"yes",  "no",   "up",   "down", "left",  "right",
                              "on",   "off",  "stop", "go",   "open",  "close",
                              "near", "far",  "high", "low"};

struct ClassVoice {
  double f0 = 0.0;          // fundamental, Hz
  int harmonics = 0;        // partial count
  double am_rate = 0.0;     // amplitude modulation, Hz
  double am_depth = 0.0;
  double odd_bias = 0.0;    // extra weight on odd partials
};

struct SpeakerVoice {
  double tilt = 0.0;        // partial k weighted k^-tilt
  double resonance_hz = 0.0;
  double resonance_gain = 0.0;
  double pitch_scale = 1.0;
};

// Fundamentals spaced ~4 semitones apart so a moderate pitch shift never
// lands one class exactly on another.
ClassVoice class_voice(int label, DetRng& rng) {
  ClassVoice v;
  v.f0 = 110.0 * std::pow(2.0, static_cast<double>(label) / 3.0);
  v.harmonics = 4 + static_cast<int>(rng.uniform_index(6));  // 4..9
  v.am_rate = 2.0 + 1.1 * static_cast<double>(label) + rng.uniform(0.0, 0.5);
  v.am_depth = 0.35 + rng.uniform(0.0, 0.25);
  v.odd_bias = rng.uniform(0.0, 0.8);
  return v;
}

SpeakerVoice speaker_voice(DetRng& rng) {
  SpeakerVoice v;
  v.tilt = 0.3 + rng.uniform(0.0, 0.9);
  v.resonance_hz = 500.0 + rng.uniform(0.0, 3000.0);
  v.resonance_gain = 0.5 + rng.uniform(0.0, 1.5);
  v.pitch_scale = 1.0 + rng.uniform(-0.03, 0.03);
  return v;
}

std::vector<float> render_utterance(const ClassVoice& cls, const SpeakerVoice& spk,
                                    int num_samples, DetRng& rng) {
  const double sr = static_cast<double>(kCanonicalSampleRate);
  const double f0 = cls.f0 * spk.pitch_scale * (1.0 + rng.uniform(-0.02, 0.02));
  const double am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double noise_sigma = rng.uniform(0.002, 0.01);

  struct Partial {
    double freq, amp, phase;
  };
  std::vector<Partial> partials;
  for (int k = 1; k <= cls.harmonics; ++k) {
    double freq = f0 * k;
    if (freq >= sr / 2.0 * 0.95) break;
    double amp = std::pow(static_cast<double>(k), -spk.tilt);
    if (k % 2 == 1) amp *= 1.0 + cls.odd_bias;
    double dr = (freq - spk.resonance_hz) / 400.0;
    amp *= 1.0 + spk.resonance_gain * std::exp(-dr * dr);
    partials.push_back({freq, amp, rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }

  const int attack = static_cast<int>(0.05 * sr);
  const int release = static_cast<int>(0.10 * sr);
  std::vector<float> wave(static_cast<size_t>(num_samples));
  double peak = 0.0;
  for (int t = 0; t < num_samples; ++t) {
    double time = static_cast<double>(t) / sr;
    double tone = 0.0;
    for (const auto& p : partials) {
      tone += p.amp * std::sin(2.0 * std::numbers::pi * p.freq * time + p.phase);
    }
    double am = 1.0 + cls.am_depth *
                          std::sin(2.0 * std::numbers::pi * cls.am_rate * time + am_phase);
    double env = 1.0;
    if (t < attack) env = static_cast<double>(t) / attack;
    if (t >= num_samples - release) {
      env = std::min(env, static_cast<double>(num_samples - t) / release);
    }
    double v = tone * am * env + noise_sigma * rng.normal();
    wave[static_cast<size_t>(t)] = static_cast<float>(v);
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.0) {
    float gain = static_cast<float>(0.35 / peak);
    for (auto& v : wave) v *= gain;
  }
  return wave;
}

}  // namespace

LabeledDataset make_corpus(const CorpusConfig& config) {
  config.validate();
  const int num_samples = static_cast<int>(std::llround(config.seconds * kCanonicalSampleRate));

  std::vector<ClassVoice> classes;
  for (int c = 0; c < config.num_classes; ++c) {
    DetRng rng(mix_seed(config.seed, mix_seed(0xc1a55, static_cast<uint64_t>(c))));
    classes.push_back(class_voice(c, rng));
  }
  std::vector<SpeakerVoice> speakers;
  for (int s = 0; s < config.num_speakers; ++s) {
    DetRng rng(mix_seed(config.seed, mix_seed(0x5bea4e4, static_cast<uint64_t>(s))));
    speakers.push_back(speaker_voice(rng));
  }

  LabeledDataset corpus;
  corpus.num_classes = config.num_classes;
  corpus.role = DatasetRole::clean_train;
  for (int c = 0; c < config.num_classes; ++c) {
    corpus.label_names.push_back(kWordNames[c]);
  }

  for (int c = 0; c < config.num_classes; ++c) {
    for (int i = 0; i < config.samples_per_class; ++i) {
      int spk = (c * config.samples_per_class + i) % config.num_speakers;
      uint64_t sample_key =
          mix_seed(config.seed, mix_seed(static_cast<uint64_t>(c) << 32 | static_cast<uint64_t>(i),
                                         static_cast<uint64_t>(spk)));
      DetRng rng(sample_key);

      AudioSample s;
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-spk%02d-%03d", kWordNames[c], spk, i);
      s.id = idbuf;
      s.waveform = render_utterance(classes[static_cast<size_t>(c)],
                                    speakers[static_cast<size_t>(spk)], num_samples, rng);
      s.sample_rate = kCanonicalSampleRate;
      s.label = c;
      char spkbuf[16];
      std::snprintf(spkbuf, sizeof(spkbuf), "spk%02d", spk);
      s.speaker_id = spkbuf;
      corpus.samples.push_back(std::move(s));
    }
  }
  validate_dataset(corpus);
  return corpus;
}

std::string write_corpus(const LabeledDataset& corpus, const std::string& dir,
                         const std::string& manifest_name) {
  fs::path root(dir);
  fs::path audio_dir = root / "audio";
  std::error_code ec;
  fs::create_directories(audio_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create corpus directory '" + dir + "'");

  std::vector<std::string> rel_paths;
  rel_paths.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) {
    std::string rel = "audio/" + s.id + ".wav";
    write_wav_float32((root / rel).string(), s.waveform, s.sample_rate);
    rel_paths.push_back(rel);
  }

  std::string manifest = (root / manifest_name).string();
  write_manifest(corpus, manifest, rel_paths);
  return manifest;
}

}  // namespace sblab
