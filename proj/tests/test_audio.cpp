#include <cmath>
#include <cstring>
#include <limits>

#include "core/audio.hpp"
#include "core/errors.hpp"
#include "doctest.h"
#include "support/test_util.hpp"

using namespace sblab;
using testutil::TempDir;

TEST_CASE("float32 wav round trip is bit exact") {
  TempDir dir;
  std::vector<float> wave = testutil::make_noise(4097, 42, 0.9);
  wave.push_back(1.0f);
  wave.push_back(-1.0f);
  std::string path = dir.file("roundtrip.wav");
  write_wav_float32(path, wave, 16000);

  int rate = 0;
  std::vector<float> back = read_wav(path, &rate);
  CHECK(rate == 16000);
  REQUIRE(back.size() == wave.size());
  for (size_t i = 0; i < wave.size(); ++i) {
    CHECK(std::memcmp(&back[i], &wave[i], sizeof(float)) == 0);
  }
}

TEST_CASE("pcm16 wav round trip is within quantization error") {
  TempDir dir;
  std::vector<float> wave = testutil::make_noise(1000, 7, 0.8);
  std::string path = dir.file("pcm16.wav");
  write_wav_pcm16(path, wave, 22050);

  int rate = 0;
  std::vector<float> back = read_wav(path, &rate);
  CHECK(rate == 22050);
  REQUIRE(back.size() == wave.size());
  for (size_t i = 0; i < wave.size(); ++i) {
    CHECK(std::abs(back[i] - wave[i]) <= 1.0f / 32767.0f + 1e-6f);
  }
}

TEST_CASE("read_wav reports missing and malformed files") {
  TempDir dir;
  int rate = 0;
  CHECK_THROWS_AS(read_wav(dir.file("absent.wav"), &rate), Error);

  std::string junk = dir.file("junk.wav");
  testutil::write_file(junk, "this is not a riff container");
  CHECK_THROWS_AS(read_wav(junk, &rate), Error);
}

TEST_CASE("resample length and identity") {
  std::vector<float> wave = testutil::make_tone(440.0, 0.25);
  CHECK(resample(wave, 16000, 16000) == wave);

  std::vector<float> up = resample(wave, 16000, 22050);
  CHECK(up.size() ==
        static_cast<size_t>(std::lround(static_cast<double>(wave.size()) * 22050.0 / 16000.0)));

  // A linear ramp must stay linear under linear interpolation.
  std::vector<float> ramp(100);
  for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i) * 0.01f;
  std::vector<float> ramp2 = resample(ramp, 8000, 16000);
  double slope = 0.01 * 8000.0 / 16000.0;
  for (size_t i = 0; i + 2 < ramp2.size(); ++i) {
    CHECK(std::abs(ramp2[i] - slope * static_cast<double>(i)) < 1e-4);
  }
}

TEST_CASE("clip_amplitude clamps and squashes non-finite values") {
  std::vector<float> wave = {0.5f, 1.5f, -2.0f, std::numeric_limits<float>::quiet_NaN(),
                             std::numeric_limits<float>::infinity(), -0.25f};
  clip_amplitude(wave);
  CHECK(wave[0] == 0.5f);
  CHECK(wave[1] == 1.0f);
  CHECK(wave[2] == -1.0f);
  CHECK(wave[3] == 0.0f);
  CHECK(wave[4] == 0.0f);
  CHECK(wave[5] == -0.25f);

  std::vector<float> again = wave;
  clip_amplitude(again);
  CHECK(again == wave);  // idempotent once in range
}

TEST_CASE("validate_sample enforces its invariants") {
  AudioSample ok = testutil::make_sample("a", 0, testutil::make_tone(200.0, 0.05));
  CHECK_NOTHROW(validate_sample(ok));

  AudioSample empty = ok;
  empty.waveform.clear();
  CHECK_THROWS_AS(validate_sample(empty), Error);

  AudioSample nan_sample = ok;
  nan_sample.waveform[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(validate_sample(nan_sample), Error);

  AudioSample poisoned_without_trigger = ok;
  poisoned_without_trigger.provenance = Provenance::poisoned;
  CHECK_THROWS_AS(validate_sample(poisoned_without_trigger), Error);

  AudioSample poisoned_ok = ok;
  poisoned_ok.provenance = Provenance::poisoned;
  poisoned_ok.trigger_id = "sur-abc";
  CHECK_NOTHROW(validate_sample(poisoned_ok));
}
