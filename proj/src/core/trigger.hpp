#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/audio.hpp"
#include "core/dsp.hpp"

namespace sblab {

class VCAdapter;

enum class TriggerKind {
  none,
  badnets_spectrogram,
  surrogate_identity_shift,
  voice_conversion,
};

const char* trigger_kind_name(TriggerKind kind);
TriggerKind trigger_kind_from_name(const std::string& name);

// Deterministic stand-in for voice conversion: fixed pitch-ratio spectral
// remap plus a mild band re-weighting, so hermetic tests and the bundled
// corpus never need an external converter. Not an attack under study.
struct SurrogateShiftParams {
  double pitch_ratio = 1.25;     // [0.5, 2.0]
  double low_band_gain = 0.7;    // [0.25, 4.0], below 1 kHz
  double high_band_gain = 1.6;   // [0.25, 4.0], above 3 kHz
};

// Declarative trigger description. Equal specs serialize to equal canonical
// JSON and therefore hash to equal trigger ids.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::none;
  std::optional<std::string> target_speech_path;  // voice_conversion only
  std::optional<std::string> target_speaker_id;
  double pattern_amplitude = 0.0;  // badnets only
  SurrogateShiftParams shift;      // surrogate only

  void validate() const;
  std::string canonical_json() const;
  std::string trigger_id() const;

  static TriggerSpec from_json(const std::string& json_text);
  static TriggerSpec none();
  static TriggerSpec badnets(double pattern_amplitude);
  static TriggerSpec surrogate(const SurrogateShiftParams& params);
  static TriggerSpec voice_conversion(const std::string& target_speech_path,
                                      const std::string& target_speaker_id = "");
};

bool operator==(const SurrogateShiftParams& a, const SurrogateShiftParams& b);
bool operator==(const TriggerSpec& a, const TriggerSpec& b);

// Ambient dependencies for trigger application. The adapter is only needed
// for voice_conversion specs.
struct TriggerContext {
  VCAdapter* vc_adapter = nullptr;
  StftParams stft;
};

// Number of spectrogram bins the baseline overwrites (the "lowest ten
// frequencies"; bins 0-9 of 257 at the default frame length).
constexpr size_t kBadnetsBins = 10;

// Stamps a fixed comb of cosine lines across the lowest kBadnetsBins bins,
// each analyzing to `pattern_amplitude` in every frame. Line frequencies sit
// nearest frame bins 1/3/5/7, snapped to reflection-symmetric values
// m = round(2k(n-1)/frame_length) so edge frames match interior frames. The
// input's own component along each line is replaced, which makes the
// operation idempotent up to rounding; bins >= kBadnetsBins move by at most
// ~1e-3 relative. Rejects waveforms shorter than one frame.
std::vector<float> badnets_trigger(const std::vector<float>& waveform,
                                   double pattern_amplitude,
                                   const StftParams& params = {});

std::vector<float> surrogate_identity_shift(const std::vector<float>& waveform,
                                            const SurrogateShiftParams& params,
                                            const StftParams& stft_params = {});

// Applies `spec` to a sample. kind=none is an identity passthrough (no
// provenance bookkeeping); every other kind returns a poisoned sample with
// the same id/label, trigger_id set and lineage recorded in source_id.
AudioSample apply_trigger(const AudioSample& sample, const TriggerSpec& spec,
                          const TriggerContext& ctx = {});

// Default BadNets amplitude: 0.5 x the 95th-percentile STFT bin magnitude of
// the dataset (sampled over at most 64 waveforms).
double default_badnets_amplitude(const std::vector<const AudioSample*>& samples,
                                 const StftParams& params = {});

}  // namespace sblab
