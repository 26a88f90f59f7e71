#include "core/trigger.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/vc_adapter.hpp"

using nlohmann::json;

namespace sblab {

const char* trigger_kind_name(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::none: return "none";
    case TriggerKind::badnets_spectrogram: return "badnets_spectrogram";
    case TriggerKind::surrogate_identity_shift:
      return "surrogate_identity_shift";
    case TriggerKind::voice_conversion: return "voice_conversion";
  }
  return "unknown";
}

TriggerKind trigger_kind_from_name(const std::string& name) {
  if (name == "none") return TriggerKind::none;
  if (name == "badnets_spectrogram") return TriggerKind::badnets_spectrogram;
  if (name == "surrogate_identity_shift")
    return TriggerKind::surrogate_identity_shift;
  if (name == "voice_conversion") return TriggerKind::voice_conversion;
  fail(ErrorCode::invalid_argument, "unknown trigger kind: " + name);
}

void TriggerSpec::validate() const {
  switch (kind) {
    case TriggerKind::none:
      break;
    case TriggerKind::badnets_spectrogram:
      if (!(pattern_amplitude >= 0.0) || !std::isfinite(pattern_amplitude))
        fail(ErrorCode::invalid_argument,
             "badnets pattern_amplitude must be finite and >= 0");
      break;
    case TriggerKind::surrogate_identity_shift:
      if (!(shift.pitch_ratio >= 0.5 && shift.pitch_ratio <= 2.0))
        fail(ErrorCode::invalid_argument,
             "surrogate pitch_ratio outside [0.5, 2.0]");
      if (!(shift.low_band_gain >= 0.25 && shift.low_band_gain <= 4.0) ||
          !(shift.high_band_gain >= 0.25 && shift.high_band_gain <= 4.0))
        fail(ErrorCode::invalid_argument,
             "surrogate band gains outside [0.25, 4.0]");
      break;
    case TriggerKind::voice_conversion:
      if (!target_speech_path || target_speech_path->empty())
        fail(ErrorCode::invalid_argument,
             "voice_conversion spec requires target_speech");
      break;
  }
}

std::string TriggerSpec::canonical_json() const {
  json j;
  j["kind"] = trigger_kind_name(kind);
  switch (kind) {
    case TriggerKind::none:
      break;
    case TriggerKind::badnets_spectrogram:
      j["pattern_amplitude"] = pattern_amplitude;
      break;
    case TriggerKind::surrogate_identity_shift:
      j["shift"] = {{"pitch_ratio", shift.pitch_ratio},
                    {"low_band_gain", shift.low_band_gain},
                    {"high_band_gain", shift.high_band_gain}};
      break;
    case TriggerKind::voice_conversion:
      j["target_speech"] = target_speech_path.value_or("");
      if (target_speaker_id && !target_speaker_id->empty())
        j["target_speaker"] = *target_speaker_id;
      break;
  }
  return j.dump();
}

std::string TriggerSpec::trigger_id() const {
  static const char* prefix[] = {"non", "bad", "sur", "vc"};
  return std::string(prefix[static_cast<int>(kind)]) + "-" +
         to_hex(fnv1a64(canonical_json()));
}

TriggerSpec TriggerSpec::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("trigger spec is not valid JSON: ") +
                                e.what());
  }
  if (!j.is_object() || !j.contains("kind"))
    fail(ErrorCode::schema, "trigger spec must be an object with a 'kind'");
  TriggerSpec spec;
  spec.kind = trigger_kind_from_name(j.at("kind").get<std::string>());
  switch (spec.kind) {
    case TriggerKind::none:
      break;
    case TriggerKind::badnets_spectrogram:
      spec.pattern_amplitude = j.value("pattern_amplitude", -1.0);
      if (spec.pattern_amplitude < 0.0)
        fail(ErrorCode::schema,
             "badnets spec requires non-negative pattern_amplitude");
      break;
    case TriggerKind::surrogate_identity_shift: {
      if (!j.contains("shift"))
        fail(ErrorCode::schema, "surrogate spec requires 'shift' block");
      const json& s = j.at("shift");
      spec.shift.pitch_ratio = s.value("pitch_ratio", 1.25);
      spec.shift.low_band_gain = s.value("low_band_gain", 0.7);
      spec.shift.high_band_gain = s.value("high_band_gain", 1.6);
      break;
    }
    case TriggerKind::voice_conversion:
      if (!j.contains("target_speech"))
        fail(ErrorCode::schema,
             "voice_conversion spec requires 'target_speech'");
      spec.target_speech_path = j.at("target_speech").get<std::string>();
      if (j.contains("target_speaker"))
        spec.target_speaker_id = j.at("target_speaker").get<std::string>();
      break;
  }
  spec.validate();
  return spec;
}

TriggerSpec TriggerSpec::none() { return TriggerSpec{}; }

TriggerSpec TriggerSpec::badnets(double pattern_amplitude) {
  TriggerSpec spec;
  spec.kind = TriggerKind::badnets_spectrogram;
  spec.pattern_amplitude = pattern_amplitude;
  return spec;
}

TriggerSpec TriggerSpec::surrogate(const SurrogateShiftParams& params) {
  TriggerSpec spec;
  spec.kind = TriggerKind::surrogate_identity_shift;
  spec.shift = params;
  return spec;
}

TriggerSpec TriggerSpec::voice_conversion(const std::string& target_speech_path,
                                          const std::string& target_speaker_id) {
  TriggerSpec spec;
  spec.kind = TriggerKind::voice_conversion;
  spec.target_speech_path = target_speech_path;
  if (!target_speaker_id.empty()) spec.target_speaker_id = target_speaker_id;
  return spec;
}

bool operator==(const SurrogateShiftParams& a, const SurrogateShiftParams& b) {
  return a.pitch_ratio == b.pitch_ratio &&
         a.low_band_gain == b.low_band_gain &&
         a.high_band_gain == b.high_band_gain;
}

bool operator==(const TriggerSpec& a, const TriggerSpec& b) {
  return a.canonical_json() == b.canonical_json();
}

namespace {

constexpr double kBadnetsPi = 3.14159265358979323846;

// Frequencies nearest frame bins 1, 3, 5, 7 that are whole-sample symmetric
// about t = 0 and t = n - 1. They continue smoothly through the analysis
// reflect padding, so edge frames see the stamp exactly like interior frames.
std::vector<size_t> comb_line_indices(size_t n, size_t frame_length) {
  std::vector<size_t> m;
  for (size_t k : {1u, 3u, 5u, 7u})
    m.push_back((2 * k * (n - 1) + frame_length / 2) / frame_length);
  return m;
}

double comb_line(size_t m, size_t t, size_t n) {
  return std::cos(kBadnetsPi * static_cast<double>(m) *
                  static_cast<double>(t) / static_cast<double>(n - 1));
}

}  // namespace

std::vector<float> badnets_trigger(const std::vector<float>& waveform,
                                   double pattern_amplitude,
                                   const StftParams& params) {
  if (!(pattern_amplitude >= 0.0))
    fail(ErrorCode::invalid_argument, "pattern_amplitude must be >= 0");
  if (waveform.size() < params.frame_length)
    fail(ErrorCode::invalid_argument,
         "badnets trigger: waveform shorter than one frame");

  size_t n = waveform.size();
  std::vector<size_t> lines = comb_line_indices(n, params.frame_length);
  size_t c = lines.size();

  // Project the input onto the comb lines, then replace that component with
  // the stamp. Repeating the operation recovers the stamp coefficients and
  // adds zero, so it is idempotent up to rounding.
  std::vector<double> gram(c * c, 0.0);
  std::vector<double> rhs(c, 0.0);
  for (size_t i = 0; i < c; ++i) {
    for (size_t j = i; j < c; ++j) {
      double dot = 0.0;
      for (size_t t = 0; t < n; ++t)
        dot += comb_line(lines[i], t, n) * comb_line(lines[j], t, n);
      gram[i * c + j] = dot;
      gram[j * c + i] = dot;
    }
    double dot = 0.0;
    for (size_t t = 0; t < n; ++t)
      dot += comb_line(lines[i], t, n) * static_cast<double>(waveform[t]);
    rhs[i] = dot;
  }
  for (size_t col = 0; col < c; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < c; ++r)
      if (std::fabs(gram[r * c + col]) > std::fabs(gram[pivot * c + col]))
        pivot = r;
    for (size_t j = 0; j < c; ++j)
      std::swap(gram[col * c + j], gram[pivot * c + j]);
    std::swap(rhs[col], rhs[pivot]);
    for (size_t r = col + 1; r < c; ++r) {
      double f = gram[r * c + col] / gram[col * c + col];
      for (size_t j = col; j < c; ++j) gram[r * c + j] -= f * gram[col * c + j];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> coeff(c);
  for (size_t r = c; r-- > 0;) {
    double v = rhs[r];
    for (size_t j = r + 1; j < c; ++j) v -= gram[r * c + j] * coeff[j];
    coeff[r] = v / gram[r * c + r];
  }

  // An exact-bin cosine of unit amplitude analyzes to half the window sum.
  double window_sum = static_cast<double>(params.frame_length) / 2.0;
  double stamp = pattern_amplitude / (0.5 * window_sum);

  std::vector<float> out(n);
  for (size_t t = 0; t < n; ++t) {
    double acc = waveform[t];
    for (size_t i = 0; i < c; ++i)
      acc += (stamp - coeff[i]) * comb_line(lines[i], t, n);
    out[t] = static_cast<float>(acc);
  }
  clip_amplitude(out);
  return out;
}

namespace {

double band_weight(double freq_hz, const SurrogateShiftParams& p) {
  constexpr double kLowEdge = 1000.0;
  constexpr double kHighEdge = 3000.0;
  if (freq_hz <= kLowEdge) return p.low_band_gain;
  if (freq_hz >= kHighEdge) return p.high_band_gain;
  double t = (freq_hz - kLowEdge) / (kHighEdge - kLowEdge);
  return (1.0 - t) * p.low_band_gain + t * p.high_band_gain;
}

}  // namespace

std::vector<float> surrogate_identity_shift(const std::vector<float>& waveform,
                                            const SurrogateShiftParams& params,
                                            const StftParams& stft_params) {
  TriggerSpec check = TriggerSpec::surrogate(params);
  check.validate();

  Spectrogram spec = stft(waveform, stft_params, kCanonicalSampleRate);
  size_t bins = spec.bins();
  size_t frames = spec.frames();
  double bin_hz = static_cast<double>(kCanonicalSampleRate) /
                  static_cast<double>(spec.frame_length);

  Matrix2D mags(bins, frames);
  Matrix2D phases(bins, frames);
  for (size_t b = 0; b < bins; ++b) {
    // Content at frequency f moves to pitch_ratio*f, so output bin b reads
    // from source position b/ratio.
    double src = static_cast<double>(b) / params.pitch_ratio;
    size_t b0 = static_cast<size_t>(src);
    double frac = src - static_cast<double>(b0);
    double w = band_weight(static_cast<double>(b) * bin_hz, params);
    for (size_t f = 0; f < frames; ++f) {
      double mag = 0.0;
      if (b0 < bins) {
        double m0 = spec.magnitudes(b0, f);
        double m1 = (b0 + 1 < bins) ? spec.magnitudes(b0 + 1, f) : 0.0;
        mag = (1.0 - frac) * m0 + frac * m1;
      }
      size_t nearest = (frac < 0.5 || b0 + 1 >= bins) ? b0 : b0 + 1;
      mags(b, f) = w * mag;
      phases(b, f) = nearest < bins ? spec.phases(nearest, f) : 0.0;
    }
  }
  spec.magnitudes = std::move(mags);
  spec.phases = std::move(phases);

  std::vector<float> out = istft(spec);
  clip_amplitude(out);
  return out;
}

AudioSample apply_trigger(const AudioSample& sample, const TriggerSpec& spec,
                          const TriggerContext& ctx) {
  spec.validate();
  if (spec.kind == TriggerKind::none) return sample;

  AudioSample out = sample;
  switch (spec.kind) {
    case TriggerKind::badnets_spectrogram:
      out.waveform =
          badnets_trigger(sample.waveform, spec.pattern_amplitude, ctx.stft);
      break;
    case TriggerKind::surrogate_identity_shift:
      out.waveform =
          surrogate_identity_shift(sample.waveform, spec.shift, ctx.stft);
      break;
    case TriggerKind::voice_conversion: {
      if (ctx.vc_adapter == nullptr)
        fail(ErrorCode::trigger,
             "voice_conversion trigger requires a configured adapter");
      std::vector<float> converted = ctx.vc_adapter->convert_waveform(
          sample.waveform, sample.sample_rate, *spec.target_speech_path);
      // Duration policy: trim or zero-pad the conversion to source length.
      converted.resize(sample.waveform.size(), 0.0f);
      out.waveform = std::move(converted);
      break;
    }
    case TriggerKind::none:
      break;
  }
  clip_amplitude(out.waveform);
  out.provenance = Provenance::poisoned;
  out.trigger_id = spec.trigger_id();
  out.source_id = sample.id;
  return out;
}

double default_badnets_amplitude(const std::vector<const AudioSample*>& samples,
                                 const StftParams& params) {
  if (samples.empty())
    fail(ErrorCode::invalid_argument,
         "default_badnets_amplitude: no samples given");
  constexpr size_t kMaxWaveforms = 64;
  size_t stride = std::max<size_t>(1, samples.size() / kMaxWaveforms);
  std::vector<double> mags;
  for (size_t i = 0; i < samples.size(); i += stride) {
    Spectrogram spec =
        stft(samples[i]->waveform, params, samples[i]->sample_rate);
    const auto& stored = spec.magnitudes.storage();
    mags.insert(mags.end(), stored.begin(), stored.end());
  }
  size_t idx = static_cast<size_t>(0.95 * static_cast<double>(mags.size()));
  if (idx >= mags.size()) idx = mags.size() - 1;
  std::nth_element(mags.begin(), mags.begin() + static_cast<long>(idx),
                   mags.end());
  return 0.5 * mags[idx];
}

}  // namespace sblab
