#include "core/dsp.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace sblab {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Direct O(n^2) transform for non-power-of-two frames.
void dft_direct(std::vector<std::complex<double>>& a, bool inverse) {
  size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  double sign = inverse ? 1.0 : -1.0;
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      double ang = sign * 2.0 * kPi * static_cast<double>(k) *
                   static_cast<double>(t) / static_cast<double>(n);
      acc += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  a = std::move(out);
}

std::vector<double> hann_window(size_t n) {
  // Periodic form; satisfies constant overlap-add at hop = n/4.
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

// Reflect padding without repeating the edge sample.
std::vector<double> reflect_pad(const std::vector<float>& x, size_t pad) {
  size_t n = x.size();
  std::vector<double> out(n + 2 * pad);
  for (size_t i = 0; i < pad; ++i) out[i] = x[pad - i];
  for (size_t i = 0; i < n; ++i) out[pad + i] = x[i];
  for (size_t i = 0; i < pad; ++i) out[pad + n + i] = x[n - 2 - i];
  return out;
}

}  // namespace

void fft(std::vector<std::complex<double>>& buf, bool inverse) {
  if (buf.empty()) return;
  if (is_power_of_two(buf.size())) {
    fft_pow2(buf, inverse);
  } else {
    dft_direct(buf, inverse);
  }
}

Spectrogram stft(const std::vector<float>& waveform, size_t frame_length,
                 size_t hop_length, int sample_rate) {
  if (hop_length < 1 || frame_length < hop_length)
    fail(ErrorCode::invalid_argument,
         "stft: require frame_length >= hop_length >= 1");
  if (waveform.size() < frame_length)
    fail(ErrorCode::invalid_argument,
         "stft: waveform shorter than one frame");

  size_t pad = frame_length / 2;
  std::vector<double> padded = reflect_pad(waveform, pad);
  size_t num_frames = 1 + (padded.size() - frame_length) / hop_length;
  size_t bins = frame_length / 2 + 1;
  std::vector<double> window = hann_window(frame_length);

  Spectrogram spec;
  spec.magnitudes = Matrix2D(bins, num_frames);
  spec.phases = Matrix2D(bins, num_frames);
  spec.frame_length = frame_length;
  spec.hop_length = hop_length;
  spec.sample_rate = sample_rate;
  spec.num_samples = waveform.size();

  std::vector<std::complex<double>> buf(frame_length);
  for (size_t f = 0; f < num_frames; ++f) {
    size_t start = f * hop_length;
    for (size_t i = 0; i < frame_length; ++i)
      buf[i] = {padded[start + i] * window[i], 0.0};
    fft(buf, false);
    for (size_t b = 0; b < bins; ++b) {
      spec.magnitudes(b, f) = std::abs(buf[b]);
      spec.phases(b, f) = std::arg(buf[b]);
    }
  }
  return spec;
}

Spectrogram stft(const std::vector<float>& waveform, const StftParams& params,
                 int sample_rate) {
  return stft(waveform, params.frame_length, params.hop_length, sample_rate);
}

std::vector<float> istft(const Spectrogram& spec) {
  if (!spec.magnitudes.same_shape(spec.phases))
    fail(ErrorCode::invalid_argument,
         "istft: magnitude/phase shape mismatch");
  size_t frame_length = spec.frame_length;
  size_t hop = spec.hop_length;
  size_t bins = spec.bins();
  size_t num_frames = spec.frames();
  if (frame_length == 0 || hop == 0 || bins != frame_length / 2 + 1)
    fail(ErrorCode::invalid_argument, "istft: malformed spectrogram header");

  size_t padded_len = (num_frames - 1) * hop + frame_length;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);
  std::vector<double> window = hann_window(frame_length);

  std::vector<std::complex<double>> buf(frame_length);
  for (size_t f = 0; f < num_frames; ++f) {
    for (size_t b = 0; b < bins; ++b) {
      double m = spec.magnitudes(b, f);
      double p = spec.phases(b, f);
      buf[b] = std::polar(m, p);
    }
    // Hermitian mirror for the real inverse.
    for (size_t b = bins; b < frame_length; ++b)
      buf[b] = std::conj(buf[frame_length - b]);
    fft(buf, true);
    size_t start = f * hop;
    for (size_t i = 0; i < frame_length; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }

  size_t pad = frame_length / 2;
  size_t out_len = spec.num_samples != 0
                       ? spec.num_samples
                       : (padded_len > 2 * pad ? padded_len - 2 * pad : 0);
  std::vector<float> out(out_len, 0.0f);
  for (size_t i = 0; i < out_len; ++i) {
    size_t j = i + pad;
    if (j < padded_len) {
      double d = norm[j] > 1e-8 ? norm[j] : 1e-8;
      out[i] = static_cast<float>(acc[j] / d);
    }
  }
  return out;
}

Matrix2D mel_filterbank(int n_mels, size_t fft_bins, int sample_rate) {
  if (n_mels < 1) fail(ErrorCode::invalid_argument, "n_mels must be >= 1");
  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel_to_hz = [](double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  };
  double nyquist = sample_rate / 2.0;
  double mel_max = hz_to_mel(nyquist);
  size_t frame_length = (fft_bins - 1) * 2;

  std::vector<double> centers(static_cast<size_t>(n_mels) + 2);
  for (size_t i = 0; i < centers.size(); ++i)
    centers[i] = mel_to_hz(mel_max * static_cast<double>(i) /
                           static_cast<double>(n_mels + 1));

  Matrix2D fb(static_cast<size_t>(n_mels), fft_bins);
  for (int m = 0; m < n_mels; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (size_t b = 0; b < fft_bins; ++b) {
      double freq = static_cast<double>(b) * sample_rate /
                    static_cast<double>(frame_length);
      double w = 0.0;
      if (freq >= lo && freq <= mid && mid > lo) {
        w = (freq - lo) / (mid - lo);
      } else if (freq > mid && freq <= hi && hi > mid) {
        w = (hi - freq) / (hi - mid);
      }
      fb(static_cast<size_t>(m), b) = w;
    }
  }
  return fb;
}

Matrix2D log_mel_features(const std::vector<float>& waveform, int sample_rate,
                          int n_mels) {
  if (n_mels < 1) fail(ErrorCode::invalid_argument, "n_mels must be >= 1");
  StftParams params;
  Spectrogram spec = stft(waveform, params, sample_rate);
  Matrix2D fb = mel_filterbank(n_mels, spec.bins(), sample_rate);

  Matrix2D out(static_cast<size_t>(n_mels), spec.frames());
  for (size_t m = 0; m < out.rows(); ++m) {
    for (size_t f = 0; f < spec.frames(); ++f) {
      double energy = 0.0;
      for (size_t b = 0; b < spec.bins(); ++b) {
        double mag = spec.magnitudes(b, f);
        double w = fb(m, b);
        if (w != 0.0) energy += w * mag * mag;
      }
      out(m, f) = std::log(energy > kLogEnergyFloor ? energy : kLogEnergyFloor);
    }
  }
  return out;
}

}  // namespace sblab
