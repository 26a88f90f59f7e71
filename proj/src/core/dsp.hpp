#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace sblab {

// Dense row-major matrix of doubles. Small helper, not a linear-algebra type.
class Matrix2D {
 public:
  Matrix2D() = default;
  Matrix2D(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Matrix2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

struct StftParams {
  size_t frame_length = 512;
  size_t hop_length = 128;
};

// Magnitude/phase short-time transform. `num_samples` records the source
// length so the inverse can trim its edge padding back off.
struct Spectrogram {
  Matrix2D magnitudes;  // frequency_bins x frames, >= 0
  Matrix2D phases;      // radians, same shape
  size_t frame_length = 0;
  size_t hop_length = 0;
  int sample_rate = 0;
  size_t num_samples = 0;

  size_t bins() const { return magnitudes.rows(); }
  size_t frames() const { return magnitudes.cols(); }
};

// In-place complex FFT / inverse, n a power of two; falls back to a direct
// transform otherwise (only small frames take that path).
void fft(std::vector<std::complex<double>>& buf, bool inverse);

// Hann-windowed transform with reflect padding of frame_length/2 per side.
// bins = frame_length/2 + 1.
Spectrogram stft(const std::vector<float>& waveform, size_t frame_length,
                 size_t hop_length, int sample_rate);
Spectrogram stft(const std::vector<float>& waveform, const StftParams& params,
                 int sample_rate);

// Normalized overlap-add inverse; output length equals the recorded
// num_samples (edge padding trimmed).
std::vector<float> istft(const Spectrogram& spec);

// Log mel-filterbank energies, shape n_mels x frames. Power spectrum with
// frame 512 / hop 128 frontend, energies floored at kLogEnergyFloor before
// the log so silence stays finite.
constexpr double kLogEnergyFloor = 1e-10;
Matrix2D log_mel_features(const std::vector<float>& waveform, int sample_rate,
                          int n_mels);

// Triangular mel filterbank (HTK mel scale), rows = n_mels, cols = bins.
Matrix2D mel_filterbank(int n_mels, size_t fft_bins, int sample_rate);

}  // namespace sblab
