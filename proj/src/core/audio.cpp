#include "core/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/errors.hpp"

namespace sblab {

void validate_sample(const AudioSample& sample) {
  if (sample.id.empty()) fail(ErrorCode::contract, "sample id is empty");
  if (sample.waveform.empty())
    fail(ErrorCode::contract, "sample " + sample.id + ": empty waveform");
  if (sample.sample_rate <= 0)
    fail(ErrorCode::contract, "sample " + sample.id + ": non-positive rate");
  if (sample.label < 0)
    fail(ErrorCode::contract, "sample " + sample.id + ": negative label");
  for (float v : sample.waveform) {
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
      fail(ErrorCode::contract,
           "sample " + sample.id + ": waveform value outside [-1,1]");
  }
  bool poisoned = sample.provenance == Provenance::poisoned;
  if (poisoned != sample.trigger_id.has_value())
    fail(ErrorCode::contract,
         "sample " + sample.id + ": provenance/trigger_id mismatch");
}

void clip_amplitude(std::vector<float>& waveform) {
  for (float& v : waveform) {
    if (!std::isfinite(v)) {
      v = 0.0f;
    } else if (v > 1.0f) {
      v = 1.0f;
    } else if (v < -1.0f) {
      v = -1.0f;
    }
  }
}

namespace {

struct ChunkHeader {
  char id[4];
  uint32_t size;
};

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16le(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "short write: " + path);
}

}  // namespace

std::vector<float> read_wav(const std::string& path, int* sample_rate_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open audio file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorCode::format, "not a RIFF WAV file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  uint32_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* p = bytes.data() + pos;
    uint32_t chunk_size = read_u32le(p + 4);
    size_t body = pos + 8;
    if (body + chunk_size > bytes.size())
      chunk_size = static_cast<uint32_t>(bytes.size() - body);
    if (std::memcmp(p, "fmt ", 4) == 0) {
      if (chunk_size < 16) fail(ErrorCode::format, "truncated fmt chunk: " + path);
      format = read_u16le(bytes.data() + body);
      channels = read_u16le(bytes.data() + body + 2);
      rate = read_u32le(bytes.data() + body + 4);
      bits = read_u16le(bytes.data() + body + 14);
    } else if (std::memcmp(p, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (data == nullptr) fail(ErrorCode::format, "WAV has no data chunk: " + path);
  if (channels != 1)
    fail(ErrorCode::format, "only mono WAV supported: " + path);
  if (rate == 0) fail(ErrorCode::format, "WAV declares zero sample rate: " + path);

  std::vector<float> wave;
  if (format == 1 && bits == 16) {
    size_t n = data_size / 2;
    wave.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t s = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
      wave[i] = static_cast<float>(s) / 32768.0f;
    }
  } else if (format == 3 && bits == 32) {
    size_t n = data_size / 4;
    wave.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = read_u32le(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      wave[i] = f;
    }
  } else {
    fail(ErrorCode::format,
         "unsupported WAV encoding (want PCM16 or float32): " + path);
  }
  if (wave.empty()) fail(ErrorCode::format, "WAV contains no samples: " + path);
  clip_amplitude(wave);
  if (sample_rate_out) *sample_rate_out = static_cast<int>(rate);
  return wave;
}

void write_wav_float32(const std::string& path, const std::vector<float>& waveform,
                       int sample_rate) {
  std::string out;
  uint32_t data_size = static_cast<uint32_t>(waveform.size() * 4);
  out.reserve(58 + data_size);
  out += "RIFF";
  put_u32le(out, 50 + data_size);  // fmt(18) + fact(12) + data hdr(8) + data
  out += "WAVE";
  out += "fmt ";
  put_u32le(out, 18);
  put_u16le(out, 3);  // IEEE float
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(sample_rate));
  put_u32le(out, static_cast<uint32_t>(sample_rate) * 4);
  put_u16le(out, 4);
  put_u16le(out, 32);
  put_u16le(out, 0);  // no extension bytes
  out += "fact";
  put_u32le(out, 4);
  put_u32le(out, static_cast<uint32_t>(waveform.size()));
  out += "data";
  put_u32le(out, data_size);
  for (float v : waveform) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32le(out, u);
  }
  write_file(path, out);
}

void write_wav_pcm16(const std::string& path, const std::vector<float>& waveform,
                     int sample_rate) {
  std::string out;
  uint32_t data_size = static_cast<uint32_t>(waveform.size() * 2);
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32le(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(sample_rate));
  put_u32le(out, static_cast<uint32_t>(sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out += "data";
  put_u32le(out, data_size);
  for (float v : waveform) {
    float c = v < -1.0f ? -1.0f : (v > 1.0f ? 1.0f : v);
    // same 1/32768 scale the reader uses, so the round trip only quantizes
    long s = std::lrint(c * 32768.0f);
    if (s > 32767) s = 32767;
    if (s < -32768) s = -32768;
    put_u16le(out, static_cast<uint16_t>(static_cast<int16_t>(s)));
  }
  write_file(path, out);
}

std::vector<float> resample(const std::vector<float>& waveform, int from_rate,
                            int to_rate) {
  if (from_rate <= 0 || to_rate <= 0)
    fail(ErrorCode::invalid_argument, "resample: rates must be positive");
  if (from_rate == to_rate || waveform.empty()) return waveform;
  size_t out_len = static_cast<size_t>(std::llround(
      static_cast<double>(waveform.size()) * to_rate / from_rate));
  if (out_len == 0) out_len = 1;
  std::vector<float> out(out_len);
  double step = static_cast<double>(from_rate) / to_rate;
  for (size_t i = 0; i < out_len; ++i) {
    double pos = i * step;
    size_t i0 = static_cast<size_t>(pos);
    if (i0 >= waveform.size() - 1) {
      out[i] = waveform.back();
      continue;
    }
    double frac = pos - static_cast<double>(i0);
    out[i] = static_cast<float>((1.0 - frac) * waveform[i0] +
                                frac * waveform[i0 + 1]);
  }
  return out;
}

}  // namespace sblab
