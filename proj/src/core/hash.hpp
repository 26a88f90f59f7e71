#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sblab {

// FNV-1a streaming hasher. Used for trigger ids, dataset digests and
// content-addressed file names. Not cryptographic; collision resistance at
// laboratory scale is all that is required.
class Fnv1a {
 public:
  explicit Fnv1a(uint64_t basis = 0xcbf29ce484222325ULL) : state_(basis) {}

  void update(const void* data, size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update(uint64_t v);
  void update(int64_t v) { update(static_cast<uint64_t>(v)); }
  void update(int v) { update(static_cast<uint64_t>(static_cast<int64_t>(v))); }
  void update(double v);
  void update(const std::vector<float>& v) {
    if (!v.empty()) update(v.data(), v.size() * sizeof(float));
  }

  uint64_t value() const { return state_; }

 private:
  uint64_t state_;
};

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);

// 128-bit digest rendered as 32 hex chars: two independent FNV streams over
// the same bytes with distinct offset bases.
std::string hex_digest128(const void* data, size_t len);
std::string hex_digest128(const std::string& s);

std::string to_hex(uint64_t v);

// Raw-byte <-> base64 (standard alphabet, '=' padding).
std::string base64_encode(const void* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& text);

// Streaming file digest (hex_digest128 over the file bytes).
std::string file_digest(const std::string& path);

// Deterministic splittable mixing for seeding RNG streams.
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace sblab
