#include "core/hash.hpp"

#include <cstring>
#include <fstream>

#include "core/errors.hpp"

namespace sblab {

namespace {
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;
constexpr uint64_t kFnvBasisA = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvBasisB = 0x84222325cbf29ce4ULL;

uint64_t fnv_stream(uint64_t state, const uint8_t* p, size_t len) {
  for (size_t i = 0; i < len; ++i) {
    state ^= p[i];
    state *= kFnvPrime;
  }
  return state;
}
}  // namespace

void Fnv1a::update(const void* data, size_t len) {
  state_ = fnv_stream(state_, static_cast<const uint8_t*>(data), len);
}

void Fnv1a::update(uint64_t v) {
  uint8_t bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<uint8_t>(v >> (8 * i));
  update(bytes, 8);
}

void Fnv1a::update(double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  update(bits);
}

uint64_t fnv1a64(const void* data, size_t len) {
  return fnv_stream(kFnvBasisA, static_cast<const uint8_t*>(data), len);
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string hex_digest128(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  return to_hex(fnv_stream(kFnvBasisA, p, len)) +
         to_hex(fnv_stream(kFnvBasisB, p, len));
}

std::string hex_digest128(const std::string& s) {
  return hex_digest128(s.data(), s.size());
}

std::string base64_encode(const void* data, size_t len) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  const uint8_t* p = static_cast<const uint8_t*>(data);
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= len; i += 3) {
    uint32_t v = (p[i] << 16) | (p[i + 1] << 8) | p[i + 2];
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back(alphabet[v & 63]);
  }
  if (i + 1 == len) {
    uint32_t v = p[i] << 16;
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == len) {
    uint32_t v = (p[i] << 16) | (p[i + 1] << 8);
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) fail(ErrorCode::format, "invalid base64 character");
    acc = (acc << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open file for hashing: " + path);
  uint64_t a = kFnvBasisA;
  uint64_t b = kFnvBasisB;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    if (got > 0) {
      a = fnv_stream(a, reinterpret_cast<const uint8_t*>(buf),
                     static_cast<size_t>(got));
      b = fnv_stream(b, reinterpret_cast<const uint8_t*>(buf),
                     static_cast<size_t>(got));
    }
  }
  return to_hex(a) + to_hex(b);
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the pair
  uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sblab
