#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egmcts/errors.hpp"
#include "egmcts/rng.hpp"

namespace egmcts {

inline constexpr std::size_t kFingerprintBits = 2048;
inline constexpr std::size_t kFingerprintBytes = kFingerprintBits / 8;

using Fingerprint = std::bitset<kFingerprintBits>;

/// Packs bit i into byte i/8 at position i%8 (least significant bit first).
inline std::vector<std::uint8_t> to_bytes(const Fingerprint& fp) {
  std::vector<std::uint8_t> out(kFingerprintBytes, 0);
  for (std::size_t i = 0; i < kFingerprintBits; ++i) {
    if (fp[i]) out[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
  }
  return out;
}

inline Fingerprint from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kFingerprintBytes) {
    throw LengthMismatch("fingerprint needs " +
                         std::to_string(kFingerprintBytes) + " bytes, got " +
                         std::to_string(bytes.size()));
  }
  Fingerprint fp;
  for (std::size_t i = 0; i < kFingerprintBits; ++i) {
    fp[i] = (bytes[i >> 3] >> (i & 7)) & 1u;
  }
  return fp;
}

/// One entry per bit, each 0 or 1.
inline Fingerprint from_bit_values(std::span<const std::uint8_t> bits) {
  if (bits.size() != kFingerprintBits) {
    throw LengthMismatch("fingerprint needs " +
                         std::to_string(kFingerprintBits) + " bits, got " +
                         std::to_string(bits.size()));
  }
  Fingerprint fp;
  for (std::size_t i = 0; i < bits.size(); ++i) fp[i] = bits[i] != 0;
  return fp;
}

// RFC 4648 base64 with padding.
namespace base64 {

inline constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == data.size()) {
    std::uint32_t v = data[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw LengthMismatch("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        v[j] = 0;
        ++pad;
      } else {
        if (pad > 0) throw LengthMismatch("base64 padding in the middle");
        v[j] = value(c);
        if (v[j] < 0) throw LengthMismatch("invalid base64 character");
      }
    }
    std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

}  // namespace base64

inline std::string fingerprint_to_base64(const Fingerprint& fp) {
  auto bytes = to_bytes(fp);
  return base64::encode(bytes);
}

inline Fingerprint fingerprint_from_base64(std::string_view text) {
  auto bytes = base64::decode(text);
  return from_bytes(bytes);
}

/// Folds hashed string features into a fingerprint.
inline Fingerprint hashed_fingerprint(std::span<const std::string> features,
                                      std::uint64_t salt = 0) {
  Fingerprint fp;
  for (const auto& f : features) {
    fp.set(splitmix64(fnv1a(f) ^ salt) % kFingerprintBits);
  }
  return fp;
}

/// |a & b| / |a | b|; two empty fingerprints count as identical.
inline double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  const auto uni = (a | b).count();
  if (uni == 0) return 1.0;
  return static_cast<double>((a & b).count()) / static_cast<double>(uni);
}

}  // namespace egmcts
