#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace erc {

// ---------------------------------------------------------------------------
// Emotion labels
// ---------------------------------------------------------------------------

enum class EmotionLabel : int { ANG = 0, FEA = 1, NEU = 2, POS = 3 };

inline constexpr int kNumClasses = 4;

inline constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "ANG", "FEA", "NEU", "POS"};

inline std::string_view label_name(EmotionLabel l) {
  return kLabelNames[static_cast<int>(l)];
}

inline EmotionLabel label_from_name(std::string_view name);

inline constexpr std::array<EmotionLabel, kNumClasses> all_labels() {
  return {EmotionLabel::ANG, EmotionLabel::FEA, EmotionLabel::NEU,
          EmotionLabel::POS};
}

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: usage 1, data 2, divergence 3.
// ---------------------------------------------------------------------------

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline EmotionLabel label_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kLabelNames[i] == name) return static_cast<EmotionLabel>(i);
  }
  throw DataError("unknown emotion label: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Deterministic number formatting
// ---------------------------------------------------------------------------

// Seconds and other schema-fixed quantities are serialized as 6-decimal
// fixed point. quantize_6dp(t) yields exactly the double that parsing the
// formatted string produces, so quantized values round-trip bit-exactly.
inline double quantize_6dp(double t) { return std::round(t * 1e6) / 1e6; }

inline std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Shortest decimal string that parses back to exactly the same double.
inline std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit hash, used for config hashes and checkpoint digests.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace erc
