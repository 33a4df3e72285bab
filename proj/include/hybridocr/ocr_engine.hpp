#pragma once

// OCR behind a single interface plus a deterministic mock whose word accuracy
// depends on capture resolution and whose latency depends on word count.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybridocr/core.hpp"

namespace hybridocr {

struct LatencyAnchor {
  double words = 0;
  double ms = 0;
  bool operator==(const LatencyAnchor&) const = default;
};

struct OcrConfig {
  // Indexed by Resolution.
  std::array<double, 3> accuracy{0.1980, 0.5644, 0.8904};
  std::vector<LatencyAnchor> latency{{0, 341}, {30, 396}, {100, 1188}, {1000, 4976}};
  std::uint64_t seed = 0;

  double accuracy_for(Resolution r) const { return accuracy[static_cast<std::size_t>(r)]; }

  void validate() const {
    for (double a : accuracy) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ocr config: accuracy outside [0,1]");
    }
    if (latency.size() < 2) throw ConfigError("ocr config: need at least two latency anchors");
    for (std::size_t i = 1; i < latency.size(); ++i) {
      if (!(latency[i].words > latency[i - 1].words) || !(latency[i].ms > latency[i - 1].ms))
        throw ConfigError("ocr config: latency anchors must be strictly increasing");
    }
    if (latency.front().words != 0) throw ConfigError("ocr config: first latency anchor must be at 0 words");
  }
};

inline double word_accuracy(Resolution r, const OcrConfig& config = {}) { return config.accuracy_for(r); }

/// Piecewise-linear through the anchors; last segment extended past the final anchor.
inline double ocr_latency_ms(double word_count, const OcrConfig& config = {}) {
  if (word_count < 0) throw ContractViolation("ocr_latency_ms: negative word count");
  const auto& a = config.latency;
  std::size_t seg = a.size() - 2;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    if (word_count <= a[i + 1].words) {
      seg = i;
      break;
    }
  }
  const auto& lo = a[seg];
  const auto& hi = a[seg + 1];
  if (word_count == lo.words) return lo.ms;
  if (word_count == hi.words) return hi.ms;
  return lo.ms + (word_count - lo.words) * (hi.ms - lo.ms) / (hi.words - lo.words);
}

struct OcrResult {
  std::vector<TextSpan> spans;
  double simulated_latency_ms = 0;
  std::size_t words_attempted = 0;
  std::size_t words_correct = 0;
  bool operator==(const OcrResult&) const = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Counter-based draw keyed by (seed, frame timestamp, token index, stream).
inline std::uint64_t keyed_draw(std::uint64_t seed, std::int64_t ts, std::uint64_t index, std::uint64_t stream) {
  std::uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dull);
  h = splitmix64(h ^ static_cast<std::uint64_t>(ts));
  h = splitmix64(h ^ index);
  return splitmix64(h ^ (stream * 0x2545f4914f6cdd1dull));
}

inline double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Visually confusable replacements for common glyphs.
inline std::optional<char> confusion_for(char c) {
  switch (c) {
    case '6': return '8';
    case '8': return '6';
    case '0': return 'O';
    case 'O': return '0';
    case '1': return 'l';
    case 'l': return '1';
    case '5': return 'S';
    case 'S': return '5';
    case 'B': return '8';
    default: return std::nullopt;
  }
}

/// Replaces exactly one character so the result always differs from the input.
inline std::string corrupt_token(const std::string& token, std::uint64_t bits) {
  std::string out = token;
  const std::size_t pos = static_cast<std::size_t>(bits % token.size());
  const char c = out[pos];
  const std::uint64_t shift = (bits >> 32) % 25 + 1;
  if (auto alt = confusion_for(c)) {
    out[pos] = *alt;
  } else if (c >= 'a' && c <= 'z') {
    out[pos] = static_cast<char>('a' + (c - 'a' + shift) % 26);
  } else if (c >= 'A' && c <= 'Z') {
    out[pos] = static_cast<char>('A' + (c - 'A' + shift) % 26);
  } else if (c >= '0' && c <= '9') {
    out[pos] = static_cast<char>('0' + (c - '0' + shift % 9 + 1) % 10);
  } else {
    out[pos] = c == '#' ? '~' : '#';
  }
  return out;
}

}  // namespace detail

/// Each token is recognized with probability word_accuracy(resolution);
/// misses come back with a single substituted character.
inline OcrResult run_mock_ocr(std::span<const std::string> gt_words, Resolution resolution, const Rect& roi,
                              const OcrConfig& config, std::int64_t frame_ts_ms) {
  OcrResult result;
  const double p = word_accuracy(resolution, config);
  const std::size_t n = gt_words.size();
  result.words_attempted = n;
  result.simulated_latency_ms = ocr_latency_ms(static_cast<double>(n), config);
  result.spans.reserve(n);
  const double cell = n > 0 ? roi.w / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& word = gt_words[i];
    if (word.empty()) throw ContractViolation("run_mock_ocr: empty ground-truth token");
    const bool hit = detail::unit_interval(detail::keyed_draw(config.seed, frame_ts_ms, i, 0)) < p;
    TextSpan span;
    span.text = hit ? word : detail::corrupt_token(word, detail::keyed_draw(config.seed, frame_ts_ms, i, 1));
    span.bbox = Rect{roi.x + cell * static_cast<double>(i), roi.y, cell, roi.h};
    span.conf = p;
    if (hit) ++result.words_correct;
    result.spans.push_back(std::move(span));
  }
  return result;
}

/// Replaceable recognizer. The simulator ships only the mock.
class OcrEngine {
 public:
  virtual ~OcrEngine() = default;
  virtual OcrResult recognize(const FrameRecord& frame, Resolution resolution, const Rect& roi) const = 0;
};

class MockOcrEngine final : public OcrEngine {
 public:
  explicit MockOcrEngine(OcrConfig config = {}) : config_(std::move(config)) { config_.validate(); }

  OcrResult recognize(const FrameRecord& frame, Resolution resolution, const Rect& roi) const override {
    auto result = run_mock_ocr(frame.gt_words, resolution, roi, config_, frame.ts_ms);
    if (!frame.qr.empty()) result.spans.push_back(TextSpan{frame.qr, roi, 1.0, true});
    return result;
  }

  const OcrConfig& config() const { return config_; }

 private:
  OcrConfig config_;
};

}  // namespace hybridocr
