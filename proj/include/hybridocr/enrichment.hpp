#pragma once

// Server-side text post-processing applied to OCR context entries before
// they reach the prompt.

#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridocr/core.hpp"
#include "hybridocr/osm.hpp"
#include "hybridocr/text.hpp"

namespace hybridocr {

/// Whitespace runs become one space, other control bytes are removed, ends trimmed.
inline std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(ch)) {
      pending_space = !out.empty();
      continue;
    }
    if (c < 0x20 || c == 0x7F) continue;
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

inline std::vector<OcrContextEntry> normalize_entries(std::vector<OcrContextEntry> entries) {
  for (auto& e : entries) {
    e.text = normalize(e.text);
    e.qr = normalize(e.qr);
  }
  return entries;
}

struct EnrichmentConfig {
  std::int64_t gap_ms = 5000;
  double text_threshold = OsmConfig{}.text_threshold;
};

/// Merges neighbours that read alike and sit within gap_ms of each other.
/// The merged entry takes the later timestamp and the longer text. Selection
/// entries are never merged. Repeats until nothing changes.
inline std::vector<OcrContextEntry> consolidate(std::span<const OcrContextEntry> entries,
                                                const EnrichmentConfig& config = {}) {
  std::vector<OcrContextEntry> cur(entries.begin(), entries.end());
  for (std::size_t i = 1; i < cur.size(); ++i) {
    if (cur[i].ts_ms < cur[i - 1].ts_ms) throw ContractViolation("consolidate: entries must be ascending");
  }
  while (true) {
    std::vector<OcrContextEntry> next;
    for (const auto& e : cur) {
      if (!next.empty()) {
        auto& last = next.back();
        const bool mergeable = !last.is_selection && !e.is_selection && e.ts_ms - last.ts_ms <= config.gap_ms &&
                               text_similarity(last.text, e.text) >= config.text_threshold;
        if (mergeable) {
          OcrContextEntry merged = last.text.size() > e.text.size() ? last : e;
          merged.ts_ms = e.ts_ms;
          last = std::move(merged);
          continue;
        }
      }
      next.push_back(e);
    }
    if (next.size() == cur.size()) return next;
    cur = std::move(next);
  }
}

/// Ordered per-entry hooks standing in for autocorrection, entity linking or
/// confidence calibration. Configure before the session starts.
class EnrichmentRegistry {
 public:
  using Hook = std::function<OcrContextEntry(const OcrContextEntry&)>;

  void add(std::string name, Hook hook) { hooks_.push_back({std::move(name), std::move(hook)}); }
  std::size_t size() const { return hooks_.size(); }

  /// A hook that throws leaves that entry as it was and records a warning.
  std::vector<OcrContextEntry> apply(std::vector<OcrContextEntry> entries, Diagnostics* diag = nullptr) const {
    for (const auto& [name, hook] : hooks_) {
      for (auto& e : entries) {
        try {
          e = hook(e);
        } catch (const std::exception& ex) {
          warn_if(diag, "enrichment hook '" + name + "' failed at t=" + std::to_string(e.ts_ms) + "ms: " + ex.what());
        }
      }
    }
    return entries;
  }

 private:
  struct Named {
    std::string name;
    Hook hook;
  };
  std::vector<Named> hooks_;
};

inline std::vector<OcrContextEntry> enrichment_hooks(std::vector<OcrContextEntry> entries,
                                                     const EnrichmentRegistry& registry, Diagnostics* diag = nullptr) {
  return registry.apply(std::move(entries), diag);
}

}  // namespace hybridocr
