#pragma once

// Inference context assembly: frame references around the query, OCR lines
// from the session manager, mode preambles, and chronological ordering.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hybridocr/core.hpp"
#include "hybridocr/osm.hpp"
#include "hybridocr/text.hpp"

namespace hybridocr {

inline constexpr std::string_view kReadoutPreamble =
    "Read this word by word, spell out license plates character by character";
inline constexpr std::string_view kTranslationPreamblePrefix = "Translate this word by word into ";

struct PromptConfig {
  std::int64_t lookback_ms = 8000;
  std::size_t pre_n = 4;
  std::size_t hist_n = 2;
  std::int64_t ocr_window_ms = 30000;
};

/// A frame the server can hand to the model, with the resolution it holds.
struct FrameRef {
  std::int64_t ts_ms = 0;
  Resolution res = Resolution::MP3;
  bool operator==(const FrameRef&) const = default;
};

/// Frames known to the server, ascending by timestamp.
struct FrameIndexEntry {
  std::int64_t ts_ms = 0;
  Resolution stream_res = Resolution::MP3;  // as held from the video stream
  Resolution capture_res = Resolution::MP12;
  bool accepted = false;  // selected for on-device OCR
};

struct FramePlan {
  std::vector<FrameRef> pre_query;
  std::vector<FrameRef> in_query;
  std::vector<FrameRef> historical;
  bool operator==(const FramePlan&) const = default;
};

inline FramePlan plan_frames(std::span<const FrameIndexEntry> frames, const QueryRecord& query,
                             const PromptConfig& config, std::span<const FramePlan> prior_turns = {}) {
  if (query.speech_start_ms > query.ts_ms) throw ContractViolation("plan_frames: speech starts after query end");
  FramePlan plan;
  const std::int64_t start = query.speech_start_ms;
  const std::int64_t lb = std::max<std::int64_t>(config.lookback_ms, 0);
  const std::int64_t floor_ts = start - lb;

  auto at_or_before = [&](std::int64_t t) -> const FrameIndexEntry* {
    auto it = std::upper_bound(frames.begin(), frames.end(), t,
                               [](std::int64_t v, const FrameIndexEntry& f) { return v < f.ts_ms; });
    return it == frames.begin() ? nullptr : &*std::prev(it);
  };

  // Uniform grid over [start - lookback, start), snapped backwards to real frames.
  const auto n = static_cast<std::int64_t>(config.pre_n);
  for (std::int64_t i = 0; i < n && lb > 0; ++i) {
    const std::int64_t grid = floor_ts + (i * lb) / n;
    const auto* f = at_or_before(grid);
    if (f == nullptr || f->ts_ms < floor_ts || f->ts_ms >= start) continue;
    if (!plan.pre_query.empty() && plan.pre_query.back().ts_ms == f->ts_ms) continue;
    plan.pre_query.push_back({f->ts_ms, f->stream_res});
  }

  for (const auto& f : frames) {
    if (f.accepted && f.ts_ms >= start && f.ts_ms <= query.ts_ms) plan.in_query.push_back({f.ts_ms, f.capture_res});
  }

  std::vector<FrameRef> past;
  for (const auto& turn : prior_turns) {
    past.insert(past.end(), turn.pre_query.begin(), turn.pre_query.end());
    past.insert(past.end(), turn.in_query.begin(), turn.in_query.end());
  }
  std::sort(past.begin(), past.end(), [](const FrameRef& a, const FrameRef& b) { return a.ts_ms < b.ts_ms; });
  past.erase(std::unique(past.begin(), past.end(),
                         [](const FrameRef& a, const FrameRef& b) { return a.ts_ms == b.ts_ms; }),
             past.end());
  auto in_current = [&](std::int64_t ts) {
    auto has = [ts](const std::vector<FrameRef>& v) {
      return std::any_of(v.begin(), v.end(), [ts](const FrameRef& r) { return r.ts_ms == ts; });
    };
    return has(plan.pre_query) || has(plan.in_query);
  };
  for (auto it = past.rbegin(); it != past.rend() && plan.historical.size() < config.hist_n; ++it) {
    if (!in_current(it->ts_ms)) plan.historical.push_back(*it);
  }
  std::reverse(plan.historical.begin(), plan.historical.end());
  return plan;
}

inline std::string render_ocr_line(const OcrContextEntry& e) {
  std::vector<std::string> flags = e.flags.names();
  if (!e.qr.empty()) flags.push_back("qr=" + e.qr);
  std::string out = "[OCR t=" + std::to_string(e.ts_ms) + "ms flags=";
  if (flags.empty()) {
    out += "none";
  } else {
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (i > 0) out.push_back(',');
      out += flags[i];
    }
  }
  if (e.is_selection) out += ";selected";
  out.push_back(']');
  if (!e.text.empty()) {
    out.push_back(' ');
    out += e.text;
  }
  return out;
}

/// One newline-terminated line per entry, ascending by timestamp.
inline std::string render_ocr_block(std::span<const OcrContextEntry> entries) {
  std::vector<const OcrContextEntry*> sorted;
  for (const auto& e : entries) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->ts_ms < b->ts_ms; });
  std::string out;
  for (const auto* e : sorted) {
    out += render_ocr_line(*e);
    out.push_back('\n');
  }
  return out;
}

/// Drops entries too similar to an earlier kept one. Selections always stay.
inline std::vector<OcrContextEntry> dedup_prompt_ocr(std::span<const OcrContextEntry> entries,
                                                     double threshold = OsmConfig{}.text_threshold) {
  std::vector<OcrContextEntry> kept;
  for (const auto& e : entries) {
    const bool dup = std::any_of(kept.begin(), kept.end(),
                                 [&](const OcrContextEntry& k) { return text_similarity(k.text, e.text) >= threshold; });
    if (!dup || e.is_selection) kept.push_back(e);
  }
  return kept;
}

enum class ComponentKind : std::uint8_t { Preamble, FrameRef, OcrBlock, HistoryTurn, Question };

struct PromptComponent {
  ComponentKind kind = ComponentKind::Question;
  std::int64_t ts_ms = 0;
  std::string body;
  bool operator==(const PromptComponent&) const = default;
};

struct HistoryTurn {
  std::int64_t ts_ms = 0;
  std::string question;
  std::string answer;
};

struct Prompt {
  std::vector<PromptComponent> components;
  std::string text;
};

inline std::string render_frame_ref(const FrameRef& f) {
  return "[FRAME t=" + std::to_string(f.ts_ms) + "ms res=" + std::string(to_string(f.res)) + "]";
}

inline Prompt build_prompt(const QueryRecord& query, const FramePlan& plan, std::span<const OcrContextEntry> ocr,
                           std::span<const HistoryTurn> history = {}) {
  Prompt prompt;
  if (query.mode == QueryMode::Translation) {
    if (!query.target_lang || query.target_lang->empty())
      throw ContractViolation("build_prompt: translation requires a target language");
    prompt.components.push_back(
        {ComponentKind::Preamble, query.ts_ms, std::string(kTranslationPreamblePrefix) + *query.target_lang});
  } else if (query.mode == QueryMode::Readout) {
    prompt.components.push_back({ComponentKind::Preamble, query.ts_ms, std::string(kReadoutPreamble)});
  }

  struct Ranked {
    int rank;
    PromptComponent c;
  };
  std::vector<Ranked> body;
  for (const auto& h : history) {
    body.push_back({0, {ComponentKind::HistoryTurn, h.ts_ms,
                        "[HISTORY t=" + std::to_string(h.ts_ms) + "ms] Q: " + h.question + " A: " + h.answer}});
  }
  for (const auto* list : {&plan.historical, &plan.pre_query, &plan.in_query}) {
    for (const auto& f : *list) body.push_back({1, {ComponentKind::FrameRef, f.ts_ms, render_frame_ref(f)}});
  }
  for (const auto& e : ocr) body.push_back({2, {ComponentKind::OcrBlock, e.ts_ms, render_ocr_line(e)}});
  std::stable_sort(body.begin(), body.end(), [](const Ranked& a, const Ranked& b) {
    return a.c.ts_ms != b.c.ts_ms ? a.c.ts_ms < b.c.ts_ms : a.rank < b.rank;
  });
  for (auto& r : body) prompt.components.push_back(std::move(r.c));

  prompt.components.push_back(
      {ComponentKind::Question, query.ts_ms, "[QUESTION t=" + std::to_string(query.ts_ms) + "ms] " + query.question});

  for (const auto& c : prompt.components) {
    prompt.text += c.body;
    prompt.text.push_back('\n');
  }
  return prompt;
}

/// The model boundary. The simulator ships a stub that echoes recovered OCR text.
class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual std::string answer(const Prompt& prompt, std::span<const OcrContextEntry> ocr) const = 0;
};

class StubAnswerer final : public Answerer {
 public:
  std::string answer(const Prompt&, std::span<const OcrContextEntry> ocr) const override {
    std::string out;
    for (const auto& e : ocr) {
      if (e.text.empty()) continue;
      if (!out.empty()) out.push_back(' ');
      out += e.text;
    }
    return out;
  }
};

}  // namespace hybridocr
