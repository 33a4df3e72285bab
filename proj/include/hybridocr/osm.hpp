#pragma once

// OCR session manager: a timestamp-ordered payload store for one session.
// Groups of similar TextOcr payloads are a pure function of the stored
// payload set, derived by replaying payloads in ascending timestamp order, so
// every ingestion order yields the same observable state.

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hybridocr/core.hpp"
#include "hybridocr/text.hpp"

namespace hybridocr {

struct OsmConfig {
  double text_threshold = 0.8;  // Jaccard needed to join a group
};

struct OcrGroup {
  std::vector<std::int64_t> members;  // ascending
  std::int64_t exemplar_ts = 0;
  std::int64_t group_latest_ts = 0;
  bool selection = false;  // selection groups are always singletons
  bool operator==(const OcrGroup&) const = default;
};

namespace detail {

inline std::size_t text_chars(const OcrPayload& p) {
  std::size_t n = 0;
  for (const auto& s : p.spans) {
    if (!s.qr) n += s.text.size();
  }
  return n;
}

inline double mean_conf(const OcrPayload& p) {
  if (p.spans.empty()) return 0.0;
  double sum = 0;
  for (const auto& s : p.spans) sum += s.conf;
  return sum / static_cast<double>(p.spans.size());
}

/// Strict "better exemplar" order: more text, then higher confidence, then later.
inline bool better_exemplar(const OcrPayload& a, const OcrPayload& b) {
  const auto ca = text_chars(a), cb = text_chars(b);
  if (ca != cb) return ca > cb;
  const double ma = mean_conf(a), mb = mean_conf(b);
  if (ma != mb) return ma > mb;
  return a.frame_ts_ms > b.frame_ts_ms;
}

}  // namespace detail

/// Timestamp of the group's representative payload.
inline std::int64_t select_exemplar(std::span<const OcrPayload> members) {
  if (members.empty()) throw ContractViolation("select_exemplar: empty group");
  const OcrPayload* best = &members.front();
  for (const auto& m : members) {
    if (detail::better_exemplar(m, *best)) best = &m;
  }
  return best->frame_ts_ms;
}

inline double text_similarity(const OcrPayload& a, const OcrPayload& b) {
  return text_similarity(joined_text(a.spans), joined_text(b.spans));
}

enum class RetrievalSource : std::uint8_t { Direct, Fallback, Synthesized };

struct Retrieval {
  OcrPayload payload;
  std::int64_t source_ts_ms = 0;  // timestamp the content was stored under
  RetrievalSource source = RetrievalSource::Direct;
  bool operator==(const Retrieval&) const = default;
};

enum class BatchStatus : std::uint8_t { Direct, Fallback, Synthesized, Deduplicated, Guarantee };

struct BatchEntry {
  std::int64_t requested_ts = 0;
  OcrPayload payload;
  std::int64_t source_ts_ms = 0;
  BatchStatus status = BatchStatus::Direct;

  bool has_text() const {
    return payload.kind == PayloadKind::TextOcr && status != BatchStatus::Synthesized &&
           status != BatchStatus::Deduplicated;
  }
  bool operator==(const BatchEntry&) const = default;
};

/// One OCR line offered to prompt assembly.
struct OcrContextEntry {
  std::int64_t ts_ms = 0;
  std::string text;
  QualityFlags flags;
  bool is_selection = false;
  std::int64_t source_ts_ms = 0;  // payload the text came from
  std::string qr;
  bool operator==(const OcrContextEntry&) const = default;
};

class SessionTimeline {
 public:
  explicit SessionTimeline(OsmConfig config = {}) : config_(config) {}

  SessionTimeline(const SessionTimeline& o) {
    std::lock_guard lock(o.mu_);
    config_ = o.config_;
    payloads_ = o.payloads_;
    valid_ts_ = o.valid_ts_;
    text_ts_ = o.text_ts_;
    dirty_ = true;
  }
  SessionTimeline& operator=(const SessionTimeline&) = delete;

  /// Stores the payload at its frame timestamp; an existing payload there is replaced.
  void ingest(OcrPayload payload) {
    if (!payload.well_formed()) throw ContractViolation("ingest: spans inconsistent with payload kind");
    std::lock_guard lock(mu_);
    const std::int64_t ts = payload.frame_ts_ms;
    const bool append = payloads_.empty() || ts > payloads_.rbegin()->first;
    const auto existing = payloads_.find(ts);
    if (existing != payloads_.end()) {
      valid_ts_.erase(ts);
      text_ts_.erase(ts);
    }
    if (is_retrievable(payload.kind)) valid_ts_.insert(ts);
    if (payload.kind == PayloadKind::TextOcr) text_ts_.insert(ts);
    auto& slot = payloads_[ts];
    slot = std::move(payload);
    if (append && !dirty_) {
      if (slot.kind == PayloadKind::TextOcr) place(slot, grouping_);
    } else {
      dirty_ = true;
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return payloads_.size();
  }

  /// All payloads, ascending by timestamp.
  std::vector<OcrPayload> payloads() const {
    std::lock_guard lock(mu_);
    std::vector<OcrPayload> out;
    out.reserve(payloads_.size());
    for (const auto& [ts, p] : payloads_) out.push_back(p);
    return out;
  }

  std::vector<OcrGroup> groups() const {
    std::lock_guard lock(mu_);
    return current().groups;
  }

  std::optional<std::int64_t> latest_selection_ts() const {
    std::lock_guard lock(mu_);
    return current().latest_selection;
  }

  /// Exact hit on a kind 1/2 payload is returned as-is; otherwise the latest
  /// kind 1/2 payload before T, re-stamped at T; otherwise a synthesized NoText.
  Retrieval get(std::int64_t ts) const {
    std::lock_guard lock(mu_);
    return get_locked(ts);
  }

  std::vector<BatchEntry> get_batch(std::span<const std::int64_t> timestamps) const {
    if (timestamps.empty()) throw ContractViolation("get_batch: empty timestamp list");
    std::lock_guard lock(mu_);
    const auto& g = current();

    std::vector<BatchEntry> out;
    out.reserve(timestamps.size() + 1);
    for (auto ts : timestamps) {
      auto r = get_locked(ts);
      BatchEntry e{ts, std::move(r.payload), r.source_ts_ms, BatchStatus::Direct};
      if (r.source == RetrievalSource::Fallback) e.status = BatchStatus::Fallback;
      if (r.source == RetrievalSource::Synthesized) e.status = BatchStatus::Synthesized;
      out.push_back(std::move(e));
    }

    // Keep only the freshest occurrence per group, carrying the group exemplar.
    std::unordered_map<std::size_t, std::size_t> keeper;  // group -> slot
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!out[i].has_text()) continue;
      const std::size_t gid = g.group_of.at(out[i].source_ts_ms);
      auto [it, inserted] = keeper.emplace(gid, i);
      if (!inserted && out[i].payload.frame_ts_ms > out[it->second].payload.frame_ts_ms) it->second = i;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!out[i].has_text()) continue;
      const std::size_t gid = g.group_of.at(out[i].source_ts_ms);
      if (keeper.at(gid) != i) {
        out[i].payload = OcrPayload{PayloadKind::NoText, out[i].requested_ts, {}, false, {}};
        out[i].status = BatchStatus::Deduplicated;
        continue;
      }
      const auto& group = g.groups[gid];
      const auto& ex = payloads_.at(group.exemplar_ts);
      out[i].payload.spans = ex.spans;
      out[i].payload.quality_flags = ex.quality_flags;
      out[i].source_ts_ms = group.exemplar_ts;
    }

    const bool any_text = std::any_of(out.begin(), out.end(), [](const BatchEntry& e) { return e.has_text(); });
    if (!any_text && !text_ts_.empty()) {
      const std::int64_t latest_req = *std::max_element(timestamps.begin(), timestamps.end());
      auto it = text_ts_.upper_bound(latest_req);
      const std::int64_t pick = it == text_ts_.begin() ? *it : *std::prev(it);
      const auto& p = payloads_.at(pick);
      out.push_back(BatchEntry{pick, p, pick, BatchStatus::Guarantee});
    }
    return out;
  }

  /// Group exemplars whose latest member lies in [ts - window, ts], ascending.
  /// Only the most recent selection at or before the query keeps its flag.
  std::vector<OcrContextEntry> build_ocr_context(const QueryRecord& query, std::int64_t window_ms) const {
    if (window_ms <= 0) throw ContractViolation("build_ocr_context: window must be positive");
    std::lock_guard lock(mu_);
    const auto& g = current();
    const std::int64_t lo = query.ts_ms - window_ms;
    const std::int64_t hi = query.ts_ms;

    std::optional<std::int64_t> live_selection;
    for (const auto& group : g.groups) {
      if (group.selection && group.exemplar_ts <= hi &&
          (!live_selection || group.exemplar_ts > *live_selection))
        live_selection = group.exemplar_ts;
    }

    std::vector<OcrContextEntry> out;
    for (const auto& group : g.groups) {
      if (group.group_latest_ts < lo || group.group_latest_ts > hi) continue;
      const auto& ex = payloads_.at(group.exemplar_ts);
      OcrContextEntry e;
      e.ts_ms = group.group_latest_ts;
      e.text = joined_text(ex.spans);
      e.flags = ex.quality_flags;
      e.is_selection = group.selection && live_selection && group.exemplar_ts == *live_selection;
      e.source_ts_ms = group.exemplar_ts;
      e.qr = qr_text(ex.spans);
      out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ts_ms < b.ts_ms; });
    return out;
  }

  const OsmConfig& config() const { return config_; }

 private:
  struct Grouping {
    std::vector<OcrGroup> groups;
    std::vector<std::set<std::string>> exemplar_tokens;  // per group
    std::unordered_map<std::int64_t, std::size_t> group_of;
    std::optional<std::int64_t> latest_selection;
  };

  // Greedy single pass: join the most similar non-selection group at or above
  // the threshold (earliest group on ties), else open a new group.
  void place(const OcrPayload& p, Grouping& g) const {
    const std::int64_t ts = p.frame_ts_ms;
    auto tokens = lowercase_token_set(joined_text(p.spans));
    if (p.selection) {
      g.group_of[ts] = g.groups.size();
      g.groups.push_back(OcrGroup{{ts}, ts, ts, true});
      g.exemplar_tokens.push_back(std::move(tokens));
      g.latest_selection = ts;
      return;
    }
    std::optional<std::size_t> best;
    double best_sim = -1.0;
    for (std::size_t i = 0; i < g.groups.size(); ++i) {
      if (g.groups[i].selection) continue;
      const double sim = jaccard(tokens, g.exemplar_tokens[i]);
      if (sim >= config_.text_threshold && sim > best_sim) {
        best_sim = sim;
        best = i;
      }
    }
    if (!best) {
      g.group_of[ts] = g.groups.size();
      g.groups.push_back(OcrGroup{{ts}, ts, ts, false});
      g.exemplar_tokens.push_back(std::move(tokens));
      return;
    }
    auto& group = g.groups[*best];
    group.members.push_back(ts);
    group.group_latest_ts = ts;
    g.group_of[ts] = *best;
    if (detail::better_exemplar(p, payloads_.at(group.exemplar_ts))) {
      group.exemplar_ts = ts;
      g.exemplar_tokens[*best] = std::move(tokens);
    }
  }

  static double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        ++inter;
        ++ia;
        ++ib;
      }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
  }

  const Grouping& current() const {
    if (dirty_) {
      Grouping fresh;
      for (auto ts : text_ts_) place(payloads_.at(ts), fresh);
      grouping_ = std::move(fresh);
      dirty_ = false;
    }
    return grouping_;
  }

  Retrieval get_locked(std::int64_t ts) const {
    if (valid_ts_.count(ts) != 0) return Retrieval{payloads_.at(ts), ts, RetrievalSource::Direct};
    auto it = valid_ts_.lower_bound(ts);
    if (it != valid_ts_.begin()) {
      const std::int64_t src = *std::prev(it);
      OcrPayload p = payloads_.at(src);
      p.frame_ts_ms = ts;
      return Retrieval{std::move(p), src, RetrievalSource::Fallback};
    }
    return Retrieval{OcrPayload{PayloadKind::NoText, ts, {}, false, {}}, ts, RetrievalSource::Synthesized};
  }

  OsmConfig config_;
  mutable std::mutex mu_;
  std::map<std::int64_t, OcrPayload> payloads_;
  std::set<std::int64_t> valid_ts_;
  std::set<std::int64_t> text_ts_;
  mutable Grouping grouping_;
  mutable bool dirty_ = false;
};

}  // namespace hybridocr
