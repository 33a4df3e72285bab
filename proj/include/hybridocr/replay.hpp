#pragma once

// End-to-end replay: device selection and OCR per frame, framed payloads
// over the simulated uplink, session manager ingestion on the server, and one
// prompt per query. Also the report model and its two text renderings.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "hybridocr/config.hpp"
#include "hybridocr/core.hpp"
#include "hybridocr/enrichment.hpp"
#include "hybridocr/frame_selection.hpp"
#include "hybridocr/link_protocol.hpp"
#include "hybridocr/ocr_engine.hpp"
#include "hybridocr/osm.hpp"
#include "hybridocr/power_model.hpp"
#include "hybridocr/prompt_builder.hpp"
#include "hybridocr/text.hpp"
#include "hybridocr/trace_gen.hpp"
#include "hybridocr/trace_io.hpp"

namespace hybridocr {

struct OcrStats {
  std::uint64_t frames = 0;
  std::uint64_t words_attempted = 0;
  std::uint64_t words_correct = 0;
  double latency_ms_total = 0;
  bool operator==(const OcrStats&) const = default;
};

/// Ground-truth tokens of prompt-referenced frames that appear verbatim in their OCR line.
struct Fidelity {
  std::uint64_t frames_referenced = 0;
  std::uint64_t tokens_total = 0;
  std::uint64_t tokens_recovered = 0;
  double value() const {
    return tokens_total == 0 ? 0.0 : static_cast<double>(tokens_recovered) / static_cast<double>(tokens_total);
  }
  bool operator==(const Fidelity&) const = default;
};

struct PromptDigest {
  std::size_t query_index = 0;
  std::int64_t ts_ms = 0;
  std::string digest;
  bool operator==(const PromptDigest&) const = default;
};

struct UplinkSection {
  UplinkLedger ledger;
  std::uint64_t full_stream_bits = 0;  // same session streamed at 12MP/30fps/3Mbps
  std::int64_t duration_ms = 0;
  bool operator==(const UplinkSection&) const = default;
};

struct PowerSection {
  double stream_multiplier = 0;
  std::optional<double> device_multiplier;
  std::string stream_config;
  std::string device_config;
  std::string anchors_checksum;
  std::vector<std::string> warnings;
  bool operator==(const PowerSection&) const = default;
};

/// Percentages are always derived from the counts at render time.
struct PipelineReport {
  std::string label;
  StageCounts stages;
  std::optional<UplinkSection> uplink;
  std::optional<PowerSection> power;
  std::optional<OcrStats> ocr;
  std::optional<Fidelity> fidelity;
  std::vector<PromptDigest> prompts;

  bool empty() const {
    return stages.input == 0 && !uplink && !power && !ocr && !fidelity && prompts.empty();
  }
  bool operator==(const PipelineReport&) const = default;
};

struct ReplayResult {
  PipelineReport report;
  std::vector<SelectionDecision> decisions;
  std::vector<OcrPayload> payloads;  // as produced on the device, trace order
  std::vector<Prompt> prompts;
  std::vector<std::vector<OcrContextEntry>> prompt_ocr;  // OCR lines per prompt
  std::vector<std::uint8_t> uplink_bytes;               // every frame sent, in send order
  std::vector<std::string> warnings;
};

struct ReplayHooks {
  const OcrEngine* engine = nullptr;
  const EnrichmentRegistry* enrichment = nullptr;
  const Answerer* answerer = nullptr;
};

namespace detail {

/// Stable reorder where no element moves more than `bound` places.
template <typename T>
std::vector<T> bounded_shuffle(std::vector<T> items, std::size_t bound, std::uint64_t seed) {
  if (bound == 0 || items.size() < 2) return items;
  TraceRng rng(seed ^ 0x243f6a8885a308d3ull);
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    keys.emplace_back(static_cast<double>(i) + rng.uniform(0.0, static_cast<double>(bound)), i);
  std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<T> out;
  out.reserve(items.size());
  for (const auto& k : keys) out.push_back(std::move(items[k.second]));
  return out;
}

inline std::size_t multiset_matches(const std::vector<std::string>& truth, const std::vector<std::string>& seen) {
  std::map<std::string, std::size_t> pool;
  for (const auto& s : seen) ++pool[s];
  std::size_t hits = 0;
  for (const auto& t : truth) {
    auto it = pool.find(t);
    if (it != pool.end() && it->second > 0) {
      --it->second;
      ++hits;
    }
  }
  return hits;
}

inline std::int64_t session_duration_ms(std::span<const FrameRecord> frames) {
  if (frames.empty()) return 0;
  const std::int64_t span = frames.back().ts_ms - frames.front().ts_ms;
  const std::int64_t period = frames.size() > 1 ? span / static_cast<std::int64_t>(frames.size() - 1) : 1000;
  return span + std::max<std::int64_t>(period, 1);
}

}  // namespace detail

inline ReplayResult replay(const Trace& trace, std::span<const QueryRecord> queries, const ReplayConfig& config,
                           const ReplayHooks& hooks = {}) {
  ReplayResult result;
  auto& report = result.report;
  report.label = config.label;
  const auto& frames = trace.frames;

  const auto validation = validate_trace(frames, trace.header.scene_sig_dim);
  if (!validation.ok()) {
    const auto& v = validation.violations.front();
    throw ContractViolation("replay: frame " + std::to_string(v.frame_index) + ": " + v.message);
  }

  MockOcrEngine default_engine(config.ocr);
  const OcrEngine& engine = hooks.engine != nullptr ? *hooks.engine : default_engine;
  StubAnswerer default_answerer;
  const Answerer& answerer = hooks.answerer != nullptr ? *hooks.answerer : default_answerer;
  EnrichmentRegistry no_hooks;
  const EnrichmentRegistry& enrichment = hooks.enrichment != nullptr ? *hooks.enrichment : no_hooks;

  // Device side.
  FrameSelector selector(config.selector);
  Diagnostics diag;
  OcrStats ocr_stats;
  std::vector<FrameIndexEntry> frame_index;
  std::vector<WireMessage> sent;
  const std::uint64_t sid = config.link.session_id;
  sent.push_back({sid, SessionStartBody{}});
  std::vector<WireMessage> payload_msgs;

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& frame = frames[i];
    auto outcome = selector.process(frame, &diag);
    auto& decision = outcome.decision;
    OcrPayload payload;
    payload.frame_ts_ms = frame.ts_ms;
    payload.selection = decision.selection;
    payload.kind = outcome.kind;
    if (decision.verdict == Verdict::RunOcr) {
      auto ocr = engine.recognize(frame, config.ocr_resolution, *decision.roi);
      decision.stage_latency_ms.ocr_ms = ocr.simulated_latency_ms;
      ++ocr_stats.frames;
      ocr_stats.words_attempted += ocr.words_attempted;
      ocr_stats.words_correct += ocr.words_correct;
      ocr_stats.latency_ms_total += ocr.simulated_latency_ms;
      payload.spans = std::move(ocr.spans);
      if (payload.spans.empty()) payload.kind = PayloadKind::NoText;
      payload.quality_flags = derive_quality_flags(frame, decision.roi);
    } else {
      payload.quality_flags = derive_quality_flags(frame, std::nullopt);
      if (decision.verdict == Verdict::RejectBlur) payload.quality_flags.set(QualityFlag::Blurry);
    }
    if (payload.selection) {
      const Rect roi = decision.roi.value_or(Rect{0, 0, 1, 1});
      payload_msgs.push_back({sid, SelectionEvent{frame.ts_ms, roi}});
    }
    payload_msgs.push_back({sid, payload});
    frame_index.push_back({frame.ts_ms, config.stream.resolution, frame.resolution,
                           decision.verdict == Verdict::RunOcr});
    result.decisions.push_back(decision);
    result.payloads.push_back(std::move(payload));
  }
  report.stages = stage_report(result.decisions);

  const std::int64_t duration_ms = detail::session_duration_ms(frames);
  const std::int64_t origin = frames.empty() ? 0 : frames.front().ts_ms;
  for (std::int64_t t = 0; t < duration_ms; t += config.link.video_segment_ms) {
    const std::int64_t len = std::min(config.link.video_segment_ms, duration_ms - t);
    payload_msgs.push_back({sid, VideoSegment{origin + t, len, config.stream.fps, config.stream.resolution,
                                              config.stream.bitrate_bps}});
  }
  if (config.link.shuffle) payload_msgs = detail::bounded_shuffle(std::move(payload_msgs), config.link.shuffle_bound, config.ocr.seed);
  for (auto& m : payload_msgs) sent.push_back(std::move(m));
  sent.push_back({sid, SessionEndBody{}});

  UplinkLedger ledger;
  for (const auto& m : sent) {
    auto bytes = encode(m);
    result.uplink_bytes.insert(result.uplink_bytes.end(), bytes.begin(), bytes.end());
    ledger = account(ledger, m);
  }
  report.uplink = UplinkSection{ledger, stream_bits(3'000'000, duration_ms), duration_ms};

  // Server side: decode what arrived and ingest up to each query time.
  const auto delivered = decode_stream(result.uplink_bytes);
  std::vector<OcrPayload> pending;
  for (const auto& m : delivered) {
    if (const auto* p = std::get_if<OcrPayload>(&m.body)) pending.push_back(*p);
  }
  SessionTimeline timeline(config.osm);
  std::vector<bool> ingested(pending.size(), false);
  auto ingest_until = [&](std::int64_t ts) {
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (!ingested[i] && pending[i].frame_ts_ms <= ts) {
        timeline.ingest(pending[i]);
        ingested[i] = true;
      }
    }
  };

  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return queries[a].ts_ms < queries[b].ts_ms; });

  std::unordered_map<std::int64_t, std::size_t> frame_at;
  for (std::size_t i = 0; i < frames.size(); ++i) frame_at[frames[i].ts_ms] = i;
  Fidelity fidelity;
  std::map<std::int64_t, bool> counted;
  std::vector<FramePlan> plans;
  std::vector<HistoryTurn> history;
  result.prompts.resize(queries.size());
  result.prompt_ocr.resize(queries.size());
  std::vector<PromptDigest> digests(queries.size());

  for (std::size_t qi : order) {
    const auto& q = queries[qi];
    ingest_until(q.ts_ms);
    auto plan = plan_frames(frame_index, q, config.prompt, plans);
    auto ctx = timeline.build_ocr_context(q, config.prompt.ocr_window_ms);
    ctx = normalize_entries(std::move(ctx));
    ctx = consolidate(ctx, config.enrichment);
    ctx = enrichment_hooks(std::move(ctx), enrichment, &diag);
    ctx = dedup_prompt_ocr(ctx, config.osm.text_threshold);

    const std::size_t keep = std::min(history.size(), config.prompt.hist_n);
    std::span<const HistoryTurn> recent(history.data() + (history.size() - keep), keep);
    auto prompt = build_prompt(q, plan, ctx, recent);

    for (const auto& e : ctx) {
      if (counted.count(e.source_ts_ms) != 0) continue;
      const auto it = frame_at.find(e.source_ts_ms);
      if (it == frame_at.end()) continue;
      counted[e.source_ts_ms] = true;
      const auto& gt = frames[it->second].gt_words;
      ++fidelity.frames_referenced;
      fidelity.tokens_total += gt.size();
      fidelity.tokens_recovered += detail::multiset_matches(gt, split_tokens(e.text));
    }

    history.push_back({q.ts_ms, q.question, answerer.answer(prompt, ctx)});
    plans.push_back(plan);
    digests[qi] = {qi, q.ts_ms, hex64(fnv1a64(prompt.text))};
    result.prompts[qi] = std::move(prompt);
    result.prompt_ocr[qi] = std::move(ctx);
  }
  ingest_until(std::numeric_limits<std::int64_t>::max());

  report.prompts = std::move(digests);
  report.ocr = ocr_stats;
  report.fidelity = fidelity;

  PowerSection power;
  power.stream_multiplier = relative_power(config.stream, PowerAnchors::builtin(), &diag);
  power.stream_config = detail::describe(config.stream);
  if (config.device) {
    DevicePowerConfig dev = *config.device;
    dev.words_per_text_frame = ocr_stats.frames == 0 ? 0.0
                                                     : static_cast<double>(ocr_stats.words_attempted) /
                                                           static_cast<double>(ocr_stats.frames);
    Diagnostics power_diag;
    power.device_multiplier = relative_power(dev, PowerAnchors::builtin(), &power_diag);
    power.warnings = power_diag.warnings;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%ufps/%s/%.2f words", dev.fps, std::string(to_string(dev.ocr_mode)).c_str(),
                  dev.words_per_text_frame);
    power.device_config = buf;
  }
  power.anchors_checksum = PowerAnchors::builtin().checksum();
  report.power = std::move(power);
  result.warnings = std::move(diag.warnings);
  return result;
}

enum class ReportFormat { Human, Machine };

inline constexpr std::string_view kReportFormat = "hybridocr-report";

namespace detail {

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string emit_report(const PipelineReport& r, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::Machine) {
    using ojson = nlohmann::ordered_json;
    ojson header;
    header["format"] = std::string(kReportFormat);
    header["version"] = kFormatVersion;
    if (!r.label.empty()) header["label"] = r.label;
    out << header.dump() << '\n';
    if (r.empty()) return out.str();
    ojson s;
    s["section"] = "stages";
    s["input"] = r.stages.input;
    s["after_blur"] = r.stages.after_blur;
    s["after_text"] = r.stages.after_text;
    s["after_similarity"] = r.stages.after_similarity;
    s["budget_rejected"] = r.stages.budget_rejected;
    out << s.dump() << '\n';
    if (r.uplink) {
      ojson u;
      u["section"] = "uplink";
      u["video_bits"] = r.uplink->ledger.video_bits;
      u["payload_bits"] = r.uplink->ledger.payload_bits;
      u["message_count"] = r.uplink->ledger.message_count;
      u["full_stream_bits"] = r.uplink->full_stream_bits;
      u["duration_ms"] = r.uplink->duration_ms;
      out << u.dump() << '\n';
    }
    if (r.power) {
      ojson p;
      p["section"] = "power";
      p["stream_multiplier"] = r.power->stream_multiplier;
      p["stream_config"] = r.power->stream_config;
      if (r.power->device_multiplier) {
        p["device_multiplier"] = *r.power->device_multiplier;
        p["device_config"] = r.power->device_config;
      }
      p["anchors_checksum"] = r.power->anchors_checksum;
      p["warnings"] = r.power->warnings;
      out << p.dump() << '\n';
    }
    if (r.ocr) {
      ojson o;
      o["section"] = "ocr";
      o["frames"] = r.ocr->frames;
      o["words_attempted"] = r.ocr->words_attempted;
      o["words_correct"] = r.ocr->words_correct;
      o["latency_ms_total"] = r.ocr->latency_ms_total;
      out << o.dump() << '\n';
    }
    if (r.fidelity) {
      ojson f;
      f["section"] = "fidelity";
      f["frames_referenced"] = r.fidelity->frames_referenced;
      f["tokens_total"] = r.fidelity->tokens_total;
      f["tokens_recovered"] = r.fidelity->tokens_recovered;
      out << f.dump() << '\n';
    }
    for (const auto& p : r.prompts) {
      ojson j;
      j["section"] = "prompt";
      j["query_index"] = p.query_index;
      j["ts_ms"] = p.ts_ms;
      j["digest"] = p.digest;
      out << j.dump() << '\n';
    }
    return out.str();
  }

  constexpr std::size_t kStageCol = 28, kCountCol = 20;
  out << detail::pad("Stage", kStageCol) << detail::pad("Video frame count", kCountCol) << "Percentage change\n";
  if (r.empty()) return out.str();
  const auto& s = r.stages;
  auto row = [&](const char* name, std::uint64_t count, const std::string& pct) {
    out << detail::pad(name, kStageCol) << detail::pad(std::to_string(count), kCountCol) << pct << '\n';
  };
  row("Camera stream", s.input, "-");
  row("After Blur Filter", s.after_blur, format_pct(s.pct_after_blur()));
  row("After Text Content Filter", s.after_text, format_pct(s.pct_after_text()));
  row("After Similarity Filter", s.after_similarity, format_pct(s.pct_after_similarity()));
  out << '\n' << "Budget rejections after similarity: " << s.budget_rejected << '\n';
  if (!r.label.empty()) out << "Configuration: " << r.label << '\n';
  if (r.uplink) {
    out << "Uplink: video_bits=" << r.uplink->ledger.video_bits << " payload_bits=" << r.uplink->ledger.payload_bits
        << " messages=" << r.uplink->ledger.message_count << " total_bits=" << r.uplink->ledger.total_bits()
        << " (12MP/30fps/3Mbps stream: " << r.uplink->full_stream_bits << " bits over " << r.uplink->duration_ms
        << " ms)\n";
  }
  if (r.power) {
    out << "Stream power: " << detail::fixed(r.power->stream_multiplier, 2) << "x (" << r.power->stream_config
        << ", relative to 12MP/30fps/3Mbps streaming)\n";
    if (r.power->device_multiplier) {
      out << "Device power: " << detail::fixed(*r.power->device_multiplier, 4) << "x (" << r.power->device_config
          << ", relative to 12fps capture without OCR)\n";
    }
    for (const auto& w : r.power->warnings) out << "Power warning: " << w << '\n';
    out << "Power anchors checksum: " << r.power->anchors_checksum << '\n';
  }
  if (r.ocr) {
    out << "OCR: frames=" << r.ocr->frames << " words_correct=" << r.ocr->words_correct << "/"
        << r.ocr->words_attempted << " latency_ms_total=" << detail::fixed(r.ocr->latency_ms_total, 1) << '\n';
  }
  if (r.fidelity) {
    out << "Text fidelity: " << detail::fixed(r.fidelity->value(), 4) << " (" << r.fidelity->tokens_recovered << "/"
        << r.fidelity->tokens_total << " tokens over " << r.fidelity->frames_referenced << " frames)\n";
  }
  for (const auto& p : r.prompts) {
    out << "Prompt " << p.query_index << " t=" << p.ts_ms << "ms digest=" << p.digest << '\n';
  }
  return out.str();
}

/// Reads the machine format back.
inline PipelineReport parse_report(std::istream& in) {
  PipelineReport r;
  nlohmann::ordered_json header;
  io::for_each_record(
      in, kReportFormat,
      [&](const nlohmann::json& j) {
        const auto section = j.at("section").get<std::string>();
        if (section == "stages") {
          r.stages.input = j.at("input").get<std::uint64_t>();
          r.stages.after_blur = j.at("after_blur").get<std::uint64_t>();
          r.stages.after_text = j.at("after_text").get<std::uint64_t>();
          r.stages.after_similarity = j.at("after_similarity").get<std::uint64_t>();
          r.stages.budget_rejected = j.at("budget_rejected").get<std::uint64_t>();
        } else if (section == "uplink") {
          UplinkSection u;
          u.ledger.video_bits = j.at("video_bits").get<std::uint64_t>();
          u.ledger.payload_bits = j.at("payload_bits").get<std::uint64_t>();
          u.ledger.message_count = j.at("message_count").get<std::uint64_t>();
          u.full_stream_bits = j.at("full_stream_bits").get<std::uint64_t>();
          u.duration_ms = j.at("duration_ms").get<std::int64_t>();
          r.uplink = u;
        } else if (section == "power") {
          PowerSection p;
          p.stream_multiplier = j.at("stream_multiplier").get<double>();
          p.stream_config = j.at("stream_config").get<std::string>();
          if (j.contains("device_multiplier")) {
            p.device_multiplier = j.at("device_multiplier").get<double>();
            p.device_config = j.at("device_config").get<std::string>();
          }
          p.anchors_checksum = j.at("anchors_checksum").get<std::string>();
          p.warnings = j.at("warnings").get<std::vector<std::string>>();
          r.power = p;
        } else if (section == "ocr") {
          OcrStats o;
          o.frames = j.at("frames").get<std::uint64_t>();
          o.words_attempted = j.at("words_attempted").get<std::uint64_t>();
          o.words_correct = j.at("words_correct").get<std::uint64_t>();
          o.latency_ms_total = j.at("latency_ms_total").get<double>();
          r.ocr = o;
        } else if (section == "fidelity") {
          Fidelity f;
          f.frames_referenced = j.at("frames_referenced").get<std::uint64_t>();
          f.tokens_total = j.at("tokens_total").get<std::uint64_t>();
          f.tokens_recovered = j.at("tokens_recovered").get<std::uint64_t>();
          r.fidelity = f;
        } else if (section == "prompt") {
          r.prompts.push_back({j.at("query_index").get<std::size_t>(), j.at("ts_ms").get<std::int64_t>(),
                               j.at("digest").get<std::string>()});
        } else {
          throw ConfigError("unknown report section '" + section + "'");
        }
      },
      &header);
  r.label = header.value("label", "");
  return r;
}

inline PipelineReport parse_report(const std::string& text) {
  std::istringstream is(text);
  return parse_report(is);
}

}  // namespace hybridocr
