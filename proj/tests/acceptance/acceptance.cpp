// Acceptance run: one PASS/FAIL line per criterion. Thresholds and time
// limits are fixed here; the exit code is nonzero if anything fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hybridocr/replay.hpp"

#include "../osm_oracle.hpp"
#include "../prompt_scenarios.hpp"
#include "../wire_samples.hpp"

using namespace hybridocr;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1 -------------------------------------------------------------------

Outcome power_anchors() {
  Outcome o;
  struct S {
    StreamPowerConfig c;
    double want;
  };
  const std::vector<S> stream{{{Resolution::MP12, 30, 3'000'000}, 1.00},
                              {{Resolution::MP3, 30, 1'000'000}, 0.83},
                              {{Resolution::MP3, 12, 1'000'000}, 0.65},
                              {{Resolution::MP3, 2, 500'000}, 0.49}};
  for (const auto& s : stream) o.check(relative_power(s.c) == s.want, "stream " + detail::describe(s.c));

  struct D {
    std::uint32_t fps;
    OcrMode mode;
    double words, want;
  };
  const std::vector<D> device{
      {12, OcrMode::NoOcr, 0, 1.00},           {2, OcrMode::NoOcr, 0, 0.85},
      {12, OcrMode::OcrAllFrames, 0, 1.42},    {12, OcrMode::OcrAllFrames, 30, 1.68},
      {12, OcrMode::OcrAllFrames, 100, 1.88},  {12, OcrMode::OcrSampled2fps, 0, 1.31},
      {12, OcrMode::OcrSampled2fps, 30, 1.54}, {12, OcrMode::OcrSampled2fps, 100, 1.77},
      {2, OcrMode::OcrAllFrames, 0, 0.95},     {2, OcrMode::OcrAllFrames, 30, 1.06},
      {2, OcrMode::OcrAllFrames, 100, 1.08},   {2, OcrMode::Sfs12MpInput, 0, 1.05},
      {2, OcrMode::Sfs12MpInput, 30, 1.11},    {2, OcrMode::Sfs12MpInput, 100, 1.19},
      {2, OcrMode::Sfs3MpInput, 0, 0.91},      {2, OcrMode::Sfs3MpInput, 30, 0.94},
      {2, OcrMode::Sfs3MpInput, 100, 0.96},
  };
  for (const auto& d : device) {
    o.check(relative_power(DevicePowerConfig{d.fps, d.mode, d.words}) == d.want,
            std::to_string(d.fps) + "fps/" + std::string(to_string(d.mode)) + "@" + fmt("%.0f", d.words));
  }
  o.check(PowerAnchors::builtin().device_entry_count() == device.size(), "device entry count");
  o.note(std::to_string(stream.size()) + " streaming rows, " + std::to_string(device.size()) + " device entries");
  return o;
}

// ---- 2 -------------------------------------------------------------------

Outcome latency_anchors() {
  Outcome o;
  o.check(ocr_latency_ms(0) == 341.0, "0 words");
  o.check(ocr_latency_ms(30) == 396.0, "30 words");
  o.check(ocr_latency_ms(100) == 1188.0, "100 words");
  o.check(ocr_latency_ms(1000) == 4976.0, "1000 words");
  o.check(ocr_latency_ms(65) == 792.0, "65 words -> 792.0");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 3000);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = u(rng);
  std::sort(xs.begin(), xs.end());
  std::size_t bad = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) bad += ocr_latency_ms(xs[i - 1]) > ocr_latency_ms(xs[i]);
  o.check(bad == 0, "monotonicity");
  o.note("10000 random word counts, " + std::to_string(bad) + " inversions");
  return o;
}

// ---- 3 -------------------------------------------------------------------

Outcome frame_reduction() {
  Outcome o;
  const StageCounts table{37'400'000, 36'630'000, 23'130'000, 12'090'000, 0};
  const std::string blur = format_pct(table.pct_after_blur());
  const std::string text = format_pct(table.pct_after_text());
  const std::string sim = format_pct(table.pct_after_similarity());
  o.note("stage counts print " + blur + "/" + text + "/" + sim);
  o.check(blur == "-2.0%", "after blur " + blur + " != -2.0%");
  o.check(text == "-38.1%", "after text " + text + " != -38.1%");
  o.check(sim == "-67.7%", "after similarity " + sim + " != -67.7%");

  constexpr double kTarget = 0.323, kBand = 0.015;
  double lo = 1, hi = 0, sum = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GeneratorSpec spec;
    spec.fps = 2;
    spec.duration_s = 37400 / spec.fps;
    spec.blur_rate = 0.02;
    spec.text_density = 0.632;
    spec.similarity_run_length = 1.0 / 0.523;
    spec.seed = seed;
    const auto trace = generate_trace(spec);
    FrameSelector selector;
    std::vector<SelectionDecision> decisions;
    decisions.reserve(trace.frames.size());
    for (const auto& f : trace.frames) decisions.push_back(selector.process(f).decision);
    const auto c = stage_report(decisions);
    o.check(c.input == 37400, "generated frame count");
    const double frac = static_cast<double>(c.after_similarity) / static_cast<double>(c.input);
    lo = std::min(lo, frac);
    hi = std::max(hi, frac);
    sum += frac;
    o.check(std::abs(frac - kTarget) <= kBand, "seed " + std::to_string(seed) + " survivors " + fmt("%.4f", frac));
  }
  o.note("generated survivors mean " + fmt("%.2f%%", sum * 10) + " range [" + fmt("%.2f", lo * 100) + ", " +
         fmt("%.2f", hi * 100) + "]%");
  return o;
}

// ---- 4 -------------------------------------------------------------------

Outcome ocr_accuracy() {
  Outcome o;
  std::vector<std::string> words;
  for (int i = 0; i < 10; ++i) words.push_back("TOKEN" + std::to_string(i));
  for (auto res : {Resolution::MP3, Resolution::MP5, Resolution::MP12}) {
    OcrConfig c;
    c.seed = 31337;
    std::uint64_t correct = 0, total = 0;
    for (std::int64_t ts = 0; total < 20000; ts += 500) {
      const auto r = run_mock_ocr(words, res, {0, 0, 1, 1}, c, ts);
      correct += r.words_correct;
      total += r.words_attempted;
    }
    const double p = word_accuracy(res);
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(total));
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    o.check(std::abs(acc - p) <= 3 * sigma, std::string(to_string(res)));
    o.note(std::string(to_string(res)) + " " + fmt("%.4f", acc) + " vs " + fmt("%.4f", p) + " (" +
           fmt("%.1f", std::abs(acc - p) / sigma) + " sigma)");
  }
  return o;
}

// ---- 5 -------------------------------------------------------------------

Outcome osm_oracle() {
  Outcome o;
  std::mt19937_64 rng(505);
  std::size_t queries = 0, mismatches = 0, batches = 0, guarantee_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto payloads = oracle::random_timeline(rng, 1 + rng() % 950, true);
    for (int order = 0; order < 3; ++order) {
      auto seq = payloads;
      std::shuffle(seq.begin(), seq.end(), rng);
      SessionTimeline t;
      for (const auto& p : seq) t.ingest(p);
      const auto store = oracle::effective(seq);
      // Overwrites can remove text, so judge the guarantee on what survives.
      const bool any_text = std::any_of(store.begin(), store.end(),
                                        [](const OcrPayload& p) { return p.kind == PayloadKind::TextOcr; });
      std::int64_t hi = 100;
      for (const auto& p : seq) hi = std::max(hi, p.frame_ts_ms + 100);
      for (int q = 0; q < 40; ++q) {
        // Half exact hits, half arbitrary times.
        const std::int64_t ts = q % 2 == 0 ? seq[rng() % seq.size()].frame_ts_ms
                                           : static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi));
        ++queries;
        mismatches += !(t.get(ts) == oracle::get(store, ts));
      }
      for (int b = 0; b < 10; ++b) {
        std::vector<std::int64_t> ts(1 + rng() % 6);
        for (auto& x : ts) x = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi));
        const auto batch = t.get_batch(ts);
        ++batches;
        const bool got = std::any_of(batch.begin(), batch.end(), [](const BatchEntry& e) { return e.has_text(); });
        guarantee_violations += got != any_text;
      }
    }
  }
  o.check(queries >= 10000, "query count");
  o.check(mismatches == 0, std::to_string(mismatches) + " get mismatches");
  o.check(guarantee_violations == 0, std::to_string(guarantee_violations) + " batch guarantee violations");
  o.note("100 timelines x 3 orders, " + std::to_string(queries) + " get queries, " + std::to_string(batches) +
         " batches");
  return o;
}

// ---- 6 -------------------------------------------------------------------

Outcome order_insensitivity() {
  Outcome o;
  std::mt19937_64 rng(606);
  std::size_t compared = 0, differ = 0;
  for (int set = 0; set < 100; ++set) {
    auto seq = oracle::random_timeline(rng, 1 + rng() % 300, false);
    std::int64_t end = 0;
    for (const auto& p : seq) end = std::max(end, p.frame_ts_ms);
    std::vector<QueryRecord> qs;
    for (int k = 0; k < 5; ++k) {
      const auto ts = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(end + 1000));
      qs.push_back({ts, std::max<std::int64_t>(0, ts - 2000), "q", QueryMode::Qa, std::nullopt});
    }
    auto context_bytes = [&](const std::vector<OcrPayload>& order) {
      SessionTimeline t;
      for (const auto& p : order) t.ingest(p);
      std::string out;
      for (const auto& q : qs) {
        for (std::int64_t window : {30000ll, 1000000000ll}) {
          const auto ctx = t.build_ocr_context(q, window);
          out += render_ocr_block(ctx);
          for (const auto& e : ctx) out += std::to_string(e.source_ts_ms) + (e.is_selection ? "s" : "") + ",";
          out += "\n";
        }
      }
      return out;
    };
    const auto ref = context_bytes(seq);
    for (int perm = 0; perm < 5; ++perm) {
      std::shuffle(seq.begin(), seq.end(), rng);
      ++compared;
      differ += context_bytes(seq) != ref;
    }
  }
  o.check(differ == 0, std::to_string(differ) + " permutations differ");
  o.note("100 payload sets, " + std::to_string(compared) + " permutations compared");
  return o;
}

// ---- 7 -------------------------------------------------------------------

Outcome hybrid_tradeoff() {
  Outcome o;
  GeneratorSpec spec;
  spec.duration_s = 1200;
  spec.fps = 2;
  spec.selection_events = 12;
  spec.seed = 77;
  const auto trace = generate_trace(spec);
  const auto queries = generate_queries(trace, 5000);
  const auto hybrid = replay(trace, queries, ReplayConfig::hybrid());
  const auto low = replay(trace, queries, ReplayConfig::server_low());
  const double fh = hybrid.report.fidelity->value();
  const double fl = low.report.fidelity->value();
  o.check(fh >= 0.85, "hybrid fidelity " + fmt("%.4f", fh));
  o.check(fl <= 0.25, "server-low fidelity " + fmt("%.4f", fl));
  o.check(hybrid.report.power->stream_multiplier == 0.49, "hybrid stream multiplier");
  o.check(low.report.power->stream_multiplier == 0.49, "server-low stream multiplier");
  o.note("hybrid " + fmt("%.4f", fh) + " over " + std::to_string(hybrid.report.fidelity->tokens_total) +
         " tokens, server-low " + fmt("%.4f", fl) + " over " + std::to_string(low.report.fidelity->tokens_total) +
         " tokens, both at stream " + fmt("%.2fx", hybrid.report.power->stream_multiplier));
  return o;
}

// ---- 8 -------------------------------------------------------------------

Outcome wire_protocol() {
  Outcome o;
  std::mt19937_64 rng(808);
  std::size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto m = wire_samples::random_message(rng);
    try {
      failures += !(decode(encode(m)) == m);
    } catch (const std::exception&) {
      ++failures;
    }
  }
  o.check(failures == 0, std::to_string(failures) + " round-trip failures");
  const auto hex = to_hex(encode(wire_samples::golden_message()));
  o.check(hex == wire_samples::kGoldenHex, "golden hex vs hand-written layout");
  o.check(hex == to_hex(encode(wire_samples::golden_message())), "golden hex stable");
  std::ifstream in(std::string(HYBRIDOCR_GOLDEN_DIR) + "/wire_ocr_payload.hex");
  std::string file_hex;
  std::getline(in, file_hex);
  o.check(hex == file_hex, "golden hex vs checked-in file");
  o.note("10000 random messages, golden " + std::to_string(hex.size() / 2) + " bytes");
  return o;
}

// ---- 9 -------------------------------------------------------------------

Outcome prompt_goldens() {
  Outcome o;
  for (const auto& s : scenarios::all()) {
    std::ifstream in(std::string(HYBRIDOCR_GOLDEN_DIR) + "/prompt_" + s.name + ".txt", std::ios::binary);
    std::ostringstream golden;
    golden << in.rdbuf();
    o.check(!golden.str().empty(), s.name + " golden missing");
    o.check(s.prompt.text == golden.str(), s.name + " differs from golden");
  }
  const auto readout = build_prompt({10, 0, "q", QueryMode::Readout, std::nullopt}, {}, {});
  o.check(readout.text.rfind("Read this word by word, spell out license plates character by character", 0) == 0,
          "readout preamble");
  const auto tr = build_prompt({10, 0, "q", QueryMode::Translation, "Spanish"}, {}, {});
  o.check(tr.text.rfind("Translate this word by word into Spanish", 0) == 0, "translation preamble");
  o.note(std::to_string(scenarios::all().size()) + " scenarios");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "power anchors", 1, power_anchors},
      {2, "latency anchors", 1, latency_anchors},
      {3, "frame reduction", 30, frame_reduction},
      {4, "OCR accuracy model", 30, ocr_accuracy},
      {5, "OSM oracle equivalence", 60, osm_oracle},
      {6, "order insensitivity", 60, order_insensitivity},
      {7, "hybrid trade-off", 60, hybrid_tradeoff},
      {8, "wire protocol", 60, wire_protocol},
      {9, "prompt goldens", 60, prompt_goldens},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) o.check(false, "took " + fmt("%.2f", secs) + " s, limit " + fmt("%.0f", c.limit_s) + " s");
    failed += !o.pass;
    std::printf("%s %d %s (%.3f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
