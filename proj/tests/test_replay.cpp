#include <gtest/gtest.h>

#include "hybridocr/replay.hpp"

using namespace hybridocr;

namespace {

GeneratorSpec small_spec(std::uint64_t seed) {
  GeneratorSpec s;
  s.duration_s = 120;
  s.fps = 2;
  s.selection_events = 3;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Generator, ZeroDurationIsEmpty) {
  GeneratorSpec s;
  s.duration_s = 0;
  EXPECT_TRUE(generate_trace(s).frames.empty());
  EXPECT_TRUE(generate_queries(generate_trace(s), 1000).empty());
}

TEST(Generator, ByteIdenticalForSeed) {
  EXPECT_EQ(trace_to_string(generate_trace(small_spec(4))), trace_to_string(generate_trace(small_spec(4))));
  EXPECT_NE(trace_to_string(generate_trace(small_spec(4))), trace_to_string(generate_trace(small_spec(5))));
}

TEST(Generator, RejectsInfeasibleSpecs) {
  GeneratorSpec s;
  s.duration_s = 1;
  s.selection_events = 10;
  EXPECT_THROW(generate_trace(s), ConfigError);
  s = {};
  s.text_density = 1.2;
  EXPECT_THROW(generate_trace(s), ConfigError);
  s = {};
  s.similarity_run_length = 0.5;
  EXPECT_THROW(generate_trace(s), ConfigError);
}

TEST(Generator, ValidAndRoundTrips) {
  const auto t = generate_trace(small_spec(9));
  EXPECT_TRUE(validate_trace(t.frames, t.header.scene_sig_dim).ok());
  EXPECT_EQ(trace_to_string(trace_from_string(trace_to_string(t))), trace_to_string(t));
}

TEST(Generator, SurvivorFractionNearIntended) {
  GeneratorSpec s;
  s.duration_s = 2500;
  s.fps = 2;
  s.seed = 3;
  const auto t = generate_trace(s);
  FrameSelector sel;
  std::vector<SelectionDecision> d;
  for (const auto& f : t.frames) d.push_back(sel.process(f).decision);
  const auto c = stage_report(d);
  const double frac = static_cast<double>(c.after_similarity) / static_cast<double>(c.input);
  EXPECT_NEAR(frac, s.expected_survivor_fraction(), 0.02);
  EXPECT_NEAR(1.0 - static_cast<double>(c.after_blur) / c.input, s.blur_rate, 0.01);
}

TEST(ReplayConfig, PresetsAndJson) {
  EXPECT_EQ(ReplayConfig::server_low().ocr_resolution, Resolution::MP3);
  EXPECT_FALSE(ReplayConfig::server_full().device.has_value());
  const auto c = replay_config_from_json(nlohmann::json::parse(
      R"({"preset":"server-low","label":"x","prompt":{"pre_n":2},"link":{"shuffle":true,"shuffle_bound":3},
          "selector":{"class_thresholds":{"text_object":0.6}}})"));
  EXPECT_EQ(c.label, "x");
  EXPECT_EQ(c.ocr_resolution, Resolution::MP3);
  EXPECT_EQ(c.prompt.pre_n, 2u);
  EXPECT_TRUE(c.link.shuffle);
  EXPECT_EQ(c.link.shuffle_bound, 3u);
  EXPECT_THROW(replay_config_from_json(nlohmann::json::parse(R"({"preset":"nope"})")), ConfigError);
  EXPECT_THROW(replay_config_from_json(nlohmann::json::parse(R"({"stream":{"resolution":"9MP"}})")), ConfigError);
  EXPECT_THROW(replay_config_from_json(nlohmann::json::parse(R"({"link":{"video_segment_ms":0}})")), ConfigError);
  const auto full = replay_config_from_json(nlohmann::json::parse(R"({"device":null})"));
  EXPECT_FALSE(full.device.has_value());
}

TEST(Replay, DeterministicAndConserving) {
  const auto t = generate_trace(small_spec(1));
  const auto q = generate_queries(t, 10000);
  const auto a = replay(t, q, ReplayConfig::hybrid());
  const auto b = replay(t, q, ReplayConfig::hybrid());
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.uplink_bytes, b.uplink_bytes);

  EXPECT_EQ(a.report.stages.input, t.frames.size());
  EXPECT_EQ(a.payloads.size(), t.frames.size());
  EXPECT_EQ(a.prompts.size(), q.size());
  const auto& s = a.report.stages;
  EXPECT_GE(s.input, s.after_blur);
  EXPECT_GE(s.after_blur, s.after_text);
  EXPECT_GE(s.after_text, s.after_similarity);
  EXPECT_EQ(a.report.ocr->frames, s.after_similarity - s.budget_rejected);

  const auto delivered = decode_stream(a.uplink_bytes);
  EXPECT_EQ(delivered.size(), a.report.uplink->ledger.message_count);
  EXPECT_EQ(a.uplink_bytes.size() * 8, a.report.uplink->ledger.payload_bits);
  std::size_t payloads = 0, selections = 0;
  for (const auto& m : delivered) {
    payloads += std::holds_alternative<OcrPayload>(m.body);
    selections += std::holds_alternative<SelectionEvent>(m.body);
  }
  EXPECT_EQ(payloads, t.frames.size());
  EXPECT_EQ(selections, 3u);
  EXPECT_TRUE(std::holds_alternative<SessionStartBody>(delivered.front().body));
  EXPECT_TRUE(std::holds_alternative<SessionEndBody>(delivered.back().body));
}

TEST(Replay, VideoBitsMatchStream) {
  const auto t = generate_trace(small_spec(2));
  const auto r = replay(t, {}, ReplayConfig::hybrid());
  // 240 frames at 2 fps -> 120 s of video at 500 kbps.
  EXPECT_EQ(r.report.uplink->duration_ms, 120000);
  EXPECT_EQ(r.report.uplink->ledger.video_bits, 60'000'000u);
  EXPECT_EQ(r.report.uplink->full_stream_bits, 360'000'000u);
}

TEST(Replay, EmptyQueriesStillReportsDevice) {
  const auto t = generate_trace(small_spec(3));
  const auto r = replay(t, {}, ReplayConfig::hybrid());
  EXPECT_TRUE(r.prompts.empty());
  EXPECT_EQ(r.report.fidelity->tokens_total, 0u);
  EXPECT_GT(r.report.stages.input, 0u);
}

TEST(Replay, InvalidTraceNamesFrame) {
  auto t = generate_trace(small_spec(3));
  t.frames[5].ts_ms = t.frames[4].ts_ms;
  try {
    replay(t, {}, ReplayConfig::hybrid());
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("frame 5"), std::string::npos) << e.what();
  }
}

TEST(Replay, HybridReadsTextServerLowDoesNot) {
  auto spec = small_spec(11);
  spec.duration_s = 600;
  const auto t = generate_trace(spec);
  const auto q = generate_queries(t, 5000);
  const auto hybrid = replay(t, q, ReplayConfig::hybrid());
  const auto low = replay(t, q, ReplayConfig::server_low());
  EXPECT_GE(hybrid.report.fidelity->value(), 0.85);
  EXPECT_LE(low.report.fidelity->value(), 0.25);
  EXPECT_EQ(hybrid.report.power->stream_multiplier, low.report.power->stream_multiplier);
  EXPECT_GT(*hybrid.report.power->device_multiplier, *low.report.power->device_multiplier);

  const auto full = replay(t, q, ReplayConfig::server_full());
  EXPECT_FALSE(full.report.power->device_multiplier.has_value());
  EXPECT_EQ(full.report.power->stream_multiplier, 1.0);
  EXPECT_GT(full.report.uplink->ledger.total_bits(), hybrid.report.uplink->ledger.total_bits());
}

TEST(Replay, ShuffledDeliveryGivesSamePrompts) {
  const auto t = generate_trace(small_spec(6));
  const auto q = generate_queries(t, 7000);
  auto shuffled = ReplayConfig::hybrid();
  shuffled.link.shuffle = true;
  shuffled.link.shuffle_bound = 16;
  const auto a = replay(t, q, ReplayConfig::hybrid());
  const auto b = replay(t, q, shuffled);
  EXPECT_NE(a.uplink_bytes, b.uplink_bytes);
  EXPECT_EQ(a.report.prompts, b.report.prompts);
  EXPECT_EQ(a.report.fidelity, b.report.fidelity);
}

TEST(BoundedShuffle, MovesAtMostBound) {
  std::vector<int> v(500);
  for (int i = 0; i < 500; ++i) v[i] = i;
  const auto s = detail::bounded_shuffle(v, 5, 1);
  EXPECT_NE(s, v);
  for (int i = 0; i < 500; ++i) EXPECT_LE(std::abs(s[i] - i), 5);
  auto sorted = s;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, v);
}

TEST(Report, MachineRoundTrip) {
  const auto t = generate_trace(small_spec(8));
  const auto r = replay(t, generate_queries(t, 9000), ReplayConfig::hybrid()).report;
  const auto text = emit_report(r, ReportFormat::Machine);
  const auto back = parse_report(text);
  EXPECT_EQ(back.label, r.label);
  EXPECT_EQ(back.stages, r.stages);
  EXPECT_EQ(back.uplink, r.uplink);
  EXPECT_EQ(back.ocr->frames, r.ocr->frames);
  EXPECT_EQ(back.fidelity, r.fidelity);
  EXPECT_EQ(back.prompts, r.prompts);
  EXPECT_EQ(emit_report(back, ReportFormat::Machine), text);
  EXPECT_EQ(emit_report(back, ReportFormat::Human), emit_report(r, ReportFormat::Human));
}

TEST(Report, HumanTable) {
  PipelineReport r;
  r.stages = {37400, 36630, 23130, 12090, 0};
  const auto text = emit_report(r, ReportFormat::Human);
  EXPECT_NE(text.find("Camera stream               37400               -\n"), std::string::npos) << text;
  EXPECT_NE(text.find("After Similarity Filter     12090               -67.7%\n"), std::string::npos) << text;
}

TEST(Report, EmptyIsHeaderOnly) {
  const PipelineReport r;
  EXPECT_EQ(emit_report(r, ReportFormat::Human),
            "Stage                       Video frame count   Percentage change\n");
  const auto machine = emit_report(r, ReportFormat::Machine);
  EXPECT_EQ(std::count(machine.begin(), machine.end(), '\n'), 1);
  EXPECT_TRUE(parse_report(machine).empty());
}

TEST(Report, RejectsForeignInput) {
  EXPECT_ANY_THROW(parse_report(std::string("{\"format\":\"other\",\"version\":1}\n")));
}
