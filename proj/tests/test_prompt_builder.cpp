#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "hybridocr/prompt_builder.hpp"
#include "prompt_scenarios.hpp"

using namespace hybridocr;

namespace {

std::string read_golden(const std::string& name) {
  std::ifstream in(std::string(HYBRIDOCR_GOLDEN_DIR) + "/prompt_" + name + ".txt", std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(PlanFrames, ZeroPreN) {
  PromptConfig c;
  c.pre_n = 0;
  const auto frames = scenarios::frame_index(10000, {});
  EXPECT_TRUE(plan_frames(frames, {10000, 9000, "q", QueryMode::Qa, {}}, c).pre_query.empty());
}

TEST(PlanFrames, UniformGrid) {
  PromptConfig c;
  c.lookback_ms = 4000;
  c.pre_n = 4;
  const auto frames = scenarios::frame_index(10000, {});
  const auto plan = plan_frames(frames, {10000, 8000, "q", QueryMode::Qa, {}}, c);
  ASSERT_EQ(plan.pre_query.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(plan.pre_query[i].ts_ms, 4000 + 1000 * static_cast<std::int64_t>(i));
}

TEST(PlanFrames, SnapsBackwardsAndDedups) {
  std::vector<FrameIndexEntry> frames{{100, Resolution::MP3, Resolution::MP12, false},
                                      {2900, Resolution::MP3, Resolution::MP12, false}};
  PromptConfig c;
  c.lookback_ms = 4000;
  c.pre_n = 4;
  // Grid 0, 1000, 2000, 3000 -> none, 100, 100, 2900.
  const auto plan = plan_frames(frames, {5000, 4000, "q", QueryMode::Qa, {}}, c);
  ASSERT_EQ(plan.pre_query.size(), 2u);
  EXPECT_EQ(plan.pre_query[0].ts_ms, 100);
  EXPECT_EQ(plan.pre_query[1].ts_ms, 2900);
}

TEST(PlanFrames, NoAcceptedDuringSpeech) {
  const auto frames = scenarios::frame_index(10000, {1000});
  EXPECT_TRUE(plan_frames(frames, {10000, 8000, "q", QueryMode::Qa, {}}, {}).in_query.empty());
}

TEST(PlanFrames, RandomizedBounds) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<FrameIndexEntry> frames;
    std::int64_t t = static_cast<std::int64_t>(rng() % 300);
    for (int i = 0; i < 80; ++i) {
      frames.push_back({t, Resolution::MP3, Resolution::MP12, rng() % 3 == 0});
      t += 1 + static_cast<std::int64_t>(rng() % 700);
    }
    PromptConfig c;
    c.lookback_ms = static_cast<std::int64_t>(rng() % 12000);
    c.pre_n = rng() % 7;
    c.hist_n = rng() % 4;
    const std::int64_t start = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(t));
    const QueryRecord q{start + static_cast<std::int64_t>(rng() % 5000), start, "q", QueryMode::Qa, {}};
    FramePlan prior;
    for (int i = 0; i < 5; ++i) prior.in_query.push_back({static_cast<std::int64_t>(rng() % 1000) * 10, Resolution::MP12});
    std::sort(prior.in_query.begin(), prior.in_query.end(),
              [](const FrameRef& a, const FrameRef& b) { return a.ts_ms < b.ts_ms; });
    const std::vector<FramePlan> turns{prior};
    const auto plan = plan_frames(frames, q, c, turns);
    EXPECT_LE(plan.pre_query.size(), c.pre_n);
    EXPECT_LE(plan.historical.size(), c.hist_n);
    for (std::size_t i = 0; i < plan.pre_query.size(); ++i) {
      EXPECT_GE(plan.pre_query[i].ts_ms, start - c.lookback_ms);
      EXPECT_LT(plan.pre_query[i].ts_ms, start);
      if (i > 0) {
        EXPECT_LT(plan.pre_query[i - 1].ts_ms, plan.pre_query[i].ts_ms);
      }
    }
    for (std::size_t i = 0; i < plan.in_query.size(); ++i) {
      EXPECT_GE(plan.in_query[i].ts_ms, start);
      EXPECT_LE(plan.in_query[i].ts_ms, q.ts_ms);
      if (i > 0) {
        EXPECT_LT(plan.in_query[i - 1].ts_ms, plan.in_query[i].ts_ms);
      }
    }
    for (std::size_t i = 1; i < plan.historical.size(); ++i)
      EXPECT_LT(plan.historical[i - 1].ts_ms, plan.historical[i].ts_ms);
  }
}

TEST(RenderOcr, Lines) {
  EXPECT_EQ(render_ocr_line(scenarios::entry(1500, "GATE B12")), "[OCR t=1500ms flags=none] GATE B12");
  EXPECT_EQ(render_ocr_line(scenarios::entry(1, "x", {QualityFlag::Cropped, QualityFlag::Blurry})),
            "[OCR t=1ms flags=blurry,cropped] x");
  EXPECT_EQ(render_ocr_line(scenarios::entry(2, "y", {}, true)), "[OCR t=2ms flags=none;selected] y");
  EXPECT_EQ(render_ocr_line(scenarios::entry(3, "z", {}, false, "WIFI:abc")), "[OCR t=3ms flags=qr=WIFI:abc] z");
}

TEST(RenderOcr, BlockIsAscending) {
  const std::vector<OcrContextEntry> e{scenarios::entry(30, "b"), scenarios::entry(10, "a")};
  EXPECT_EQ(render_ocr_block(e), "[OCR t=10ms flags=none] a\n[OCR t=30ms flags=none] b\n");
}

TEST(DedupPromptOcr, Examples) {
  std::vector<OcrContextEntry> same{scenarios::entry(10, "EXIT"), scenarios::entry(20, "EXIT")};
  auto out = dedup_prompt_ocr(same);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].ts_ms, 10);

  std::vector<OcrContextEntry> disjoint{scenarios::entry(10, "EXIT"), scenarios::entry(20, "ENTRY")};
  EXPECT_EQ(dedup_prompt_ocr(disjoint).size(), 2u);

  std::vector<OcrContextEntry> selected{scenarios::entry(10, "EXIT"), scenarios::entry(20, "EXIT", {}, true)};
  EXPECT_EQ(dedup_prompt_ocr(selected).size(), 2u);
}

TEST(DedupPromptOcr, Idempotent) {
  std::mt19937_64 rng(2);
  const std::vector<std::string> vocab{"gate", "b12", "exit", "left", "open", "10:45"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<OcrContextEntry> in;
    for (int i = 0; i < 12; ++i) {
      std::string text;
      for (int k = 0; k < 3; ++k) text += vocab[rng() % vocab.size()] + " ";
      in.push_back(scenarios::entry(i * 100, text, {}, rng() % 5 == 0));
    }
    const auto once = dedup_prompt_ocr(in);
    EXPECT_EQ(dedup_prompt_ocr(once), once);
  }
}

TEST(BuildPrompt, QaOrdering) {
  const QueryRecord q{5000, 4000, "What is it?", QueryMode::Qa, {}};
  FramePlan plan;
  plan.in_query = {{4500, Resolution::MP12}};
  const std::vector<OcrContextEntry> ocr{scenarios::entry(4500, "EXIT")};
  const auto p = build_prompt(q, plan, ocr);
  ASSERT_EQ(p.components.size(), 3u);
  EXPECT_EQ(p.components[0].kind, ComponentKind::FrameRef);
  EXPECT_EQ(p.components[1].kind, ComponentKind::OcrBlock);
  EXPECT_EQ(p.components[2].kind, ComponentKind::Question);
}

TEST(BuildPrompt, Preambles) {
  const auto readout = build_prompt({10, 0, "q", QueryMode::Readout, {}}, {}, {});
  EXPECT_EQ(readout.components.front().body, "Read this word by word, spell out license plates character by character");
  const auto tr = build_prompt({10, 0, "q", QueryMode::Translation, "Spanish"}, {}, {});
  EXPECT_EQ(tr.components.front().body, "Translate this word by word into Spanish");
  EXPECT_EQ(tr.components.front().kind, ComponentKind::Preamble);
  EXPECT_THROW(build_prompt({10, 0, "q", QueryMode::Translation, {}}, {}, {}), ContractViolation);
  const auto qa = build_prompt({10, 0, "q", QueryMode::Qa, {}}, {}, {});
  ASSERT_EQ(qa.components.size(), 1u);
  EXPECT_EQ(qa.components[0].kind, ComponentKind::Question);
}

TEST(BuildPrompt, ChronologicalBetweenPreambleAndQuestion) {
  for (const auto& s : scenarios::all()) {
    const auto& c = s.prompt.components;
    std::size_t first = c.front().kind == ComponentKind::Preamble ? 1 : 0;
    for (std::size_t i = first + 1; i + 1 < c.size(); ++i) EXPECT_LE(c[i - 1].ts_ms, c[i].ts_ms) << s.name;
    EXPECT_EQ(c.back().kind, ComponentKind::Question);
    EXPECT_EQ(std::count_if(c.begin(), c.end(), [](const auto& x) { return x.kind == ComponentKind::Question; }), 1);
  }
}

TEST(BuildPrompt, Goldens) {
  for (const auto& s : scenarios::all()) {
    EXPECT_EQ(s.prompt.text, read_golden(s.name)) << s.name;
  }
}

TEST(StubAnswerer, EchoesOcrText) {
  const std::vector<OcrContextEntry> ocr{scenarios::entry(1, "GATE"), scenarios::entry(2, ""), scenarios::entry(3, "B12")};
  EXPECT_EQ(StubAnswerer{}.answer({}, ocr), "GATE B12");
}
