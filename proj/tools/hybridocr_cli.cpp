// hybridocr: generate traces, replay them through the pipeline, print reports
// and check trace files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "hybridocr/config.hpp"
#include "hybridocr/replay.hpp"
#include "hybridocr/trace_gen.hpp"
#include "hybridocr/trace_io.hpp"

namespace fs = std::filesystem;
using namespace hybridocr;

namespace {

struct Options {
  std::string trace;
  std::string queries;
  std::string config;
  std::string out;
  std::string format = "human";
  std::optional<std::uint64_t> seed;
  // generate
  GeneratorSpec gen;
  std::string queries_out;
  std::int64_t query_every_ms = 0;
  // replay
  std::string prompts_dir;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty() || o.out == "-") {
    std::cout << text;
  } else {
    write_file(o.out, text);
  }
}

ReportFormat parse_format(const std::string& s) {
  if (s == "human") return ReportFormat::Human;
  if (s == "machine") return ReportFormat::Machine;
  throw ConfigError("unknown report format '" + s + "'");
}

int run_generate(Options& o) {
  if (o.seed) o.gen.seed = *o.seed;
  const Trace trace = generate_trace(o.gen);
  emit(o, trace_to_string(trace));
  if (!o.queries_out.empty()) {
    if (o.query_every_ms <= 0) throw ConfigError("--queries-out needs --query-every-ms > 0");
    std::ostringstream qs;
    write_queries(qs, generate_queries(trace, o.query_every_ms));
    write_file(o.queries_out, qs.str());
  }
  return 0;
}

int run_replay(const Options& o) {
  ReplayConfig config = o.config.empty() ? ReplayConfig::hybrid() : load_replay_config(o.config);
  if (o.seed) config.set_seed(*o.seed);
  const Trace trace = load_trace(o.trace);
  std::vector<QueryRecord> queries;
  if (!o.queries.empty()) queries = load_queries(o.queries);

  const auto result = replay(trace, queries, config);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  emit(o, emit_report(result.report, parse_format(o.format)));

  if (!o.prompts_dir.empty()) {
    fs::create_directories(o.prompts_dir);
    for (std::size_t i = 0; i < result.prompts.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "prompt_%04zu.txt", i);
      write_file((fs::path(o.prompts_dir) / name).string(), result.prompts[i].text);
    }
  }
  return 0;
}

int run_report(const Options& o) {
  std::ifstream in(o.trace);
  if (!in) throw ConfigError("cannot open report " + o.trace);
  emit(o, emit_report(parse_report(in), parse_format(o.format)));
  return 0;
}

int run_validate(const Options& o) {
  const Trace trace = load_trace(o.trace);
  const auto report = validate_trace(trace.frames, trace.header.scene_sig_dim);
  for (const auto& v : report.violations) std::cout << "frame " << v.frame_index << ": " << v.message << '\n';
  std::size_t query_count = 0;
  if (!o.queries.empty()) query_count = load_queries(o.queries).size();
  std::cout << trace.frames.size() << " frames, " << query_count << " queries, " << report.violations.size()
            << " violations\n";
  return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid on-device/server OCR pipeline simulator"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Write a synthetic trace");
  gen->add_option("--duration", o.gen.duration_s, "Trace length in seconds")->capture_default_str();
  gen->add_option("--fps", o.gen.fps, "Capture rate")->capture_default_str();
  gen->add_option("--text-density", o.gen.text_density, "Share of sharp frames with a text region")
      ->capture_default_str();
  gen->add_option("--blur-rate", o.gen.blur_rate, "Share of blurry frames")->capture_default_str();
  gen->add_option("--run-length", o.gen.similarity_run_length, "Mean frames per text scene")
      ->capture_default_str();
  gen->add_option("--selection-events", o.gen.selection_events, "Pointing selections to insert")
      ->capture_default_str();
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--out", o.out, "Trace file (default stdout)");
  gen->add_option("--queries-out", o.queries_out, "Also write a query file");
  gen->add_option("--query-every-ms", o.query_every_ms, "Query spacing for --queries-out");

  auto* rep = app.add_subcommand("replay", "Run a trace through the pipeline");
  rep->add_option("--trace", o.trace, "Trace file")->required();
  rep->add_option("--queries", o.queries, "Query file");
  rep->add_option("--config", o.config, "Replay config (JSON)");
  rep->add_option("--seed", o.seed, "OCR seed");
  rep->add_option("--out", o.out, "Report file (default stdout)");
  rep->add_option("--format", o.format, "human or machine")->capture_default_str();
  rep->add_option("--prompts-dir", o.prompts_dir, "Write one prompt file per query here");

  auto* rpt = app.add_subcommand("report", "Re-render a machine report");
  rpt->add_option("--in", o.trace, "Machine report file")->required();
  rpt->add_option("--out", o.out, "Output file (default stdout)");
  rpt->add_option("--format", o.format, "human or machine")->capture_default_str();

  auto* val = app.add_subcommand("validate", "Check a trace file");
  val->add_option("--trace", o.trace, "Trace file")->required();
  val->add_option("--queries", o.queries, "Query file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_generate(o);
    if (rep->parsed()) return run_replay(o);
    if (rpt->parsed()) return run_report(o);
    if (val->parsed()) return run_validate(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
