#pragma once

// Newline-delimited JSON trace and query files. The first line of each file
// is a header object naming the format and version; every following line is
// one record.

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridocr/core.hpp"

namespace hybridocr {

inline constexpr std::string_view kTraceFormat = "hybridocr-trace";
inline constexpr std::string_view kQueriesFormat = "hybridocr-queries";
inline constexpr int kFormatVersion = 1;

struct TraceHeader {
  std::size_t scene_sig_dim = kDefaultSceneSigDim;
  nlohmann::ordered_json generator;  // generator parameters and intended stage rates, if generated
};

struct Trace {
  TraceHeader header;
  std::vector<FrameRecord> frames;
};

namespace io {

using ojson = nlohmann::ordered_json;

inline ojson rect_json(const Rect& r) { return ojson::array({r.x, r.y, r.w, r.h}); }

inline Rect parse_rect(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("bbox must be [x, y, w, h]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline ojson frame_json(const FrameRecord& f) {
  ojson j;
  j["ts_ms"] = f.ts_ms;
  j["resolution"] = std::string(to_string(f.resolution));
  j["exposure_us"] = f.exposure_us;
  ojson imu = ojson::array();
  for (const auto& s : f.imu)
    imu.push_back({s.ts_us, s.gyro[0], s.gyro[1], s.gyro[2], s.accel[0], s.accel[1], s.accel[2]});
  j["imu"] = std::move(imu);
  ojson dets = ojson::array();
  for (const auto& d : f.detections) {
    ojson dj;
    dj["cls"] = std::string(to_string(d.cls));
    dj["bbox"] = rect_json(d.bbox);
    dj["conf"] = d.conf;
    if (!d.keypoints.empty()) {
      ojson kp = ojson::array();
      for (const auto& p : d.keypoints) kp.push_back({p.x, p.y});
      dj["keypoints"] = std::move(kp);
    }
    dets.push_back(std::move(dj));
  }
  j["detections"] = std::move(dets);
  j["scene_sig"] = f.scene_sig;
  j["gt_words"] = f.gt_words;
  j["user_selection"] = f.user_selection;
  if (!f.annotated_flags.empty()) j["flags"] = f.annotated_flags.names();
  if (!f.qr.empty()) j["qr"] = f.qr;
  return j;
}

inline FrameRecord parse_frame(const nlohmann::json& j) {
  FrameRecord f;
  f.ts_ms = j.at("ts_ms").get<std::int64_t>();
  const auto res = parse_resolution(j.at("resolution").get<std::string>());
  if (!res) throw ConfigError("unknown resolution " + j.at("resolution").dump());
  f.resolution = *res;
  f.exposure_us = j.at("exposure_us").get<std::int64_t>();
  for (const auto& s : j.at("imu")) {
    if (!s.is_array() || s.size() != 7) throw ConfigError("imu sample must be [ts_us, gx, gy, gz, ax, ay, az]");
    ImuSample imu;
    imu.ts_us = s[0].get<std::int64_t>();
    for (int i = 0; i < 3; ++i) {
      imu.gyro[i] = s[1 + i].get<double>();
      imu.accel[i] = s[4 + i].get<double>();
    }
    f.imu.push_back(imu);
  }
  for (const auto& dj : j.at("detections")) {
    Detection d;
    const auto cls = parse_detection_class(dj.at("cls").get<std::string>());
    if (!cls) throw ConfigError("unknown detection class " + dj.at("cls").dump());
    d.cls = *cls;
    d.bbox = parse_rect(dj.at("bbox"));
    d.conf = dj.at("conf").get<double>();
    if (dj.contains("keypoints")) {
      for (const auto& p : dj.at("keypoints")) {
        if (!p.is_array() || p.size() != 2) throw ConfigError("keypoint must be [x, y]");
        d.keypoints.push_back({p[0].get<double>(), p[1].get<double>()});
      }
    }
    f.detections.push_back(std::move(d));
  }
  f.scene_sig = j.at("scene_sig").get<std::vector<double>>();
  f.gt_words = j.at("gt_words").get<std::vector<std::string>>();
  f.user_selection = j.at("user_selection").get<bool>();
  if (j.contains("flags")) {
    for (const auto& name : j.at("flags")) {
      const auto flag = parse_quality_flag(name.get<std::string>());
      if (!flag) throw ConfigError("unknown quality flag " + name.dump());
      f.annotated_flags.set(*flag);
    }
  }
  if (j.contains("qr")) f.qr = j.at("qr").get<std::string>();
  return f;
}

inline ojson query_json(const QueryRecord& q) {
  ojson j;
  j["ts_ms"] = q.ts_ms;
  j["speech_start_ms"] = q.speech_start_ms;
  j["question"] = q.question;
  j["mode"] = std::string(to_string(q.mode));
  if (q.target_lang) j["target_lang"] = *q.target_lang;
  return j;
}

inline QueryRecord parse_query(const nlohmann::json& j) {
  QueryRecord q;
  q.ts_ms = j.at("ts_ms").get<std::int64_t>();
  q.speech_start_ms = j.at("speech_start_ms").get<std::int64_t>();
  q.question = j.at("question").get<std::string>();
  const auto mode = parse_query_mode(j.at("mode").get<std::string>());
  if (!mode) throw ConfigError("unknown query mode " + j.at("mode").dump());
  q.mode = *mode;
  if (j.contains("target_lang")) q.target_lang = j.at("target_lang").get<std::string>();
  if (q.speech_start_ms > q.ts_ms) throw ConfigError("speech_start_ms after ts_ms");
  if (q.mode == QueryMode::Translation && !q.target_lang) throw ConfigError("translation query without target_lang");
  return q;
}

/// Runs `fn` on every non-empty line after the header, tagging errors with the line number.
template <typename Fn>
void for_each_record(std::istream& in, std::string_view format, Fn&& fn, nlohmann::ordered_json* header_out = nullptr) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      if (!have_header) {
        // Header keeps its key order so generator metadata round-trips byte for byte.
        auto h = nlohmann::ordered_json::parse(line);
        if (h.value("format", "") != format) throw ConfigError("expected format '" + std::string(format) + "'");
        if (h.value("version", 0) != kFormatVersion) throw ConfigError("unsupported version");
        if (header_out != nullptr) *header_out = std::move(h);
        have_header = true;
        continue;
      }
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ConfigError("missing header line for " + std::string(format));
}

}  // namespace io

inline void write_trace(std::ostream& out, const Trace& trace) {
  io::ojson header;
  header["format"] = std::string(kTraceFormat);
  header["version"] = kFormatVersion;
  header["scene_sig_dim"] = trace.header.scene_sig_dim;
  if (!trace.header.generator.is_null()) header["generator"] = trace.header.generator;
  out << header.dump() << '\n';
  for (const auto& f : trace.frames) out << io::frame_json(f).dump() << '\n';
}

inline std::string trace_to_string(const Trace& trace) {
  std::ostringstream os;
  write_trace(os, trace);
  return os.str();
}

inline Trace read_trace(std::istream& in) {
  Trace trace;
  nlohmann::ordered_json header;
  io::for_each_record(
      in, kTraceFormat, [&](const nlohmann::json& j) { trace.frames.push_back(io::parse_frame(j)); }, &header);
  trace.header.scene_sig_dim = header.value("scene_sig_dim", kDefaultSceneSigDim);
  if (header.contains("generator")) trace.header.generator = header.at("generator");
  return trace;
}

inline Trace trace_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_trace(is);
}

inline Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace " + path);
  return read_trace(in);
}

inline void write_queries(std::ostream& out, std::span<const QueryRecord> queries) {
  io::ojson header;
  header["format"] = std::string(kQueriesFormat);
  header["version"] = kFormatVersion;
  out << header.dump() << '\n';
  for (const auto& q : queries) out << io::query_json(q).dump() << '\n';
}

inline std::vector<QueryRecord> read_queries(std::istream& in) {
  std::vector<QueryRecord> out;
  io::for_each_record(in, kQueriesFormat, [&](const nlohmann::json& j) { out.push_back(io::parse_query(j)); });
  return out;
}

inline std::vector<QueryRecord> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open queries " + path);
  return read_queries(in);
}

}  // namespace hybridocr
