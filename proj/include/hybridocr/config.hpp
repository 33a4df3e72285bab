#pragma once

// Harness configuration: thresholds, anchors, budgets and link options for a
// replay. Missing keys keep their defaults.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "hybridocr/enrichment.hpp"
#include "hybridocr/frame_selection.hpp"
#include "hybridocr/ocr_engine.hpp"
#include "hybridocr/osm.hpp"
#include "hybridocr/power_model.hpp"
#include "hybridocr/prompt_builder.hpp"

namespace hybridocr {

struct LinkConfig {
  std::uint64_t session_id = 1;
  bool shuffle = false;
  std::size_t shuffle_bound = 8;
  std::int64_t video_segment_ms = 1000;
};

struct ReplayConfig {
  std::string label = "hybrid";
  SelectorConfig selector;
  OcrConfig ocr;
  Resolution ocr_resolution = Resolution::MP12;
  StreamPowerConfig stream;
  std::optional<DevicePowerConfig> device = DevicePowerConfig{2, OcrMode::Sfs3MpInput, 0};
  OsmConfig osm;
  PromptConfig prompt;
  EnrichmentConfig enrichment;
  LinkConfig link;

  /// On-device high-resolution OCR alongside a 3MP/2fps/500kbps stream.
  static ReplayConfig hybrid() { return {}; }

  /// Low-resolution stream only; text is read from 3MP frames on the server.
  static ReplayConfig server_low() {
    ReplayConfig c;
    c.label = "server-low";
    c.ocr_resolution = Resolution::MP3;
    c.device = DevicePowerConfig{2, OcrMode::NoOcr, 0};
    return c;
  }

  /// Full-resolution stream; text is read from 12MP frames on the server.
  static ReplayConfig server_full() {
    ReplayConfig c;
    c.label = "server-full";
    c.ocr_resolution = Resolution::MP12;
    c.stream = {Resolution::MP12, 30, 3'000'000};
    c.device.reset();
    return c;
  }

  void set_seed(std::uint64_t seed) { ocr.seed = seed; }
};

namespace detail {

inline Resolution require_resolution(const nlohmann::json& j, const char* what) {
  const auto r = parse_resolution(j.get<std::string>());
  if (!r) throw ConfigError(std::string("config: unknown resolution for ") + what);
  return *r;
}

}  // namespace detail

inline ReplayConfig replay_config_from_json(const nlohmann::json& j) {
  ReplayConfig c;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "hybrid") c = ReplayConfig::hybrid();
    else if (preset == "server-low") c = ReplayConfig::server_low();
    else if (preset == "server-full") c = ReplayConfig::server_full();
    else throw ConfigError("config: unknown preset '" + preset + "'");
  }
  try {
    c.label = j.value("label", c.label);
    if (j.contains("selector")) {
      const auto& s = j.at("selector");
      auto& sc = c.selector;
      sc.similarity_threshold = s.value("similarity_threshold", sc.similarity_threshold);
      sc.budget_tokens = s.value("budget_tokens", sc.budget_tokens);
      sc.budget_window_ms = s.value("budget_window_ms", sc.budget_window_ms);
      if (s.contains("class_thresholds")) {
        for (const auto& [name, value] : s.at("class_thresholds").items()) {
          const auto cls = parse_detection_class(name);
          if (!cls) throw ConfigError("config: unknown detection class '" + name + "'");
          sc.thresholds[*cls] = value.get<double>();
        }
      }
      if (s.contains("blur_tree")) sc.blur_tree = DecisionTree::from_json(s.at("blur_tree"));
      if (s.contains("stage_costs_ms")) {
        const auto& k = s.at("stage_costs_ms");
        sc.costs.blur_ms = k.value("blur", sc.costs.blur_ms);
        sc.costs.roi_ms = k.value("roi", sc.costs.roi_ms);
        sc.costs.similarity_ms = k.value("similarity", sc.costs.similarity_ms);
      }
    }
    if (j.contains("ocr")) {
      const auto& o = j.at("ocr");
      if (o.contains("resolution")) c.ocr_resolution = detail::require_resolution(o.at("resolution"), "ocr");
      c.ocr.seed = o.value("seed", c.ocr.seed);
      if (o.contains("accuracy")) {
        for (const auto& [name, value] : o.at("accuracy").items()) {
          const auto r = parse_resolution(name);
          if (!r) throw ConfigError("config: unknown accuracy resolution '" + name + "'");
          c.ocr.accuracy[static_cast<std::size_t>(*r)] = value.get<double>();
        }
      }
      if (o.contains("latency_anchors")) {
        c.ocr.latency.clear();
        for (const auto& a : o.at("latency_anchors")) c.ocr.latency.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
      }
      c.ocr.validate();
    }
    if (j.contains("stream")) {
      const auto& s = j.at("stream");
      if (s.contains("resolution")) c.stream.resolution = detail::require_resolution(s.at("resolution"), "stream");
      c.stream.fps = s.value("fps", c.stream.fps);
      c.stream.bitrate_bps = s.value("bitrate_bps", c.stream.bitrate_bps);
    }
    if (j.contains("device")) {
      const auto& d = j.at("device");
      if (d.is_null()) {
        c.device.reset();
      } else {
        DevicePowerConfig dc = c.device.value_or(DevicePowerConfig{});
        dc.fps = d.value("fps", dc.fps);
        if (d.contains("ocr_mode")) {
          const auto m = parse_ocr_mode(d.at("ocr_mode").get<std::string>());
          if (!m) throw ConfigError("config: unknown ocr_mode");
          dc.ocr_mode = *m;
        }
        c.device = dc;
      }
    }
    if (j.contains("osm")) c.osm.text_threshold = j.at("osm").value("text_threshold", c.osm.text_threshold);
    if (j.contains("prompt")) {
      const auto& p = j.at("prompt");
      c.prompt.lookback_ms = p.value("lookback_ms", c.prompt.lookback_ms);
      c.prompt.pre_n = p.value("pre_n", c.prompt.pre_n);
      c.prompt.hist_n = p.value("hist_n", c.prompt.hist_n);
      c.prompt.ocr_window_ms = p.value("ocr_window_ms", c.prompt.ocr_window_ms);
    }
    if (j.contains("enrichment")) c.enrichment.gap_ms = j.at("enrichment").value("gap_ms", c.enrichment.gap_ms);
    c.enrichment.text_threshold = c.osm.text_threshold;
    if (j.contains("link")) {
      const auto& l = j.at("link");
      c.link.session_id = l.value("session_id", c.link.session_id);
      c.link.shuffle = l.value("shuffle", c.link.shuffle);
      c.link.shuffle_bound = l.value("shuffle_bound", c.link.shuffle_bound);
      c.link.video_segment_ms = l.value("video_segment_ms", c.link.video_segment_ms);
      if (c.link.video_segment_ms <= 0) throw ConfigError("config: video_segment_ms must be positive");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ReplayConfig load_replay_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return replay_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace hybridocr
