#pragma once

// Relative power multipliers anchored on measured configurations. Two
// baselines are kept apart: streaming power relative to 12MP/30fps/3Mbps
// and on-device power relative to 12fps capture without OCR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hybridocr/core.hpp"
#include "hybridocr/link_protocol.hpp"
#include "hybridocr/text.hpp"

namespace hybridocr {

enum class OcrMode : std::uint8_t { NoOcr, OcrAllFrames, OcrSampled2fps, Sfs12MpInput, Sfs3MpInput };

inline constexpr std::string_view to_string(OcrMode m) {
  switch (m) {
    case OcrMode::NoOcr: return "none";
    case OcrMode::OcrAllFrames: return "all_frames";
    case OcrMode::OcrSampled2fps: return "sampled_2fps";
    case OcrMode::Sfs12MpInput: return "sfs_12mp";
    case OcrMode::Sfs3MpInput: return "sfs_3mp";
  }
  return "?";
}

inline std::optional<OcrMode> parse_ocr_mode(std::string_view s) {
  for (auto m : {OcrMode::NoOcr, OcrMode::OcrAllFrames, OcrMode::OcrSampled2fps, OcrMode::Sfs12MpInput,
                 OcrMode::Sfs3MpInput}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

struct StreamPowerConfig {
  Resolution resolution = Resolution::MP3;
  std::uint32_t fps = 2;
  std::uint64_t bitrate_bps = 500'000;
  bool operator==(const StreamPowerConfig&) const = default;
};

struct DevicePowerConfig {
  std::uint32_t fps = 2;
  OcrMode ocr_mode = OcrMode::Sfs3MpInput;
  double words_per_text_frame = 0;
};

using PowerConfig = std::variant<StreamPowerConfig, DevicePowerConfig>;

struct StreamAnchor {
  StreamPowerConfig config;
  double multiplier = 1.0;
};

/// One device row group. NoOcr groups have no word anchors and a single multiplier.
struct DeviceAnchorGroup {
  std::uint32_t fps = 12;
  OcrMode ocr_mode = OcrMode::NoOcr;
  std::vector<double> words;
  std::vector<double> multipliers;
};

class NoAnchorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PowerAnchors {
  int version = 1;
  std::vector<StreamAnchor> streaming;
  std::vector<DeviceAnchorGroup> device;

  static const PowerAnchors& builtin() {
    static const PowerAnchors anchors = [] {
      PowerAnchors a;
      a.streaming = {
          {{Resolution::MP12, 30, 3'000'000}, 1.00},
          {{Resolution::MP3, 30, 1'000'000}, 0.83},
          {{Resolution::MP3, 12, 1'000'000}, 0.65},
          {{Resolution::MP3, 2, 500'000}, 0.49},
      };
      a.device = {
          {12, OcrMode::NoOcr, {}, {1.00}},
          {2, OcrMode::NoOcr, {}, {0.85}},
          {12, OcrMode::OcrAllFrames, {0, 30, 100}, {1.42, 1.68, 1.88}},
          {12, OcrMode::OcrSampled2fps, {0, 30, 100}, {1.31, 1.54, 1.77}},
          {2, OcrMode::OcrAllFrames, {0, 30, 100}, {0.95, 1.06, 1.08}},
          {2, OcrMode::Sfs12MpInput, {0, 30, 100}, {1.05, 1.11, 1.19}},
          {2, OcrMode::Sfs3MpInput, {0, 30, 100}, {0.91, 0.94, 0.96}},
      };
      return a;
    }();
    return anchors;
  }

  std::size_t device_entry_count() const {
    std::size_t n = 0;
    for (const auto& g : device) n += g.multipliers.size();
    return n;
  }

  /// Stable text form the checksum is computed over.
  std::string canonical() const {
    std::string out = "power-anchors v" + std::to_string(version) + "\n";
    char buf[128];
    for (const auto& s : streaming) {
      std::snprintf(buf, sizeof buf, "stream %s %u %llu %.6g\n", std::string(to_string(s.config.resolution)).c_str(),
                    s.config.fps, static_cast<unsigned long long>(s.config.bitrate_bps), s.multiplier);
      out += buf;
    }
    for (const auto& g : device) {
      std::snprintf(buf, sizeof buf, "device %u %s", g.fps, std::string(to_string(g.ocr_mode)).c_str());
      out += buf;
      for (std::size_t i = 0; i < g.multipliers.size(); ++i) {
        if (g.words.empty()) {
          std::snprintf(buf, sizeof buf, " %.6g", g.multipliers[i]);
        } else {
          std::snprintf(buf, sizeof buf, " %.6g:%.6g", g.words[i], g.multipliers[i]);
        }
        out += buf;
      }
      out += "\n";
    }
    return out;
  }

  std::string checksum() const { return hex64(fnv1a64(canonical())); }

  void validate() const {
    for (const auto& s : streaming) {
      if (!(s.multiplier > 0)) throw ConfigError("power anchors: non-positive streaming multiplier");
    }
    for (const auto& g : device) {
      if (g.multipliers.empty()) throw ConfigError("power anchors: device group without multipliers");
      if (g.ocr_mode == OcrMode::NoOcr) {
        if (!g.words.empty() || g.multipliers.size() != 1)
          throw ConfigError("power anchors: no-OCR group takes exactly one multiplier");
      } else if (g.words.size() != g.multipliers.size()) {
        throw ConfigError("power anchors: word anchors and multipliers differ in length");
      }
      for (std::size_t i = 0; i < g.multipliers.size(); ++i) {
        if (!(g.multipliers[i] > 0)) throw ConfigError("power anchors: non-positive device multiplier");
        if (i > 0 && !(g.words[i] > g.words[i - 1]))
          throw ConfigError("power anchors: word anchors must be strictly increasing");
      }
    }
  }

  static PowerAnchors from_json(const nlohmann::json& j) {
    PowerAnchors a;
    try {
      a.version = j.at("version").get<int>();
      for (const auto& s : j.at("streaming")) {
        StreamAnchor sa;
        const auto res = parse_resolution(s.at("resolution").get<std::string>());
        if (!res) throw ConfigError("power anchors: unknown resolution");
        sa.config = {*res, s.at("fps").get<std::uint32_t>(), s.at("bitrate_bps").get<std::uint64_t>()};
        sa.multiplier = s.at("multiplier").get<double>();
        a.streaming.push_back(sa);
      }
      for (const auto& d : j.at("device")) {
        DeviceAnchorGroup g;
        g.fps = d.at("fps").get<std::uint32_t>();
        const auto mode = parse_ocr_mode(d.at("ocr_mode").get<std::string>());
        if (!mode) throw ConfigError("power anchors: unknown ocr_mode");
        g.ocr_mode = *mode;
        if (d.contains("multiplier")) {
          g.multipliers = {d.at("multiplier").get<double>()};
        } else {
          g.words = d.at("words").get<std::vector<double>>();
          g.multipliers = d.at("multipliers").get<std::vector<double>>();
        }
        a.device.push_back(std::move(g));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("power anchors: ") + e.what());
    }
    a.validate();
    return a;
  }

  static PowerAnchors load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("power anchors: cannot open " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("power anchors: ") + e.what());
    }
  }
};

namespace detail {

inline std::string describe(const StreamPowerConfig& c) {
  return std::string(to_string(c.resolution)) + "/" + std::to_string(c.fps) + "fps/" +
         std::to_string(c.bitrate_bps) + "bps";
}

inline std::string describe(const DeviceAnchorGroup& g) {
  return std::to_string(g.fps) + "fps/" + std::string(to_string(g.ocr_mode));
}

}  // namespace detail

/// Exact anchor value, or piecewise-linear in words within an anchored
/// (fps, mode) group; word counts past the last anchor use the last value.
inline double relative_power(const PowerConfig& config, const PowerAnchors& anchors = PowerAnchors::builtin(),
                             Diagnostics* diag = nullptr) {
  if (const auto* s = std::get_if<StreamPowerConfig>(&config)) {
    for (const auto& a : anchors.streaming) {
      if (a.config == *s) return a.multiplier;
    }
    std::vector<std::pair<int, const StreamAnchor*>> ranked;
    for (const auto& a : anchors.streaming) {
      const int mismatches = (a.config.resolution != s->resolution) + (a.config.fps != s->fps) +
                             (a.config.bitrate_bps != s->bitrate_bps);
      ranked.emplace_back(mismatches, &a);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::string msg = "no anchor for streaming " + detail::describe(*s) + "; nearest anchored rows:";
    for (std::size_t i = 0; i < std::min<std::size_t>(2, ranked.size()); ++i)
      msg += " " + detail::describe(ranked[i].second->config);
    throw NoAnchorError(msg);
  }

  const auto& d = std::get<DevicePowerConfig>(config);
  if (!(d.words_per_text_frame >= 0)) throw ContractViolation("relative_power: negative word count");
  for (const auto& g : anchors.device) {
    if (g.fps != d.fps || g.ocr_mode != d.ocr_mode) continue;
    if (g.words.empty()) return g.multipliers.front();
    const double w = d.words_per_text_frame;
    if (w >= g.words.back()) {
      if (w > g.words.back())
        warn_if(diag, "word count " + std::to_string(w) + " above last anchor; clamped for " + detail::describe(g));
      return g.multipliers.back();
    }
    if (w <= g.words.front()) return g.multipliers.front();
    for (std::size_t i = 0; i + 1 < g.words.size(); ++i) {
      if (w == g.words[i]) return g.multipliers[i];
      if (w < g.words[i + 1]) {
        const double frac = (w - g.words[i]) / (g.words[i + 1] - g.words[i]);
        return g.multipliers[i] + frac * (g.multipliers[i + 1] - g.multipliers[i]);
      }
    }
    return g.multipliers.back();
  }
  std::string msg = "no anchor for device " + std::to_string(d.fps) + "fps/" + std::string(to_string(d.ocr_mode)) +
                    "; nearest anchored rows:";
  int listed = 0;
  for (const auto& g : anchors.device) {
    if ((g.ocr_mode == d.ocr_mode || g.fps == d.fps) && listed < 3) {
      msg += " " + detail::describe(g);
      ++listed;
    }
  }
  throw NoAnchorError(msg);
}

struct PowerReport {
  double stream_multiplier = 0;
  double device_multiplier = 0;
  StreamPowerConfig stream;
  DevicePowerConfig device;
  std::uint64_t uplink_bits = 0;
  std::string anchors_checksum;
  std::vector<std::string> warnings;

  std::string narrative() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "stream %.2fx vs 12MP/30fps/3Mbps streaming; device %.2fx vs 12fps no-OCR capture "
                  "(%s, %.1f words/frame); uplink %llu bits",
                  stream_multiplier, device_multiplier, detail::describe(stream).c_str(), device.words_per_text_frame,
                  static_cast<unsigned long long>(uplink_bits));
    return buf;
  }
};

/// Reports both baselines side by side; they are never fused into one number.
inline PowerReport session_power_report(const StreamPowerConfig& stream, std::uint32_t device_fps, OcrMode mode,
                                        std::uint64_t ocr_words_total, std::uint64_t ocr_frames,
                                        const UplinkLedger& ledger,
                                        const PowerAnchors& anchors = PowerAnchors::builtin()) {
  PowerReport r;
  Diagnostics diag;
  r.stream = stream;
  r.device = {device_fps, mode,
              ocr_frames == 0 ? 0.0 : static_cast<double>(ocr_words_total) / static_cast<double>(ocr_frames)};
  r.stream_multiplier = relative_power(stream, anchors, &diag);
  r.device_multiplier = relative_power(r.device, anchors, &diag);
  r.uplink_bits = ledger.total_bits();
  r.anchors_checksum = anchors.checksum();
  r.warnings = std::move(diag.warnings);
  return r;
}

}  // namespace hybridocr
