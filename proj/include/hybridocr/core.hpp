#pragma once

// Shared domain types for the wearable/server text pipeline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hybridocr {

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a configuration or data file cannot be accepted.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-fatal notes collected by operations that degrade gracefully.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

inline void warn_if(Diagnostics* diag, std::string msg) {
  if (diag != nullptr) diag->warn(std::move(msg));
}

enum class Resolution : std::uint8_t { MP3 = 0, MP5 = 1, MP12 = 2 };

inline constexpr std::string_view to_string(Resolution r) {
  switch (r) {
    case Resolution::MP3: return "3MP";
    case Resolution::MP5: return "5MP";
    case Resolution::MP12: return "12MP";
  }
  return "?";
}

inline std::optional<Resolution> parse_resolution(std::string_view s) {
  if (s == "3MP") return Resolution::MP3;
  if (s == "5MP") return Resolution::MP5;
  if (s == "12MP") return Resolution::MP12;
  return std::nullopt;
}

using Vec3 = std::array<double, 3>;

struct ImuSample {
  std::int64_t ts_us = 0;
  Vec3 gyro{};   // rad/s
  Vec3 accel{};  // m/s^2, gravity removed

  bool operator==(const ImuSample&) const = default;
};

/// Axis-aligned rectangle in normalized [0,1] image coordinates.
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return w * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  bool within_unit_square() const {
    return x >= 0 && y >= 0 && w >= 0 && h >= 0 && right() <= 1.0 && bottom() <= 1.0;
  }
  bool overlaps(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  bool operator==(const Rect&) const = default;
};

struct Point2 {
  double x = 0, y = 0;
  bool operator==(const Point2&) const = default;
};

enum class DetectionClass : std::uint8_t {
  HandPointing = 0,
  HandHolding = 1,
  OtherHandInteraction = 2,
  TextObject = 3,
};

inline constexpr std::string_view to_string(DetectionClass c) {
  switch (c) {
    case DetectionClass::HandPointing: return "hand_pointing";
    case DetectionClass::HandHolding: return "hand_holding";
    case DetectionClass::OtherHandInteraction: return "other_hand";
    case DetectionClass::TextObject: return "text_object";
  }
  return "?";
}

inline std::optional<DetectionClass> parse_detection_class(std::string_view s) {
  for (auto c : {DetectionClass::HandPointing, DetectionClass::HandHolding,
                 DetectionClass::OtherHandInteraction, DetectionClass::TextObject}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

/// A model output supplied by the trace. Keypoints are index-finger joints, tip last.
struct Detection {
  DetectionClass cls = DetectionClass::TextObject;
  Rect bbox;
  double conf = 0;
  std::vector<Point2> keypoints;

  bool operator==(const Detection&) const = default;
};

enum class QualityFlag : std::uint8_t { Blurry = 0, UpsideDown = 1, Cropped = 2, PoorLighting = 3 };

inline constexpr std::string_view to_string(QualityFlag f) {
  switch (f) {
    case QualityFlag::Blurry: return "blurry";
    case QualityFlag::UpsideDown: return "upside_down";
    case QualityFlag::Cropped: return "cropped";
    case QualityFlag::PoorLighting: return "poor_lighting";
  }
  return "?";
}

inline std::optional<QualityFlag> parse_quality_flag(std::string_view s) {
  for (auto f : {QualityFlag::Blurry, QualityFlag::UpsideDown, QualityFlag::Cropped,
                 QualityFlag::PoorLighting}) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

/// Small bitset over QualityFlag.
class QualityFlags {
 public:
  constexpr QualityFlags() = default;
  constexpr explicit QualityFlags(std::uint8_t bits) : bits_(bits & kMask) {}
  QualityFlags(std::initializer_list<QualityFlag> flags) {
    for (auto f : flags) set(f);
  }

  void set(QualityFlag f) { bits_ |= bit(f); }
  bool has(QualityFlag f) const { return (bits_ & bit(f)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }
  QualityFlags operator|(QualityFlags o) const { return QualityFlags(bits_ | o.bits_); }

  /// Names sorted lexicographically.
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto f : {QualityFlag::Blurry, QualityFlag::UpsideDown, QualityFlag::Cropped,
                   QualityFlag::PoorLighting}) {
      if (has(f)) out.emplace_back(to_string(f));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool operator==(const QualityFlags&) const = default;

  static constexpr std::uint8_t kMask = 0x0F;

 private:
  static constexpr std::uint8_t bit(QualityFlag f) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(f));
  }
  std::uint8_t bits_ = 0;
};

struct TextSpan {
  std::string text;
  Rect bbox;
  double conf = 0;
  bool qr = false;  // content came from a QR code; passed through, never decoded

  bool operator==(const TextSpan&) const = default;
};

enum class PayloadKind : std::uint8_t {
  TextOcr = 1,
  NoText = 2,
  SimilarScene = 3,
  Blurry = 4,
  ResourceConstraint = 5,
};

inline constexpr bool is_valid_kind(std::uint8_t k) { return k >= 1 && k <= 5; }

/// Kinds 1 and 2 carry an actual OCR verdict; 3..5 mean OCR was skipped.
inline constexpr bool is_retrievable(PayloadKind k) {
  return k == PayloadKind::TextOcr || k == PayloadKind::NoText;
}

inline constexpr std::string_view to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::TextOcr: return "text_ocr";
    case PayloadKind::NoText: return "no_text";
    case PayloadKind::SimilarScene: return "similar_scene";
    case PayloadKind::Blurry: return "blurry";
    case PayloadKind::ResourceConstraint: return "resource_constraint";
  }
  return "?";
}

/// Device to server unit produced for every captured frame.
struct OcrPayload {
  PayloadKind kind = PayloadKind::NoText;
  std::int64_t frame_ts_ms = 0;
  std::vector<TextSpan> spans;
  bool selection = false;
  QualityFlags quality_flags;

  bool well_formed() const {
    return kind == PayloadKind::TextOcr ? !spans.empty() : spans.empty();
  }
  bool operator==(const OcrPayload&) const = default;
};

/// Space-joined text of the non-QR spans.
inline std::string joined_text(std::span<const TextSpan> spans) {
  std::string out;
  for (const auto& s : spans) {
    if (s.qr) continue;
    if (!out.empty()) out.push_back(' ');
    out += s.text;
  }
  return out;
}

inline std::string qr_text(std::span<const TextSpan> spans) {
  std::string out;
  for (const auto& s : spans) {
    if (!s.qr) continue;
    if (!out.empty()) out.push_back(' ');
    out += s.text;
  }
  return out;
}

enum class QueryMode : std::uint8_t { Readout, Translation, Qa };

inline constexpr std::string_view to_string(QueryMode m) {
  switch (m) {
    case QueryMode::Readout: return "readout";
    case QueryMode::Translation: return "translation";
    case QueryMode::Qa: return "qa";
  }
  return "?";
}

inline std::optional<QueryMode> parse_query_mode(std::string_view s) {
  for (auto m : {QueryMode::Readout, QueryMode::Translation, QueryMode::Qa}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

struct QueryRecord {
  std::int64_t ts_ms = 0;            // end of speech
  std::int64_t speech_start_ms = 0;  // start of speech
  std::string question;
  QueryMode mode = QueryMode::Qa;
  std::optional<std::string> target_lang;

  bool operator==(const QueryRecord&) const = default;
};

struct FrameRecord {
  std::int64_t ts_ms = 0;
  Resolution resolution = Resolution::MP12;
  std::int64_t exposure_us = 1;
  std::vector<ImuSample> imu;
  std::vector<Detection> detections;
  std::vector<double> scene_sig;
  std::vector<std::string> gt_words;
  bool user_selection = false;
  // Optional trace annotations passed through to payloads.
  QualityFlags annotated_flags;
  std::string qr;

  bool operator==(const FrameRecord&) const = default;
};

inline constexpr std::size_t kDefaultSceneSigDim = 16;

struct TraceViolation {
  std::size_t frame_index = 0;
  std::string message;
  bool operator==(const TraceViolation&) const = default;
};

struct ValidationReport {
  std::vector<TraceViolation> violations;
  bool ok() const { return violations.empty(); }
};

namespace detail {

inline bool finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

inline void check_frame(const FrameRecord& f, std::size_t dim, std::vector<std::string>& out) {
  if (f.ts_ms < 0) out.emplace_back("negative timestamp");
  if (f.exposure_us <= 0) out.emplace_back("non-positive exposure");
  for (const auto& s : f.imu) {
    if (s.ts_us < 0) out.emplace_back("negative imu timestamp");
    if (!finite(s.gyro) || !finite(s.accel)) out.emplace_back("non-finite imu sample");
  }
  for (const auto& d : f.detections) {
    if (!d.bbox.within_unit_square()) out.emplace_back("bbox outside unit square");
    if (!(d.conf >= 0.0 && d.conf <= 1.0)) out.emplace_back("confidence out of range");
    if (!d.keypoints.empty() && d.cls != DetectionClass::HandPointing)
      out.emplace_back("keypoints on non-pointing detection");
  }
  if (f.scene_sig.size() != dim) out.emplace_back("scene signature dimension mismatch");
  for (double v : f.scene_sig) {
    if (!std::isfinite(v)) {
      out.emplace_back("non-finite scene signature");
      break;
    }
  }
  for (const auto& w : f.gt_words) {
    if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
      out.emplace_back("ground-truth token is empty or contains whitespace");
      break;
    }
  }
}

}  // namespace detail

/// Reports every invariant violation; messages within a frame are sorted and unique.
inline ValidationReport validate_trace(std::span<const FrameRecord> frames,
                                       std::size_t scene_sig_dim = kDefaultSceneSigDim) {
  ValidationReport report;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::vector<std::string> msgs;
    if (i > 0 && frames[i].ts_ms <= frames[i - 1].ts_ms) {
      msgs.push_back("non-increasing timestamp at index " + std::to_string(i));
    }
    detail::check_frame(frames[i], scene_sig_dim, msgs);
    std::sort(msgs.begin(), msgs.end());
    msgs.erase(std::unique(msgs.begin(), msgs.end()), msgs.end());
    for (auto& m : msgs) report.violations.push_back({i, std::move(m)});
  }
  return report;
}

}  // namespace hybridocr
