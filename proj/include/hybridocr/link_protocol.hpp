#pragma once

/*
    Device -> server framing:
    - frame:  [4 bytes body length, BE][1 byte msg_type][8 bytes session_id, BE][body]
      body length counts msg_type + session_id + body.
    - integers are fixed-width big-endian; doubles are IEEE-754 binary64 bit
      patterns written as big-endian u64; strings are [u32 length][bytes];
      lists are [u32 count][elements].
    - bodies, in field order:
        OcrPayloadMsg     kind u8, frame_ts_ms i64, selection u8, quality_flags u8,
                          spans list of {text string, bbox 4 x f64, conf f64, qr u8}
        VideoSegmentMsg   start_ms i64, duration_ms i64, fps u32, resolution u8, bitrate_bps u64
        SelectionEventMsg frame_ts_ms i64, roi 4 x f64
        SessionStart      protocol_version u16
        SessionEnd        (empty)
*/

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hybridocr/core.hpp"

namespace hybridocr {

enum class MsgType : std::uint8_t {
  OcrPayloadMsg = 1,
  VideoSegmentMsg = 2,
  SelectionEventMsg = 3,
  SessionStart = 4,
  SessionEnd = 5,
};

struct VideoSegment {
  std::int64_t start_ms = 0;
  std::int64_t duration_ms = 1;
  std::uint32_t fps = 2;
  Resolution resolution = Resolution::MP3;
  std::uint64_t bitrate_bps = 500'000;
  bool operator==(const VideoSegment&) const = default;
};

struct SelectionEvent {
  std::int64_t frame_ts_ms = 0;
  Rect roi;
  bool operator==(const SelectionEvent&) const = default;
};

struct SessionStartBody {
  std::uint16_t protocol_version = 1;
  bool operator==(const SessionStartBody&) const = default;
};

struct SessionEndBody {
  bool operator==(const SessionEndBody&) const = default;
};

using MessageBody = std::variant<OcrPayload, VideoSegment, SelectionEvent, SessionStartBody, SessionEndBody>;

struct WireMessage {
  std::uint64_t session_id = 0;
  MessageBody body;

  MsgType type() const {
    return static_cast<MsgType>(body.index() + 1);
  }
  bool operator==(const WireMessage&) const = default;
};

inline constexpr std::size_t kFrameHeaderBytes = 4 + 1 + 8;

class DecodeError : public std::runtime_error {
 public:
  enum class Kind { Incomplete, Unsupported, Corrupt };

  DecodeError(Kind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(label(kind) + " at byte " + std::to_string(offset) + ": " + what),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  static std::string label(Kind k) {
    switch (k) {
      case Kind::Incomplete: return "incomplete";
      case Kind::Unsupported: return "unsupported";
      case Kind::Corrupt: return "corrupt";
    }
    return "?";
  }
  Kind kind_;
  std::size_t offset_;
};

namespace wire {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { be(v, 2); }
  void u32(std::uint32_t v) { be(v, 4); }
  void u64(std::uint64_t v) { be(v, 8); }
  void i64(std::int64_t v) { be(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { be(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void rect(const Rect& r) {
    f64(r.x);
    f64(r.y);
    f64(r.w);
    f64(r.h);
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void be(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>((v >> (i * 8)) & 0xFF));
  }
  std::vector<std::uint8_t> buf_;
};

/// Bounded reader; running past `end` throws Corrupt at the failing offset.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::size_t pos, std::size_t end)
      : data_(data), pos_(pos), end_(end) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(be(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
  std::uint64_t u64() { return be(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(be(8)); }
  double f64() { return std::bit_cast<double>(be(8)); }
  std::string str() {
    const std::size_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Rect rect() {
    Rect r;
    r.x = f64();
    r.y = f64();
    r.w = f64();
    r.h = f64();
    return r;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw DecodeError(DecodeError::Kind::Corrupt, pos_, "field runs past body length");
  }
  std::uint64_t be(std::size_t width) {
    need(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += width;
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::size_t end_;
};

inline std::uint32_t read_u32_be(std::span<const std::uint8_t> d, std::size_t at) {
  return (std::uint32_t{d[at]} << 24) | (std::uint32_t{d[at + 1]} << 16) | (std::uint32_t{d[at + 2]} << 8) |
         std::uint32_t{d[at + 3]};
}

}  // namespace wire

inline void validate_message(const WireMessage& msg) {
  if (const auto* p = std::get_if<OcrPayload>(&msg.body)) {
    if (!p->well_formed()) throw ContractViolation("payload spans inconsistent with kind");
  } else if (const auto* v = std::get_if<VideoSegment>(&msg.body)) {
    if (v->duration_ms <= 0) throw ContractViolation("video segment duration must be positive");
    if (v->bitrate_bps == 0) throw ContractViolation("video segment bitrate must be positive");
  }
}

inline std::vector<std::uint8_t> encode(const WireMessage& msg) {
  validate_message(msg);
  wire::Writer w;
  w.u32(0);  // patched below
  w.u8(static_cast<std::uint8_t>(msg.type()));
  w.u64(msg.session_id);
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, OcrPayload>) {
          w.u8(static_cast<std::uint8_t>(body.kind));
          w.i64(body.frame_ts_ms);
          w.u8(body.selection ? 1 : 0);
          w.u8(body.quality_flags.bits());
          w.u32(static_cast<std::uint32_t>(body.spans.size()));
          for (const auto& s : body.spans) {
            w.str(s.text);
            w.rect(s.bbox);
            w.f64(s.conf);
            w.u8(s.qr ? 1 : 0);
          }
        } else if constexpr (std::is_same_v<T, VideoSegment>) {
          w.i64(body.start_ms);
          w.i64(body.duration_ms);
          w.u32(body.fps);
          w.u8(static_cast<std::uint8_t>(body.resolution));
          w.u64(body.bitrate_bps);
        } else if constexpr (std::is_same_v<T, SelectionEvent>) {
          w.i64(body.frame_ts_ms);
          w.rect(body.roi);
        } else if constexpr (std::is_same_v<T, SessionStartBody>) {
          w.u16(body.protocol_version);
        }
      },
      msg.body);
  auto& bytes = w.bytes();
  const auto len = static_cast<std::uint32_t>(bytes.size() - 4);
  for (int i = 0; i < 4; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (24 - 8 * i));
  return std::move(bytes);
}

namespace detail {

inline std::uint8_t read_bool(wire::Reader& r) {
  const std::size_t at = r.pos();
  const std::uint8_t v = r.u8();
  if (v > 1) throw DecodeError(DecodeError::Kind::Corrupt, at, "boolean byte out of range");
  return v;
}

inline MessageBody decode_body(MsgType type, wire::Reader& r) {
  using K = DecodeError::Kind;
  switch (type) {
    case MsgType::OcrPayloadMsg: {
      OcrPayload p;
      const std::size_t kind_at = r.pos();
      const std::uint8_t kind = r.u8();
      if (!is_valid_kind(kind)) throw DecodeError(K::Corrupt, kind_at, "unknown payload kind");
      p.kind = static_cast<PayloadKind>(kind);
      p.frame_ts_ms = r.i64();
      p.selection = read_bool(r) != 0;
      const std::size_t flags_at = r.pos();
      const std::uint8_t flags = r.u8();
      if ((flags & ~QualityFlags::kMask) != 0) throw DecodeError(K::Corrupt, flags_at, "unknown quality flag bits");
      p.quality_flags = QualityFlags(flags);
      const std::size_t count_at = r.pos();
      const std::uint32_t count = r.u32();
      // Smallest span is 4 + 32 + 8 + 1 bytes.
      if (count > r.remaining() / 45) throw DecodeError(K::Corrupt, count_at, "span count exceeds body");
      p.spans.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        TextSpan s;
        s.text = r.str();
        s.bbox = r.rect();
        s.conf = r.f64();
        s.qr = read_bool(r) != 0;
        p.spans.push_back(std::move(s));
      }
      if (!p.well_formed()) throw DecodeError(K::Corrupt, count_at, "spans inconsistent with payload kind");
      return p;
    }
    case MsgType::VideoSegmentMsg: {
      VideoSegment v;
      v.start_ms = r.i64();
      const std::size_t dur_at = r.pos();
      v.duration_ms = r.i64();
      if (v.duration_ms <= 0) throw DecodeError(K::Corrupt, dur_at, "non-positive segment duration");
      v.fps = r.u32();
      const std::size_t res_at = r.pos();
      const std::uint8_t res = r.u8();
      if (res > 2) throw DecodeError(K::Corrupt, res_at, "unknown resolution");
      v.resolution = static_cast<Resolution>(res);
      const std::size_t rate_at = r.pos();
      v.bitrate_bps = r.u64();
      if (v.bitrate_bps == 0) throw DecodeError(K::Corrupt, rate_at, "zero bitrate");
      return v;
    }
    case MsgType::SelectionEventMsg: {
      SelectionEvent e;
      e.frame_ts_ms = r.i64();
      e.roi = r.rect();
      return e;
    }
    case MsgType::SessionStart:
      return SessionStartBody{r.u16()};
    case MsgType::SessionEnd:
      return SessionEndBody{};
  }
  throw DecodeError(K::Unsupported, 4, "unknown message type");
}

}  // namespace detail

/// Decodes the frame at `offset`. Returns the message and the frame's total size.
inline std::pair<WireMessage, std::size_t> decode_frame(std::span<const std::uint8_t> bytes, std::size_t offset = 0) {
  using K = DecodeError::Kind;
  const std::size_t avail = bytes.size() - std::min(offset, bytes.size());
  if (avail < 4) throw DecodeError(K::Incomplete, bytes.size(), "missing length prefix");
  const std::size_t body_len = wire::read_u32_be(bytes, offset);
  if (body_len < 9) throw DecodeError(K::Corrupt, offset, "body length shorter than header");
  if (avail < 4 + body_len) throw DecodeError(K::Incomplete, bytes.size(), "frame truncated");
  const std::uint8_t type = bytes[offset + 4];
  if (type < 1 || type > 5) throw DecodeError(K::Unsupported, offset + 4, "unknown message type");
  wire::Reader r(bytes, offset + 5, offset + 4 + body_len);
  WireMessage msg;
  msg.session_id = r.u64();
  msg.body = detail::decode_body(static_cast<MsgType>(type), r);
  if (r.remaining() != 0) throw DecodeError(K::Corrupt, r.pos(), "body length mismatch");
  return {std::move(msg), 4 + body_len};
}

/// Decodes exactly one frame; trailing bytes are a length mismatch.
inline WireMessage decode(std::span<const std::uint8_t> bytes) {
  auto [msg, size] = decode_frame(bytes, 0);
  if (size != bytes.size()) throw DecodeError(DecodeError::Kind::Corrupt, size, "trailing bytes after frame");
  return std::move(msg);
}

/// Splits a concatenated byte stream into messages.
inline std::vector<WireMessage> decode_stream(std::span<const std::uint8_t> bytes) {
  std::vector<WireMessage> out;
  std::size_t at = 0;
  while (at < bytes.size()) {
    auto [msg, size] = decode_frame(bytes, at);
    out.push_back(std::move(msg));
    at += size;
  }
  return out;
}

/// Simulated uplink usage for one session.
struct UplinkLedger {
  std::uint64_t video_bits = 0;
  std::uint64_t payload_bits = 0;
  std::uint64_t message_count = 0;

  std::uint64_t total_bits() const { return video_bits + payload_bits; }
  UplinkLedger& operator+=(const UplinkLedger& o) {
    video_bits += o.video_bits;
    payload_bits += o.payload_bits;
    message_count += o.message_count;
    return *this;
  }
  bool operator==(const UplinkLedger&) const = default;
};

/// Bits carried by a video stream of the given rate over duration_ms.
inline std::uint64_t stream_bits(std::uint64_t bitrate_bps, std::int64_t duration_ms) {
  const auto product = static_cast<unsigned __int128>(bitrate_bps) * static_cast<unsigned __int128>(duration_ms);
  return static_cast<std::uint64_t>(product / 1000);
}

inline UplinkLedger account(UplinkLedger ledger, const WireMessage& msg) {
  validate_message(msg);
  if (const auto* v = std::get_if<VideoSegment>(&msg.body)) ledger.video_bits += stream_bits(v->bitrate_bps, v->duration_ms);
  ledger.payload_bits += encode(msg).size() * 8;
  ledger.message_count += 1;
  return ledger;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

}  // namespace hybridocr
