#pragma once

// Synthetic trace generator. Rates are dialed per stage: blur_rate controls
// blur rejections, text_density the share of sharp frames carrying a text
// region, and similarity_run_length the mean number of consecutive textual
// frames showing the same scene (so 1 - 1/L of them repeat the last accepted
// scene).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridocr/core.hpp"
#include "hybridocr/trace_io.hpp"

namespace hybridocr {

struct GeneratorSpec {
  double duration_s = 60;
  double fps = 2;
  double text_density = 0.632;
  double blur_rate = 0.02;
  double similarity_run_length = 1.0 / 0.523;
  std::size_t selection_events = 0;
  std::uint64_t seed = 1;
  std::size_t words_min = 4;
  std::size_t words_max = 16;
  std::size_t scene_sig_dim = kDefaultSceneSigDim;
  Resolution resolution = Resolution::MP12;

  std::size_t frame_count() const { return static_cast<std::size_t>(std::floor(duration_s * fps + 1e-9)); }

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("generator: ") + name + " must be in [0,1]");
    };
    prob(text_density, "text_density");
    prob(blur_rate, "blur_rate");
    if (!(duration_s >= 0)) throw ConfigError("generator: duration_s must be non-negative");
    if (!(fps > 0 && fps <= 1000)) throw ConfigError("generator: fps must be in (0, 1000]");
    if (!(similarity_run_length >= 1.0)) throw ConfigError("generator: similarity_run_length must be >= 1");
    if (words_min == 0 || words_max < words_min) throw ConfigError("generator: need 1 <= words_min <= words_max");
    if (scene_sig_dim == 0) throw ConfigError("generator: scene_sig_dim must be positive");
    if (selection_events > frame_count()) throw ConfigError("generator: more selection events than frames");
  }

  double repeat_probability() const { return 1.0 - 1.0 / similarity_run_length; }

  /// Survivors after the similarity stage, ignoring selection overrides.
  double expected_survivor_fraction() const { return (1.0 - blur_rate) * text_density * (1.0 - repeat_probability()); }
};

/// Engine plus platform-independent conversions (std distributions are not).
class TraceRng {
 public:
  explicit TraceRng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : eng_() % n; }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    if (cached_) {
      cached_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    cached_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
  bool cached_ = false;
  double spare_ = 0;
};

namespace gen {

inline std::string random_word(TraceRng& rng) {
  static constexpr char kAlphabet[] = "ABCDEFGHJKLMNPQRSTUVWXYZ0123456789";
  const std::size_t len = 3 + rng.below(6);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w.push_back(kAlphabet[rng.below(sizeof kAlphabet - 1)]);
  return w;
}

inline std::vector<double> random_sig(TraceRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

/// Samples spread over the exposure window; the largest has norm `peak`.
inline std::vector<ImuSample> imu_window(TraceRng& rng, std::int64_t start_us, std::int64_t exposure_us, double peak) {
  constexpr int kSamples = 4;
  std::vector<ImuSample> out;
  const int loudest = static_cast<int>(rng.below(kSamples));
  for (int k = 0; k < kSamples; ++k) {
    const double norm = k == loudest ? peak : peak * rng.uniform(0.0, 0.9);
    std::array<double, 6> dir{};
    double sq = 0;
    for (auto& d : dir) {
      d = rng.normal();
      sq += d * d;
    }
    const double scale = sq > 0 ? norm / std::sqrt(sq) : 0.0;
    ImuSample s;
    s.ts_us = start_us + (exposure_us * k) / kSamples;
    for (int i = 0; i < 3; ++i) {
      s.gyro[i] = dir[i] * scale;
      s.accel[i] = dir[3 + i] * scale;
    }
    out.push_back(s);
  }
  return out;
}

inline Rect random_text_box(TraceRng& rng) {
  Rect r;
  r.w = rng.uniform(0.1, 0.45);
  r.h = rng.uniform(0.05, 0.2);
  r.x = rng.uniform(0.02, 0.98 - r.w);
  r.y = rng.uniform(0.02, 0.98 - r.h);
  return r;
}

inline Rect grow(const Rect& r, double m) {
  Rect g{std::max(0.0, r.x - m), std::max(0.0, r.y - m), 0, 0};
  g.w = std::min(1.0, r.right() + m) - g.x;
  g.h = std::min(1.0, r.bottom() + m) - g.y;
  return g;
}

/// A pointing hand below-left of the target with the finger aimed at its centre.
inline Detection pointing_at(TraceRng& rng, const Rect& target, double conf) {
  const Point2 centre{target.x + target.w / 2, target.y + target.h / 2};
  const double angle = rng.uniform(0.2, 1.2);
  const double reach = rng.uniform(0.05, 0.15);
  Point2 tip{centre.x - reach * std::cos(angle), centre.y + reach * std::sin(angle)};
  tip.x = std::clamp(tip.x, 0.01, 0.99);
  tip.y = std::clamp(tip.y, 0.01, 0.99);
  const Point2 dir{centre.x - tip.x, centre.y - tip.y};
  const double len = std::max(1e-6, std::hypot(dir.x, dir.y));
  const Point2 knuckle{std::clamp(tip.x - 0.04 * dir.x / len, 0.0, 1.0), std::clamp(tip.y - 0.04 * dir.y / len, 0.0, 1.0)};
  Detection d;
  d.cls = DetectionClass::HandPointing;
  const double x0 = std::min(tip.x, knuckle.x), y0 = std::min(tip.y, knuckle.y);
  d.bbox = grow(Rect{x0, y0, std::abs(tip.x - knuckle.x), std::abs(tip.y - knuckle.y)}, 0.01);
  d.conf = conf;
  d.keypoints = {knuckle, tip};
  return d;
}

}  // namespace gen

/// Deterministic in the seed: identical specs produce byte-identical files.
inline Trace generate_trace(const GeneratorSpec& spec) {
  spec.validate();
  TraceRng rng(spec.seed);
  Trace trace;
  trace.header.scene_sig_dim = spec.scene_sig_dim;
  const std::size_t n = spec.frame_count();

  std::vector<bool> selected(n, false);
  {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < spec.selection_events; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
      selected[idx[i]] = true;
    }
  }

  struct Scene {
    std::vector<double> sig;
    std::vector<std::string> words;
    std::vector<Detection> detections;
  };
  std::optional<Scene> scene;  // last scene the selector would accept
  const double repeat_p = spec.repeat_probability();

  std::int64_t last_ts = -1;
  for (std::size_t i = 0; i < n; ++i) {
    FrameRecord f;
    f.ts_ms = std::max<std::int64_t>(last_ts + 1, std::llround(static_cast<double>(i) * 1000.0 / spec.fps));
    last_ts = f.ts_ms;
    f.resolution = spec.resolution;
    f.user_selection = selected[i];

    const bool blurry = !f.user_selection && rng.chance(spec.blur_rate);
    const bool textual = f.user_selection || rng.chance(spec.text_density);
    double peak;
    if (blurry) {
      f.exposure_us = static_cast<std::int64_t>(rng.uniform(22000, 33000));
      peak = rng.uniform(6.0, 15.0);
    } else {
      f.exposure_us = static_cast<std::int64_t>(rng.chance(0.1) ? rng.uniform(20000, 30000) : rng.uniform(4000, 16000));
      peak = rng.uniform(0.0, 3.0);
    }
    f.imu = gen::imu_window(rng, f.ts_ms * 1000, f.exposure_us, peak);

    if (textual) {
      const bool repeat = !blurry && scene && rng.chance(repeat_p);
      if (repeat) {
        f.scene_sig = scene->sig;
        for (auto& x : f.scene_sig) x += 0.01 * rng.normal();
        f.gt_words = scene->words;
        f.detections = scene->detections;
      } else {
        f.scene_sig = gen::random_sig(rng, spec.scene_sig_dim);
        const std::size_t words = spec.words_min + rng.below(spec.words_max - spec.words_min + 1);
        for (std::size_t w = 0; w < words; ++w) f.gt_words.push_back(gen::random_word(rng));
        const Rect box = gen::random_text_box(rng);
        const double text_conf = rng.uniform(0.6, 0.9);
        f.detections.push_back({DetectionClass::TextObject, box, text_conf, {}});
        if (rng.chance(0.2)) {
          f.detections.push_back({DetectionClass::HandHolding, gen::grow(box, 0.02), text_conf + 0.05, {}});
        }
      }
      if (f.user_selection) {
        f.detections.push_back(gen::pointing_at(rng, f.detections.front().bbox, 0.97));
      }
      if (!blurry && (!repeat || f.user_selection)) {
        Scene s{f.scene_sig, f.gt_words, {}};
        for (const auto& d : f.detections) {
          if (d.cls != DetectionClass::HandPointing) s.detections.push_back(d);
        }
        scene = std::move(s);
      }
    } else {
      f.scene_sig = gen::random_sig(rng, spec.scene_sig_dim);
      const double u = rng.uniform();
      if (u < 0.2) {
        f.detections.push_back({DetectionClass::OtherHandInteraction, gen::random_text_box(rng), 0.8, {}});
      } else if (u < 0.4) {
        f.detections.push_back({DetectionClass::HandHolding, gen::random_text_box(rng), 0.8, {}});
      } else if (u < 0.6) {
        f.detections.push_back({DetectionClass::TextObject, gen::random_text_box(rng), rng.uniform(0.2, 0.45), {}});
      }
    }
    trace.frames.push_back(std::move(f));
  }

  nlohmann::ordered_json g;
  g["seed"] = spec.seed;
  g["duration_s"] = spec.duration_s;
  g["fps"] = spec.fps;
  g["frames"] = n;
  g["text_density"] = spec.text_density;
  g["blur_rate"] = spec.blur_rate;
  g["similarity_run_length"] = spec.similarity_run_length;
  g["selection_events"] = spec.selection_events;
  g["words_min"] = spec.words_min;
  g["words_max"] = spec.words_max;
  g["intended_reject_blur"] = spec.blur_rate;
  g["intended_reject_no_text"] = 1.0 - spec.text_density;
  g["intended_reject_similar"] = repeat_p;
  g["expected_survivor_fraction"] = spec.expected_survivor_fraction();
  trace.header.generator = std::move(g);
  return trace;
}

/// Queries spaced every `every_ms`, cycling question modes.
inline std::vector<QueryRecord> generate_queries(const Trace& trace, std::int64_t every_ms, std::int64_t speech_ms = 2000) {
  std::vector<QueryRecord> out;
  if (trace.frames.empty() || every_ms <= 0) return out;
  const std::int64_t end = trace.frames.back().ts_ms;
  std::size_t i = 0;
  for (std::int64_t t = every_ms; t <= end; t += every_ms, ++i) {
    QueryRecord q;
    q.ts_ms = t;
    q.speech_start_ms = std::max<std::int64_t>(0, t - speech_ms);
    switch (i % 3) {
      case 0:
        q.mode = QueryMode::Qa;
        q.question = "What does the sign say?";
        break;
      case 1:
        q.mode = QueryMode::Readout;
        q.question = "Read the text in front of me.";
        break;
      default:
        q.mode = QueryMode::Translation;
        q.target_lang = "Spanish";
        q.question = "Translate this.";
        break;
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace hybridocr
