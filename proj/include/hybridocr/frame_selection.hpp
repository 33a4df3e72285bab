#pragma once

// On-device frame selection: blur filter, ROI/text gate, scene-similarity
// filter and OCR token budget, applied in that order with first rejection
// winning.

#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hybridocr/core.hpp"

namespace hybridocr {

struct BlurFeatures {
  double motion_energy = 0;
  std::int64_t exposure_us = 0;
};

enum class BlurLabel : std::uint8_t { Sharp, Blurry };

/// Max 6-dof IMU norm over samples inside [capture start, capture start + exposure].
inline BlurFeatures blur_features(const FrameRecord& frame) {
  const std::int64_t start_us = frame.ts_ms * 1000;
  const std::int64_t end_us = start_us + frame.exposure_us;
  double energy = 0;
  for (const auto& s : frame.imu) {
    if (s.ts_us < start_us || s.ts_us > end_us) continue;
    double sq = 0;
    for (int i = 0; i < 3; ++i) sq += s.gyro[i] * s.gyro[i] + s.accel[i] * s.accel[i];
    energy = std::max(energy, std::sqrt(sq));
  }
  return {energy, frame.exposure_us};
}

/// Binary blur classifier. Internal nodes send a sample left when
/// feature < threshold. Feature 0 is motion energy, feature 1 is exposure (us).
class DecisionTree {
 public:
  struct Split {
    int feature = 0;
    double threshold = 0;
    std::size_t left = 0;
    std::size_t right = 0;
  };
  struct Leaf {
    BlurLabel label = BlurLabel::Sharp;
  };
  using Node = std::variant<Split, Leaf>;

  static constexpr int kMotionEnergy = 0;
  static constexpr int kExposureUs = 1;

  DecisionTree(std::vector<Node> nodes, std::size_t root) : nodes_(std::move(nodes)), root_(root) {
    validate();
  }

  static DecisionTree single_leaf(BlurLabel label) { return DecisionTree({Leaf{label}}, 0); }

  /// Exposure split at 20 ms; long exposures tolerate less motion.
  static DecisionTree reference() {
    return DecisionTree(
        {
            Split{kExposureUs, 20000.0, 1, 2},
            Split{kMotionEnergy, 10.0, 3, 4},
            Split{kMotionEnergy, 4.0, 5, 6},
            Leaf{BlurLabel::Sharp},
            Leaf{BlurLabel::Blurry},
            Leaf{BlurLabel::Sharp},
            Leaf{BlurLabel::Blurry},
        },
        0);
  }

  BlurLabel classify(const BlurFeatures& f) const {
    std::size_t at = root_;
    while (true) {
      const auto& node = nodes_[at];
      if (const auto* leaf = std::get_if<Leaf>(&node)) return leaf->label;
      const auto& split = std::get<Split>(node);
      const double value = split.feature == kMotionEnergy ? f.motion_energy
                                                          : static_cast<double>(f.exposure_us);
      at = value < split.threshold ? split.left : split.right;
    }
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t root() const { return root_; }

  /// Accepts the nested form {"feature","threshold","left","right"} / {"label"}
  /// or the flat form {"root": i, "nodes": [...]} with integer child indices.
  static DecisionTree from_json(const nlohmann::json& j) {
    if (j.is_object() && j.contains("nodes")) return from_flat_json(j);
    std::vector<Node> nodes;
    parse_nested(j, "$", nodes);
    return DecisionTree(std::move(nodes), 0);
  }

  nlohmann::json to_json() const { return to_nested(root_); }

 private:
  static std::string feature_name(int f) { return f == kMotionEnergy ? "motion_energy" : "exposure_us"; }

  static int parse_feature(const nlohmann::json& j, const std::string& path) {
    if (j.is_string()) {
      if (j == "motion_energy") return kMotionEnergy;
      if (j == "exposure_us") return kExposureUs;
    } else if (j.is_number_integer()) {
      const int f = j.get<int>();
      if (f == kMotionEnergy || f == kExposureUs) return f;
    }
    throw ConfigError("blur tree " + path + ": unknown feature " + j.dump());
  }

  static BlurLabel parse_label(const nlohmann::json& j, const std::string& path) {
    if (j == "sharp") return BlurLabel::Sharp;
    if (j == "blurry") return BlurLabel::Blurry;
    throw ConfigError("blur tree " + path + ": unknown label " + j.dump());
  }

  static std::size_t parse_nested(const nlohmann::json& j, const std::string& path,
                                  std::vector<Node>& nodes) {
    if (!j.is_object()) throw ConfigError("blur tree " + path + ": node must be an object");
    const std::size_t index = nodes.size();
    if (j.contains("label")) {
      nodes.emplace_back(Leaf{parse_label(j.at("label"), path + ".label")});
      return index;
    }
    for (const char* key : {"feature", "threshold", "left", "right"}) {
      if (!j.contains(key)) throw ConfigError("blur tree " + path + ": missing '" + key + "'");
    }
    if (!j.at("threshold").is_number()) throw ConfigError("blur tree " + path + ".threshold: not a number");
    Split split;
    split.feature = parse_feature(j.at("feature"), path + ".feature");
    split.threshold = j.at("threshold").get<double>();
    nodes.emplace_back(split);
    split.left = parse_nested(j.at("left"), path + ".left", nodes);
    split.right = parse_nested(j.at("right"), path + ".right", nodes);
    nodes[index] = split;
    return index;
  }

  static DecisionTree from_flat_json(const nlohmann::json& j) {
    if (!j.contains("root") || !j.at("root").is_number_unsigned())
      throw ConfigError("blur tree $.root: missing or not a non-negative integer");
    const auto& arr = j.at("nodes");
    if (!arr.is_array()) throw ConfigError("blur tree $.nodes: not an array");
    std::vector<Node> nodes;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "$.nodes[" + std::to_string(i) + "]";
      const auto& n = arr[i];
      if (!n.is_object()) throw ConfigError("blur tree " + path + ": node must be an object");
      if (n.contains("label")) {
        nodes.emplace_back(Leaf{parse_label(n.at("label"), path + ".label")});
        continue;
      }
      for (const char* key : {"feature", "threshold", "left", "right"}) {
        if (!n.contains(key)) throw ConfigError("blur tree " + path + ": missing '" + key + "'");
      }
      if (!n.at("left").is_number_unsigned() || !n.at("right").is_number_unsigned())
        throw ConfigError("blur tree " + path + ": child index must be a non-negative integer");
      Split s;
      s.feature = parse_feature(n.at("feature"), path + ".feature");
      s.threshold = n.at("threshold").get<double>();
      s.left = n.at("left").get<std::size_t>();
      s.right = n.at("right").get<std::size_t>();
      nodes.emplace_back(s);
    }
    return DecisionTree(std::move(nodes), j.at("root").get<std::size_t>());
  }

  nlohmann::json to_nested(std::size_t at) const {
    const auto& node = nodes_[at];
    if (const auto* leaf = std::get_if<Leaf>(&node))
      return {{"label", leaf->label == BlurLabel::Sharp ? "sharp" : "blurry"}};
    const auto& s = std::get<Split>(node);
    return {{"feature", feature_name(s.feature)},
            {"threshold", s.threshold},
            {"left", to_nested(s.left)},
            {"right", to_nested(s.right)}};
  }

  // Every node reachable from the root must terminate in a leaf without revisiting a node.
  void validate() const {
    if (nodes_.empty()) throw ConfigError("blur tree: no nodes");
    if (root_ >= nodes_.size()) throw ConfigError("blur tree: root index out of range");
    enum Mark : std::uint8_t { Unseen, Active, Done };
    std::vector<Mark> mark(nodes_.size(), Unseen);
    std::vector<std::pair<std::size_t, int>> stack{{root_, 0}};
    while (!stack.empty()) {
      auto& [at, phase] = stack.back();
      const std::string path = "$.nodes[" + std::to_string(at) + "]";
      if (phase == 0) {
        if (mark[at] == Active) throw ConfigError("blur tree " + path + ": cycle detected");
        if (mark[at] == Done) {
          stack.pop_back();
          continue;
        }
        mark[at] = Active;
        phase = 1;
        if (const auto* s = std::get_if<Split>(&nodes_[at])) {
          if (s->feature != kMotionEnergy && s->feature != kExposureUs)
            throw ConfigError("blur tree " + path + ": unknown feature index");
          if (!std::isfinite(s->threshold)) throw ConfigError("blur tree " + path + ": non-finite threshold");
          if (s->left >= nodes_.size() || s->right >= nodes_.size())
            throw ConfigError("blur tree " + path + ": missing child node");
          const std::size_t l = s->left, r = s->right;
          for (std::size_t child : {r, l}) {
            if (mark[child] == Active)
              throw ConfigError("blur tree $.nodes[" + std::to_string(child) + "]: cycle detected");
            if (mark[child] == Unseen) stack.emplace_back(child, 0);
          }
        }
      } else {
        mark[at] = Done;
        stack.pop_back();
      }
    }
  }

  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

inline BlurLabel classify_blur(const BlurFeatures& features, const DecisionTree& tree) {
  return tree.classify(features);
}

/// Minimum confidence per detection class.
struct ClassThresholds {
  std::array<double, 4> by_class{0.5, 0.5, 0.5, 0.5};
  double operator[](DetectionClass c) const { return by_class[static_cast<std::size_t>(c)]; }
  double& operator[](DetectionClass c) { return by_class[static_cast<std::size_t>(c)]; }
};

struct RoiSelection {
  Rect roi;
  bool selection = false;
  bool operator==(const RoiSelection&) const = default;
};

namespace detail {

/// Entry parameter of the ray origin + t*dir into rect, or nullopt if missed.
inline std::optional<double> ray_rect_entry(Point2 origin, Point2 dir, const Rect& r, double t_max) {
  double t0 = 0.0, t1 = t_max;
  const double o[2] = {origin.x, origin.y};
  const double d[2] = {dir.x, dir.y};
  const double lo[2] = {r.x, r.y};
  const double hi[2] = {r.right(), r.bottom()};
  for (int a = 0; a < 2; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

/// Parameter where origin + t*dir leaves the unit square.
inline double ray_border_exit(Point2 origin, Point2 dir) {
  double t = std::numeric_limits<double>::infinity();
  if (dir.x > 0) t = std::min(t, (1.0 - origin.x) / dir.x);
  if (dir.x < 0) t = std::min(t, (0.0 - origin.x) / dir.x);
  if (dir.y > 0) t = std::min(t, (1.0 - origin.y) / dir.y);
  if (dir.y < 0) t = std::min(t, (0.0 - origin.y) / dir.y);
  return std::max(t, 0.0);
}

}  // namespace detail

/// Chooses the OCR region. Empty result means no text processing for this frame.
inline std::optional<RoiSelection> select_roi(std::span<const Detection> detections,
                                              const ClassThresholds& thresholds,
                                              Diagnostics* diag = nullptr) {
  std::vector<const Detection*> kept;
  for (const auto& d : detections) {
    if (d.conf >= thresholds[d.cls]) kept.push_back(&d);
  }
  if (kept.empty()) return std::nullopt;

  // Highest confidence, then larger area, then earlier in the list.
  const Detection* best = kept.front();
  for (const auto* d : kept) {
    if (d->conf > best->conf || (d->conf == best->conf && d->bbox.area() > best->bbox.area())) best = d;
  }

  switch (best->cls) {
    case DetectionClass::OtherHandInteraction:
      return std::nullopt;
    case DetectionClass::TextObject:
      return RoiSelection{best->bbox, false};
    case DetectionClass::HandHolding:
      for (const auto* d : kept) {
        if (d->cls == DetectionClass::TextObject && d->bbox.overlaps(best->bbox))
          return RoiSelection{best->bbox, false};
      }
      return std::nullopt;
    case DetectionClass::HandPointing: {
      const auto& kp = best->keypoints;
      if (kp.size() < 2) {
        warn_if(diag, "pointing detection with fewer than 2 keypoints treated as other hand interaction");
        return std::nullopt;
      }
      const Point2 tip = kp.back();
      const Point2 prev = kp[kp.size() - 2];
      const Point2 dir{tip.x - prev.x, tip.y - prev.y};
      if (dir.x == 0.0 && dir.y == 0.0) {
        warn_if(diag, "pointing detection with coincident keypoints treated as other hand interaction");
        return std::nullopt;
      }
      const double t_border = detail::ray_border_exit(tip, dir);
      const Detection* target = nullptr;
      double target_t = std::numeric_limits<double>::infinity();
      for (const auto* d : kept) {
        if (d->cls != DetectionClass::TextObject) continue;
        const auto t = detail::ray_rect_entry(tip, dir, d->bbox, t_border);
        if (t && *t < target_t) {
          target_t = *t;
          target = d;
        }
      }
      if (target == nullptr) return std::nullopt;
      return RoiSelection{target->bbox, true};
    }
  }
  return std::nullopt;
}

/// Cosine similarity; 0 when either vector is all zeros.
inline double scene_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("scene_similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

enum class Verdict : std::uint8_t { RunOcr, RejectBlur, RejectNoText, RejectSimilar, RejectBudget };

inline constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::RunOcr: return "run_ocr";
    case Verdict::RejectBlur: return "reject_blur";
    case Verdict::RejectNoText: return "reject_no_text";
    case Verdict::RejectSimilar: return "reject_similar";
    case Verdict::RejectBudget: return "reject_budget";
  }
  return "?";
}

/// Payload kind sent for a verdict. RunOcr becomes NoText if OCR returns nothing.
inline constexpr PayloadKind payload_kind_for(Verdict v) {
  switch (v) {
    case Verdict::RunOcr: return PayloadKind::TextOcr;
    case Verdict::RejectNoText: return PayloadKind::NoText;
    case Verdict::RejectSimilar: return PayloadKind::SimilarScene;
    case Verdict::RejectBlur: return PayloadKind::Blurry;
    case Verdict::RejectBudget: return PayloadKind::ResourceConstraint;
  }
  return PayloadKind::NoText;
}

struct StageLatency {
  double blur_ms = 0;
  double roi_ms = 0;
  double similarity_ms = 0;
  double ocr_ms = 0;
  double total() const { return blur_ms + roi_ms + similarity_ms + ocr_ms; }
  bool operator==(const StageLatency&) const = default;
};

struct SelectionDecision {
  Verdict verdict = Verdict::RejectNoText;
  std::optional<Rect> roi;  // present iff verdict == RunOcr
  bool selection = false;   // explicit user selection or pointing gesture
  StageLatency stage_latency_ms;
  bool operator==(const SelectionDecision&) const = default;
};

struct StageCosts {
  double blur_ms = 1.0;
  double roi_ms = 70.0;
  double similarity_ms = 0.5;
};

struct SelectorConfig {
  DecisionTree blur_tree = DecisionTree::reference();
  ClassThresholds thresholds;
  double similarity_threshold = 0.9;
  std::size_t budget_tokens = 300;
  std::int64_t budget_window_ms = 10000;
  StageCosts costs;
};

struct SelectorState {
  std::optional<std::vector<double>> last_accepted_sig;
  std::optional<std::int64_t> last_accepted_ts_ms;
  std::deque<std::pair<std::int64_t, std::size_t>> accepted_tokens;  // (ts, tokens) inside the window
  std::size_t ocr_tokens_in_window = 0;

  bool operator==(const SelectorState&) const = default;
};

struct FrameOutcome {
  SelectionDecision decision;
  PayloadKind kind = PayloadKind::NoText;
};

/// One step of the selection pipeline. Frames must arrive in trace order.
inline FrameOutcome process_frame(const FrameRecord& frame, SelectorState& state,
                                  const SelectorConfig& config, Diagnostics* diag = nullptr) {
  FrameOutcome out;
  auto& d = out.decision;
  auto finish = [&](Verdict v) {
    d.verdict = v;
    out.kind = payload_kind_for(v);
    if (v != Verdict::RunOcr) d.roi.reset();
    return out;
  };

  d.stage_latency_ms.blur_ms = config.costs.blur_ms;
  if (classify_blur(blur_features(frame), config.blur_tree) == BlurLabel::Blurry) {
    d.selection = frame.user_selection;
    return finish(Verdict::RejectBlur);
  }

  d.stage_latency_ms.roi_ms = config.costs.roi_ms;
  const auto roi = select_roi(frame.detections, config.thresholds, diag);
  d.selection = frame.user_selection || (roi && roi->selection);
  if (!roi) return finish(Verdict::RejectNoText);
  d.roi = roi->roi;

  if (!d.selection && state.last_accepted_sig) {
    d.stage_latency_ms.similarity_ms = config.costs.similarity_ms;
    if (scene_similarity(frame.scene_sig, *state.last_accepted_sig) >= config.similarity_threshold)
      return finish(Verdict::RejectSimilar);
  }

  const std::int64_t window_floor = frame.ts_ms - config.budget_window_ms;
  while (!state.accepted_tokens.empty() && state.accepted_tokens.front().first <= window_floor) {
    state.ocr_tokens_in_window -= state.accepted_tokens.front().second;
    state.accepted_tokens.pop_front();
  }
  if (state.ocr_tokens_in_window >= config.budget_tokens) return finish(Verdict::RejectBudget);

  const std::size_t tokens = frame.gt_words.size();
  state.accepted_tokens.emplace_back(frame.ts_ms, tokens);
  state.ocr_tokens_in_window += tokens;
  state.last_accepted_sig = frame.scene_sig;
  state.last_accepted_ts_ms = frame.ts_ms;
  return finish(Verdict::RunOcr);
}

/// Stateful wrapper: one selector per session.
class FrameSelector {
 public:
  explicit FrameSelector(SelectorConfig config = {}) : config_(std::move(config)) {}

  FrameOutcome process(const FrameRecord& frame, Diagnostics* diag = nullptr) {
    return process_frame(frame, state_, config_, diag);
  }

  const SelectorState& state() const { return state_; }
  const SelectorConfig& config() const { return config_; }

 private:
  SelectorConfig config_;
  SelectorState state_;
};

/// Frames treated as poorly lit when exposure is at least this long.
inline constexpr std::int64_t kPoorLightingExposureUs = 25000;

/// Scene context flags attached to a payload on the device.
inline QualityFlags derive_quality_flags(const FrameRecord& frame, const std::optional<Rect>& roi) {
  QualityFlags flags = frame.annotated_flags;
  if (frame.exposure_us >= kPoorLightingExposureUs) flags.set(QualityFlag::PoorLighting);
  if (roi) {
    constexpr double kEdge = 1e-3;
    if (roi->x <= kEdge || roi->y <= kEdge || roi->right() >= 1.0 - kEdge || roi->bottom() >= 1.0 - kEdge)
      flags.set(QualityFlag::Cropped);
  }
  return flags;
}

inline double round_one_decimal(double v) {
  const double r = std::round(v * 10.0) / 10.0;
  return r == 0.0 ? 0.0 : r;
}

/// Surviving frame counts after each stage. Budget rejections happen after
/// the similarity stage and are counted separately.
struct StageCounts {
  std::uint64_t input = 0;
  std::uint64_t after_blur = 0;
  std::uint64_t after_text = 0;
  std::uint64_t after_similarity = 0;
  std::uint64_t budget_rejected = 0;

  /// Cumulative change vs input in percent, one decimal.
  static double cumulative_pct(std::uint64_t input, std::uint64_t survivors) {
    if (input == 0) return 0.0;
    const double ratio = static_cast<double>(survivors) / static_cast<double>(input);
    return round_one_decimal((ratio - 1.0) * 100.0);
  }
  double pct_after_blur() const { return cumulative_pct(input, after_blur); }
  double pct_after_text() const { return cumulative_pct(input, after_text); }
  double pct_after_similarity() const { return cumulative_pct(input, after_similarity); }

  StageCounts& operator+=(const StageCounts& o) {
    input += o.input;
    after_blur += o.after_blur;
    after_text += o.after_text;
    after_similarity += o.after_similarity;
    budget_rejected += o.budget_rejected;
    return *this;
  }
  bool operator==(const StageCounts&) const = default;
};

inline std::string format_pct(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", round_one_decimal(pct));
  return buf;
}

inline StageCounts stage_report(std::span<const SelectionDecision> decisions) {
  StageCounts c;
  for (const auto& d : decisions) {
    ++c.input;
    if (d.verdict == Verdict::RejectBlur) continue;
    ++c.after_blur;
    if (d.verdict == Verdict::RejectNoText) continue;
    ++c.after_text;
    if (d.verdict == Verdict::RejectSimilar) continue;
    ++c.after_similarity;
    if (d.verdict == Verdict::RejectBudget) ++c.budget_rejected;
  }
  return c;
}

}  // namespace hybridocr
