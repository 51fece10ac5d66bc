#include "relimine/encode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relimine/preprocess.hpp"

namespace relimine {

std::size_t feature::attr_dim(NumAttr a) {
  return kAttrBegin + kContinuousOffsets[static_cast<std::size_t>(a)];
}

double log_feature(std::int64_t raw) { return std::log1p(static_cast<double>(std::max<std::int64_t>(raw, 0))); }

FeatureVector encode_event(const ActionEvent& e) {
  const auto typeIndex = static_cast<std::size_t>(e.type);
  if (typeIndex >= kActionTypeCount) throw std::invalid_argument("encode_event: unknown action type");
  FeatureVector v{};
  v[feature::kTypeBegin + typeIndex] = 1.0;
  v[feature::kTime] = e.tNorm;
  v[e.page == Page::task ? feature::kPageTask : feature::kPageLlm] = 1.0;
  for (std::size_t i = 0; i < kNumAttrCount; ++i) {
    const auto a = static_cast<NumAttr>(i);
    if (!num_attr_allowed(e.type, a)) continue;
    v[feature::attr_dim(a)] = log_feature(e.attrs.value_or_zero(a));
  }
  if (e.type == ActionType::scroll) {
    const auto d = e.attrs.scrollDirection.value_or(Direction::none);
    v[feature::kScrollDir + static_cast<std::size_t>(d)] = 1.0;
  } else if (e.type == ActionType::mousewheel) {
    const auto d = e.attrs.mousewheelDirection.value_or(Direction::none);
    v[feature::kMousewheelDir + static_cast<std::size_t>(d)] = 1.0;
  }
  return v;
}

std::vector<FeatureVector> encode_session(const Session& s) {
  std::vector<FeatureVector> out;
  out.reserve(s.events.size());
  for (const auto& e : s.events) out.push_back(encode_event(e));
  return out;
}

ActionType decode_action_type(const FeatureVector& v) {
  const auto begin = v.begin() + feature::kTypeBegin;
  return static_cast<ActionType>(std::max_element(begin, begin + kActionTypeCount) - begin);
}

std::size_t candidate_window_count(std::int64_t durationMs, int windowSeconds, int strideSeconds) {
  if (strideSeconds <= 0) throw std::invalid_argument("stride must be positive");
  const std::int64_t windowMs = std::int64_t{windowSeconds} * 1000;
  if (durationMs < windowMs) return 1;
  return static_cast<std::size_t>((durationMs - windowMs) / (std::int64_t{strideSeconds} * 1000)) + 1;
}

std::vector<Segment> segment(const Session& s, int windowSeconds, int strideSeconds) {
  if (windowSeconds < kMinWindowSeconds || windowSeconds > kMaxWindowSeconds)
    throw std::invalid_argument("segment: window must lie in [10, 60] seconds");
  if (strideSeconds <= 0) throw std::invalid_argument("segment: stride must be positive");
  std::vector<Segment> out;
  if (s.events.empty()) return out;

  const std::int64_t origin = s.events.front().tStart;
  const std::size_t windows =
      candidate_window_count(session_duration_ms(s), windowSeconds, strideSeconds);
  const auto encoded = encode_session(s);
  const std::int64_t windowMs = std::int64_t{windowSeconds} * 1000;

  // Events are ordered by tStart, so each window is a contiguous index range.
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t w = 0; w < windows; ++w) {
    const std::int64_t startSecond = static_cast<std::int64_t>(w) * strideSeconds;
    const std::int64_t begin = startSecond * 1000;
    const std::int64_t end = begin + windowMs;
    while (lo < s.events.size() && s.events[lo].tStart - origin < begin) ++lo;
    hi = std::max(hi, lo);
    while (hi < s.events.size() && s.events[hi].tStart - origin < end) ++hi;
    if (hi == lo) continue;
    Segment seg;
    seg.participantId = s.participantId;
    seg.task = s.task;
    seg.windowSeconds = windowSeconds;
    seg.startSecond = startSecond;
    seg.overreliance = s.overreliance;
    seg.eventIds.reserve(hi - lo);
    seg.vectors.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      seg.eventIds.push_back(s.events[i].id);
      seg.vectors.push_back(encoded[i]);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace relimine
