#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relimine/events.hpp"

namespace relimine {

inline constexpr std::size_t kFeatureDim = 37;
using FeatureVector = std::array<double, kFeatureDim>;

// Canonical 37-dim layout.
namespace feature {
inline constexpr std::size_t kTypeBegin = 0;  // 15 one-hot action types
inline constexpr std::size_t kTime = 15;
inline constexpr std::size_t kPageTask = 16;
inline constexpr std::size_t kPageLlm = 17;
inline constexpr std::size_t kAttrBegin = 18;
inline constexpr std::size_t kAttrCount = 19;
inline constexpr std::size_t kScrollDir = 23;      // up, down, none
inline constexpr std::size_t kMousewheelDir = 26;  // up, down, none

// Feature index of a continuous attribute.
std::size_t attr_dim(NumAttr a);

// Offsets inside the 19-dim attribute block that are continuous (13 of them)
// and the two 3-way categorical triples.
inline constexpr std::array<std::size_t, kNumAttrCount> kContinuousOffsets = {
    0, 1, 2, 3, 4, 11, 12, 13, 14, 15, 16, 17, 18};
inline constexpr std::size_t kScrollDirOffset = kScrollDir - kAttrBegin;
inline constexpr std::size_t kMousewheelDirOffset = kMousewheelDir - kAttrBegin;
}  // namespace feature

double log_feature(std::int64_t raw);  // ln(1 + x)

FeatureVector encode_event(const ActionEvent& e);
std::vector<FeatureVector> encode_session(const Session& s);

// Argmax of the action-type block.
ActionType decode_action_type(const FeatureVector& v);

struct Segment {
  std::string participantId;
  TaskId task = TaskId::quiz;
  int windowSeconds = 0;
  std::int64_t startSecond = 0;
  std::optional<double> overreliance;
  std::vector<std::uint64_t> eventIds;
  std::vector<FeatureVector> vectors;
};

inline constexpr int kMinWindowSeconds = 10;
inline constexpr int kMaxWindowSeconds = 60;

// Number of window starts 0, stride, 2*stride, ... before empty windows are
// dropped. A session shorter than the window yields one candidate.
std::size_t candidate_window_count(std::int64_t durationMs, int windowSeconds, int strideSeconds);

// Half-open windows [start, start + window) over event start times measured
// from the first event. Empty windows are dropped.
std::vector<Segment> segment(const Session& s, int windowSeconds, int strideSeconds = 1);

}  // namespace relimine
