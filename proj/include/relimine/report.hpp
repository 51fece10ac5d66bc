#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relimine/events.hpp"
#include "relimine/validate.hpp"

namespace relimine {

// Fixed fill color per action type. The eight types shown in the published
// legend come first; the other seven use extra colors.
std::string_view palette_color(ActionType t);
inline constexpr std::array<ActionType, 8> kLegendCore = {
    ActionType::mouseMovement, ActionType::mousewheel, ActionType::click, ActionType::keypress,
    ActionType::del,           ActionType::copy,       ActionType::paste, ActionType::idle};

struct StripEvent {
  ActionType type = ActionType::click;
  Page page = Page::task;
};

std::vector<StripEvent> strip_events(std::span<const ActionEvent> events);

// One block per event, top to bottom in temporal order; Task-page blocks sit
// in the left column and LLM-page blocks in the right one. The legend lists
// the core types plus any other type present. Output depends only on the
// input (integer coordinates, no locale).
std::string render_strip(std::span<const StripEvent> events, std::string_view title = {});

struct ClusterStrips {
  int clusterId = 0;
  std::vector<std::string> segmentIds;        // representatives, nearest first
  std::vector<std::vector<StripEvent>> strips;  // parallel to segmentIds
};

// Relative file name -> content.
using DocumentBundle = std::map<std::string, std::string>;

// summary.txt with the found/retained/salient funnel and one row per
// cluster; one strip per representative for every retained cluster under
// cluster_<id>/. No retained clusters gives a summary-only bundle.
DocumentBundle render_cluster_report(std::span<const ClusterVerdict> verdicts,
                                     std::span<const ClusterStrips> strips,
                                     std::string_view title = {});

}  // namespace relimine
