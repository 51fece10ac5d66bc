#include "relimine/preprocess.hpp"

#include <algorithm>
#include <stdexcept>

namespace relimine {

void MergeConfig::validate() const {
  if (mouseMergeGap <= 0 || keypressMergeGap <= 0 || idleThreshold <= 0 || scrollMergeGap <= 0)
    throw std::invalid_argument("merge gaps and idle threshold must be positive");
}

namespace {

// Generic run merger. `joins(run, next)` decides whether `next` extends the
// current run; `combine(first, members)` builds the merged event.
template <typename Joins, typename Combine>
std::vector<ActionEvent> merge_runs(std::span<const ActionEvent> events, ActionType type,
                                    std::int64_t gap, Joins joins, Combine combine) {
  std::vector<ActionEvent> out;
  out.reserve(events.size());
  std::size_t i = 0;
  while (i < events.size()) {
    const ActionEvent& head = events[i];
    if (head.type != type) {
      out.push_back(head);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    std::int64_t runEnd = head.tEnd;
    while (j < events.size()) {
      const ActionEvent& next = events[j];
      if (next.type != type || next.page != head.page) break;
      if (next.tStart - runEnd >= gap) break;
      if (!joins(events[j - 1], next)) break;
      runEnd = std::max(runEnd, next.tEnd);
      ++j;
    }
    if (j == i + 1) {
      out.push_back(head);
    } else {
      ActionEvent merged = head;
      merged.tEnd = runEnd;
      merged.attrs = AttributeBag{};
      combine(merged, events.subspan(i, j - i));
      out.push_back(std::move(merged));
    }
    i = j;
  }
  return out;
}

constexpr auto always = [](const ActionEvent&, const ActionEvent&) { return true; };

std::int64_t sum_attr(std::span<const ActionEvent> run, NumAttr a, std::int64_t missing) {
  std::int64_t total = 0;
  for (const auto& e : run) total += e.attrs.get(a).value_or(missing);
  return total;
}

}  // namespace

std::vector<ActionEvent> merge_mouse_moves(std::span<const ActionEvent> events,
                                           const MergeConfig& cfg) {
  return merge_runs(events, ActionType::mouseMovement, cfg.mouseMergeGap, always,
                    [](ActionEvent& m, std::span<const ActionEvent> run) {
                      m.attrs.set(NumAttr::totalMouseMovement,
                                  sum_attr(run, NumAttr::totalMouseMovement, 0));
                      m.attrs.set(NumAttr::mouseMovementDuration, m.tEnd - m.tStart);
                    });
}

std::vector<ActionEvent> merge_scrolls(std::span<const ActionEvent> events, const MergeConfig& cfg) {
  auto sameScrollDir = [](const ActionEvent& a, const ActionEvent& b) {
    return a.attrs.scrollDirection.value_or(Direction::none) ==
           b.attrs.scrollDirection.value_or(Direction::none);
  };
  auto sameWheelDir = [](const ActionEvent& a, const ActionEvent& b) {
    return a.attrs.mousewheelDirection.value_or(Direction::none) ==
           b.attrs.mousewheelDirection.value_or(Direction::none);
  };
  auto scrolls = merge_runs(events, ActionType::scroll, cfg.scrollMergeGap, sameScrollDir,
                            [](ActionEvent& m, std::span<const ActionEvent> run) {
                              m.attrs.set(NumAttr::scrollDistance,
                                          sum_attr(run, NumAttr::scrollDistance, 0));
                              m.attrs.set(NumAttr::scrollDuration, m.tEnd - m.tStart);
                              m.attrs.scrollDirection =
                                  run.front().attrs.scrollDirection.value_or(Direction::none);
                            });
  return merge_runs(scrolls, ActionType::mousewheel, cfg.scrollMergeGap, sameWheelDir,
                    [](ActionEvent& m, std::span<const ActionEvent> run) {
                      m.attrs.set(NumAttr::mousewheelDistance,
                                  sum_attr(run, NumAttr::mousewheelDistance, 0));
                      m.attrs.set(NumAttr::scrollDuration, m.tEnd - m.tStart);
                      m.attrs.mousewheelDirection =
                          run.front().attrs.mousewheelDirection.value_or(Direction::none);
                    });
}

std::vector<ActionEvent> merge_keypresses(std::span<const ActionEvent> events,
                                          const MergeConfig& cfg) {
  return merge_runs(events, ActionType::keypress, cfg.keypressMergeGap, always,
                    [](ActionEvent& m, std::span<const ActionEvent> run) {
                      std::string text;
                      bool anyText = false;
                      for (const auto& e : run) {
                        if (e.attrs.keypressText) {
                          anyText = true;
                          text += *e.attrs.keypressText;
                        }
                      }
                      m.attrs.set(NumAttr::keypressKeyCount,
                                  sum_attr(run, NumAttr::keypressKeyCount, 1));
                      m.attrs.set(NumAttr::keypressDuration, m.tEnd - m.tStart);
                      if (anyText) m.attrs.keypressText = std::move(text);
                    });
}

std::vector<ActionEvent> merge_deletes(std::span<const ActionEvent> events, const MergeConfig& cfg) {
  return merge_runs(events, ActionType::del, cfg.keypressMergeGap, always,
                    [](ActionEvent& m, std::span<const ActionEvent> run) {
                      m.attrs.set(NumAttr::deleteKeyCount, sum_attr(run, NumAttr::deleteKeyCount, 1));
                      m.attrs.set(NumAttr::deleteDuration, m.tEnd - m.tStart);
                    });
}

std::vector<ActionEvent> synthesize_idle(std::span<const ActionEvent> events,
                                         const MergeConfig& cfg) {
  std::vector<ActionEvent> out;
  out.reserve(events.size());
  std::int64_t coveredUntil = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const ActionEvent& e = events[i];
    if (i > 0) {
      const std::int64_t gap = e.tStart - coveredUntil;
      if (gap >= cfg.idleThreshold) {
        ActionEvent idle;
        idle.type = ActionType::idle;
        idle.page = out.back().page;
        idle.tStart = coveredUntil;
        idle.tEnd = e.tStart;
        idle.attrs.set(NumAttr::idleDuration, gap);
        out.push_back(std::move(idle));
      }
    }
    coveredUntil = i == 0 ? e.tEnd : std::max(coveredUntil, e.tEnd);
    out.push_back(e);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = i;
  return out;
}

Session fuse_pages(const Session& taskPage, const Session& llmPage) {
  if (taskPage.participantId != llmPage.participantId || taskPage.task != llmPage.task)
    throw std::invalid_argument("fuse_pages: participant/task mismatch between page logs");
  Session out = taskPage;
  out.events.clear();
  out.events.reserve(taskPage.events.size() + llmPage.events.size());
  for (auto e : taskPage.events) {
    e.page = Page::task;
    out.events.push_back(e);
  }
  for (auto e : llmPage.events) {
    e.page = Page::llm;
    out.events.push_back(e);
  }
  if (!out.overreliance) out.overreliance = llmPage.overreliance;
  if (!out.condition) out.condition = llmPage.condition;
  for (const auto& [k, v] : llmPage.metadata) out.metadata.emplace(k, v);
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const ActionEvent& a, const ActionEvent& b) {
                     if (a.tStart != b.tStart) return a.tStart < b.tStart;
                     if (a.page != b.page) return a.page == Page::task;
                     return a.id < b.id;
                   });
  for (std::size_t i = 0; i < out.events.size(); ++i) out.events[i].id = i;
  return out;
}

std::int64_t session_duration_ms(const Session& s) {
  if (s.events.empty()) return 0;
  std::int64_t end = s.events.front().tEnd;
  for (const auto& e : s.events) end = std::max(end, e.tEnd);
  return end - s.events.front().tStart;
}

Session normalize_time(Session s) {
  if (s.events.empty()) throw std::invalid_argument("normalize_time: empty session");
  const std::int64_t origin = s.events.front().tStart;
  const std::int64_t span = session_duration_ms(s);
  for (auto& e : s.events) {
    e.tNorm = span > 0 ? static_cast<double>(e.tStart - origin) / static_cast<double>(span) : 0.0;
  }
  return s;
}

Session preprocess_session(const Session& fused, const MergeConfig& cfg) {
  cfg.validate();
  Session out = fused;
  auto events = merge_mouse_moves(fused.events, cfg);
  events = merge_scrolls(events, cfg);
  events = merge_keypresses(events, cfg);
  events = merge_deletes(events, cfg);
  out.events = synthesize_idle(events, cfg);
  out.stage = Stage::preprocessed;
  if (out.events.empty()) return out;
  return normalize_time(std::move(out));
}

FilterResult filter_incomplete(std::vector<Session> sessions, std::size_t minEvents,
                               std::int64_t minDurationMs) {
  FilterResult r;
  for (auto& s : sessions) {
    std::string reason;
    if (s.events.size() < minEvents) {
      reason = "too few events (" + std::to_string(s.events.size()) + " < " +
               std::to_string(minEvents) + ")";
    } else if (session_duration_ms(s) < minDurationMs) {
      reason = "too short (" + std::to_string(session_duration_ms(s)) + " ms < " +
               std::to_string(minDurationMs) + " ms)";
    }
    if (reason.empty()) {
      r.kept.push_back(std::move(s));
    } else {
      r.dropped.push_back(DroppedSession{s.participantId, s.task, std::move(reason)});
    }
  }
  return r;
}

}  // namespace relimine
