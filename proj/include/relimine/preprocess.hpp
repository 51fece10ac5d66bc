#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relimine/events.hpp"

namespace relimine {

struct MergeConfig {
  std::int64_t mouseMergeGap = 200;    // ms
  std::int64_t keypressMergeGap = 200;  // ms, also used for delete runs
  std::int64_t idleThreshold = 3000;   // ms
  std::int64_t scrollMergeGap = 200;   // ms

  void validate() const;
};

// Each merge collapses maximal runs of the same action type on the same page
// whose inter-event gap (next start minus run end) is below the configured
// gap. Runs of length one are returned verbatim; a merged event keeps the id
// of its first member.
std::vector<ActionEvent> merge_mouse_moves(std::span<const ActionEvent> events,
                                           const MergeConfig& cfg);
// scroll and mousewheel runs are merged separately and only while the
// direction stays the same.
std::vector<ActionEvent> merge_scrolls(std::span<const ActionEvent> events, const MergeConfig& cfg);
std::vector<ActionEvent> merge_keypresses(std::span<const ActionEvent> events,
                                          const MergeConfig& cfg);
std::vector<ActionEvent> merge_deletes(std::span<const ActionEvent> events, const MergeConfig& cfg);

// Inserts an idle event into every gap of at least cfg.idleThreshold ms that
// no logged event covers. Ids are renumbered 0..n-1 afterwards.
std::vector<ActionEvent> synthesize_idle(std::span<const ActionEvent> events,
                                         const MergeConfig& cfg);

// Chronological union of the two page streams. Ties on tStart put the Task
// page first, then the smaller original id. Ids are reassigned 0..n-1.
Session fuse_pages(const Session& taskPage, const Session& llmPage);

// Fills tNorm relative to the session span [first start, last end]. Raw
// millisecond timestamps are left untouched.
Session normalize_time(Session s);

// Full per-session chain: merges, idle synthesis, normalization.
Session preprocess_session(const Session& fused, const MergeConfig& cfg);

struct DroppedSession {
  std::string participantId;
  TaskId task = TaskId::quiz;
  std::string reason;
};

struct FilterResult {
  std::vector<Session> kept;
  std::vector<DroppedSession> dropped;
};

std::int64_t session_duration_ms(const Session& s);

// Thresholds are inclusive: a session with exactly minEvents events is kept.
FilterResult filter_incomplete(std::vector<Session> sessions, std::size_t minEvents,
                               std::int64_t minDurationMs);

}  // namespace relimine
