#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relimine/events.hpp"

namespace relimine {

enum class Archetype {
  copyPasteHeavy,
  readerFirst,
  frequentReferencer,
  coarseLocator,
  hesitator,
  uniformNoise,
};

inline constexpr std::array<Archetype, 6> kAllArchetypes = {
    Archetype::copyPasteHeavy, Archetype::readerFirst,  Archetype::frequentReferencer,
    Archetype::coarseLocator,  Archetype::hesitator,    Archetype::uniformNoise};

std::string_view to_string(Archetype a);
std::optional<Archetype> parse_archetype(std::string_view s);

struct ScoreRange {
  double lo = 0.0;
  double hi = 1.0;
};

// Where planted overreliance scores are drawn from: [0.7, 1] for the four
// high-overreliance patterns, [0, 0.3] for readerFirst, [0, 1] for noise.
ScoreRange planted_score_range(Archetype a);
bool is_high_archetype(Archetype a);

// Generator constants. Rates are per 60 s unless noted and are multiplied by
// the session's jitter factor.
namespace synth_table {
// copyPasteHeavy: highlight -> copy -> mouseMovement -> paste cycles.
inline constexpr int kCopyCyclesMin = 5;
inline constexpr int kCopyCyclesMax = 6;
inline constexpr int kParagraphCopyMin = 250;  // characters
inline constexpr int kParagraphCopyMax = 700;
// readerFirst: opening reading phase of wheel/scroll and idle on Task.
inline constexpr double kReadingSecondsMin = 30.0;
inline constexpr double kReadingSecondsExtra = 6.0;
// frequentReferencer: LLM wheel -> Task move -> click, per 10 s.
inline constexpr int kReferCyclesMin = 3;
inline constexpr int kReferCyclesMax = 4;
// coarseLocator: wheel/move bursts then one long copy-paste.
inline constexpr int kLocateCycles = 4;
inline constexpr int kBurstMin = 4;
inline constexpr int kBurstMax = 6;
inline constexpr int kLongCopyMin = 1200;
inline constexpr int kLongCopyMax = 3000;
// hesitator: long Task idle, then LLM keypress/delete.
inline constexpr int kHesitateCycles = 4;
inline constexpr int kHesitateIdleMin = 6000;  // ms
inline constexpr int kHesitateIdleMax = 9000;
// Shared timing.
inline constexpr int kGapMin = 250;  // ms between consecutive events, above every merge gap
inline constexpr int kGapMax = 900;
inline constexpr int kIdleMin = 3000;
}  // namespace synth_table

// Events all start and end inside [0, durationSeconds * 1000]. `rateScale`
// multiplies the archetype's rates (1 = nominal).
Session gen_session(Archetype kind, double durationSeconds, std::uint64_t seed,
                    double rateScale = 1.0, TaskId task = TaskId::quiz,
                    const std::string& participantId = {});

struct CorpusEntry {
  Archetype kind = Archetype::uniformNoise;
  int count = 0;
};

struct CorpusSpec {
  std::vector<CorpusEntry> entries;
  double durationSeconds = 60.0;
  std::uint64_t seed = 0;
  std::vector<TaskId> tasks = {TaskId::quiz};
  double jitter = 0.2;  // rate scale drawn from [1 - jitter, 1 + jitter]

  // Six kinds x 20 participants, each doing all three tasks.
  static CorpusSpec standard(std::uint64_t seed = 0);
};

struct GroundTruth {
  std::string participantId;
  TaskId task = TaskId::quiz;
  Archetype kind = Archetype::uniformNoise;
  double plantedScore = 0.0;
  double rateScale = 1.0;
};

struct Corpus {
  std::vector<Session> sessions;
  std::vector<GroundTruth> truth;  // parallel to sessions
};

// count participants per entry, one session per participant and task.
// Participant ids are "<archetype>-<nnn>".
Corpus gen_corpus(const CorpusSpec& spec);

std::optional<Archetype> archetype_of(std::string_view participantId);

std::string truth_to_jsonl(const std::vector<GroundTruth>& truth);
std::vector<GroundTruth> truth_from_jsonl(const std::string& text);

}  // namespace relimine
