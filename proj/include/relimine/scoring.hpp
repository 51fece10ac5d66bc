#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "relimine/events.hpp"

namespace relimine {

// A participant's ranking of survival items: itemIds[i] is ranked at
// position i + 1. groundTruth maps each item to its expert index.
struct Ranking {
  std::vector<std::string> itemIds;
  std::map<std::string, int> groundTruth;
  std::set<std::string> excluded;
};

// Per-item indices for the case where only aggregate (possibly averaged)
// participant indices are known.
struct ItemIndexPair {
  double groundTruth = 0.0;
  double participant = 0.0;
  bool excluded = false;
};

// Mean absolute index difference over the non-excluded items.
double mean_abs_index_difference(std::span<const ItemIndexPair> items);
double nasa_score(const Ranking& ranking);

enum class ScoreBasis { quizDelta, misinfoRatio };

struct OverrelianceScore {
  double value = 0.0;
  TaskId task = TaskId::quiz;
  ScoreBasis basis = ScoreBasis::quizDelta;
};

// ((sWith - sWithout) - min) / (max - min) over the cohort deltas.
OverrelianceScore quiz_overreliance(double sWith, double sWithout,
                                    std::span<const double> cohortDeltas);
OverrelianceScore misinfo_overreliance(int retained, int total, TaskId task);

enum class StratifiedLevel { low, neutral, high };
std::string_view to_string(StratifiedLevel l);

// Order statistic nearest to position q * (n - 1) of the sorted sample,
// rounding half to even.
double nearest_percentile(std::vector<double> values, double q);

// >= Q3 is high, <= Q1 is low, otherwise neutral. Scores meeting both
// bounds (only possible when Q1 == Q3) are neutral. Needs >= 4 scores.
std::vector<StratifiedLevel> stratify(std::span<const double> scores);

struct ScoredParticipant {
  std::string participantId;
  TaskId task = TaskId::quiz;
  double value = 0.0;
};

// Quartiles per task by default; `pooled` uses one distribution for all.
std::vector<StratifiedLevel> stratify_cohort(std::span<const ScoredParticipant> cohort,
                                             bool pooled = false);

}  // namespace relimine
