#include "relimine/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relimine {

double mean_abs_index_difference(std::span<const ItemIndexPair> items) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& it : items) {
    if (it.excluded) continue;
    sum += std::fabs(it.groundTruth - it.participant);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("nasa score: no scored items");
  return sum / static_cast<double>(n);
}

double nasa_score(const Ranking& ranking) {
  if (ranking.itemIds.size() != ranking.groundTruth.size())
    throw std::invalid_argument("nasa score: ranking is not a permutation of the ground truth");
  std::set<std::string> seen;
  std::vector<ItemIndexPair> items;
  items.reserve(ranking.itemIds.size());
  for (std::size_t pos = 0; pos < ranking.itemIds.size(); ++pos) {
    const auto& id = ranking.itemIds[pos];
    auto gt = ranking.groundTruth.find(id);
    if (gt == ranking.groundTruth.end() || !seen.insert(id).second)
      throw std::invalid_argument("nasa score: ranking is not a permutation of the ground truth");
    items.push_back(ItemIndexPair{static_cast<double>(gt->second), static_cast<double>(pos + 1),
                                  ranking.excluded.contains(id)});
  }
  for (const auto& ex : ranking.excluded) {
    if (!seen.contains(ex)) throw std::invalid_argument("nasa score: excluded item not ranked");
  }
  return mean_abs_index_difference(items);
}

OverrelianceScore quiz_overreliance(double sWith, double sWithout,
                                    std::span<const double> cohortDeltas) {
  if (cohortDeltas.empty()) throw std::invalid_argument("quiz overreliance: empty cohort");
  const auto [lo, hi] = std::minmax_element(cohortDeltas.begin(), cohortDeltas.end());
  if (!(*hi > *lo)) throw std::invalid_argument("quiz overreliance: degenerate cohort (max == min)");
  const double delta = sWith - sWithout;
  const double v = (delta - *lo) / (*hi - *lo);
  if (v < -1e-12 || v > 1.0 + 1e-12)
    throw std::invalid_argument("quiz overreliance: participant delta outside the cohort range");
  return OverrelianceScore{std::clamp(v, 0.0, 1.0), TaskId::quiz, ScoreBasis::quizDelta};
}

OverrelianceScore misinfo_overreliance(int retained, int total, TaskId task) {
  if (total <= 0) throw std::invalid_argument("misinfo overreliance: total must be positive");
  if (retained < 0 || retained > total)
    throw std::invalid_argument("misinfo overreliance: retained must lie in [0, total]");
  return OverrelianceScore{static_cast<double>(retained) / total, task, ScoreBasis::misinfoRatio};
}

std::string_view to_string(StratifiedLevel l) {
  switch (l) {
    case StratifiedLevel::low: return "low";
    case StratifiedLevel::neutral: return "neutral";
    case StratifiedLevel::high: return "high";
  }
  return "neutral";
}

double nearest_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto idx = static_cast<std::size_t>(std::nearbyint(pos));
  return values[std::min(idx, values.size() - 1)];
}

std::vector<StratifiedLevel> stratify(std::span<const double> scores) {
  if (scores.size() < 4) throw std::invalid_argument("stratify: need at least 4 scores");
  std::vector<double> v(scores.begin(), scores.end());
  const double q1 = nearest_percentile(v, 0.25);
  const double q3 = nearest_percentile(v, 0.75);
  std::vector<StratifiedLevel> out;
  out.reserve(scores.size());
  for (double s : scores) {
    const bool high = s >= q3;
    const bool low = s <= q1;
    if (high && !low) out.push_back(StratifiedLevel::high);
    else if (low && !high) out.push_back(StratifiedLevel::low);
    else out.push_back(StratifiedLevel::neutral);
  }
  return out;
}

std::vector<StratifiedLevel> stratify_cohort(std::span<const ScoredParticipant> cohort,
                                             bool pooled) {
  std::vector<StratifiedLevel> out(cohort.size(), StratifiedLevel::neutral);
  if (pooled) {
    std::vector<double> v;
    for (const auto& c : cohort) v.push_back(c.value);
    return stratify(v);
  }
  for (TaskId task : kAllTasks) {
    std::vector<double> v;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (cohort[i].task != task) continue;
      v.push_back(cohort[i].value);
      idx.push_back(i);
    }
    if (v.empty()) continue;
    const auto levels = stratify(v);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = levels[k];
  }
  return out;
}

}  // namespace relimine
