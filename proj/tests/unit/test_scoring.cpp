#include <cmath>
#include <numeric>

#include "doctest.h"
#include "relimine/rng.hpp"
#include "relimine/scoring.hpp"

using namespace relimine;

namespace {

// Moon survival pilot data: ground-truth index, mean participant index and
// the published |diff| column.
struct MoonRow {
  double gt, participant, diff;
  bool starred;
};
const MoonRow kMoon[] = {
    {15, 11.18, 3.82, false}, {4, 4.7, 0.7, true},    {6, 8.78, 2.78, false},  {8, 9.34, 1.34, false},
    {13, 8.94, 4.06, false},  {11, 11.98, 0.98, true}, {12, 9.54, 2.46, false}, {1, 3.16, 2.16, false},
    {3, 6.92, 3.92, false},   {9, 9.34, 0.34, true},   {14, 8.1, 5.9, false},   {2, 5.14, 3.14, false},
    {10, 7.3, 2.7, false},    {7, 8.38, 1.38, false},  {5, 7, 2, false},
};

// Oracle: sum the published column directly, in long double.
double column_mean(bool skipStarred) {
  long double sum = 0;
  int n = 0;
  for (const auto& r : kMoon) {
    if (skipStarred && r.starred) continue;
    sum += r.diff;
    ++n;
  }
  return static_cast<double>(sum / n);
}

std::vector<ItemIndexPair> moon_items(bool exclude) {
  std::vector<ItemIndexPair> v;
  for (const auto& r : kMoon) v.push_back({r.gt, r.participant, exclude && r.starred});
  return v;
}

Ranking ranking_of(const std::vector<int>& order) {
  Ranking r;
  for (std::size_t i = 0; i < order.size(); ++i) {
    r.itemIds.push_back("item" + std::to_string(order[i]));
    r.groundTruth["item" + std::to_string(i + 1)] = static_cast<int>(i + 1);
  }
  return r;
}

}  // namespace

TEST_CASE("moon table mean absolute difference") {
  CHECK(column_mean(false) == doctest::Approx(2.512).epsilon(1e-12));
  CHECK(std::fabs(mean_abs_index_difference(moon_items(false)) - column_mean(false)) < 1e-9);
  CHECK(std::fabs(mean_abs_index_difference(moon_items(false)) - 2.512) < 1e-9);
  CHECK(std::fabs(mean_abs_index_difference(moon_items(true)) - column_mean(true)) < 1e-9);
}

TEST_CASE("nasa score of rankings") {
  CHECK(nasa_score(ranking_of({1, 2, 3, 4, 5})) == 0.0);
  // Swapping two neighbours costs 2 over 5 items.
  CHECK(nasa_score(ranking_of({2, 1, 3, 4, 5})) == doctest::Approx(0.4));
  Ranking ex = ranking_of({2, 1, 3, 4, 5});
  ex.excluded = {"item1", "item2"};
  CHECK(nasa_score(ex) == 0.0);
  Ranking bad = ranking_of({1, 1, 3, 4, 5});
  CHECK_THROWS_AS(nasa_score(bad), std::invalid_argument);
  Ranking missing = ranking_of({1, 2, 3});
  missing.itemIds.pop_back();
  CHECK_THROWS_AS(nasa_score(missing), std::invalid_argument);
}

TEST_CASE("nasa score is invariant under relabelling") {
  Ranking a = ranking_of({3, 1, 2, 5, 4});
  Ranking b;
  for (const auto& id : a.itemIds) b.itemIds.push_back("x" + id);
  for (const auto& [k, v] : a.groundTruth) b.groundTruth["x" + k] = v;
  CHECK(nasa_score(a) == nasa_score(b));
}

TEST_CASE("quiz normalization") {
  const std::vector<double> deltas = {-2, 0, 6};
  CHECK(quiz_overreliance(1, 3, deltas).value == 0.0);
  CHECK(quiz_overreliance(9, 3, deltas).value == 1.0);
  CHECK(quiz_overreliance(3, 3, deltas).value == doctest::Approx(0.25));
  CHECK(quiz_overreliance(3, 3, deltas).basis == ScoreBasis::quizDelta);
  const std::vector<double> flat = {1, 1};
  CHECK_THROWS_AS(quiz_overreliance(1, 0, flat), std::invalid_argument);
  CHECK_THROWS_AS(quiz_overreliance(20, 0, deltas), std::invalid_argument);
  // Monotone in the delta.
  double prev = -1;
  for (double d = -2; d <= 6; d += 0.5) {
    const double v = quiz_overreliance(d, 0, deltas).value;
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("misinformation ratio") {
  CHECK(misinfo_overreliance(0, 11, TaskId::summarization).value == 0.0);
  CHECK(misinfo_overreliance(11, 11, TaskId::summarization).value == 1.0);
  CHECK(misinfo_overreliance(5, 20, TaskId::trip).value == 0.25);
  CHECK_THROWS(misinfo_overreliance(1, 0, TaskId::trip));
  CHECK_THROWS(misinfo_overreliance(3, 2, TaskId::trip));
  for (int r = 0; r <= 20; ++r)
    CHECK(misinfo_overreliance(r, 20, TaskId::trip).value ==
          doctest::Approx(1.0 - misinfo_overreliance(20 - r, 20, TaskId::trip).value));
}

TEST_CASE("stratification") {
  using L = StratifiedLevel;
  const std::vector<double> four = {0.0, 0.2, 0.8, 1.0};
  CHECK(stratify(four) == std::vector<L>{L::low, L::low, L::high, L::high});
  const std::vector<double> same = {0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(stratify(same) == std::vector<L>(5, L::neutral));
  const std::vector<double> three = {0.1, 0.2, 0.3};
  CHECK_THROWS(stratify(three));

  Rng rng(8);
  std::vector<double> u(100);
  for (auto& x : u) x = rng.uniform();
  const auto levels = stratify(u);
  const auto count = [&](L l) { return std::count(levels.begin(), levels.end(), l); };
  CHECK(count(L::high) + count(L::low) + count(L::neutral) == 100);
  CHECK(count(L::high) >= 23);
  CHECK(count(L::high) <= 27);
  CHECK(count(L::low) >= 23);
  CHECK(count(L::low) <= 27);
}

TEST_CASE("cohort stratification is per task by default") {
  std::vector<ScoredParticipant> c;
  for (int i = 0; i < 4; ++i) c.push_back({"q" + std::to_string(i), TaskId::quiz, 0.1 * i});
  for (int i = 0; i < 4; ++i) c.push_back({"t" + std::to_string(i), TaskId::trip, 0.6 + 0.1 * i});
  const auto per = stratify_cohort(c);
  CHECK(per[0] == StratifiedLevel::low);
  CHECK(per[3] == StratifiedLevel::high);
  CHECK(per[4] == StratifiedLevel::low);
  const auto pooled = stratify_cohort(c, true);
  CHECK(pooled[3] == StratifiedLevel::neutral);
  CHECK(pooled[4] == StratifiedLevel::neutral);
  CHECK(pooled[7] == StratifiedLevel::high);
}
