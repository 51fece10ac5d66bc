#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "relimine/rng.hpp"
#include "relimine/validate.hpp"
#include "../support/t_oracle.hpp"

using namespace relimine;

namespace {

std::vector<double> shifted(std::vector<double> v, double d) {
  for (auto& x : v) x += d;
  return v;
}

RowMatrix line(std::initializer_list<double> xs) {
  RowMatrix m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("oracle sanity") {
  // Cauchy (df = 1) has a closed form: p = 1 - 2 atan(t) / pi.
  for (double t : {0.3, 1.0, 4.0, 25.0})
    CHECK(std::fabs(testing::two_tailed_p(t, 1.0) - (1.0 - 2.0 * std::atan(t) / M_PI)) < 1e-9);
  // Known quantile: t = 2.306004 at df = 8 gives p = 0.05.
  CHECK(std::fabs(testing::two_tailed_p(2.306004135, 8.0) - 0.05) < 1e-8);
}

TEST_CASE("welch t-test examples") {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const auto same = welch_t_test(a, a);
  CHECK(same.p == 1.0);
  CHECK(same.t == 0.0);

  const std::vector<double> b = {2, 3, 4, 5, 6};
  const auto r = welch_t_test(a, b);
  const auto ref = testing::welch_reference(a, b);
  CHECK(r.t == doctest::Approx(ref.t));
  CHECK(r.df == doctest::Approx(ref.df));
  CHECK(std::fabs(r.p - ref.p) < 1e-6);

  const std::vector<double> z = {0, 0, 0, 0}, far = {10, 10, 10, 10.1};
  CHECK(welch_t_test(z, far).p < 0.001);
}

TEST_CASE("welch p-values match the integration oracle") {
  Rng rng(77);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> a(2 + rng.below(30)), b(2 + rng.below(30));
    const double shift = rng.uniform(-1.5, 1.5), sa = rng.uniform(0.1, 2), sb = rng.uniform(0.1, 2);
    for (auto& x : a) x = sa * rng.normal();
    for (auto& x : b) x = shift + sb * rng.normal();
    const auto r = welch_t_test(a, b);
    const auto ref = testing::welch_reference(a, b);
    CHECK(std::fabs(r.p - ref.p) < 1e-6);
    const auto s = student_t_test(a, b);
    const auto sref = testing::student_reference(a, b);
    CHECK(std::fabs(s.p - sref.p) < 1e-6);
    CHECK(s.df == sref.df);
    // Swapping the samples negates t and keeps p.
    const auto swapped = welch_t_test(b, a);
    CHECK(swapped.t == doctest::Approx(-r.t));
    CHECK(swapped.p == doctest::Approx(r.p));
  }
}

TEST_CASE("degenerate and undersized samples") {
  const std::vector<double> c1 = {0.5, 0.5, 0.5}, c2 = {0.5, 0.5}, c3 = {0.7, 0.7};
  auto r = welch_t_test(c1, c2);
  CHECK(r.degenerate);
  CHECK(r.p == 1.0);
  r = welch_t_test(c1, c3);
  CHECK(r.degenerate);
  CHECK(r.p == 0.0);
  const std::vector<double> one = {1.0};
  CHECK_THROWS(welch_t_test(one, c1));
}

TEST_CASE("intrinsic similarity uses a strict comparison") {
  const std::vector<double> a = {0.1, 0.3, 0.5, 0.7, 0.9};
  CHECK(intrinsic_similarity(a, a).pass);
  const std::vector<double> zeros = {0, 0, 0}, ones = {1, 1, 1};
  CHECK_FALSE(intrinsic_similarity(zeros, ones).pass);

  // Find the shift at which the oracle gives p = 0.05 (df is 8 for equal
  // spreads), then test just either side of it.
  double lo = 0, hi = 1;
  for (int i = 0; i < 200; ++i) {
    const double mid = (lo + hi) / 2;
    const auto sh = shifted(a, mid);
    (testing::welch_reference(a, sh).p > 0.05 ? lo : hi) = mid;
  }
  const auto below = shifted(a, lo * (1 - 1e-4));
  const auto above = shifted(a, hi * (1 + 1e-4));
  CHECK(intrinsic_similarity(a, below).p > 0.05);
  CHECK(intrinsic_similarity(a, below).pass);
  CHECK(intrinsic_similarity(a, above).p < 0.05);
  CHECK_FALSE(intrinsic_similarity(a, above).pass);

  // p exactly equal to alpha fails.
  SelectionConfig cfg;
  cfg.alpha = welch_t_test(a, below).p;
  CHECK_FALSE(intrinsic_similarity(a, below, cfg).pass);

  const std::vector<double> single = {0.4};
  try {
    (void)intrinsic_similarity(a, single);
    FAIL("expected SelectionError");
  } catch (const SelectionError& e) {
    CHECK(std::string(e.what()) == "insufficient test support");
  }
  CHECK_THROWS_AS(intrinsic_similarity(single, a), SelectionError);
}

TEST_CASE("predictive capability threshold") {
  const std::vector<double> m2 = {0.2, 0.2}, m4 = {0.4, 0.4}, m30 = {0.30, 0.30}, m44 = {0.44, 0.44};
  CHECK(predictive_capability(m2, m2).delta == 0.0);
  CHECK(predictive_capability(m2, m2).pass);
  CHECK(predictive_capability(m2, m4).delta == doctest::Approx(0.2));
  CHECK_FALSE(predictive_capability(m2, m4).pass);
  CHECK(predictive_capability(m30, m44).delta == doctest::Approx(0.14));
  CHECK(predictive_capability(m30, m44).pass);
  const std::vector<double> zero = {0.0, 0.0}, fifteen = {0.25, 0.25};
  SelectionConfig cfg;
  cfg.delta = 0.25;
  CHECK_FALSE(predictive_capability(zero, fifteen, cfg).pass);
  const std::vector<double> empty;
  CHECK_THROWS_AS(predictive_capability(m2, empty), SelectionError);
}

TEST_CASE("segment score prediction") {
  const RowMatrix train = line({0, 1, 2, 3, 4, 5, 6, 100});
  const Labels labels = {0, 0, 0, 0, 0, 0, 0, 1};
  Eigen::RowVectorXd q(1);

  const std::vector<double> flat(8, 0.4);
  q << 2.2;
  CHECK(predict_segment_score(train, labels, flat, q, 0).score == doctest::Approx(0.4));

  const std::vector<double> s = {0, 0, 0, 1, 1, 1, 1, 0.9};
  q << 0;
  auto p = predict_segment_score(train, labels, s, q, 0, 5);
  CHECK(p.score == doctest::Approx(0.4));
  CHECK(p.neighbors == 5);
  CHECK_FALSE(p.clamped);

  // Equidistant members: lower rows win.
  const RowMatrix ring = line({1, -1, 1, -1, 1, -1});
  const std::vector<double> rs = {0, 0, 0, 0, 0, 1};
  q << 0;
  CHECK(predict_segment_score(ring, Labels(6, 0), rs, q, 0, 5).score == 0.0);

  // Small cluster: all members with the clamp flag.
  q << 99;
  p = predict_segment_score(train, labels, s, q, 1, 5);
  CHECK(p.clamped);
  CHECK(p.neighbors == 1);
  CHECK(p.score == doctest::Approx(0.9));

  Rng rng(3);
  std::vector<double> rnd(8);
  for (auto& x : rnd) x = rng.uniform();
  for (double x = -2; x < 8; x += 0.7) {
    q << x;
    const double v = predict_segment_score(train, labels, rnd, q, 0, 3).score;
    CHECK(v >= *std::min_element(rnd.begin(), rnd.begin() + 7));
    CHECK(v <= *std::max_element(rnd.begin(), rnd.begin() + 7));
  }
}

TEST_CASE("salience direction") {
  const std::vector<double> same = {0.2, 0.4, 0.6, 0.8};
  CHECK(salience(same, same) == Salience::neutral);
  const std::vector<double> hi = {0.9, 0.9, 0.9}, lo = {0.1, 0.1, 0.1};
  CHECK(salience(hi, lo) == Salience::high);
  CHECK(salience(lo, hi) == Salience::low);
  const std::vector<double> one = {0.9};
  CHECK(salience(one, lo) == Salience::neutral);

  Rng rng(12);
  for (int k = 0; k < 30; ++k) {
    std::vector<double> c(3 + rng.below(10)), r(3 + rng.below(20));
    const double shift = rng.uniform(-0.5, 0.5);
    for (auto& x : c) x = std::clamp(0.5 + shift + 0.15 * rng.normal(), 0.0, 1.0);
    for (auto& x : r) x = std::clamp(0.5 + 0.15 * rng.normal(), 0.0, 1.0);
    std::vector<double> c2 = c, r2 = r;
    for (auto& x : c2) x = 1 - x;
    for (auto& x : r2) x = 1 - x;
    const Salience s = salience(c, r), flipped = salience(c2, r2);
    if (s == Salience::high) CHECK(flipped == Salience::low);
    if (s == Salience::low) CHECK(flipped == Salience::high);
    if (s == Salience::neutral) CHECK(flipped == Salience::neutral);
  }
}

TEST_CASE("representatives") {
  const RowMatrix e = line({0, 1, 2, 3, 4, 10, 10});
  const std::vector<std::size_t> five = {0, 1, 2, 3, 4};
  const auto r = representatives(five, e, 20);
  REQUIRE(r.size() == 5);
  CHECK(r[0] == 2);  // on the mean
  CHECK(r[1] == 1);  // tie with row 3, lower row first
  CHECK(r[2] == 3);
  CHECK(representatives(five, e, 2).size() == 2);
}

TEST_CASE("participant split is per task and seeded") {
  std::vector<std::pair<TaskId, std::string>> people;
  for (TaskId t : kAllTasks)
    for (int i = 0; i < 20; ++i) people.emplace_back(t, "p" + std::to_string(i));
  const auto a = split_participants(people, 0.2, 5);
  const auto b = split_participants(people, 0.2, 5);
  CHECK(a == b);
  CHECK(a.size() == 12);
  for (TaskId t : kAllTasks)
    CHECK(std::count_if(a.begin(), a.end(), [&](const auto& x) { return x.first == t; }) == 4);
  CHECK(split_participants(people, 0.2, 6) != a);
  const std::vector<std::pair<TaskId, std::string>> two = {{TaskId::quiz, "a"}, {TaskId::quiz, "b"}};
  CHECK(split_participants(two, 0.01, 1).size() == 1);
}

TEST_CASE("selection funnel structure") {
  // Two tight groups plus a scattered one, test points next to each group.
  Rng rng(40);
  const int per = 12;
  RowMatrix train(3 * per, 2), test(3 * 4, 2);
  std::vector<double> trainS, testS;
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  const double score[3] = {0.9, 0.1, 0.5};
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < per; ++i) {
      train.row(g * per + i) << centers[g][0] + 0.1 * rng.normal(), centers[g][1] + 0.1 * rng.normal();
      trainS.push_back(score[g] + 0.03 * rng.normal());
    }
    for (int i = 0; i < 4; ++i) {
      test.row(g * 4 + i) << centers[g][0] + 0.1 * rng.normal(), centers[g][1] + 0.1 * rng.normal();
      // The third group's test members disagree with training.
      testS.push_back((g == 2 ? 0.05 : score[g]) + 0.03 * rng.normal());
    }
  }
  std::vector<StableCluster> clusters;
  for (int g = 0; g < 3; ++g) {
    StableCluster c;
    c.id = g;
    for (int i = 0; i < per; ++i) c.members.push_back(static_cast<std::size_t>(g * per + i));
    c.supportingRuns = {{0.5, 3}, {0.6, 3}, {0.7, 3}};
    clusters.push_back(c);
  }
  SelectionInput in{&train, &test, trainS, testS, &clusters};
  const auto res = select_clusters(in, SelectionConfig{}, 1);
  REQUIRE(res.verdicts.size() == 3);
  CHECK(res.testLabels == Labels{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2});
  for (const auto& v : res.verdicts) {
    REQUIRE(v.tP);
    CHECK(v.retained == (*v.tP > 0.05 && v.delta < 0.15));
    CHECK(v.representatives.size() == static_cast<std::size_t>(per));
  }
  CHECK(res.verdicts[0].salience == Salience::high);
  CHECK(res.verdicts[1].salience == Salience::low);
  CHECK_FALSE(res.verdicts[2].retained);
  const auto f = funnel(res.verdicts);
  CHECK(f.found == 3);
  CHECK(f.salient <= f.retained);
  CHECK(f.retained <= f.found);

  std::vector<std::string> ids;
  for (int i = 0; i < 3 * per; ++i) ids.push_back("s" + std::to_string(i));
  const auto text = verdicts_to_json(res.verdicts, ids);
  const auto back = verdicts_from_json(text, ids);
  CHECK(verdicts_to_json(back, ids) == text);
  CHECK(back[0].representatives == res.verdicts[0].representatives);

  // Jobs do not change the outcome.
  const auto res4 = select_clusters(in, SelectionConfig{}, 4);
  CHECK(verdicts_to_json(res4.verdicts, ids) == text);
}

TEST_CASE("clusters without test members are rejected with a reason") {
  RowMatrix train(10, 1), test(2, 1);
  for (int i = 0; i < 10; ++i) train(i, 0) = i < 5 ? i * 0.01 : 100 + i * 0.01;
  test << 0.02, 0.03;
  std::vector<double> trainS(10, 0.5), testS = {0.5, 0.6};
  std::vector<StableCluster> clusters(2);
  clusters[0].id = 0;
  clusters[0].members = {0, 1, 2, 3, 4};
  clusters[1].id = 1;
  clusters[1].members = {5, 6, 7, 8, 9};
  SelectionInput in{&train, &test, trainS, testS, &clusters};
  const auto res = select_clusters(in, SelectionConfig{});
  CHECK_FALSE(res.verdicts[1].retained);
  CHECK(res.verdicts[1].reason == "insufficient test support");
  CHECK_FALSE(res.verdicts[1].tP);
}
