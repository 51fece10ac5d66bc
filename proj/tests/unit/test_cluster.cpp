#include <algorithm>
#include <map>
#include <numeric>

#include "doctest.h"
#include "relimine/cluster.hpp"
#include "relimine/rng.hpp"
#include "../support/dbscan_oracle.hpp"

using namespace relimine;

namespace {

RowMatrix blobs(Rng& rng, std::size_t n, int dims, int centers, double spread) {
  RowMatrix c(centers, dims);
  for (int k = 0; k < centers; ++k)
    for (int d = 0; d < dims; ++d) c(k, d) = rng.uniform(-3, 3);
  RowMatrix p(static_cast<Eigen::Index>(n), dims);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(centers)));
    for (int d = 0; d < dims; ++d) p(static_cast<Eigen::Index>(i), d) = c(k, d) + spread * rng.normal();
  }
  return p;
}

RowMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

ClusterRun run_of(Labels l, double eps = 0.5, int m = 3) { return ClusterRun{{eps, m}, std::move(l)}; }

}  // namespace

TEST_CASE("dbscan matches the reference on random instances") {
  Rng rng(2024);
  int withClusters = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const int dims = 1 + static_cast<int>(rng.below(8));
    const RowMatrix p = blobs(rng, n, dims, 1 + static_cast<int>(rng.below(5)), rng.uniform(0.1, 0.8));
    const double eps = rng.uniform(0.2, 1.5);
    const int minSamples = 2 + static_cast<int>(rng.below(9));
    const Labels got = dbscan(p, eps, minSamples);
    const Labels want = testing::reference_dbscan(p, eps, minSamples);
    CHECK(testing::same_partition(got, want));
    withClusters += cluster_count(want) > 1;
  }
  CHECK(withClusters > 20);
}

TEST_CASE("dbscan basics") {
  const RowMatrix p = rows({{0, 0}, {0, 0.1}, {0.1, 0}, {5, 5}, {5, 5.1}, {5.1, 5}, {20, 20}});
  const Labels l = dbscan(p, 0.5, 3);
  CHECK(l == Labels{0, 0, 0, 1, 1, 1, kNoise});
  CHECK(cluster_count(l) == 2);
  // The neighbourhood counts the point itself.
  CHECK(dbscan(p, 0.5, 4) == Labels(7, kNoise));
}

TEST_CASE("grid has 72 runs in eps-major order") {
  const auto g = ClusterGrid::standard();
  CHECK(g.size() == 72);
  CHECK(g.eps.front() == 0.2);
  CHECK(g.eps.back() == 1.0);
  CHECK(g.minSamples.front() == 3);
  CHECK(g.minSamples.back() == 10);
  Rng rng(5);
  const RowMatrix p = blobs(rng, 120, 4, 3, 0.3);
  const auto runs = grid_cluster(p, g, 1);
  REQUIRE(runs.size() == 72);
  std::size_t k = 0;
  for (double eps : g.eps)
    for (int m : g.minSamples) {
      CHECK(runs[k].params == RunParams{eps, m});
      CHECK(runs[k].labels == dbscan(p, eps, m));
      ++k;
    }
  const auto parallel = grid_cluster(p, g, 4);
  for (std::size_t i = 0; i < runs.size(); ++i) CHECK(parallel[i].labels == runs[i].labels);
}

TEST_CASE("jaccard") {
  CHECK(jaccard({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(jaccard({1, 2}, {3, 4}) == 0.0);
  CHECK(jaccard({1, 2, 3}, {2, 3, 4}) == 0.5);
}

TEST_CASE("stable clusters intersect matching run clusters") {
  const RowMatrix pts = RowMatrix::Zero(10, 2);
  std::vector<ClusterRun> runs = {
      run_of({0, 0, 0, 0, 0, 1, 1, 1, 1, kNoise}),
      run_of({0, 0, 0, 0, kNoise, 1, 1, 1, 1, 1}),
      run_of({1, 1, 1, 1, 1, 0, 0, 0, kNoise, kNoise}),
  };
  const auto s = stable_clusters(runs, pts, 0.7, 3);
  REQUIRE(s.size() == 2);
  CHECK(s[0].members == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(s[1].members == std::vector<std::size_t>{5, 6, 7});
  CHECK(s[0].supportingRuns.size() == 3);
  CHECK(s[0].id == 0);
  CHECK(s[1].id == 1);

  // Only two runs agree on the second group: not stable with minRuns 3.
  runs[2].labels = {1, 1, 1, 1, 1, kNoise, kNoise, kNoise, kNoise, kNoise};
  CHECK(stable_clusters(runs, pts, 0.7, 3).size() == 1);
  CHECK(stable_clusters(runs, pts, 0.7, 2).size() == 2);
}

TEST_CASE("stable clusters on separated blobs") {
  Rng rng(9);
  RowMatrix p(90, 3);
  for (int i = 0; i < 90; ++i)
    for (int d = 0; d < 3; ++d) p(i, d) = (i / 30) * 10.0 + 0.1 * rng.normal();
  const auto runs = grid_cluster(p);
  const auto s = stable_clusters(runs, p);
  REQUIRE(s.size() == 3);
  // Intersection over all supporting runs drops the sparsest outliers.
  for (int k = 0; k < 3; ++k) {
    CHECK(s[static_cast<std::size_t>(k)].members.size() >= 25);
    for (auto m : s[static_cast<std::size_t>(k)].members) CHECK(static_cast<int>(m) / 30 == k);
    CHECK(s[static_cast<std::size_t>(k)].centroid.size() == 3);
  }
}

TEST_CASE("run clusters in stable chains shrink as the threshold rises") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const RowMatrix p = blobs(rng, 150, 3, 4, 0.5);
    const auto runs = grid_cluster(p);
    std::vector<std::pair<std::size_t, int>> prev;
    bool first = true;
    for (double t = 0.3; t <= 1.0001; t += 0.1) {
      auto cur = stable_run_clusters(runs, std::min(t, 1.0), 3);
      std::sort(cur.begin(), cur.end());
      if (!first) CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      prev = cur;
      first = false;
    }
  }
}

TEST_CASE("exclusive membership prefers the smaller cluster") {
  StableCluster big{0, {0, 1, 2, 3, 4}, {{0.5, 3}, {0.6, 3}, {0.7, 3}}, {}};
  StableCluster small{1, {3, 4}, {{0.5, 3}, {0.6, 3}, {0.7, 3}}, {}};
  const Labels l = resolve_membership({big, small}, 7);
  CHECK(l == Labels{0, 0, 0, 1, 1, kNoise, kNoise});

  StableCluster a{0, {0, 1}, {{0.5, 3}, {0.6, 3}, {0.7, 3}}, {}};
  StableCluster b{1, {1, 2}, {{0.5, 3}, {0.6, 3}, {0.7, 3}, {0.8, 3}}, {}};
  CHECK(resolve_membership({a, b}, 3) == Labels{0, 1, 1});
  StableCluster c{1, {1, 2}, {{0.5, 3}, {0.6, 3}, {0.7, 3}}, {}};
  CHECK(resolve_membership({a, c}, 3) == Labels{0, 0, 1});
}

TEST_CASE("knn assignment") {
  const RowMatrix train = rows({{0}, {1}, {2}, {10}, {11}, {12}, {13}, {50}});
  const Labels labels = {0, 0, 0, 1, 1, 1, 1, kNoise};
  Eigen::RowVectorXd q(1);
  q << 0.5;
  CHECK(assign_test(train, labels, q, 3) == 0);
  q << 12.5;
  CHECK(assign_test(train, labels, q, 5) == 1);
  // Noise never votes; k larger than the labeled set throws.
  q << 49;
  CHECK(assign_test(train, labels, q, 7) == 1);
  CHECK_THROWS(assign_test(train, labels, q, 8));

  // Two votes each: the label with the closer neighbours wins.
  const RowMatrix tie = rows({{-1}, {-1.2}, {2}, {2.1}});
  const Labels tl = {7, 7, 3, 3};
  q << 0;
  CHECK(assign_test(tie, tl, q, 4) == 7);
  // Equal mean distance: the smaller label wins.
  const RowMatrix sym = rows({{-1}, {1}});
  q << 0;
  CHECK(assign_test(sym, Labels{5, 2}, q, 2) == 2);

  const RowMatrix test = rows({{0.2}, {11.7}});
  CHECK(assign_all(train, labels, test, 3, 2) == Labels{0, 1});
}

TEST_CASE("cluster file round trip") {
  Rng rng(4);
  const RowMatrix p = blobs(rng, 80, 3, 3, 0.2);
  const auto runs = grid_cluster(p);
  const auto s = stable_clusters(runs, p);
  std::vector<std::string> ids;
  for (int i = 0; i < 80; ++i) ids.push_back("seg" + std::to_string(i));
  const std::string text = clusters_to_json(s, ids);
  const auto back = clusters_from_json(text, ids);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].id == s[i].id);
    CHECK(back[i].members == s[i].members);
    CHECK(back[i].supportingRuns == s[i].supportingRuns);
    CHECK(back[i].centroid.isApprox(s[i].centroid));
  }
  CHECK(clusters_to_json(back, ids) == text);
}
