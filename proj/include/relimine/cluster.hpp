#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "relimine/embedder.hpp"

namespace relimine {

inline constexpr int kNoise = -1;

// One label per point (row). Clusters are numbered 0.. in discovery order.
using Labels = std::vector<int>;

// Brute-force DBSCAN. Points are scanned in row order, so with rows sorted by
// segment id the output is fully determined: a border point reachable from
// several clusters joins the one discovered first. Neighborhoods include the
// point itself.
Labels dbscan(const RowMatrix& points, double eps, int minSamples);

int cluster_count(const Labels& labels);

struct RunParams {
  double eps = 0.0;
  int minSamples = 0;
  bool operator==(const RunParams&) const = default;
};

struct ClusterRun {
  RunParams params;
  Labels labels;
};

struct ClusterGrid {
  std::vector<double> eps;
  std::vector<int> minSamples;

  // eps 0.2..1.0 step 0.1 times minSamples 3..10: 72 runs.
  static ClusterGrid standard();
  std::size_t size() const { return eps.size() * minSamples.size(); }
};

// Runs are ordered eps-major. Neighbor lists are computed once for the
// largest eps and shared by every run.
std::vector<ClusterRun> grid_cluster(const RowMatrix& points,
                                     const ClusterGrid& grid = ClusterGrid::standard(),
                                     int jobs = 1);

struct StableCluster {
  int id = 0;
  std::vector<std::size_t> members;  // row indices, ascending
  std::vector<RunParams> supportingRuns;
  Eigen::VectorXd centroid;
};

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

// Run-clusters are linked when their member sets reach the Jaccard threshold
// (clusters of the same run are never linked directly). Each connected
// component touching at least `minRuns` distinct runs becomes a stable
// cluster whose members are the intersection of all member sets in it.
// Components with an empty intersection are dropped. Ids follow the
// smallest member index.
std::vector<StableCluster> stable_clusters(const std::vector<ClusterRun>& runs,
                                           const RowMatrix& points,
                                           double jaccardThreshold = 0.7,
                                           std::size_t minRuns = 3);

// The run-clusters, as (run index, label) pairs, that belong to some stable
// component. Used to test the monotone behaviour in the threshold.
std::vector<std::pair<std::size_t, int>> stable_run_clusters(const std::vector<ClusterRun>& runs,
                                                              double jaccardThreshold,
                                                              std::size_t minRuns = 3);

// Exclusive label per point. A point in several stable clusters goes to the
// smallest one, then the one with more supporting runs, then the lower id.
Labels resolve_membership(const std::vector<StableCluster>& clusters, std::size_t pointCount);

inline constexpr int kUnassigned = -1;

// Majority label among the k nearest non-noise training points. Equal votes
// go to the label with the smaller mean neighbor distance, then the smaller
// label. Neighbors at equal distance are taken in row order. Throws when
// fewer than k labeled points exist.
int assign_test(const RowMatrix& train, const Labels& trainLabels,
                const Eigen::Ref<const Eigen::RowVectorXd>& test, int k = 5);

Labels assign_all(const RowMatrix& train, const Labels& trainLabels, const RowMatrix& test,
                  int k = 5, int jobs = 1);

// JSON document: one object per stable cluster with id, supporting runs,
// member segment ids and centroid.
std::string clusters_to_json(const std::vector<StableCluster>& clusters,
                             const std::vector<std::string>& segmentIds);
std::vector<StableCluster> clusters_from_json(const std::string& text,
                                              const std::vector<std::string>& segmentIds);

}  // namespace relimine
