#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relimine/cluster.hpp"
#include "relimine/events.hpp"

namespace relimine {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed
  bool degenerate = false;  // both samples constant
};

enum class TTestKind { welch, student };

// Unequal-variance test with Welch-Satterthwaite degrees of freedom. When
// both samples are constant the test is degenerate: p = 1 for equal means,
// otherwise p = 0. Throws for samples smaller than 2.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);
// Pooled-variance variant.
TTestResult student_t_test(std::span<const double> a, std::span<const double> b);
TTestResult t_test(std::span<const double> a, std::span<const double> b, TTestKind kind);

struct SelectionConfig {
  double alpha = 0.05;
  double delta = 0.15;
  int kPredict = 5;
  int nRepresentatives = 20;
  TTestKind test = TTestKind::welch;

  void validate() const;
};

// Raised when a cluster lacks the members a check needs.
class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimilarityResult {
  double p = 1.0;
  bool pass = false;
};

// pass <=> p > alpha (strict).
SimilarityResult intrinsic_similarity(std::span<const double> trainScores,
                                      std::span<const double> testScores,
                                      const SelectionConfig& cfg = {});

struct PredictiveResult {
  double delta = 0.0;
  bool pass = false;
};

// delta = |mean(train) - mean(test)|, pass <=> delta < cfg.delta (strict).
PredictiveResult predictive_capability(std::span<const double> trainScores,
                                       std::span<const double> testScores,
                                       const SelectionConfig& cfg = {});

struct Prediction {
  double score = 0.0;
  std::size_t neighbors = 0;
  bool clamped = false;  // fewer than k members were available
};

// Mean score of the k nearest training points carrying `cluster`. Distance
// ties go to the lower row. Uses every member when the cluster is smaller
// than k.
Prediction predict_segment_score(const RowMatrix& train, const Labels& trainLabels,
                                 std::span<const double> trainScores,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& test, int cluster,
                                 int k = 5);

enum class Salience { high, low, neutral };
std::string_view to_string(Salience s);
std::optional<Salience> parse_salience(std::string_view s);

// Cluster scores against the rest: high when significantly greater
// (p <= alpha), low when significantly smaller, otherwise neutral.
// Samples smaller than 2 give neutral.
Salience salience(std::span<const double> clusterScores, std::span<const double> restScores,
                  double alpha = 0.05, TTestKind kind = TTestKind::welch);

// Members ordered by distance to their mean, ties by row index; at most n.
std::vector<std::size_t> representatives(std::span<const std::size_t> members,
                                         const RowMatrix& embeddings, int n = 20);

// Participant-level split. Within each task the participants are shuffled
// with the seed and round(testFraction * n) of them (at least one when
// n >= 2) go to the test side. Returns (task, participant) pairs.
std::set<std::pair<TaskId, std::string>> split_participants(
    std::span<const std::pair<TaskId, std::string>> participants, double testFraction,
    std::uint64_t seed);

struct ClusterVerdict {
  int clusterId = 0;
  std::optional<double> tP;  // absent when the cluster was rejected early
  double meanTrain = 0.0;
  double meanTest = 0.0;
  double delta = 0.0;
  double meanPredicted = 0.0;
  std::size_t trainCount = 0;
  std::size_t testCount = 0;
  bool retained = false;
  Salience salience = Salience::neutral;
  std::string reason;  // empty when every check ran
  std::vector<std::size_t> representatives;  // training rows
};

struct SelectionInput {
  const RowMatrix* trainEmbeddings = nullptr;
  const RowMatrix* testEmbeddings = nullptr;
  std::span<const double> trainScores;
  std::span<const double> testScores;
  const std::vector<StableCluster>* clusters = nullptr;
};

struct SelectionResult {
  Labels trainLabels;  // exclusive stable-cluster label per training row
  Labels testLabels;   // kNN assignment per test row
  std::vector<ClusterVerdict> verdicts;
};

// Assigns test segments, then judges each stable cluster. Salience uses all
// members (training rows plus assigned test rows) against every other row.
SelectionResult select_clusters(const SelectionInput& in, const SelectionConfig& cfg, int jobs = 1);

struct Funnel {
  std::size_t found = 0;
  std::size_t retained = 0;
  std::size_t salient = 0;
};
Funnel funnel(std::span<const ClusterVerdict> verdicts);

std::string verdicts_to_json(std::span<const ClusterVerdict> verdicts,
                             const std::vector<std::string>& trainSegmentIds);
std::vector<ClusterVerdict> verdicts_from_json(const std::string& text,
                                               const std::vector<std::string>& trainSegmentIds);

}  // namespace relimine
