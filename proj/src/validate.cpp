#include "relimine/validate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "relimine/parallel.hpp"
#include "relimine/rng.hpp"

namespace relimine {

namespace {

struct Moments {
  double n = 0, mean = 0, var = 0;  // unbiased variance
};

Moments moments(std::span<const double> x) {
  Moments m;
  m.n = static_cast<double>(x.size());
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / m.n;
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.var = ss / (m.n - 1.0);
  return m;
}

void require_sizes(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test: each sample needs at least 2 values");
}

double two_tailed(double t, double df) {
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(dist, -std::fabs(t)), 0.0, 1.0);
}

TTestResult degenerate(const Moments& a, const Moments& b, double df) {
  TTestResult r;
  r.degenerate = true;
  r.df = df;
  if (a.mean == b.mean) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = a.mean > b.mean ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  }
  return r;
}

double mean_of(std::span<const double> x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  require_sizes(a, b);
  const auto ma = moments(a), mb = moments(b);
  const double sa = ma.var / ma.n, sb = mb.var / mb.n;
  if (sa + sb == 0.0) return degenerate(ma, mb, ma.n + mb.n - 2.0);
  TTestResult r;
  r.t = (ma.mean - mb.mean) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (ma.n - 1.0) + sb * sb / (mb.n - 1.0));
  r.p = two_tailed(r.t, r.df);
  return r;
}

TTestResult student_t_test(std::span<const double> a, std::span<const double> b) {
  require_sizes(a, b);
  const auto ma = moments(a), mb = moments(b);
  const double df = ma.n + mb.n - 2.0;
  const double pooled = ((ma.n - 1.0) * ma.var + (mb.n - 1.0) * mb.var) / df;
  if (pooled == 0.0) return degenerate(ma, mb, df);
  TTestResult r;
  r.t = (ma.mean - mb.mean) / std::sqrt(pooled * (1.0 / ma.n + 1.0 / mb.n));
  r.df = df;
  r.p = two_tailed(r.t, r.df);
  return r;
}

TTestResult t_test(std::span<const double> a, std::span<const double> b, TTestKind kind) {
  return kind == TTestKind::welch ? welch_t_test(a, b) : student_t_test(a, b);
}

void SelectionConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("selection: alpha must lie in (0, 1)");
  if (!(delta > 0.0)) throw std::invalid_argument("selection: delta must be positive");
  if (kPredict < 1 || nRepresentatives < 1)
    throw std::invalid_argument("selection: kPredict and nRepresentatives must be positive");
}

SimilarityResult intrinsic_similarity(std::span<const double> trainScores,
                                      std::span<const double> testScores,
                                      const SelectionConfig& cfg) {
  if (trainScores.size() < 2) throw SelectionError("insufficient train support");
  if (testScores.size() < 2) throw SelectionError("insufficient test support");
  const auto r = t_test(trainScores, testScores, cfg.test);
  return SimilarityResult{r.p, r.p > cfg.alpha};
}

PredictiveResult predictive_capability(std::span<const double> trainScores,
                                       std::span<const double> testScores,
                                       const SelectionConfig& cfg) {
  if (trainScores.empty()) throw SelectionError("no train members");
  if (testScores.empty()) throw SelectionError("no test members");
  const double d = std::fabs(mean_of(trainScores) - mean_of(testScores));
  return PredictiveResult{d, d < cfg.delta};
}

Prediction predict_segment_score(const RowMatrix& train, const Labels& trainLabels,
                                 std::span<const double> trainScores,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& test, int cluster,
                                 int k) {
  if (trainScores.size() != trainLabels.size() || static_cast<std::size_t>(train.rows()) != trainLabels.size())
    throw std::invalid_argument("predict_segment_score: size mismatch");
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < trainLabels.size(); ++i)
    if (trainLabels[i] == cluster)
      cand.emplace_back((train.row(static_cast<Eigen::Index>(i)) - test).norm(), i);
  if (cand.empty()) throw SelectionError("cluster has no training members");
  const std::size_t take = std::min(cand.size(), static_cast<std::size_t>(k));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += trainScores[cand[i].second];
  return Prediction{sum / static_cast<double>(take), take, take < static_cast<std::size_t>(k)};
}

std::string_view to_string(Salience s) {
  switch (s) {
    case Salience::high: return "high";
    case Salience::low: return "low";
    case Salience::neutral: return "neutral";
  }
  return "neutral";
}

std::optional<Salience> parse_salience(std::string_view s) {
  if (s == "high") return Salience::high;
  if (s == "low") return Salience::low;
  if (s == "neutral") return Salience::neutral;
  return std::nullopt;
}

Salience salience(std::span<const double> clusterScores, std::span<const double> restScores,
                  double alpha, TTestKind kind) {
  if (clusterScores.size() < 2 || restScores.size() < 2) return Salience::neutral;
  const auto r = t_test(clusterScores, restScores, kind);
  if (r.p > alpha) return Salience::neutral;
  const double mc = mean_of(clusterScores), mr = mean_of(restScores);
  if (mc > mr) return Salience::high;
  if (mc < mr) return Salience::low;
  return Salience::neutral;
}

std::vector<std::size_t> representatives(std::span<const std::size_t> members,
                                         const RowMatrix& embeddings, int n) {
  if (members.empty()) return {};
  Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(embeddings.cols());
  for (std::size_t m : members) centroid += embeddings.row(static_cast<Eigen::Index>(m));
  centroid /= static_cast<double>(members.size());
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t m : members) d.emplace_back((embeddings.row(static_cast<Eigen::Index>(m)) - centroid).norm(), m);
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size() && i < static_cast<std::size_t>(std::max(n, 0)); ++i)
    out.push_back(d[i].second);
  return out;
}

std::set<std::pair<TaskId, std::string>> split_participants(
    std::span<const std::pair<TaskId, std::string>> participants, double testFraction,
    std::uint64_t seed) {
  if (!(testFraction > 0.0 && testFraction < 1.0))
    throw std::invalid_argument("split: test fraction must lie in (0, 1)");
  std::map<TaskId, std::set<std::string>> byTask;
  for (const auto& [task, id] : participants) byTask[task].insert(id);
  std::set<std::pair<TaskId, std::string>> test;
  for (const auto& [task, ids] : byTask) {
    std::vector<std::string> v(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, 0x5711 + static_cast<std::uint64_t>(task)));
    rng.shuffle(v);
    std::size_t count = static_cast<std::size_t>(std::llround(testFraction * static_cast<double>(v.size())));
    if (v.size() >= 2) count = std::clamp<std::size_t>(count, 1, v.size() - 1);
    else count = 0;
    for (std::size_t i = 0; i < count; ++i) test.emplace(task, v[i]);
  }
  return test;
}

SelectionResult select_clusters(const SelectionInput& in, const SelectionConfig& cfg, int jobs) {
  cfg.validate();
  if (!in.trainEmbeddings || !in.testEmbeddings || !in.clusters)
    throw std::invalid_argument("select_clusters: missing input");
  const RowMatrix& train = *in.trainEmbeddings;
  const RowMatrix& test = *in.testEmbeddings;
  const auto& clusters = *in.clusters;
  if (in.trainScores.size() != static_cast<std::size_t>(train.rows()) ||
      in.testScores.size() != static_cast<std::size_t>(test.rows()))
    throw std::invalid_argument("select_clusters: score count does not match embeddings");

  SelectionResult res;
  res.trainLabels = resolve_membership(clusters, static_cast<std::size_t>(train.rows()));
  const auto labeled = std::count_if(res.trainLabels.begin(), res.trainLabels.end(), [](int l) { return l >= 0; });
  constexpr int kAssignNeighbors = 5;
  if (labeled >= kAssignNeighbors)
    res.testLabels = assign_all(train, res.trainLabels, test, kAssignNeighbors, jobs);
  else
    res.testLabels.assign(static_cast<std::size_t>(test.rows()), kUnassigned);

  res.verdicts.resize(clusters.size());
  parallel_for(clusters.size(), static_cast<std::size_t>(std::max(jobs, 1)), [&](std::size_t ci) {
    const auto& c = clusters[ci];
    ClusterVerdict v;
    v.clusterId = c.id;
    std::vector<double> trainS, restS, testS;
    for (std::size_t i = 0; i < res.trainLabels.size(); ++i)
      (res.trainLabels[i] == c.id ? trainS : restS).push_back(in.trainScores[i]);
    std::vector<std::size_t> testRows;
    for (std::size_t i = 0; i < res.testLabels.size(); ++i)
      if (res.testLabels[i] == c.id) {
        testS.push_back(in.testScores[i]);
        testRows.push_back(i);
      }
    // Salience compares every member, assigned test rows included, with the
    // rest of the data set.
    std::vector<double> memberS = trainS, otherS = restS;
    memberS.insert(memberS.end(), testS.begin(), testS.end());
    for (std::size_t i = 0; i < res.testLabels.size(); ++i)
      if (res.testLabels[i] != c.id) otherS.push_back(in.testScores[i]);
    v.trainCount = trainS.size();
    v.testCount = testS.size();
    v.meanTrain = mean_of(trainS);
    v.meanTest = mean_of(testS);
    v.delta = std::fabs(v.meanTrain - v.meanTest);
    v.salience = salience(memberS, otherS, cfg.alpha, cfg.test);
    v.representatives = representatives(c.members, train, cfg.nRepresentatives);
    if (!testRows.empty() && !trainS.empty()) {
      double sum = 0.0;
      for (std::size_t r : testRows)
        sum += predict_segment_score(train, res.trainLabels, in.trainScores,
                                     test.row(static_cast<Eigen::Index>(r)), c.id, cfg.kPredict)
                   .score;
      v.meanPredicted = sum / static_cast<double>(testRows.size());
    }
    try {
      const auto sim = intrinsic_similarity(trainS, testS, cfg);
      const auto pred = predictive_capability(trainS, testS, cfg);
      v.tP = sim.p;
      v.delta = pred.delta;
      v.retained = sim.pass && pred.pass;
    } catch (const SelectionError& e) {
      v.reason = e.what();
      v.retained = false;
    }
    res.verdicts[ci] = std::move(v);
  });
  return res;
}

Funnel funnel(std::span<const ClusterVerdict> verdicts) {
  Funnel f;
  f.found = verdicts.size();
  for (const auto& v : verdicts) {
    if (!v.retained) continue;
    ++f.retained;
    if (v.salience != Salience::neutral) ++f.salient;
  }
  return f;
}

std::string verdicts_to_json(std::span<const ClusterVerdict> verdicts,
                             const std::vector<std::string>& trainSegmentIds) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& v : verdicts) {
    nlohmann::ordered_json j;
    j["cluster"] = v.clusterId;
    j["p"] = v.tP ? nlohmann::ordered_json(*v.tP) : nlohmann::ordered_json(nullptr);
    j["meanTrain"] = v.meanTrain;
    j["meanTest"] = v.meanTest;
    j["delta"] = v.delta;
    j["meanPredicted"] = v.meanPredicted;
    j["trainCount"] = v.trainCount;
    j["testCount"] = v.testCount;
    j["retained"] = v.retained;
    j["salience"] = std::string(to_string(v.salience));
    if (!v.reason.empty()) j["reason"] = v.reason;
    auto reps = nlohmann::ordered_json::array();
    for (std::size_t r : v.representatives) reps.push_back(trainSegmentIds.at(r));
    j["representatives"] = std::move(reps);
    doc.push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

std::vector<ClusterVerdict> verdicts_from_json(const std::string& text,
                                               const std::vector<std::string>& trainSegmentIds) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < trainSegmentIds.size(); ++i) index.emplace(trainSegmentIds[i], i);
  std::vector<ClusterVerdict> out;
  for (const auto& j : nlohmann::json::parse(text)) {
    ClusterVerdict v;
    v.clusterId = j.at("cluster").get<int>();
    if (!j.at("p").is_null()) v.tP = j.at("p").get<double>();
    v.meanTrain = j.at("meanTrain").get<double>();
    v.meanTest = j.at("meanTest").get<double>();
    v.delta = j.at("delta").get<double>();
    v.meanPredicted = j.value("meanPredicted", 0.0);
    v.trainCount = j.at("trainCount").get<std::size_t>();
    v.testCount = j.at("testCount").get<std::size_t>();
    v.retained = j.at("retained").get<bool>();
    const auto s = parse_salience(j.at("salience").get<std::string>());
    if (!s) throw std::runtime_error("verdict file: bad salience value");
    v.salience = *s;
    v.reason = j.value("reason", std::string{});
    for (const auto& r : j.at("representatives")) {
      auto it = index.find(r.get<std::string>());
      if (it == index.end()) throw std::runtime_error("verdict file names unknown segment");
      v.representatives.push_back(it->second);
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace relimine
