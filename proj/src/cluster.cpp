#include "relimine/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "relimine/parallel.hpp"

namespace relimine {

namespace {

struct Neighbor {
  std::size_t index;
  double dist;
};

// Neighbors of every point within maxEps, in ascending index order.
std::vector<std::vector<Neighbor>> neighbor_lists(const RowMatrix& pts, double maxEps, int jobs) {
  const auto n = static_cast<std::size_t>(pts.rows());
  std::vector<std::vector<Neighbor>> out(n);
  parallel_for(n, static_cast<std::size_t>(std::max(jobs, 1)), [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = (pts.row(static_cast<Eigen::Index>(i)) - pts.row(static_cast<Eigen::Index>(j))).norm();
      if (d <= maxEps) out[i].push_back({j, d});
    }
  });
  return out;
}

Labels dbscan_from_neighbors(const std::vector<std::vector<Neighbor>>& nb, double eps,
                             int minSamples) {
  const std::size_t n = nb.size();
  constexpr int kUnvisited = -2;
  auto within = [&](std::size_t i) {
    std::size_t c = 0;
    for (const auto& q : nb[i])
      if (q.dist <= eps) ++c;
    return c;
  };
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) core[i] = within(i) >= static_cast<std::size_t>(minSamples);

  Labels labels(n, kUnvisited);
  int next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != kUnvisited) continue;
    if (!core[i]) {
      labels[i] = kNoise;
      continue;
    }
    const int c = next++;
    labels[i] = c;
    queue.clear();
    for (const auto& q : nb[i])
      if (q.dist <= eps) queue.push_back(q.index);
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (labels[q] == kNoise) labels[q] = c;  // border point
      if (labels[q] != kUnvisited) continue;
      labels[q] = c;
      if (!core[q]) continue;
      for (const auto& r : nb[q])
        if (r.dist <= eps) queue.push_back(r.index);
    }
  }
  return labels;
}

std::vector<std::vector<std::size_t>> members_by_label(const Labels& labels) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(cluster_count(labels)));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct Node {
  std::size_t run;
  int label;
  std::vector<std::size_t> members;
};

struct Component {
  std::vector<std::size_t> nodes;
  std::set<std::size_t> runs;
};

// Connected components of the Jaccard graph that touch >= minRuns runs.
std::vector<Component> stable_components(const std::vector<ClusterRun>& runs, double threshold,
                                         std::size_t minRuns, std::vector<Node>& nodes) {
  if (runs.size() < 3) throw std::invalid_argument("stable_clusters: need at least 3 runs");
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw std::invalid_argument("stable_clusters: Jaccard threshold must lie in (0, 1]");
  std::size_t pointCount = 0;
  for (const auto& r : runs) pointCount = std::max(pointCount, r.labels.size());
  nodes.clear();
  std::vector<std::vector<std::size_t>> nodesOfPoint(pointCount);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    auto groups = members_by_label(runs[r].labels);
    for (std::size_t c = 0; c < groups.size(); ++c) {
      for (std::size_t p : groups[c]) nodesOfPoint[p].push_back(nodes.size());
      nodes.push_back(Node{r, static_cast<int>(c), std::move(groups[c])});
    }
  }

  UnionFind uf(nodes.size());
  std::vector<std::size_t> inter(nodes.size(), 0);
  std::vector<std::size_t> touched;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    touched.clear();
    for (std::size_t p : nodes[a].members) {
      for (std::size_t b : nodesOfPoint[p]) {
        if (b <= a || nodes[b].run == nodes[a].run) continue;
        if (inter[b]++ == 0) touched.push_back(b);
      }
    }
    for (std::size_t b : touched) {
      const double i = static_cast<double>(inter[b]);
      const double u = static_cast<double>(nodes[a].members.size() + nodes[b].members.size()) - i;
      if (i / u >= threshold) uf.unite(a, b);
      inter[b] = 0;
    }
  }

  std::map<std::size_t, Component> byRoot;
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    auto& comp = byRoot[uf.find(v)];
    comp.nodes.push_back(v);
    comp.runs.insert(nodes[v].run);
  }
  std::vector<Component> out;
  for (auto& [root, comp] : byRoot)
    if (comp.runs.size() >= minRuns) out.push_back(std::move(comp));
  return out;
}

}  // namespace

Labels dbscan(const RowMatrix& points, double eps, int minSamples) {
  if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be positive");
  if (minSamples < 1) throw std::invalid_argument("dbscan: minSamples must be at least 1");
  return dbscan_from_neighbors(neighbor_lists(points, eps, 1), eps, minSamples);
}

int cluster_count(const Labels& labels) {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m + 1;
}

ClusterGrid ClusterGrid::standard() {
  ClusterGrid g;
  for (int i = 2; i <= 10; ++i) g.eps.push_back(i / 10.0);
  for (int m = 3; m <= 10; ++m) g.minSamples.push_back(m);
  return g;
}

std::vector<ClusterRun> grid_cluster(const RowMatrix& points, const ClusterGrid& grid, int jobs) {
  if (points.rows() == 0) throw std::invalid_argument("grid_cluster: no points");
  if (grid.eps.empty() || grid.minSamples.empty()) throw std::invalid_argument("grid_cluster: empty grid");
  for (double e : grid.eps)
    if (!(e > 0.0)) throw std::invalid_argument("grid_cluster: eps must be positive");
  for (int m : grid.minSamples)
    if (m < 1) throw std::invalid_argument("grid_cluster: minSamples must be at least 1");
  const double maxEps = *std::max_element(grid.eps.begin(), grid.eps.end());
  const auto nb = neighbor_lists(points, maxEps, jobs);
  std::vector<ClusterRun> runs(grid.size());
  parallel_for(runs.size(), static_cast<std::size_t>(std::max(jobs, 1)), [&](std::size_t k) {
    const double eps = grid.eps[k / grid.minSamples.size()];
    const int minSamples = grid.minSamples[k % grid.minSamples.size()];
    runs[k] = ClusterRun{{eps, minSamples}, dbscan_from_neighbors(nb, eps, minSamples)};
  });
  return runs;
}

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> i;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(i));
  const std::size_t u = a.size() + b.size() - i.size();
  return u == 0 ? 1.0 : static_cast<double>(i.size()) / static_cast<double>(u);
}

std::vector<StableCluster> stable_clusters(const std::vector<ClusterRun>& runs,
                                           const RowMatrix& points, double jaccardThreshold,
                                           std::size_t minRuns) {
  std::vector<Node> nodes;
  const auto comps = stable_components(runs, jaccardThreshold, minRuns, nodes);
  std::vector<StableCluster> out;
  for (const auto& comp : comps) {
    std::vector<std::size_t> members = nodes[comp.nodes.front()].members;
    for (std::size_t k = 1; k < comp.nodes.size() && !members.empty(); ++k) {
      std::vector<std::size_t> next;
      const auto& m = nodes[comp.nodes[k]].members;
      std::set_intersection(members.begin(), members.end(), m.begin(), m.end(), std::back_inserter(next));
      members = std::move(next);
    }
    if (members.empty()) continue;
    StableCluster sc;
    sc.members = std::move(members);
    for (std::size_t r : comp.runs) sc.supportingRuns.push_back(runs[r].params);
    sc.centroid = Eigen::VectorXd::Zero(points.cols());
    for (std::size_t m : sc.members) sc.centroid += points.row(static_cast<Eigen::Index>(m)).transpose();
    sc.centroid /= static_cast<double>(sc.members.size());
    out.push_back(std::move(sc));
  }
  std::stable_sort(out.begin(), out.end(), [](const StableCluster& a, const StableCluster& b) {
    if (a.members.front() != b.members.front()) return a.members.front() < b.members.front();
    return a.supportingRuns.size() > b.supportingRuns.size();
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
  return out;
}

std::vector<std::pair<std::size_t, int>> stable_run_clusters(const std::vector<ClusterRun>& runs,
                                                              double jaccardThreshold,
                                                              std::size_t minRuns) {
  std::vector<Node> nodes;
  const auto comps = stable_components(runs, jaccardThreshold, minRuns, nodes);
  std::vector<std::pair<std::size_t, int>> out;
  for (const auto& c : comps)
    for (std::size_t v : c.nodes) out.emplace_back(nodes[v].run, nodes[v].label);
  std::sort(out.begin(), out.end());
  return out;
}

Labels resolve_membership(const std::vector<StableCluster>& clusters, std::size_t pointCount) {
  Labels labels(pointCount, kNoise);
  auto better = [&](const StableCluster& a, const StableCluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
    if (a.supportingRuns.size() != b.supportingRuns.size())
      return a.supportingRuns.size() > b.supportingRuns.size();
    return a.id < b.id;
  };
  std::vector<const StableCluster*> owner(pointCount, nullptr);
  for (const auto& c : clusters) {
    for (std::size_t m : c.members) {
      if (m >= pointCount) throw std::out_of_range("resolve_membership: member index out of range");
      if (!owner[m] || better(c, *owner[m])) owner[m] = &c;
    }
  }
  for (std::size_t i = 0; i < pointCount; ++i)
    if (owner[i]) labels[i] = owner[i]->id;
  return labels;
}

int assign_test(const RowMatrix& train, const Labels& trainLabels,
                const Eigen::Ref<const Eigen::RowVectorXd>& test, int k) {
  if (k < 1) throw std::invalid_argument("assign_test: k must be positive");
  if (static_cast<std::size_t>(train.rows()) != trainLabels.size())
    throw std::invalid_argument("assign_test: label count does not match training rows");
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < trainLabels.size(); ++i) {
    if (trainLabels[i] < 0) continue;
    cand.emplace_back((train.row(static_cast<Eigen::Index>(i)) - test).norm(), i);
  }
  if (cand.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("assign_test: fewer than k labeled training points");
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());

  std::map<int, std::pair<int, double>> votes;  // label -> (count, distance sum)
  for (int i = 0; i < k; ++i) {
    auto& v = votes[trainLabels[cand[static_cast<std::size_t>(i)].second]];
    v.first += 1;
    v.second += cand[static_cast<std::size_t>(i)].first;
  }
  int best = kUnassigned;
  int bestCount = 0;
  double bestMean = std::numeric_limits<double>::infinity();
  for (const auto& [label, v] : votes) {  // ascending label keeps the last tie-break
    const double mean = v.second / v.first;
    if (v.first > bestCount || (v.first == bestCount && mean < bestMean)) {
      best = label;
      bestCount = v.first;
      bestMean = mean;
    }
  }
  return best;
}

Labels assign_all(const RowMatrix& train, const Labels& trainLabels, const RowMatrix& test, int k,
                  int jobs) {
  Labels out(static_cast<std::size_t>(test.rows()), kUnassigned);
  parallel_for(out.size(), static_cast<std::size_t>(std::max(jobs, 1)), [&](std::size_t i) {
    out[i] = assign_test(train, trainLabels, test.row(static_cast<Eigen::Index>(i)), k);
  });
  return out;
}

std::string clusters_to_json(const std::vector<StableCluster>& clusters,
                             const std::vector<std::string>& segmentIds) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& c : clusters) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    auto runs = nlohmann::ordered_json::array();
    for (const auto& r : c.supportingRuns) runs.push_back({{"eps", r.eps}, {"minSamples", r.minSamples}});
    j["supportingRuns"] = std::move(runs);
    auto members = nlohmann::ordered_json::array();
    for (std::size_t m : c.members) members.push_back(segmentIds.at(m));
    j["members"] = std::move(members);
    j["centroid"] = std::vector<double>(c.centroid.data(), c.centroid.data() + c.centroid.size());
    doc.push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

std::vector<StableCluster> clusters_from_json(const std::string& text,
                                              const std::vector<std::string>& segmentIds) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < segmentIds.size(); ++i) index.emplace(segmentIds[i], i);
  const auto doc = nlohmann::json::parse(text);
  std::vector<StableCluster> out;
  for (const auto& j : doc) {
    StableCluster c;
    c.id = j.at("id").get<int>();
    for (const auto& r : j.at("supportingRuns"))
      c.supportingRuns.push_back({r.at("eps").get<double>(), r.at("minSamples").get<int>()});
    for (const auto& m : j.at("members")) {
      auto it = index.find(m.get<std::string>());
      if (it == index.end()) throw std::runtime_error("cluster file names unknown segment " + m.get<std::string>());
      c.members.push_back(it->second);
    }
    std::sort(c.members.begin(), c.members.end());
    const auto cen = j.at("centroid").get<std::vector<double>>();
    c.centroid = Eigen::Map<const Eigen::VectorXd>(cen.data(), static_cast<Eigen::Index>(cen.size()));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace relimine
