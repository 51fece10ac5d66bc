#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "relimine/cluster.hpp"
#include "relimine/embedder.hpp"
#include "relimine/preprocess.hpp"
#include "relimine/synth.hpp"
#include "relimine/validate.hpp"

namespace relimine {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PathsConfig {
  std::string input;   // directory of RMLOG files; empty means the synthetic corpus
  std::string scores;  // optional score-input JSONL
  std::string out = "runs";
};

struct FilterConfig {
  std::size_t minEvents = 10;
  std::int64_t minDurationMs = 10000;
};

struct StabilityConfig {
  ClusterGrid grid = ClusterGrid::standard();
  double jaccardThreshold = 0.7;
  std::size_t minRuns = 3;
};

struct SplitConfig {
  double testFraction = 0.2;
};

struct SynthConfig {
  std::map<Archetype, int> counts;  // participants per archetype
  double durationSeconds = 60.0;
  double jitter = 0.2;
  std::vector<TaskId> tasks{kAllTasks.begin(), kAllTasks.end()};
};

struct RunConfig {
  PathsConfig paths;
  std::vector<TaskId> tasks{kAllTasks.begin(), kAllTasks.end()};
  std::vector<int> windows{10, 20, 30, 40, 50, 60};
  int strideSeconds = 1;
  std::uint64_t seed = 0;  // every other seed derives from this one
  int jobs = 1;            // not part of the hash
  MergeConfig merge;
  FilterConfig filter;
  ModelConfig model;
  StabilityConfig stability;
  SelectionConfig selection;
  SplitConfig split;
  bool pooledStratification = false;
  SynthConfig synth;

  // The built-in defaults, with the synthetic corpus at 20 participants per
  // archetype.
  static RunConfig defaults();

  void validate() const;

  // Canonical JSON (sorted keys). `forHash` drops jobs and the output path.
  std::string to_json(bool forHash = false) const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);

  // Hex SHA-256 of the canonical hash form.
  std::string hash() const;

  // Derived seeds.
  std::uint64_t synth_seed() const;
  std::uint64_t split_seed() const;
  std::uint64_t model_seed(TaskId task, int window) const;

  // Model config for one (task, window) run, seed and jobs filled in.
  ModelConfig model_for(TaskId task, int window) const;
  CorpusSpec corpus_spec() const;
};

}  // namespace relimine
