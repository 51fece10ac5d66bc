#include "relimine/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relimine/hash.hpp"
#include "relimine/rng.hpp"

namespace relimine {

using nlohmann::json;

namespace {

std::string_view validation_name(ValidationMode m) {
  return m == ValidationMode::singleFold ? "singleFold" : "leaveOneParticipantOut";
}

ValidationMode parse_validation(const std::string& s) {
  if (s == "singleFold") return ValidationMode::singleFold;
  if (s == "leaveOneParticipantOut") return ValidationMode::leaveOneParticipantOut;
  throw ConfigError("config: unknown model.validation '" + s + "'");
}

std::string_view test_name(TTestKind k) { return k == TTestKind::welch ? "welch" : "student"; }

TTestKind parse_test(const std::string& s) {
  if (s == "welch") return TTestKind::welch;
  if (s == "student") return TTestKind::student;
  throw ConfigError("config: unknown selection.tTest '" + s + "'");
}

json tasks_json(const std::vector<TaskId>& tasks) {
  json a = json::array();
  for (TaskId t : tasks) a.push_back(std::string(to_string(t)));
  return a;
}

std::vector<TaskId> tasks_from(const json& a, const char* where) {
  std::vector<TaskId> out;
  for (const auto& v : a) {
    auto t = parse_task(v.get<std::string>());
    if (!t) throw ConfigError(std::string("config: unknown task in ") + where);
    out.push_back(*t);
  }
  return out;
}

// Copies j[key] into `dst` when present; unknown keys are rejected by the
// caller through `known`.
template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (auto it = j.find(key); it != j.end()) dst = it->template get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("config: unknown key '" + k + "' in " + where);
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (Archetype a : kAllArchetypes) c.synth.counts[a] = 20;
  return c;
}

void RunConfig::validate() const {
  if (tasks.empty()) throw ConfigError("config: no tasks selected");
  if (windows.empty()) throw ConfigError("config: no windows selected");
  for (int w : windows)
    if (w < kMinWindowSeconds || w > kMaxWindowSeconds)
      throw ConfigError("config: window " + std::to_string(w) + " outside [10, 60]");
  if (strideSeconds <= 0) throw ConfigError("config: strideSeconds must be positive");
  if (jobs <= 0) throw ConfigError("config: jobs must be positive");
  if (stability.grid.size() == 0) throw ConfigError("config: empty clustering grid");
  if (!(stability.jaccardThreshold > 0.0 && stability.jaccardThreshold <= 1.0))
    throw ConfigError("config: jaccardThreshold must lie in (0, 1]");
  if (stability.minRuns == 0) throw ConfigError("config: minRuns must be positive");
  if (!(split.testFraction > 0.0 && split.testFraction < 1.0))
    throw ConfigError("config: split.testFraction must lie in (0, 1)");
  if (paths.input.empty()) {
    if (synth.counts.empty()) throw ConfigError("config: no input directory and no synthetic corpus");
    if (!(synth.durationSeconds > 0.0)) throw ConfigError("config: synth.durationSeconds must be positive");
    if (!(synth.jitter >= 0.0 && synth.jitter < 1.0)) throw ConfigError("config: synth.jitter must lie in [0, 1)");
  }
  try {
    merge.validate();
    model.validate();
    selection.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string RunConfig::to_json(bool forHash) const {
  json j;
  j["paths"] = {{"input", paths.input}, {"scores", paths.scores}};
  if (!forHash) j["paths"]["out"] = paths.out;
  j["tasks"] = tasks_json(tasks);
  j["windows"] = windows;
  j["strideSeconds"] = strideSeconds;
  j["seed"] = seed;
  if (!forHash) j["jobs"] = jobs;
  j["merge"] = {{"mouseMergeGap", merge.mouseMergeGap},
                {"keypressMergeGap", merge.keypressMergeGap},
                {"scrollMergeGap", merge.scrollMergeGap},
                {"idleThreshold", merge.idleThreshold}};
  j["filter"] = {{"minEvents", filter.minEvents}, {"minDurationMs", filter.minDurationMs}};
  const auto& m = model;
  j["model"] = {{"inputDim", m.inputDim},
                {"latentDim", m.latentDim},
                {"encoderLayers", m.encoderLayers},
                {"attentionHeads", m.attentionHeads},
                {"feedForwardDim", m.feedForwardDim},
                {"maxSeqLen", m.maxSeqLen},
                {"learningRate", m.learningRate},
                {"batchSize", m.batchSize},
                {"earlyStopPatience", m.earlyStopPatience},
                {"maxEpochs", m.maxEpochs},
                {"minImprovement", m.minImprovement},
                {"validationFraction", m.validationFraction},
                {"validation", validation_name(m.validation)},
                {"lossWeights",
                 {{"type", m.lossWeights.type},
                  {"page", m.lossWeights.page},
                  {"continuous", m.lossWeights.continuous},
                  {"categorical", m.lossWeights.categorical}}}};
  j["stability"] = {{"eps", stability.grid.eps},
                    {"minSamples", stability.grid.minSamples},
                    {"jaccardThreshold", stability.jaccardThreshold},
                    {"minRuns", stability.minRuns}};
  j["selection"] = {{"alpha", selection.alpha},
                    {"delta", selection.delta},
                    {"kPredict", selection.kPredict},
                    {"nRepresentatives", selection.nRepresentatives},
                    {"tTest", test_name(selection.test)}};
  j["split"] = {{"testFraction", split.testFraction}};
  j["pooledStratification"] = pooledStratification;
  json counts = json::object();
  for (const auto& [a, n] : synth.counts) counts[std::string(to_string(a))] = n;
  j["synth"] = {{"counts", counts},
                {"durationSeconds", synth.durationSeconds},
                {"jitter", synth.jitter},
                {"tasks", tasks_json(synth.tasks)}};
  return forHash ? j.dump() : j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c = defaults();
  try {
    reject_unknown(j,
                   {"paths", "tasks", "windows", "strideSeconds", "seed", "jobs", "merge", "filter",
                    "model", "stability", "selection", "split", "pooledStratification", "synth"},
                   "top level");
    if (auto it = j.find("paths"); it != j.end()) {
      reject_unknown(*it, {"input", "scores", "out"}, "paths");
      take(*it, "input", c.paths.input);
      take(*it, "scores", c.paths.scores);
      take(*it, "out", c.paths.out);
    }
    if (auto it = j.find("tasks"); it != j.end()) c.tasks = tasks_from(*it, "tasks");
    take(j, "windows", c.windows);
    take(j, "strideSeconds", c.strideSeconds);
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    take(j, "pooledStratification", c.pooledStratification);
    if (auto it = j.find("merge"); it != j.end()) {
      reject_unknown(*it, {"mouseMergeGap", "keypressMergeGap", "scrollMergeGap", "idleThreshold"}, "merge");
      take(*it, "mouseMergeGap", c.merge.mouseMergeGap);
      take(*it, "keypressMergeGap", c.merge.keypressMergeGap);
      take(*it, "scrollMergeGap", c.merge.scrollMergeGap);
      take(*it, "idleThreshold", c.merge.idleThreshold);
    }
    if (auto it = j.find("filter"); it != j.end()) {
      reject_unknown(*it, {"minEvents", "minDurationMs"}, "filter");
      take(*it, "minEvents", c.filter.minEvents);
      take(*it, "minDurationMs", c.filter.minDurationMs);
    }
    if (auto it = j.find("model"); it != j.end()) {
      const json& m = *it;
      reject_unknown(m,
                     {"inputDim", "latentDim", "encoderLayers", "attentionHeads", "feedForwardDim",
                      "maxSeqLen", "learningRate", "batchSize", "earlyStopPatience", "maxEpochs",
                      "minImprovement", "validationFraction", "validation", "lossWeights"},
                     "model");
      take(m, "inputDim", c.model.inputDim);
      take(m, "latentDim", c.model.latentDim);
      take(m, "encoderLayers", c.model.encoderLayers);
      take(m, "attentionHeads", c.model.attentionHeads);
      take(m, "feedForwardDim", c.model.feedForwardDim);
      take(m, "maxSeqLen", c.model.maxSeqLen);
      take(m, "learningRate", c.model.learningRate);
      take(m, "batchSize", c.model.batchSize);
      take(m, "earlyStopPatience", c.model.earlyStopPatience);
      take(m, "maxEpochs", c.model.maxEpochs);
      take(m, "minImprovement", c.model.minImprovement);
      take(m, "validationFraction", c.model.validationFraction);
      if (auto v = m.find("validation"); v != m.end()) c.model.validation = parse_validation(v->get<std::string>());
      if (auto w = m.find("lossWeights"); w != m.end()) {
        reject_unknown(*w, {"type", "page", "continuous", "categorical"}, "model.lossWeights");
        take(*w, "type", c.model.lossWeights.type);
        take(*w, "page", c.model.lossWeights.page);
        take(*w, "continuous", c.model.lossWeights.continuous);
        take(*w, "categorical", c.model.lossWeights.categorical);
      }
    }
    if (auto it = j.find("stability"); it != j.end()) {
      reject_unknown(*it, {"eps", "minSamples", "jaccardThreshold", "minRuns"}, "stability");
      take(*it, "eps", c.stability.grid.eps);
      take(*it, "minSamples", c.stability.grid.minSamples);
      take(*it, "jaccardThreshold", c.stability.jaccardThreshold);
      take(*it, "minRuns", c.stability.minRuns);
    }
    if (auto it = j.find("selection"); it != j.end()) {
      reject_unknown(*it, {"alpha", "delta", "kPredict", "nRepresentatives", "tTest"}, "selection");
      take(*it, "alpha", c.selection.alpha);
      take(*it, "delta", c.selection.delta);
      take(*it, "kPredict", c.selection.kPredict);
      take(*it, "nRepresentatives", c.selection.nRepresentatives);
      if (auto v = it->find("tTest"); v != it->end()) c.selection.test = parse_test(v->get<std::string>());
    }
    if (auto it = j.find("split"); it != j.end()) {
      reject_unknown(*it, {"testFraction"}, "split");
      take(*it, "testFraction", c.split.testFraction);
    }
    if (auto it = j.find("synth"); it != j.end()) {
      reject_unknown(*it, {"counts", "durationSeconds", "jitter", "tasks"}, "synth");
      if (auto cs = it->find("counts"); cs != it->end()) {
        c.synth.counts.clear();
        for (const auto& [k, v] : cs->items()) {
          auto a = parse_archetype(k);
          if (!a) throw ConfigError("config: unknown archetype '" + k + "'");
          if (v.get<int>() > 0) c.synth.counts[*a] = v.get<int>();
        }
      }
      take(*it, "durationSeconds", c.synth.durationSeconds);
      take(*it, "jitter", c.synth.jitter);
      if (auto t = it->find("tasks"); t != it->end()) c.synth.tasks = tasks_from(*t, "synth.tasks");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string RunConfig::hash() const { return sha256_hex(to_json(true)); }

std::uint64_t RunConfig::synth_seed() const { return derive_seed(seed, 1); }
std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, 2); }
std::uint64_t RunConfig::model_seed(TaskId task, int window) const {
  return derive_seed(seed, 1000 + 100 * static_cast<std::uint64_t>(task) + static_cast<std::uint64_t>(window));
}

ModelConfig RunConfig::model_for(TaskId task, int window) const {
  ModelConfig m = model;
  m.seed = model_seed(task, window);
  m.jobs = jobs;
  return m;
}

CorpusSpec RunConfig::corpus_spec() const {
  CorpusSpec s;
  for (const auto& [a, n] : synth.counts) s.entries.push_back({a, n});
  s.durationSeconds = synth.durationSeconds;
  s.seed = synth_seed();
  s.tasks = synth.tasks;
  s.jitter = synth.jitter;
  return s;
}

}  // namespace relimine
