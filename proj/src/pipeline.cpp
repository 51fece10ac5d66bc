#include "relimine/pipeline.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relimine/artifacts.hpp"
#include "relimine/hash.hpp"
#include "relimine/parallel.hpp"
#include "relimine/report.hpp"
#include "relimine/scoring.hpp"

namespace relimine {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(StageName s) {
  switch (s) {
    case StageName::synth: return "synth";
    case StageName::ingest: return "ingest";
    case StageName::preprocess: return "preprocess";
    case StageName::score: return "score";
    case StageName::encode: return "encode";
    case StageName::train: return "train";
    case StageName::embed: return "embed";
    case StageName::cluster: return "cluster";
    case StageName::validate: return "validate";
    case StageName::report: return "report";
  }
  return "?";
}

std::optional<StageName> parse_stage(std::string_view s) {
  for (StageName st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::string model_key(TaskId task, int window) {
  return std::string(to_string(task)) + "_w" + std::to_string(window);
}

namespace {

constexpr const char* kStageRecord = "stage.json";

void say(const RunContext& ctx, const std::string& line) {
  if (ctx.log) *ctx.log << line << '\n' << std::flush;
}

std::string safe_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

std::string session_file_name(const Session& s) {
  return safe_name(s.participantId) + "__" + std::string(to_string(s.task)) + ".rmlog";
}

std::string rel(const RunContext& ctx, const fs::path& p) {
  return fs::relative(p, ctx.root).generic_string();
}

// Files of a directory in name order.
std::vector<fs::path> sorted_files(const fs::path& dir, std::initializer_list<std::string_view> exts) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Everything the stage wrote, recursively, keyed by run-relative path.
json hash_tree(const RunContext& ctx, const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != kStageRecord) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[rel(ctx, f)] = sha256_file(f.string());
  return out;
}

fs::path stage_dir(const RunContext& ctx, StageName s) { return ctx.root / std::string(to_string(s)); }

json read_stage_record(const RunContext& ctx, StageName s) {
  const fs::path p = stage_dir(ctx, s) / kStageRecord;
  if (!fs::exists(p))
    throw StageError(s, "missing artifacts from stage '" + std::string(to_string(s)) + "'; run it first");
  json j = json::parse(read_text_file(p.string()));
  if (j.value("configHash", "") != ctx.hash)
    throw StageError(s, "stale artifacts in stage '" + std::string(to_string(s)) +
                            "': recorded config hash differs from " + ctx.hash);
  return j;
}

void require(const RunContext& ctx, StageName s) { (void)read_stage_record(ctx, s); }

void finish_stage(const RunContext& ctx, StageName s, json info) {
  json rec;
  rec["stage"] = to_string(s);
  rec["configHash"] = ctx.hash;
  rec["artifacts"] = hash_tree(ctx, stage_dir(ctx, s));
  rec["info"] = std::move(info);
  write_text_file((stage_dir(ctx, s) / kStageRecord).string(), rec.dump(2) + "\n");
}

std::vector<Session> read_sessions(const fs::path& dir) {
  std::vector<Session> out;
  for (const auto& f : sorted_files(dir, {".rmlog"})) out.push_back(read_session_file(f.string()));
  return out;
}

void write_sessions(const std::vector<Session>& sessions, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : sessions) write_session_file(s, (dir / session_file_name(s)).string());
}

// ---------------------------------------------------------------------------

json stage_synth(const RunContext& ctx, const fs::path& dir) {
  const Corpus corpus = gen_corpus(ctx.config.corpus_spec());
  const fs::path logs = dir / "logs";
  fs::create_directories(logs);
  // One file per page, as the capture extension writes them.
  for (const auto& s : corpus.sessions) {
    for (Page page : {Page::task, Page::llm}) {
      Session part = s;
      part.events.clear();
      for (const auto& e : s.events)
        if (e.page == page) part.events.push_back(e);
      if (part.events.empty()) continue;
      const std::string name = safe_name(s.participantId) + "__" + std::string(to_string(s.task)) + "__" +
                               std::string(to_string(page)) + ".rmlog";
      write_session_file(part, (logs / name).string());
    }
  }
  write_text_file((dir / "truth.jsonl").string(), truth_to_jsonl(corpus.truth));
  say(ctx, "synth: " + std::to_string(corpus.sessions.size()) + " sessions");
  return json{{"sessions", corpus.sessions.size()}, {"seed", ctx.config.synth_seed()}};
}

json stage_ingest(const RunContext& ctx, const fs::path& dir) {
  fs::path inputDir;
  if (ctx.config.paths.input.empty()) {
    require(ctx, StageName::synth);
    inputDir = stage_dir(ctx, StageName::synth) / "logs";
  } else {
    inputDir = ctx.config.paths.input;
    if (!fs::is_directory(inputDir)) throw ConfigError("input directory not found: " + inputDir.string());
  }
  struct Part {
    Page page;
    Session session;
  };
  std::map<std::pair<std::string, TaskId>, std::vector<Part>> groups;
  json diagnostics = json::array();
  json violations = json::array();
  for (const auto& f : sorted_files(inputDir, {".rmlog", ".jsonl", ".ndjson"})) {
    const std::string text = read_text_file(f.string());
    LogParseResult parsed;
    try {
      parsed = parse_log_string(text);
    } catch (const ParseError& e) {
      diagnostics.push_back({{"file", f.filename().string()}, {"line", e.line()}, {"message", e.what()}});
      continue;
    }
    for (const auto& d : parsed.diagnostics)
      diagnostics.push_back({{"file", f.filename().string()},
                             {"line", d.line},
                             {"kind", d.kind == DiagnosticKind::malformed ? "malformed" : "unknownActionType"},
                             {"message", d.message}});
    if (!parsed.header) continue;
    Session s = to_session(parsed);
    groups[{s.participantId, s.task}].push_back({parsed.header->page, std::move(s)});
  }
  std::vector<Session> fused;
  json dropped = json::array();
  for (auto& [key, parts] : groups) {
    if (parts.size() == 1) {
      fused.push_back(std::move(parts.front().session));
    } else if (parts.size() == 2 && parts[0].page != parts[1].page) {
      const auto& taskPart = parts[0].page == Page::task ? parts[0] : parts[1];
      const auto& llmPart = parts[0].page == Page::task ? parts[1] : parts[0];
      fused.push_back(fuse_pages(taskPart.session, llmPart.session));
    } else {
      dropped.push_back({{"participant", key.first},
                         {"task", to_string(key.second)},
                         {"reason", "expected one Task and one LLM page log, found " +
                                        std::to_string(parts.size()) + " files"}});
      continue;
    }
    for (const auto& v : validate_session(fused.back()))
      violations.push_back({{"participant", key.first},
                            {"task", to_string(key.second)},
                            {"event", v.eventId ? json(*v.eventId) : json(nullptr)},
                            {"rule", v.rule},
                            {"message", v.message}});
  }
  write_sessions(fused, dir / "sessions");
  write_text_file((dir / "report.json").string(),
                  json{{"diagnostics", diagnostics}, {"dropped", dropped}, {"violations", violations}}.dump(2) +
                      "\n");
  say(ctx, "ingest: " + std::to_string(fused.size()) + " sessions, " + std::to_string(diagnostics.size()) +
               " diagnostics");
  return json{{"sessions", fused.size()}, {"diagnostics", diagnostics.size()}, {"dropped", dropped.size()}};
}

json stage_preprocess(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::ingest);
  const auto raw = read_sessions(stage_dir(ctx, StageName::ingest) / "sessions");
  std::vector<Session> done(raw.size());
  parallel_for(raw.size(), ctx.config.jobs,
               [&](std::size_t i) { done[i] = preprocess_session(raw[i], ctx.config.merge); });
  auto filtered = filter_incomplete(std::move(done), ctx.config.filter.minEvents, ctx.config.filter.minDurationMs);
  write_sessions(filtered.kept, dir / "sessions");
  json dropped = json::array();
  for (const auto& d : filtered.dropped)
    dropped.push_back({{"participant", d.participantId}, {"task", to_string(d.task)}, {"reason", d.reason}});
  write_text_file((dir / "dropped.json").string(), dropped.dump(2) + "\n");
  say(ctx, "preprocess: kept " + std::to_string(filtered.kept.size()) + ", dropped " +
               std::to_string(filtered.dropped.size()));
  return json{{"kept", filtered.kept.size()}, {"dropped", filtered.dropped.size()}};
}

Ranking ranking_from(const json& j) {
  Ranking r;
  r.itemIds = j.at("items").get<std::vector<std::string>>();
  r.groundTruth = j.at("ground_truth").get<std::map<std::string, int>>();
  if (auto it = j.find("excluded"); it != j.end()) {
    for (const auto& x : *it) r.excluded.insert(x.get<std::string>());
  }
  return r;
}

json stage_score(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::preprocess);
  const auto sessions = read_sessions(stage_dir(ctx, StageName::preprocess) / "sessions");

  // Measured inputs, keyed by (participant, task).
  std::map<std::pair<std::string, TaskId>, json> inputs;
  if (!ctx.config.paths.scores.empty()) {
    std::istringstream in(read_text_file(ctx.config.paths.scores));
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
      ++lineNo;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        json j = json::parse(line);
        auto task = parse_task(j.at("task").get<std::string>());
        if (!task) throw std::invalid_argument("unknown task");
        inputs[{j.at("participant").get<std::string>(), *task}] = j;
      } catch (const std::exception& e) {
        throw ConfigError("scores file line " + std::to_string(lineNo) + ": " + e.what());
      }
    }
  }

  // Quiz deltas over the whole quiz cohort first.
  auto quiz_pair = [](const json& j) {
    if (j.contains("s_with")) return std::pair{j.at("s_with").get<double>(), j.at("s_without").get<double>()};
    return std::pair{nasa_score(ranking_from(j.at("with_ranking"))),
                     nasa_score(ranking_from(j.at("without_ranking")))};
  };
  std::vector<double> cohortDeltas;
  for (const auto& [key, j] : inputs)
    if (key.second == TaskId::quiz) {
      const auto [w, wo] = quiz_pair(j);
      cohortDeltas.push_back(w - wo);
    }

  std::vector<ScoredParticipant> scored;
  std::vector<json> raws;
  std::vector<std::string> bases;
  json unscored = json::array();
  for (const auto& s : sessions) {
    const auto it = inputs.find({s.participantId, s.task});
    if (it != inputs.end()) {
      const json& j = it->second;
      OverrelianceScore sc;
      json raw;
      if (s.task == TaskId::quiz) {
        const auto [w, wo] = quiz_pair(j);
        sc = quiz_overreliance(w, wo, cohortDeltas);
        raw = {{"s_with", w}, {"s_without", wo}};
      } else {
        const int retained = j.at("retained").get<int>();
        const int total = j.at("total").get<int>();
        sc = misinfo_overreliance(retained, total, s.task);
        raw = {{"retained", retained}, {"total", total}};
      }
      scored.push_back({s.participantId, s.task, sc.value});
      raws.push_back(raw);
      bases.push_back(sc.basis == ScoreBasis::quizDelta ? "quizDelta" : "misinfoRatio");
    } else if (s.overreliance) {
      scored.push_back({s.participantId, s.task, *s.overreliance});
      raws.push_back({{"header", *s.overreliance}});
      bases.push_back("header");
    } else {
      unscored.push_back({{"participant", s.participantId}, {"task", to_string(s.task)}});
    }
  }

  // Levels need at least four scores per stratum.
  std::vector<std::optional<StratifiedLevel>> levels(scored.size());
  if (ctx.config.pooledStratification) {
    if (scored.size() >= 4) {
      auto l = stratify_cohort(scored, true);
      for (std::size_t i = 0; i < l.size(); ++i) levels[i] = l[i];
    }
  } else {
    for (TaskId task : kAllTasks) {
      std::vector<std::size_t> idx;
      std::vector<double> v;
      for (std::size_t i = 0; i < scored.size(); ++i)
        if (scored[i].task == task) {
          idx.push_back(i);
          v.push_back(scored[i].value);
        }
      if (v.size() < 4) continue;
      const auto l = stratify(v);
      for (std::size_t k = 0; k < idx.size(); ++k) levels[idx[k]] = l[k];
    }
  }

  std::string out;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    json j{{"participant", scored[i].participantId},
           {"task", to_string(scored[i].task)},
           {"raw", raws[i]},
           {"basis", bases[i]},
           {"value", scored[i].value}};
    j["level"] = levels[i] ? json(to_string(*levels[i])) : json(nullptr);
    out += j.dump() + "\n";
  }
  write_text_file((dir / "scores.jsonl").string(), out);
  write_text_file((dir / "unscored.json").string(), unscored.dump(2) + "\n");
  say(ctx, "score: " + std::to_string(scored.size()) + " scored, " + std::to_string(unscored.size()) + " unscored");
  return json{{"scored", scored.size()}, {"unscored", unscored.size()}};
}

std::map<std::pair<std::string, TaskId>, double> read_scores(const RunContext& ctx) {
  std::map<std::pair<std::string, TaskId>, double> out;
  std::istringstream in(read_text_file((stage_dir(ctx, StageName::score) / "scores.jsonl").string()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out[{j.at("participant").get<std::string>(), *parse_task(j.at("task").get<std::string>())}] =
        j.at("value").get<double>();
  }
  return out;
}

struct ModelSlot {
  TaskId task;
  int window;
  std::string key;
};

std::vector<ModelSlot> model_slots(const RunConfig& cfg) {
  std::vector<ModelSlot> out;
  for (TaskId t : cfg.tasks)
    for (int w : cfg.windows) out.push_back({t, w, model_key(t, w)});
  return out;
}

fs::path segment_bin(const RunContext& ctx, const std::string& key) {
  return stage_dir(ctx, StageName::encode) / (key + ".seg");
}
fs::path segment_index(const RunContext& ctx, const std::string& key) {
  return stage_dir(ctx, StageName::encode) / (key + ".index.jsonl");
}

std::vector<Segment> load_segments(const RunContext& ctx, const std::string& key) {
  const auto bin = segment_bin(ctx, key);
  if (!fs::exists(bin))
    throw StageError(StageName::encode, "missing artifacts from stage 'encode' for model " + key);
  return read_segments(bin.string(), segment_index(ctx, key).string());
}

json stage_encode(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::score);
  const auto sessions = read_sessions(stage_dir(ctx, StageName::preprocess) / "sessions");
  const auto scores = read_scores(ctx);
  json info = json::object();
  for (const auto& slot : model_slots(ctx.config)) {
    std::vector<Segment> all;
    for (const auto& s : sessions) {
      if (s.task != slot.task) continue;
      const auto sc = scores.find({s.participantId, s.task});
      if (sc == scores.end()) continue;
      for (auto& seg : segment(s, slot.window, ctx.config.strideSeconds)) {
        if (seg.vectors.size() > static_cast<std::size_t>(ctx.config.model.maxSeqLen))
          throw ConfigError("segment " + segment_id(seg) + " has " + std::to_string(seg.vectors.size()) +
                            " events, more than model.maxSeqLen");
        seg.overreliance = sc->second;
        all.push_back(std::move(seg));
      }
    }
    write_segments(all, (dir / (slot.key + ".seg")).string(), (dir / (slot.key + ".index.jsonl")).string());
    info[slot.key] = all.size();
    say(ctx, "encode: " + slot.key + " " + std::to_string(all.size()) + " segments");
  }
  return info;
}

std::vector<TrainingSequence> training_set(const std::vector<Segment>& segs) {
  std::vector<TrainingSequence> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back({s.participantId, s.vectors});
  return out;
}

json stage_train(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::encode);
  json models = json::array();
  for (const auto& slot : model_slots(ctx.config)) {
    const auto segs = load_segments(ctx, slot.key);
    if (segs.empty()) throw ConfigError("model " + slot.key + ": no segments to train on");
    const ModelConfig mc = ctx.config.model_for(slot.task, slot.window);
    say(ctx, "train: " + slot.key + " on " + std::to_string(segs.size()) + " segments");
    const auto data = training_set(segs);
    const TrainResult r = train(data, mc, [&](const EpochRecord& e) {
      if (e.epoch % 25 == 0)
        say(ctx, "  epoch " + std::to_string(e.epoch) + " train " + std::to_string(e.train.total) + " val " +
                     std::to_string(e.validation.total));
    });
    const fs::path weights = dir / (slot.key + ".weights");
    r.weights.save(weights.string());
    write_text_file((dir / (slot.key + ".history.tsv")).string(), format_history(r.history));
    models.push_back({{"key", slot.key},
                      {"task", to_string(slot.task)},
                      {"window", slot.window},
                      {"seed", mc.seed},
                      {"segments", segs.size()},
                      {"parameters", r.weights.parameter_count()},
                      {"epochs", r.history.size()},
                      {"bestEpoch", r.bestEpoch},
                      {"earlyStopped", r.earlyStopped},
                      {"weights", rel(ctx, weights)}});
  }
  return json{{"models", models}};
}

fs::path embedding_path(const RunContext& ctx, const std::string& key) {
  return stage_dir(ctx, StageName::embed) / (key + ".emb");
}

json stage_embed(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::train);
  json info = json::object();
  for (const auto& slot : model_slots(ctx.config)) {
    const auto segs = load_segments(ctx, slot.key);
    const fs::path wpath = stage_dir(ctx, StageName::train) / (slot.key + ".weights");
    if (!fs::exists(wpath)) throw StageError(StageName::train, "missing weights for model " + slot.key);
    const auto weights = ModelWeights::load(wpath.string(), ctx.config.model_for(slot.task, slot.window));
    std::vector<std::vector<FeatureVector>> seqs;
    seqs.reserve(segs.size());
    for (const auto& s : segs) seqs.push_back(s.vectors);
    const RowMatrix emb = embed_all(weights, seqs, ctx.config.jobs);
    write_embeddings(emb, (dir / (slot.key + ".emb")).string());
    info[slot.key] = {{"rows", emb.rows()}, {"cols", emb.cols()}};
    say(ctx, "embed: " + slot.key);
  }
  return info;
}

using SplitSet = std::set<std::pair<TaskId, std::string>>;

SplitSet read_split(const RunContext& ctx) {
  const json j = json::parse(read_text_file((stage_dir(ctx, StageName::cluster) / "split.json").string()));
  SplitSet out;
  for (const auto& e : j.at("test"))
    out.emplace(*parse_task(e.at("task").get<std::string>()), e.at("participant").get<std::string>());
  return out;
}

struct Sides {
  std::vector<std::size_t> train;  // segment rows
  std::vector<std::size_t> test;
};

Sides sides_of(const std::vector<Segment>& segs, const SplitSet& test) {
  Sides s;
  for (std::size_t i = 0; i < segs.size(); ++i)
    (test.contains({segs[i].task, segs[i].participantId}) ? s.test : s.train).push_back(i);
  return s;
}

RowMatrix rows_of(const RowMatrix& m, const std::vector<std::size_t>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<std::string> ids_of(const std::vector<Segment>& segs, const std::vector<std::size_t>& rows) {
  std::vector<std::string> out;
  for (auto r : rows) out.push_back(segment_id(segs[r]));
  return out;
}

RowMatrix load_embeddings(const RunContext& ctx, const std::string& key, std::size_t expectedRows) {
  const auto p = embedding_path(ctx, key);
  if (!fs::exists(p)) throw StageError(StageName::embed, "missing artifacts from stage 'embed' for model " + key);
  RowMatrix m = read_embeddings(p.string());
  if (static_cast<std::size_t>(m.rows()) != expectedRows)
    throw StageError(StageName::embed, "embeddings for " + key + " do not match the segment file");
  return m;
}

json stage_cluster(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::embed);
  const auto slots = model_slots(ctx.config);
  std::map<std::string, std::vector<Segment>> segsByKey;
  std::set<std::pair<TaskId, std::string>> people;
  for (const auto& slot : slots) {
    segsByKey[slot.key] = load_segments(ctx, slot.key);
    for (const auto& s : segsByKey[slot.key]) people.emplace(s.task, s.participantId);
  }
  const std::vector<std::pair<TaskId, std::string>> pv(people.begin(), people.end());
  const SplitSet test = split_participants(pv, ctx.config.split.testFraction, ctx.config.split_seed());
  json split = json::array();
  for (const auto& [task, pid] : test) split.push_back({{"task", to_string(task)}, {"participant", pid}});
  write_text_file((dir / "split.json").string(),
                  json{{"seed", ctx.config.split_seed()}, {"test", split}}.dump(2) + "\n");

  json info = json::object();
  for (const auto& slot : slots) {
    const auto& segs = segsByKey[slot.key];
    const RowMatrix emb = load_embeddings(ctx, slot.key, segs.size());
    const Sides sides = sides_of(segs, test);
    if (sides.train.empty()) throw ConfigError("model " + slot.key + ": no training segments after the split");
    const RowMatrix train = rows_of(emb, sides.train);
    const auto runs = grid_cluster(train, ctx.config.stability.grid, ctx.config.jobs);
    const auto stable =
        stable_clusters(runs, train, ctx.config.stability.jaccardThreshold, ctx.config.stability.minRuns);
    write_text_file((dir / (slot.key + ".clusters.json")).string(),
                    clusters_to_json(stable, ids_of(segs, sides.train)));
    json runInfo = json::array();
    for (const auto& r : runs) {
      const auto noise = std::count(r.labels.begin(), r.labels.end(), kNoise);
      runInfo.push_back({{"eps", r.params.eps},
                         {"minSamples", r.params.minSamples},
                         {"clusters", cluster_count(r.labels)},
                         {"noise", noise}});
    }
    write_text_file((dir / (slot.key + ".runs.json")).string(), runInfo.dump(2) + "\n");
    info[slot.key] = {{"train", sides.train.size()}, {"test", sides.test.size()}, {"stable", stable.size()}};
    say(ctx, "cluster: " + slot.key + " " + std::to_string(stable.size()) + " stable clusters");
  }
  return info;
}

json stage_validate(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::cluster);
  const SplitSet test = read_split(ctx);
  json info = json::object();
  for (const auto& slot : model_slots(ctx.config)) {
    const auto segs = load_segments(ctx, slot.key);
    const RowMatrix emb = load_embeddings(ctx, slot.key, segs.size());
    const Sides sides = sides_of(segs, test);
    const auto trainIds = ids_of(segs, sides.train);
    const fs::path cpath = stage_dir(ctx, StageName::cluster) / (slot.key + ".clusters.json");
    if (!fs::exists(cpath)) throw StageError(StageName::cluster, "missing clusters for model " + slot.key);
    const auto clusters = clusters_from_json(read_text_file(cpath.string()), trainIds);

    const RowMatrix trainEmb = rows_of(emb, sides.train);
    const RowMatrix testEmb = rows_of(emb, sides.test);
    std::vector<double> trainScores, testScores;
    for (auto r : sides.train) trainScores.push_back(*segs[r].overreliance);
    for (auto r : sides.test) testScores.push_back(*segs[r].overreliance);

    SelectionInput in;
    in.trainEmbeddings = &trainEmb;
    in.testEmbeddings = &testEmb;
    in.trainScores = trainScores;
    in.testScores = testScores;
    in.clusters = &clusters;
    const SelectionResult res = select_clusters(in, ctx.config.selection, ctx.config.jobs);

    write_text_file((dir / (slot.key + ".verdicts.json")).string(), verdicts_to_json(res.verdicts, trainIds));
    std::string assign;
    for (std::size_t i = 0; i < sides.train.size(); ++i)
      assign += json{{"id", trainIds[i]}, {"side", "train"}, {"label", res.trainLabels[i]}}.dump() + "\n";
    for (std::size_t i = 0; i < sides.test.size(); ++i)
      assign += json{{"id", segment_id(segs[sides.test[i]])}, {"side", "test"}, {"label", res.testLabels[i]}}
                    .dump() +
                "\n";
    write_text_file((dir / (slot.key + ".assignments.jsonl")).string(), assign);
    const Funnel f = funnel(res.verdicts);
    info[slot.key] = {{"found", f.found}, {"retained", f.retained}, {"salient", f.salient}};
    say(ctx, "validate: " + slot.key + " found " + std::to_string(f.found) + ", retained " +
                 std::to_string(f.retained) + ", salient " + std::to_string(f.salient));
  }
  return info;
}

std::vector<StripEvent> strip_of(const Segment& s) {
  std::vector<StripEvent> out;
  for (const auto& v : s.vectors)
    out.push_back({decode_action_type(v), v[feature::kPageLlm] > v[feature::kPageTask] ? Page::llm : Page::task});
  return out;
}

json stage_report(const RunContext& ctx, const fs::path& dir) {
  require(ctx, StageName::validate);
  const SplitSet test = read_split(ctx);
  std::ostringstream overall;
  overall << "model\tfound\tretained\tsalient\n";
  json info = json::object();
  for (const auto& slot : model_slots(ctx.config)) {
    const auto segs = load_segments(ctx, slot.key);
    const Sides sides = sides_of(segs, test);
    const auto trainIds = ids_of(segs, sides.train);
    const fs::path vpath = stage_dir(ctx, StageName::validate) / (slot.key + ".verdicts.json");
    if (!fs::exists(vpath)) throw StageError(StageName::validate, "missing verdicts for model " + slot.key);
    const auto verdicts = verdicts_from_json(read_text_file(vpath.string()), trainIds);
    std::vector<ClusterStrips> strips;
    for (const auto& v : verdicts) {
      ClusterStrips cs;
      cs.clusterId = v.clusterId;
      for (auto r : v.representatives) {
        const auto& seg = segs[sides.train[r]];
        cs.segmentIds.push_back(segment_id(seg));
        cs.strips.push_back(strip_of(seg));
      }
      strips.push_back(std::move(cs));
    }
    const auto bundle = render_cluster_report(verdicts, strips, "model " + slot.key);
    for (const auto& [name, content] : bundle) {
      const fs::path p = dir / slot.key / name;
      fs::create_directories(p.parent_path());
      write_text_file(p.string(), content);
    }
    const Funnel f = funnel(verdicts);
    overall << slot.key << '\t' << f.found << '\t' << f.retained << '\t' << f.salient << '\n';
    info[slot.key] = {{"documents", bundle.size()}};
  }
  write_text_file((dir / "summary.txt").string(), overall.str());
  say(ctx, "report: written to " + dir.string());
  return info;
}

void write_manifest(const RunContext& ctx) {
  json m;
  m["configHash"] = ctx.hash;
  m["config"] = json::parse(ctx.config.to_json(true));
  json seeds{{"master", ctx.config.seed}, {"split", ctx.config.split_seed()}};
  if (ctx.config.paths.input.empty()) seeds["synth"] = ctx.config.synth_seed();
  json modelSeeds = json::object();
  for (const auto& slot : model_slots(ctx.config)) modelSeeds[slot.key] = ctx.config.model_seed(slot.task, slot.window);
  seeds["models"] = modelSeeds;
  m["seeds"] = seeds;
  json stages = json::object();
  m["models"] = json::array();
  for (StageName s : kAllStages) {
    const fs::path p = stage_dir(ctx, s) / kStageRecord;
    if (!fs::exists(p)) continue;
    const json rec = json::parse(read_text_file(p.string()));
    if (rec.value("configHash", "") != ctx.hash) continue;
    stages[std::string(to_string(s))] = {{"artifacts", rec.at("artifacts")}, {"info", rec.at("info")}};
    if (s == StageName::train) m["models"] = rec.at("info").at("models");
  }
  m["stages"] = stages;
  write_text_file((ctx.root / "manifest.json").string(), m.dump(2) + "\n");
}

}  // namespace

RunContext open_run(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  RunContext ctx{cfg, fs::path(cfg.paths.out) / cfg.hash(), cfg.hash(), log};
  fs::create_directories(ctx.root);
  const fs::path cfgPath = ctx.root / "config.json";
  const std::string text = cfg.to_json(true);
  if (fs::exists(cfgPath)) {
    const std::string existing = read_text_file(cfgPath.string());
    if (sha256_hex(json::parse(existing).dump()) != ctx.hash)
      throw StageError(StageName::synth, "run directory " + ctx.root.string() + " holds a different config");
  } else {
    write_text_file(cfgPath.string(), json::parse(text).dump(2) + "\n");
  }
  return ctx;
}

void run_stage(const RunContext& ctx, StageName stage) {
  const fs::path dir = stage_dir(ctx, stage);
  fs::remove_all(dir);
  fs::create_directories(dir);
  json info;
  switch (stage) {
    case StageName::synth: info = stage_synth(ctx, dir); break;
    case StageName::ingest: info = stage_ingest(ctx, dir); break;
    case StageName::preprocess: info = stage_preprocess(ctx, dir); break;
    case StageName::score: info = stage_score(ctx, dir); break;
    case StageName::encode: info = stage_encode(ctx, dir); break;
    case StageName::train: info = stage_train(ctx, dir); break;
    case StageName::embed: info = stage_embed(ctx, dir); break;
    case StageName::cluster: info = stage_cluster(ctx, dir); break;
    case StageName::validate: info = stage_validate(ctx, dir); break;
    case StageName::report: info = stage_report(ctx, dir); break;
  }
  finish_stage(ctx, stage, std::move(info));
  write_manifest(ctx);
}

void run_pipeline(const RunContext& ctx) {
  for (StageName s : kAllStages) {
    if (s == StageName::synth && !ctx.config.paths.input.empty()) continue;
    run_stage(ctx, s);
  }
}

std::vector<std::pair<std::string, std::string>> artifact_hashes(const RunContext& ctx) {
  std::vector<std::pair<std::string, std::string>> out;
  for (StageName s : kAllStages) {
    const fs::path p = stage_dir(ctx, s) / kStageRecord;
    if (!fs::exists(p)) continue;
    const json rec = json::parse(read_text_file(p.string()));
    for (const auto& [k, v] : rec.at("artifacts").items()) out.emplace_back(k, v.get<std::string>());
  }
  const fs::path m = ctx.root / "manifest.json";
  if (fs::exists(m)) out.emplace_back("manifest.json", sha256_file(m.string()));
  return out;
}

}  // namespace relimine
