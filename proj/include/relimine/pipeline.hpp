#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "relimine/config.hpp"

namespace relimine {

enum class StageName { synth, ingest, preprocess, score, encode, train, embed, cluster, validate, report };

inline constexpr std::array<StageName, 10> kAllStages = {
    StageName::synth,  StageName::ingest, StageName::preprocess, StageName::score,
    StageName::encode, StageName::train,  StageName::embed,      StageName::cluster,
    StageName::validate, StageName::report};

std::string_view to_string(StageName s);
std::optional<StageName> parse_stage(std::string_view s);

// Missing or stale upstream artifacts. `stage` names the stage that has to
// run (again) first.
class StageError : public std::runtime_error {
 public:
  StageError(StageName stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
  StageName stage() const { return stage_; }

 private:
  StageName stage_;
};

// "<task>_w<window>", e.g. "quiz_w60".
std::string model_key(TaskId task, int window);

// One run directory: <out>/<config hash>/.
struct RunContext {
  RunConfig config;
  std::filesystem::path root;
  std::string hash;
  std::ostream* log = nullptr;  // progress lines; may be null
};

// Creates the run directory and writes config.json there. Refuses a
// directory whose recorded config hash differs.
RunContext open_run(const RunConfig& cfg, std::ostream* log = nullptr);

// Runs one stage, replacing its directory, then rewrites manifest.json.
void run_stage(const RunContext& ctx, StageName stage);

// Every stage in order; synth only when no input directory is configured.
void run_pipeline(const RunContext& ctx);

// Relative path -> SHA-256 of every artifact in finished stages, manifest
// included.
std::vector<std::pair<std::string, std::string>> artifact_hashes(const RunContext& ctx);

}  // namespace relimine
