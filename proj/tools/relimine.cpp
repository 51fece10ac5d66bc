// relimine: run the log-mining stages from the command line.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "relimine/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::string task;
  std::string window;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)");
  cmd->add_option("--task", f.task, "quiz, summarization, trip or all")
      ->check(CLI::IsMember({"quiz", "summarization", "trip", "all"}));
  cmd->add_option("--window", f.window, "Window length in seconds or all");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
}

relimine::RunConfig resolve(const Flags& f) {
  using namespace relimine;
  RunConfig cfg = f.config.empty() ? RunConfig::defaults() : RunConfig::load(f.config);
  if (!f.task.empty() && f.task != "all") cfg.tasks = {*parse_task(f.task)};
  if (!f.task.empty() && f.task == "all") cfg.tasks.assign(kAllTasks.begin(), kAllTasks.end());
  if (!f.window.empty() && f.window != "all") {
    std::size_t used = 0;
    int w = 0;
    try {
      w = std::stoi(f.window, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f.window.size()) throw ConfigError("--window expects a number or 'all'");
    cfg.windows = {w};
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (!f.out.empty()) cfg.paths.out = f.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace relimine;
  CLI::App app{"Mine interaction logs for behaviour patterns linked to overreliance"};
  app.require_subcommand(1);
  Flags flags;

  std::vector<std::pair<CLI::App*, std::optional<StageName>>> commands;
  for (StageName s : kAllStages) {
    auto* cmd = app.add_subcommand(std::string(to_string(s)), "Run the " + std::string(to_string(s)) + " stage");
    add_flags(cmd, flags);
    commands.emplace_back(cmd, s);
  }
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  add_flags(pipeline, flags);
  commands.emplace_back(pipeline, std::nullopt);

  auto* show = app.add_subcommand("show-config", "Print the effective configuration");
  add_flags(show, flags);
  bool showHash = false;
  show->add_flag("--hash", showHash, "Print the config hash instead");
  auto* where = app.add_subcommand("run-dir", "Print the run directory for the configuration");
  add_flags(where, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve(flags);
    if (show->parsed()) {
      std::cout << (showHash ? cfg.hash() + "\n" : cfg.to_json());
      return 0;
    }
    if (where->parsed()) {
      std::cout << (std::filesystem::path(cfg.paths.out) / cfg.hash()).string() << '\n';
      return 0;
    }
    const RunContext ctx = open_run(cfg, &std::cerr);
    for (const auto& [cmd, stage] : commands) {
      if (!cmd->parsed()) continue;
      if (stage) run_stage(ctx, *stage);
      else run_pipeline(ctx);
    }
    std::cout << ctx.root.string() << '\n';
  } catch (const StageError& e) {
    std::cerr << "error: stage " << to_string(e.stage()) << ": " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
