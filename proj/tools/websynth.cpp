// Copyright 2026 The WebSynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// websynth: explore | synthesize | extract | curriculum | stats
//
// Exit codes: 0 success, 1 partial (some tasks or checkpoints failed),
// 2 configuration error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "websynth/orchestrator.hpp"

namespace {

using websynth::Errc;

struct Overrides {
  std::optional<std::string> run_id;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> iterations;
  std::optional<double> epsilon;
  std::optional<int> width;
  std::optional<double> threshold;
  bool no_enhance = false;
};

websynth::RunConfig resolve(const std::string& path, const Overrides& o) {
  websynth::RunConfig c = websynth::load_config(path);
  if (o.run_id) c.run_id = *o.run_id;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.iterations) c.search.max_iterations = *o.iterations;
  if (o.epsilon) c.search.exploration_epsilon = *o.epsilon;
  if (o.width) c.search.expansion_width = *o.width;
  if (o.threshold) c.extraction.value_threshold = *o.threshold;
  if (o.no_enhance) c.enhance = false;
  return c;
}

int report(const websynth::CommandResult& r) {
  nlohmann::json summary = r.entry;
  summary.erase("tasks");
  summary.erase("trees");
  std::cout << summary.dump(2) << std::endl;
  return r.exit_code;
}

bool is_config_error(Errc code) {
  return code == Errc::config_error || code == Errc::invalid_world || code == Errc::invalid_argument ||
         code == Errc::malformed_observation || code == Errc::unparsable_action;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline web trajectory synthesis: explore, search, extract and build curricula."};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;
  app.add_option("-c,--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--run-id", o.run_id, "Override run_id");
  app.add_option("--output-dir", o.output_dir, "Override output_dir");
  app.add_option("--seed", o.seed, "Override the run seed");
  app.add_option("--workers", o.workers, "Concurrent tasks during synthesize");

  auto* explore = app.add_subcommand("explore", "Random walk over the worlds, writing transition triples");
  std::optional<int> steps;
  explore->add_option("--steps", steps, "Total number of triples");

  auto* synthesize = app.add_subcommand("synthesize", "Run tree search per task, writing tree checkpoints");
  std::string tasks;
  bool resume = false;
  synthesize->add_option("--tasks", tasks, "Tasks (JSONL)")->required();
  synthesize->add_flag("--resume", resume, "Skip tasks whose checkpoint is complete and unchanged");
  synthesize->add_option("--iterations", o.iterations, "Search iterations per task");
  synthesize->add_option("--epsilon", o.epsilon, "Exploration weight");
  synthesize->add_option("--width", o.width, "Actions per expansion");

  auto* extract = app.add_subcommand("extract", "Prune trees and extract valuable and rollback trajectories");
  std::optional<std::string> trees;
  extract->add_option("--trees", trees, "Checkpoint directory (default: the run's trees/)");
  extract->add_option("--threshold", o.threshold, "Value threshold");

  auto* curriculum = app.add_subcommand("curriculum", "Build SFT records from triples and trajectories");
  std::optional<std::string> triples;
  std::optional<std::string> trajectories;
  curriculum->add_option("--triples", triples, "Triples (JSONL, default: the run's triples.jsonl)");
  curriculum->add_option("--trajectories", trajectories, "Trajectories (JSONL, default: the run's, if present)");
  curriculum->add_flag("--no-enhance", o.no_enhance, "Keep the first template and skip enhancement");

  auto* stats = app.add_subcommand("stats", "Summarize the run manifest and verify output digests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : websynth::kExitConfig;
  }

  try {
    const websynth::RunConfig config = resolve(config_path, o);
    if (*explore) return report(websynth::cmd_explore(config, steps));
    if (*synthesize) return report(websynth::cmd_synthesize(config, tasks, resume));
    if (*extract) {
      return report(websynth::cmd_extract(config, trees ? std::optional<websynth::fs::path>(*trees) : std::nullopt));
    }
    if (*curriculum) {
      return report(websynth::cmd_curriculum(
          config, triples ? std::optional<websynth::fs::path>(*triples) : std::nullopt,
          trajectories ? std::optional<websynth::fs::path>(*trajectories) : std::nullopt));
    }
    if (*stats) {
      std::cout << websynth::cmd_stats(config).dump(2) << std::endl;
      return websynth::kExitOk;
    }
  } catch (const websynth::Error& e) {
    std::cerr << "websynth: error: " << e.what() << std::endl;
    return is_config_error(e.code()) ? websynth::kExitConfig : websynth::kExitPartial;
  } catch (const std::exception& e) {
    std::cerr << "websynth: error: " << e.what() << std::endl;
    return websynth::kExitPartial;
  }
  return websynth::kExitOk;
}
