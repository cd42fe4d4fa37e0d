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

#include <sys/wait.h>

#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace websynth {
namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("websynth-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

nlohmann::json sample_config_doc() {
  std::ifstream in(fs::path(WEBSYNTH_SAMPLE_DIR) / "config.json");
  return nlohmann::json::parse(in);
}

// Writes the sample config into `dir`, with worlds and templates made absolute.
fs::path write_config(const fs::path& dir, nlohmann::json doc = sample_config_doc()) {
  const fs::path samples(WEBSYNTH_SAMPLE_DIR);
  for (auto& w : doc["worlds"]) w = (samples / w.get<std::string>()).lexically_normal().string();
  doc["curriculum"]["templates"] = (samples / doc["curriculum"]["templates"].get<std::string>()).lexically_normal().string();
  doc["output_dir"] = (dir / "runs").string();
  const fs::path path = dir / "config.json";
  write_file(path, doc.dump(2));
  return path;
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const fs::path capture = fs::temp_directory_path() / ("websynth-cli-" + std::to_string(std::random_device{}()));
  const std::string cmd = std::string(WEBSYNTH_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) *out = read_file(capture);
  fs::remove(capture);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const fs::path& path) { return read_jsonl(path).size(); }

// Silences warnings for a test and keeps them for inspection.
struct CapturedWarnings {
  CapturedWarnings() {
    saved = log_sink();
    log_sink() = [this](const std::string& m) { messages.push_back(m); };
  }
  ~CapturedWarnings() { log_sink() = saved; }
  std::function<void(const std::string&)> saved;
  std::vector<std::string> messages;
};

TEST(Config, PathsResolveAgainstConfigFile) {
  const RunConfig c = load_config(fs::path(WEBSYNTH_SAMPLE_DIR) / "config.json");
  ASSERT_EQ(c.world_files.size(), 4u);
  for (const auto& w : c.world_files) EXPECT_TRUE(fs::exists(w)) << w;
  EXPECT_EQ(c.output_dir, (fs::path(WEBSYNTH_SAMPLE_DIR) / "runs").lexically_normal());
  EXPECT_EQ(c.weights.caption, 2);
  EXPECT_TRUE(c.policy.scripted());
  const RunConfig again = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(again), config_to_json(c));
}

TEST(Config, RejectsBadValues) {
  RunConfig c = load_config(fs::path(WEBSYNTH_SAMPLE_DIR) / "config.json");
  c.run_id = "../escape";
  EXPECT_THROW(validate(c), Error);
  nlohmann::json doc = sample_config_doc();
  doc["curriculum"]["weights"] = {1, 2};
  EXPECT_THROW(config_from_json(doc), Error);
  EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
}

TEST(Explore, CountAndDeterminism) {
  TempDir tmp;
  RunConfig c = load_config(write_config(tmp.path()));
  c.run_id = "a";
  const auto first = cmd_explore(c, 50);
  EXPECT_EQ(first.exit_code, kExitOk);
  EXPECT_EQ(count_lines(c.run_dir() / "triples.jsonl"), 50u);
  EXPECT_EQ(first.entry["per_world"]["shop"], 13);
  EXPECT_EQ(first.entry["per_world"]["converge"], 12);
  c.run_id = "b";
  cmd_explore(c, 50);
  EXPECT_EQ(read_file(tmp.path() / "runs/a/triples.jsonl"), read_file(tmp.path() / "runs/b/triples.jsonl"));
  for (const auto& row : read_jsonl(c.run_dir() / "triples.jsonl")) {
    const TransitionTriple t = triple_from_json(row);
    EXPECT_NE(t.action.kind, ActionKind::stop);
  }
}

void write_tasks(const fs::path& path, int n) {
  std::ifstream in(fs::path(WEBSYNTH_SAMPLE_DIR) / "tasks.jsonl");
  std::string all, line;
  for (int i = 0; i < n && std::getline(in, line); ++i) all += line + "\n";
  write_file(path, all);
}

TEST(Synthesize, ResumeSkipsCompleteTasks) {
  TempDir tmp;
  RunConfig c = load_config(write_config(tmp.path()));
  c.search.max_iterations = 6;
  const fs::path tasks = tmp.path() / "tasks.jsonl";
  write_tasks(tasks, 2);
  const auto first = cmd_synthesize(c, tasks);
  ASSERT_EQ(first.exit_code, kExitOk) << first.entry.dump(2);
  const std::string shop = read_file(c.run_dir() / "trees/shop-cart.json");

  write_tasks(tasks, 3);
  const auto second = cmd_synthesize(c, tasks, true);
  ASSERT_EQ(second.exit_code, kExitOk);
  const auto& rows = second.entry["tasks"];
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0]["status"], "skipped");
  EXPECT_EQ(rows[1]["status"], "skipped");
  EXPECT_EQ(rows[2]["status"], "ok");
  EXPECT_EQ(read_file(c.run_dir() / "trees/shop-cart.json"), shop);
  EXPECT_EQ(second.entry["outputs"].size(), 3u);

  // a changed search budget invalidates the checkpoint
  c.search.max_iterations = 7;
  const auto third = cmd_synthesize(c, tasks, true);
  for (const auto& row : third.entry["tasks"]) EXPECT_EQ(row["status"], "ok");
}

TEST(Synthesize, UnknownWorldFailsOnlyThatTask) {
  TempDir tmp;
  RunConfig c = load_config(write_config(tmp.path()));
  c.search.max_iterations = 3;
  const fs::path tasks = tmp.path() / "tasks.jsonl";
  write_file(tasks, "{\"task_id\": \"lost\", \"instruction\": \"x\", \"site_hint\": \"atlantis\"}\n"
                    "{\"task_id\": \"maze\", \"instruction\": \"Find the way out\", \"site_hint\": \"maze\"}\n");
  CapturedWarnings warnings;
  const auto r = cmd_synthesize(c, tasks);
  EXPECT_EQ(r.exit_code, kExitPartial);
  EXPECT_EQ(r.entry["failed"], 1);
  EXPECT_EQ(r.entry["tasks"][1]["status"], "ok");
  EXPECT_FALSE(warnings.messages.empty());
}

TEST(Extract, SkipsCorruptCheckpoint) {
  TempDir tmp;
  RunConfig c = load_config(write_config(tmp.path()));
  c.search.max_iterations = 20;
  const fs::path tasks = tmp.path() / "tasks.jsonl";
  write_tasks(tasks, 3);
  ASSERT_EQ(cmd_synthesize(c, tasks).exit_code, kExitOk);
  const auto clean = cmd_extract(c);
  EXPECT_EQ(clean.exit_code, kExitOk);
  EXPECT_EQ(clean.entry["skipped"], 0);
  const std::size_t clean_rows = count_lines(c.run_dir() / "trajectories.jsonl");
  EXPECT_EQ(clean_rows, clean.entry["valuable"].get<std::size_t>() + clean.entry["rollback"].get<std::size_t>());
  EXPECT_GT(clean.entry["valuable"].get<std::size_t>(), 0u);

  // truncated maze checkpoint: hash mismatch against the manifest
  const fs::path maze = c.run_dir() / "trees/maze-exit.json";
  const std::string bytes = read_file(maze);
  write_file(maze, bytes.substr(0, bytes.size() / 2));
  // stray unparsable file unknown to the manifest
  write_file(c.run_dir() / "trees/stray.json", "{not json");
  CapturedWarnings warnings;
  const auto partial = cmd_extract(c);
  EXPECT_EQ(partial.exit_code, kExitPartial);
  EXPECT_EQ(partial.entry["skipped"], 2);
  EXPECT_EQ(partial.entry["trees"].size(), 2u);
  ASSERT_EQ(warnings.messages.size(), 2u);
  EXPECT_NE(warnings.messages[0].find("hash mismatch"), std::string::npos);
  EXPECT_NE(warnings.messages[1].find("stray.json"), std::string::npos);
}

TEST(Curriculum, EmptyTriplesWarns) {
  TempDir tmp;
  RunConfig c = load_config(write_config(tmp.path()));
  fs::create_directories(c.run_dir());
  write_file(c.run_dir() / "triples.jsonl", "");
  CapturedWarnings warnings;
  const auto r = cmd_curriculum(c);
  EXPECT_EQ(r.exit_code, kExitOk);
  EXPECT_EQ(count_lines(c.run_dir() / "sft.jsonl"), 0u);
  ASSERT_EQ(warnings.messages.size(), 1u);
  EXPECT_NE(warnings.messages[0].find("empty"), std::string::npos);
  EXPECT_THROW(cmd_curriculum(c, tmp.path() / "missing.jsonl"), Error);
}

TEST(Curriculum, RecordsFollowWeights) {
  TempDir tmp;
  RunConfig c = load_config(write_config(tmp.path()));
  cmd_explore(c, 150);
  const auto r = cmd_curriculum(c);
  EXPECT_EQ(r.entry["classes"]["dense_caption"], 20);
  EXPECT_EQ(r.entry["classes"]["element_functionality"], 60);
  EXPECT_EQ(r.entry["classes"]["state_transition"], 70);
  EXPECT_EQ(r.entry["behavior_clone"], 0);
  const auto stats = cmd_stats(c);
  for (const auto& [name, stage] : stats["stages"].items()) {
    for (const auto& o : stage["outputs"]) EXPECT_TRUE(o["intact"].get<bool>()) << name;
  }
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const fs::path config = write_config(tmp.path());
  std::string out;
  EXPECT_EQ(run_cli("-c " + config.string() + " explore --steps 12", &out), 0) << out;
  EXPECT_NE(out.find("\"records\": 12"), std::string::npos) << out;
  EXPECT_EQ(run_cli("-c " + config.string() + " stats", &out), 0) << out;

  nlohmann::json doc = sample_config_doc();
  doc["worlds"].push_back("worlds/does-not-exist.json");
  TempDir broken;
  const fs::path bad = write_config(broken.path(), doc);
  EXPECT_EQ(run_cli("-c " + bad.string() + " explore --steps 12", &out), 2) << out;
  EXPECT_EQ(run_cli("-c " + config.string() + " explore --steps nope"), 2);
  EXPECT_EQ(run_cli("-c " + config.string()), 2);
  EXPECT_EQ(run_cli("-c " + config.string() + " dance"), 2);
  EXPECT_EQ(run_cli("-c " + (tmp.path() / "absent.json").string() + " stats"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, CountsMatchLibrary) {
  TempDir tmp;
  const fs::path config = write_config(tmp.path());
  const fs::path tasks = tmp.path() / "tasks.jsonl";
  write_tasks(tasks, 3);
  const std::string base = "-c " + config.string() + " --run-id cli ";
  ASSERT_EQ(run_cli(base + "explore --steps 40"), 0);
  ASSERT_EQ(run_cli(base + "synthesize --tasks " + tasks.string() + " --iterations 10"), 0);
  ASSERT_EQ(run_cli(base + "extract"), 0);
  ASSERT_EQ(run_cli(base + "curriculum"), 0);

  RunConfig c = load_config(config);
  c.run_id = "lib";
  c.search.max_iterations = 10;
  cmd_explore(c, 40);
  cmd_synthesize(c, tasks);
  cmd_extract(c);
  cmd_curriculum(c);

  const fs::path cli_dir = tmp.path() / "runs/cli";
  for (const char* file : {"triples.jsonl", "trajectories.jsonl", "sft.jsonl", "behavior_clone.jsonl"}) {
    EXPECT_EQ(read_file(cli_dir / file), read_file(c.run_dir() / file)) << file;
  }
  const auto manifest = nlohmann::json::parse(read_file(cli_dir / "manifest.json"));
  EXPECT_EQ(manifest["version"], "manifest-v1");
  for (const char* stage : {"explore", "synthesize", "extract", "curriculum"}) EXPECT_TRUE(manifest["stages"].contains(stage));
}

}  // namespace
}  // namespace websynth
