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

// Pipeline commands over a run directory:
//
//   <output_dir>/<run_id>/manifest.json
//                         triples.jsonl        explore
//                         trees/<task>.json    synthesize
//                         trajectories.jsonl   extract
//                         sft.jsonl            curriculum
//                         behavior_clone.jsonl curriculum (with trajectories)
//
// Every command updates its own stage entry in the manifest. Output entries
// carry a SHA-256 digest so reruns can be compared and checkpoints verified.

#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "websynth/curriculum.hpp"
#include "websynth/error.hpp"
#include "websynth/extraction.hpp"
#include "websynth/gateway.hpp"
#include "websynth/hash.hpp"
#include "websynth/http_backend.hpp"
#include "websynth/simworld.hpp"
#include "websynth/webmcts.hpp"

namespace websynth {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifestFormatVersion = "manifest-v1";

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitConfig = 2 };

// ---------------------------------------------------------------------------
// Logging and hashing

/// Receives warnings; defaults to stderr. Tests may swap it.
inline std::function<void(const std::string&)>& log_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& line) {
    std::cerr << "websynth: " << line << '\n';
  };
  return sink;
}

inline void log_warning(const std::string& message) {
  if (log_sink()) log_sink()("warning: " + message);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::io_error, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const fs::path& path, std::string_view data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write '" + path.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(Errc::io_error, "short write to '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read '" + path.string() + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::invalid_argument, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::string to_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& row : rows) out += row.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

/// A model role is either scripted (answered by the task's simworld) or a
/// remote chat endpoint.
struct RoleConfig {
  std::optional<ModelEndpointConfig> endpoint;

  bool scripted() const { return !endpoint.has_value(); }
};

struct RunConfig {
  std::string run_id = "run";
  fs::path output_dir = "runs";
  std::uint64_t seed = 0;
  std::vector<fs::path> world_files;
  RoleConfig policy, world, reward, ui;
  SearchConfig search;
  ExtractionConfig extraction;
  int explore_steps = 200;
  int workers = 1;
  ClassWeights weights;
  std::size_t window = kDefaultCompressionWindow;
  std::optional<fs::path> template_file;
  bool enhance = true;

  fs::path run_dir() const { return output_dir / run_id; }
};

inline nlohmann::json endpoint_to_json(const ModelEndpointConfig& e) {
  return {{"base_url", e.base_url},
          {"model_name", e.model_name},
          {"temperature", e.temperature},
          {"max_retries", e.max_retries},
          {"timeout_ms", e.timeout.count()},
          {"request_parallelism", e.request_parallelism}};
}

inline ModelEndpointConfig endpoint_from_json(const nlohmann::json& j) {
  ModelEndpointConfig e;
  e.base_url = j.at("base_url").get<std::string>();
  e.model_name = j.at("model_name").get<std::string>();
  e.temperature = j.value("temperature", e.temperature);
  e.max_retries = j.value("max_retries", e.max_retries);
  e.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(e.timeout.count())));
  e.request_parallelism = j.value("request_parallelism", e.request_parallelism);
  validate(e);
  return e;
}

inline nlohmann::json role_to_json(const RoleConfig& r) {
  if (r.scripted()) return {{"scripted", true}};
  return {{"endpoint", endpoint_to_json(*r.endpoint)}};
}

inline RoleConfig role_from_json(const nlohmann::json& j, const std::string& name) {
  const bool scripted = j.value("scripted", false);
  const bool remote = j.contains("endpoint");
  if (scripted == remote) {
    throw Error(Errc::config_error, "model role '" + name + "' needs exactly one of scripted or endpoint");
  }
  RoleConfig r;
  if (remote) r.endpoint = endpoint_from_json(j.at("endpoint"));
  return r;
}

inline nlohmann::json extraction_config_to_json(const ExtractionConfig& c) {
  return {{"value_threshold", c.value_threshold},
          {"similarity_threshold", c.similarity_threshold},
          {"max_rollbacks_per_trajectory", c.max_rollbacks_per_trajectory},
          {"use_judge_model", c.use_judge_model}};
}

inline ExtractionConfig extraction_config_from_json(const nlohmann::json& j, ExtractionConfig c = {}) {
  c.value_threshold = j.value("value_threshold", c.value_threshold);
  c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
  c.max_rollbacks_per_trajectory = j.value("max_rollbacks_per_trajectory", c.max_rollbacks_per_trajectory);
  c.use_judge_model = j.value("use_judge_model", c.use_judge_model);
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json worlds = nlohmann::json::array();
  for (const auto& w : c.world_files) worlds.push_back(w.generic_string());
  nlohmann::json j = {
      {"run_id", c.run_id},
      {"output_dir", c.output_dir.generic_string()},
      {"seed", c.seed},
      {"worlds", worlds},
      {"models",
       {{"policy", role_to_json(c.policy)},
        {"world", role_to_json(c.world)},
        {"reward", role_to_json(c.reward)},
        {"ui", role_to_json(c.ui)}}},
      {"search", search_config_to_json(c.search)},
      {"extraction", extraction_config_to_json(c.extraction)},
      {"explore", {{"steps", c.explore_steps}}},
      {"workers", c.workers},
      {"curriculum",
       {{"weights", {c.weights.caption, c.weights.functionality, c.weights.transition}},
        {"window", c.window},
        {"enhance", c.enhance}}}};
  if (c.template_file) j["curriculum"]["templates"] = c.template_file->generic_string();
  return j;
}

/// Relative paths in the document resolve against `base_dir`.
inline RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? (base_dir / path).lexically_normal() : path;
  };
  try {
    RunConfig c;
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    for (const auto& w : j.value("worlds", nlohmann::json::array())) c.world_files.push_back(resolve(w.get<std::string>()));
    const auto models = j.value("models", nlohmann::json::object());
    const nlohmann::json scripted = {{"scripted", true}};
    c.policy = role_from_json(models.value("policy", scripted), "policy");
    c.world = role_from_json(models.value("world", scripted), "world");
    c.reward = role_from_json(models.value("reward", scripted), "reward");
    c.ui = role_from_json(models.value("ui", scripted), "ui");
    if (j.contains("search")) c.search = search_config_from_json(j["search"]);
    if (j.contains("extraction")) c.extraction = extraction_config_from_json(j["extraction"]);
    if (j.contains("explore")) c.explore_steps = j["explore"].value("steps", c.explore_steps);
    c.workers = j.value("workers", c.workers);
    if (j.contains("curriculum")) {
      const auto& cur = j["curriculum"];
      if (cur.contains("weights")) {
        const auto w = cur["weights"].get<std::vector<int>>();
        if (w.size() != 3) throw Error(Errc::config_error, "curriculum.weights needs three entries");
        c.weights = {w[0], w[1], w[2]};
      }
      c.window = cur.value("window", c.window);
      c.enhance = cur.value("enhance", c.enhance);
      if (cur.contains("templates")) c.template_file = resolve(cur["templates"].get<std::string>());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, std::string("bad run config: ") + e.what());
  }
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open config file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config_error, "config file '" + path.string() + "': " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

inline void validate(const RunConfig& c) {
  if (c.run_id.empty() || c.run_id.find_first_of("/\\") != std::string::npos || c.run_id == "." ||
      c.run_id == "..") {
    throw Error(Errc::config_error, "run_id '" + c.run_id + "' must be a plain directory name");
  }
  if (c.workers < 1) throw Error(Errc::config_error, "workers must be >= 1");
  if (c.explore_steps < 1) throw Error(Errc::config_error, "explore steps must be >= 1");
  validate(c.search);
  validate(c.extraction);
  const bool needs_worlds = c.policy.scripted() || c.world.scripted() || c.reward.scripted();
  if (needs_worlds && c.world_files.empty()) {
    throw Error(Errc::config_error, "scripted model roles need at least one world file in 'worlds'");
  }
  for (const auto& w : c.world_files) {
    if (!fs::exists(w)) throw Error(Errc::config_error, "world file '" + w.string() + "' does not exist");
  }
}

// ---------------------------------------------------------------------------
// Manifest

/// Output entry: path relative to the run directory, record count, digest.
inline nlohmann::json output_entry(const fs::path& run_dir, const fs::path& path, std::size_t records) {
  return {{"path", fs::relative(path, run_dir).generic_string()},
          {"records", records},
          {"sha256", sha256_hex(read_file(path))}};
}

class RunManifest {
 public:
  explicit RunManifest(const RunConfig& config) : path_(config.run_dir() / "manifest.json") {
    if (fs::exists(path_)) {
      try {
        doc_ = nlohmann::json::parse(read_file(path_));
      } catch (const nlohmann::json::parse_error&) {
        log_warning("manifest '" + path_.string() + "' is unreadable; starting a new one");
      }
    }
    if (!doc_.is_object()) doc_ = nlohmann::json::object();
    doc_["version"] = std::string(kManifestFormatVersion);
    doc_["run_id"] = config.run_id;
    doc_["config"] = config_to_json(config);
    if (!doc_.contains("stages")) doc_["stages"] = nlohmann::json::object();
  }

  const nlohmann::json& doc() const { return doc_; }
  const fs::path& path() const { return path_; }

  std::optional<nlohmann::json> stage(const std::string& name) const {
    if (!doc_["stages"].contains(name)) return std::nullopt;
    return doc_["stages"][name];
  }

  void set_stage(const std::string& name, nlohmann::json entry) {
    std::lock_guard<std::mutex> lock(mu_);
    doc_["stages"][name] = std::move(entry);
    write_file(path_, doc_.dump(2) + "\n");
  }

  /// stage -> output path -> sha256; what determinism comparisons look at.
  std::map<std::string, std::map<std::string, std::string>> output_hashes() const {
    std::map<std::string, std::map<std::string, std::string>> out;
    for (const auto& [name, stage] : doc_["stages"].items()) {
      for (const auto& o : stage.value("outputs", nlohmann::json::array())) {
        out[name][o.at("path").get<std::string>()] = o.at("sha256").get<std::string>();
      }
    }
    return out;
  }

 private:
  fs::path path_;
  nlohmann::json doc_;
  std::mutex mu_;
};

struct CommandResult {
  int exit_code = kExitOk;
  nlohmann::json entry;
};

// ---------------------------------------------------------------------------
// Model wiring

using WorldSet = std::map<std::string, WorldPtr>;

inline WorldSet load_worlds(const RunConfig& config) {
  WorldSet worlds;
  for (const auto& file : config.world_files) {
    WorldPtr w = load_world(file.string());
    if (!worlds.emplace(w->world_id(), w).second) {
      throw Error(Errc::config_error, "world id '" + w->world_id() + "' is defined twice");
    }
  }
  return worlds;
}

/// Per-task model handles with their own call counters.
struct TaskModels {
  std::unique_ptr<PolicyModel> policy;
  std::unique_ptr<WorldModel> world;
  std::unique_ptr<RewardModel> reward;

  ModelSet set() { return {*policy, *world, *reward}; }
  nlohmann::json calls() const {
    auto row = [](const CallStats& s) {
      return nlohmann::json{{"calls", s.calls.load()}, {"attempts", s.attempts.load()}, {"retries", s.retries.load()}};
    };
    return {{"policy", row(policy->stats())}, {"world", row(world->stats())}, {"reward", row(reward->stats())}};
  }
};

/// Shared per-endpoint pieces: one client and one parallelism bound.
class EndpointPool {
 public:
  struct Entry {
    std::shared_ptr<ChatClient> client;
    std::shared_ptr<ConcurrencyLimiter> limiter;
    RetryPolicy retry;
  };

  const Entry& get(const ModelEndpointConfig& e) {
    std::lock_guard<std::mutex> lock(mu_);
    const std::string key = e.base_url + "|" + e.model_name;
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      Entry entry{std::make_shared<HttpChatClient>(e), std::make_shared<ConcurrencyLimiter>(e.request_parallelism),
                  RetryPolicy{}};
      entry.retry.max_retries = e.max_retries;
      it = entries_.emplace(key, std::move(entry)).first;
    }
    return it->second;
  }

 private:
  std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

inline TaskModels make_models(const RunConfig& config, const WorldPtr& world, EndpointPool& endpoints) {
  auto need_world = [&](const char* role) {
    if (!world) throw Error(Errc::config_error, std::string("scripted ") + role + " role needs a task world");
  };
  TaskModels m;
  if (config.policy.scripted()) {
    need_world("policy");
    m.policy = std::make_unique<PolicyModel>(as_policy(world));
  } else {
    const auto& e = endpoints.get(*config.policy.endpoint);
    m.policy = std::make_unique<PolicyModel>(
        std::make_shared<ChatPolicyBackend>(e.client, config.policy.endpoint->temperature), e.retry, e.limiter);
  }
  if (config.world.scripted()) {
    need_world("world");
    m.world = std::make_unique<WorldModel>(as_world_model(world));
  } else {
    const auto& e = endpoints.get(*config.world.endpoint);
    m.world = std::make_unique<WorldModel>(
        std::make_shared<ChatWorldBackend>(e.client, config.world.endpoint->temperature), e.retry, e.limiter);
  }
  if (config.reward.scripted()) {
    need_world("reward");
    m.reward = std::make_unique<RewardModel>(as_reward_model(world));
  } else {
    const auto& e = endpoints.get(*config.reward.endpoint);
    m.reward = std::make_unique<RewardModel>(
        std::make_shared<ChatRewardBackend>(e.client, config.reward.endpoint->temperature), e.retry, e.limiter);
  }
  return m;
}

// ---------------------------------------------------------------------------
// explore

/// Splits the step budget across worlds in file order; each world walks with
/// a seed derived from the run seed and its id.
inline CommandResult cmd_explore(const RunConfig& config, std::optional<int> steps = std::nullopt) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  const int total = steps.value_or(config.explore_steps);
  if (total < 1) throw Error(Errc::config_error, "explore steps must be >= 1");
  std::vector<WorldPtr> ordered;
  for (const auto& file : config.world_files) ordered.push_back(load_world(file.string()));
  if (ordered.empty()) throw Error(Errc::config_error, "explore needs at least one world file");
  std::vector<nlohmann::json> rows;
  nlohmann::json per_world = nlohmann::json::object();
  const int n = static_cast<int>(ordered.size());
  for (int i = 0; i < n; ++i) {
    const int share = total / n + (i < total % n ? 1 : 0);
    if (share == 0) continue;
    const auto triples = collect_triples(*ordered[static_cast<std::size_t>(i)], share,
                                         mix_seed(config.seed, ordered[static_cast<std::size_t>(i)]->world_id()));
    for (const auto& t : triples) rows.push_back(triple_to_json(t));
    per_world[ordered[static_cast<std::size_t>(i)]->world_id()] = share;
  }

  const fs::path out = config.run_dir() / "triples.jsonl";
  write_file(out, to_jsonl(rows));
  CommandResult result;
  result.entry = {{"outputs", {output_entry(config.run_dir(), out, rows.size())}},
                  {"per_world", per_world},
                  {"wall_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count()}};
  RunManifest(config).set_stage("explore", result.entry);
  return result;
}

// ---------------------------------------------------------------------------
// synthesize

struct TaskSpec {
  TaskQuery query;
  std::optional<A11yTree> start;  // else the entry page of the hinted world
  std::string line;               // raw JSONL line, hashed for resume
};

inline std::vector<TaskSpec> load_tasks(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::config_error, "tasks file '" + path.string() + "' does not exist");
  std::vector<TaskSpec> tasks;
  std::map<std::string, int> seen;
  for (const auto& row : read_jsonl(path)) {
    TaskSpec t;
    try {
      t.query = query_from_json(row);
      if (row.contains("start")) t.start = parse(row["start"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::config_error, "tasks file '" + path.string() + "': " + e.what());
    }
    if (t.query.task_id.empty()) t.query.task_id = "task-" + std::to_string(tasks.size() + 1);
    if (seen[t.query.task_id]++ > 0) {
      throw Error(Errc::config_error, "task id '" + t.query.task_id + "' appears twice");
    }
    t.line = row.dump();
    tasks.push_back(std::move(t));
  }
  return tasks;
}

/// File-name-safe task id.
inline std::string checkpoint_name(const std::string& task_id) {
  std::string out;
  for (char c : task_id) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out + ".json";
}

/// Hash of everything that determines a task's tree.
inline std::string task_input_hash(const RunConfig& config, const TaskSpec& task, const SearchConfig& search) {
  nlohmann::json j = {{"task", task.line},
                      {"search", search_config_to_json(search)},
                      {"models",
                       {{"policy", role_to_json(config.policy)},
                        {"world", role_to_json(config.world)},
                        {"reward", role_to_json(config.reward)}}}};
  return sha256_hex(j.dump());
}

inline void write_checkpoint(const fs::path& path, const ActionTree& tree, const std::string& input_hash,
                             bool complete) {
  nlohmann::json doc = tree_to_json(tree);
  doc["input_hash"] = input_hash;
  doc["complete"] = complete;
  write_file(path, doc.dump() + "\n");
}

/// One search per task, `workers` at a time. A failing task is recorded and
/// the batch continues. With `resume`, complete checkpoints whose input hash
/// matches are skipped and incomplete ones continue where they stopped.
inline CommandResult cmd_synthesize(const RunConfig& config, const fs::path& tasks_file, bool resume = false) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  const WorldSet worlds = load_worlds(config);
  const auto tasks = load_tasks(tasks_file);
  const fs::path trees_dir = config.run_dir() / "trees";
  fs::create_directories(trees_dir);

  EndpointPool endpoints;
  std::vector<nlohmann::json> rows(tasks.size());
  std::atomic<std::size_t> next{0};

  auto run_task = [&](const TaskSpec& task) -> nlohmann::json {
    nlohmann::json row = {{"task_id", task.query.task_id}};
    const fs::path checkpoint = trees_dir / checkpoint_name(task.query.task_id);
    row["checkpoint"] = fs::relative(checkpoint, config.run_dir()).generic_string();
    SearchConfig search = config.search;
    search.seed = mix_seed(config.seed ^ config.search.seed, task.query.task_id);
    const std::string input_hash = task_input_hash(config, task, search);
    row["input_hash"] = input_hash;

    std::optional<ActionTree> prior;
    if (resume && fs::exists(checkpoint)) {
      try {
        const auto doc = nlohmann::json::parse(read_file(checkpoint));
        if (doc.value("input_hash", std::string()) == input_hash) {
          if (doc.value("complete", false)) {
            row["status"] = "skipped";
            row["iterations"] = doc.value("iterations_run", 0);
            return row;
          }
          prior = tree_from_json(doc);
        }
      } catch (const std::exception& e) {
        log_warning("ignoring unreadable checkpoint '" + checkpoint.string() + "': " + e.what());
      }
    }

    try {
      WorldPtr world;
      if (task.query.site_hint) {
        auto it = worlds.find(*task.query.site_hint);
        if (it != worlds.end()) world = it->second;
      }
      if (!world && !task.start) {
        throw Error(Errc::config_error, "task '" + task.query.task_id + "' names no known world and has no start page");
      }
      const A11yTree initial = task.start ? *task.start : *world->page(world->entry_page()).tree;
      TaskModels models = make_models(config, world, endpoints);
      SearchHooks hooks;
      hooks.after_iteration = [&](const ActionTree& tree) { write_checkpoint(checkpoint, tree, input_hash, false); };
      try {
        ActionTree tree = run_search(task.query, initial, models.set(), search, std::move(prior), hooks);
        write_checkpoint(checkpoint, tree, input_hash, true);
        row["status"] = "ok";
        row["iterations"] = tree.iterations_run();
        row["nodes"] = tree.size();
        row["root_visits"] = tree.root().visits;
      } catch (const SearchAborted& e) {
        write_checkpoint(checkpoint, e.partial(), input_hash, false);
        row["status"] = "failed";
        row["error"] = e.what();
      }
      row["model_calls"] = models.calls();
    } catch (const Error& e) {
      row["status"] = "failed";
      row["error"] = e.what();
    }
    if (row["status"] == "failed") log_warning("task '" + task.query.task_id + "' failed: " + row["error"].get<std::string>());
    return row;
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) rows[i] = run_task(tasks[i]);
  };
  const int threads = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  CommandResult result;
  nlohmann::json outputs = nlohmann::json::array();
  int failed = 0;
  for (const auto& row : rows) {
    if (row["status"] == "failed") ++failed;
    const fs::path checkpoint = config.run_dir() / row["checkpoint"].get<std::string>();
    if (row["status"] != "failed" && fs::exists(checkpoint)) {
      outputs.push_back(output_entry(config.run_dir(), checkpoint, 1));
    }
  }
  result.exit_code = failed > 0 ? kExitPartial : kExitOk;
  result.entry = {{"outputs", outputs},
                  {"tasks", rows},
                  {"failed", failed},
                  {"wall_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count()}};
  RunManifest(config).set_stage("synthesize", result.entry);
  return result;
}

// ---------------------------------------------------------------------------
// extract

/// Prune, then collect valuable and rollback trajectories from every
/// checkpoint in `trees_dir` (default: the run's trees). Checkpoints whose
/// digest differs from the synthesize manifest, or that fail to load, are
/// skipped with a warning.
inline CommandResult cmd_extract(const RunConfig& config, std::optional<fs::path> trees_dir = std::nullopt) {
  validate(config.extraction);
  const auto started = std::chrono::steady_clock::now();
  const fs::path dir = trees_dir.value_or(config.run_dir() / "trees");
  if (!fs::is_directory(dir)) throw Error(Errc::config_error, "trees directory '" + dir.string() + "' does not exist");
  RunManifest manifest(config);

  std::map<std::string, std::string> expected;  // file name -> sha256
  if (auto stage = manifest.stage("synthesize")) {
    for (const auto& o : stage->value("outputs", nlohmann::json::array())) {
      expected[fs::path(o.at("path").get<std::string>()).filename().string()] = o.at("sha256").get<std::string>();
    }
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::unique_ptr<RedundancyJudge> judge;
  std::unique_ptr<Reflector> reflector;
  EndpointPool endpoints;
  if (!config.reward.scripted()) {
    auto client = endpoints.get(*config.reward.endpoint).client;
    if (config.extraction.use_judge_model) judge = std::make_unique<ChatRedundancyJudge>(client);
    reflector = std::make_unique<ChatReflector>(client);
  }

  std::vector<nlohmann::json> rows;
  std::size_t valuable_count = 0, rollback_count = 0, skipped = 0;
  nlohmann::json per_tree = nlohmann::json::array();
  for (const auto& file : files) {
    const std::string bytes = read_file(file);
    const std::string digest = sha256_hex(bytes);
    auto want = expected.find(file.filename().string());
    if (want != expected.end() && want->second != digest) {
      log_warning("skipping '" + file.string() + "': hash mismatch (manifest " + want->second.substr(0, 12) +
                  ", file " + digest.substr(0, 12) + ")");
      ++skipped;
      continue;
    }
    ActionTree tree;
    try {
      tree = tree_from_json(nlohmann::json::parse(bytes));
    } catch (const std::exception& e) {
      log_warning("skipping '" + file.string() + "' (sha256 " + digest.substr(0, 12) + "): " + e.what());
      ++skipped;
      continue;
    }
    const ActionTree pruned = prune(tree, config.extraction, judge.get());
    const auto valuable = extract_valuable(pruned, config.extraction);
    const auto rollbacks = extract_rollbacks(pruned, valuable, config.extraction, reflector.get());
    for (const auto& t : valuable) rows.push_back(trajectory_to_json(t));
    for (const auto& t : rollbacks) rows.push_back(trajectory_to_json(t));
    valuable_count += valuable.size();
    rollback_count += rollbacks.size();
    per_tree.push_back({{"tree", file.filename().string()},
                        {"nodes", tree.size()},
                        {"pruned_nodes", pruned.size()},
                        {"valuable", valuable.size()},
                        {"rollback", rollbacks.size()}});
  }

  const fs::path out = config.run_dir() / "trajectories.jsonl";
  write_file(out, to_jsonl(rows));
  CommandResult result;
  result.exit_code = skipped > 0 ? kExitPartial : kExitOk;
  result.entry = {{"outputs", {output_entry(config.run_dir(), out, rows.size())}},
                  {"valuable", valuable_count},
                  {"rollback", rollback_count},
                  {"skipped", skipped},
                  {"trees", per_tree},
                  {"wall_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count()}};
  manifest.set_stage("extract", result.entry);
  return result;
}

// ---------------------------------------------------------------------------
// curriculum

struct UiModels {
  std::unique_ptr<Captioner> captioner;
  std::unique_ptr<Describer> describer;
  std::unique_ptr<Narrator> narrator;
  std::unique_ptr<Paraphraser> paraphraser;
};

inline UiModels make_ui_models(const RunConfig& config, EndpointPool& endpoints) {
  UiModels m;
  if (config.ui.scripted()) {
    m.captioner = std::make_unique<ScriptedCaptioner>();
    m.describer = std::make_unique<ScriptedDescriber>();
    m.narrator = std::make_unique<ScriptedNarrator>();
  } else {
    auto client = endpoints.get(*config.ui.endpoint).client;
    m.captioner = std::make_unique<ChatCaptioner>(client);
    m.describer = std::make_unique<ChatDescriber>(client);
    m.narrator = std::make_unique<ChatNarrator>(client);
    m.paraphraser = std::make_unique<ChatParaphraser>(client);
  }
  return m;
}

/// sft.jsonl from triples; behavior_clone.jsonl from trajectories when the
/// file exists (default: the run's trajectories.jsonl).
inline CommandResult cmd_curriculum(const RunConfig& config, std::optional<fs::path> triples_file = std::nullopt,
                                    std::optional<fs::path> trajectories_file = std::nullopt) {
  const auto started = std::chrono::steady_clock::now();
  const fs::path triples_path = triples_file.value_or(config.run_dir() / "triples.jsonl");
  if (!fs::exists(triples_path)) {
    throw Error(Errc::config_error, "triples file '" + triples_path.string() + "' does not exist");
  }
  std::vector<TransitionTriple> triples;
  for (const auto& row : read_jsonl(triples_path)) triples.push_back(triple_from_json(row));
  if (triples.empty()) log_warning("triples file '" + triples_path.string() + "' is empty; writing an empty dataset");

  const TemplatePool pool = config.template_file ? load_template_pool(config.template_file->string())
                                                 : default_template_pool();
  EndpointPool endpoints;
  UiModels models = make_ui_models(config, endpoints);
  CurriculumOptions options;
  options.weights = config.weights;
  options.window = config.window;
  options.seed = config.seed;
  auto records = build_curriculum(triples, {*models.captioner, *models.describer, *models.narrator}, options, pool);
  if (config.enhance) records = enhance_instructions(std::move(records), pool, config.seed, models.paraphraser.get());

  std::map<std::string, std::size_t> classes;
  std::vector<nlohmann::json> rows;
  for (const auto& r : records) {
    ++classes[std::string(task_class_name(r.task_class))];
    rows.push_back(record_to_json(r));
  }
  const fs::path out = config.run_dir() / "sft.jsonl";
  write_file(out, to_jsonl(rows));
  nlohmann::json outputs = {output_entry(config.run_dir(), out, rows.size())};

  const fs::path trajectories_path = trajectories_file.value_or(config.run_dir() / "trajectories.jsonl");
  std::size_t bc = 0;
  if (fs::exists(trajectories_path)) {
    std::vector<Trajectory> trajectories;
    for (const auto& row : read_jsonl(trajectories_path)) trajectories.push_back(trajectory_from_json(row));
    std::vector<nlohmann::json> bc_rows;
    for (const auto& r : behavior_clone_records(trajectories)) bc_rows.push_back(record_to_json(r));
    bc = bc_rows.size();
    const fs::path bc_out = config.run_dir() / "behavior_clone.jsonl";
    write_file(bc_out, to_jsonl(bc_rows));
    outputs.push_back(output_entry(config.run_dir(), bc_out, bc_rows.size()));
  } else if (trajectories_file) {
    throw Error(Errc::config_error, "trajectories file '" + trajectories_path.string() + "' does not exist");
  }

  CommandResult result;
  result.entry = {{"outputs", outputs},
                  {"classes", classes},
                  {"behavior_clone", bc},
                  {"wall_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count()}};
  RunManifest(config).set_stage("curriculum", result.entry);
  return result;
}

// ---------------------------------------------------------------------------
// stats

/// Summary of the manifest plus a check that every listed output still
/// matches its digest.
inline nlohmann::json cmd_stats(const RunConfig& config) {
  const fs::path path = config.run_dir() / "manifest.json";
  if (!fs::exists(path)) throw Error(Errc::config_error, "no manifest at '" + path.string() + "'");
  const auto doc = nlohmann::json::parse(read_file(path));
  nlohmann::json out = {{"run_id", doc.value("run_id", std::string())}, {"stages", nlohmann::json::object()}};
  for (const auto& [name, stage] : doc.at("stages").items()) {
    nlohmann::json s = {{"wall_ms", stage.value("wall_ms", 0)}, {"outputs", nlohmann::json::array()}};
    for (const auto& o : stage.value("outputs", nlohmann::json::array())) {
      const fs::path file = config.run_dir() / o.at("path").get<std::string>();
      const bool intact = fs::exists(file) && sha256_hex(read_file(file)) == o.at("sha256").get<std::string>();
      s["outputs"].push_back({{"path", o["path"]}, {"records", o["records"]}, {"intact", intact}});
    }
    for (const char* key : {"valuable", "rollback", "classes", "failed", "behavior_clone"}) {
      if (stage.contains(key)) s[key] = stage[key];
    }
    if (stage.contains("tasks")) {
      nlohmann::json calls = {{"policy", 0}, {"world", 0}, {"reward", 0}};
      for (const auto& t : stage["tasks"]) {
        if (!t.contains("model_calls")) continue;
        for (const char* role : {"policy", "world", "reward"}) {
          calls[role] = calls[role].get<long long>() + t["model_calls"][role]["calls"].get<long long>();
        }
      }
      s["model_calls"] = calls;
    }
    out["stages"][name] = std::move(s);
  }
  return out;
}

}  // namespace websynth
