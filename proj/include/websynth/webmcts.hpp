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

// World-model guided Monte Carlo Tree Search over web observations.
//
// Each iteration selects a leaf by UCB (U = v + eps * sqrt(ln n_parent / n)),
// expands it with at least three distinct policy actions whose successor
// observations come from the world model (memoised by URL), scores every new
// child once with the reward model, and backpropagates visit-weighted means
// to the root. There is no rollout phase.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"
#include "websynth/error.hpp"
#include "websynth/gateway.hpp"
#include "websynth/hash.hpp"

namespace websynth {

inline constexpr std::string_view kTreeFormatVersion = "tree-v1";

struct SearchConfig {
  double exploration_epsilon = 1.0;
  int expansion_width = 3;
  int max_iterations = 20;
  int max_depth = 10;
  std::uint64_t seed = 0;

  bool operator==(const SearchConfig&) const = default;
};

inline void validate(const SearchConfig& config) {
  if (!(config.exploration_epsilon > 0)) throw Error(Errc::config_error, "exploration_epsilon must be > 0");
  if (config.expansion_width < 3) throw Error(Errc::config_error, "expansion_width must be >= 3");
  if (config.max_iterations < 0) throw Error(Errc::config_error, "max_iterations must be >= 0");
  if (config.max_depth < 1) throw Error(Errc::config_error, "max_depth must be >= 1");
}

struct SearchNode {
  int node_id = 0;
  std::optional<ActionProposal> proposal;  // absent at the root
  ObservationPtr observation;
  double value = 0.0;
  int visits = 0;
  std::optional<int> parent;
  std::vector<int> children;
  bool terminal = false;
  int depth = 0;

  const Action* action() const { return proposal ? &proposal->action : nullptr; }
};

class ActionTree {
 public:
  ActionTree() = default;
  ActionTree(TaskQuery query, SearchConfig config, ObservationPtr initial)
      : query_(std::move(query)), config_(config) {
    SearchNode root;
    root.observation = std::move(initial);
    nodes_.emplace(0, std::move(root));
    next_id_ = 1;
  }

  const TaskQuery& query() const { return query_; }
  const SearchConfig& config() const { return config_; }
  void set_config(const SearchConfig& config) { config_ = config; }
  int iterations_run() const { return iterations_run_; }
  void set_iterations_run(int n) { iterations_run_ = n; }
  int next_id() const { return next_id_; }

  static constexpr int root_id() { return 0; }
  const SearchNode& root() const { return node(root_id()); }

  bool contains(int id) const { return nodes_.count(id) > 0; }
  const SearchNode& node(int id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(Errc::invalid_argument, "no node " + std::to_string(id));
    return it->second;
  }
  SearchNode& node(int id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(Errc::invalid_argument, "no node " + std::to_string(id));
    return it->second;
  }
  const std::map<int, SearchNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  int add_child(int parent_id, SearchNode child) {
    child.node_id = next_id_++;
    child.parent = parent_id;
    child.depth = node(parent_id).depth + 1;
    const int id = child.node_id;
    nodes_.emplace(id, std::move(child));
    node(parent_id).children.push_back(id);
    return id;
  }

  /// Removes a childless node from the tree.
  void erase_leaf(int id) {
    SearchNode& victim = node(id);
    if (!victim.children.empty() || !victim.parent) {
      throw Error(Errc::invalid_argument, "only non-root leaves can be erased");
    }
    auto& siblings = node(*victim.parent).children;
    std::erase(siblings, id);
    nodes_.erase(id);
  }

  /// Node ids from the root to `id`, inclusive.
  std::vector<int> path_to(int id) const {
    std::vector<int> path;
    for (std::optional<int> at = id; at; at = node(*at).parent) path.push_back(*at);
    return {path.rbegin(), path.rend()};
  }

  /// The (observation, proposal) steps that lead from the root to `id`.
  std::vector<HistoryStep> history_for(int id) const {
    std::vector<HistoryStep> steps;
    const auto path = path_to(id);
    for (std::size_t i = 1; i < path.size(); ++i) {
      steps.push_back({node(path[i - 1]).observation, *node(path[i]).proposal});
    }
    return steps;
  }

  // Restores raw structure when loading a checkpoint.
  void insert_loaded(SearchNode n) {
    if (n.parent) node(*n.parent).children.push_back(n.node_id);
    next_id_ = std::max(next_id_, n.node_id + 1);
    nodes_.emplace(n.node_id, std::move(n));
  }
  void set_next_id(int id) { next_id_ = std::max(next_id_, id); }

 private:
  TaskQuery query_;
  SearchConfig config_;
  int iterations_run_ = 0;
  int next_id_ = 0;
  std::map<int, SearchNode> nodes_;
};

/// URL-keyed memo of world-model predictions for one search.
class StateCache {
 public:
  ObservationPtr find(const std::string& url) {
    auto it = entries_.find(url);
    if (it == entries_.end()) return nullptr;
    ++hits_;
    return it->second;
  }

  /// First insertion for a url wins; returns the stored tree.
  ObservationPtr insert(const std::string& url, ObservationPtr tree) {
    auto [it, inserted] = entries_.emplace(url, std::move(tree));
    if (inserted) {
      ++misses_;
    } else {
      ++hits_;
    }
    return it->second;
  }

  bool contains(const std::string& url) const { return entries_.count(url) > 0; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  const std::map<std::string, ObservationPtr>& entries() const { return entries_; }

 private:
  std::map<std::string, ObservationPtr> entries_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

/// Cache key for a predicted observation: its URL, or a digest of the
/// parent URL and canonical action when the prediction dropped the URL.
inline std::string cache_key(const A11yTree& predicted, const A11yTree& parent, const Action& action) {
  if (!predicted.url.empty()) return predicted.url;
  return "synthetic:" + hex64(fnv1a(parent.url + "\n" + canonicalize(action)));
}

// ---------------------------------------------------------------------------
// Selection

inline double ucb_score(const SearchNode& node, int parent_visits, double epsilon) {
  if (node.visits == 0) return std::numeric_limits<double>::infinity();
  return node.value + epsilon * std::sqrt(std::log(static_cast<double>(parent_visits)) / node.visits);
}

/// Terminal leaves and subtrees whose every child is exhausted.
inline bool is_exhausted(const ActionTree& tree, int id) {
  const SearchNode& n = tree.node(id);
  if (n.terminal) return true;
  if (n.children.empty()) return false;
  for (int child : n.children) {
    if (!is_exhausted(tree, child)) return false;
  }
  return true;
}

/// Walks from the root along max-UCB children (ties to the lowest node id),
/// skipping exhausted subtrees, to an expandable leaf.
inline int select(const ActionTree& tree) {
  int at = ActionTree::root_id();
  if (is_exhausted(tree, at)) throw Error(Errc::search_exhausted, "every frontier node is terminal");
  const double epsilon = tree.config().exploration_epsilon;
  while (!tree.node(at).children.empty()) {
    const SearchNode& parent = tree.node(at);
    std::optional<int> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int child : parent.children) {
      if (is_exhausted(tree, child)) continue;
      const double score = ucb_score(tree.node(child), std::max(parent.visits, 1), epsilon);
      if (!best || score > best_score || (score == best_score && child < *best)) {
        best = child;
        best_score = score;
      }
    }
    at = *best;
  }
  return at;
}

// ---------------------------------------------------------------------------
// Expansion and backpropagation

namespace detail {

inline void refresh_value(ActionTree& tree, SearchNode& n) {
  double weighted = 0.0;
  long long total = 0;
  for (int child : n.children) {
    const SearchNode& c = tree.node(child);
    weighted += c.visits * c.value;
    total += c.visits;
  }
  if (total > 0) n.value = weighted / static_cast<double>(total);
}

// visits += 1 and value = visit-weighted child mean, from `id` to the root.
inline void update_path(ActionTree& tree, int id) {
  for (std::optional<int> at = id; at; at = tree.node(*at).parent) {
    SearchNode& n = tree.node(*at);
    ++n.visits;
    refresh_value(tree, n);
  }
}

}  // namespace detail

/// Updates every ancestor of `id`: n += 1, v = sum(n_i v_i) / sum(n_i).
inline void backpropagate(ActionTree& tree, int id) {
  if (auto parent = tree.node(id).parent) detail::update_path(tree, *parent);
}

struct ModelSet {
  PolicyModel& policy;
  WorldModel& world;
  RewardModel& reward;
};

/// Expands an expandable leaf with up to expansion_width distinct actions.
/// Each child is scored once; value = verdict value, visits = 1.
inline std::vector<int> expand(ActionTree& tree, int id, ModelSet models, StateCache& cache) {
  const SearchConfig& config = tree.config();
  {
    const SearchNode& n = tree.node(id);
    if (n.terminal || !n.children.empty() || n.depth >= config.max_depth) {
      throw Error(Errc::invalid_argument, "node " + std::to_string(id) + " is not expandable");
    }
  }
  const ObservationPtr observation = tree.node(id).observation;
  std::vector<HistoryStep> history = tree.history_for(id);

  std::vector<ActionProposal> proposals;
  try {
    proposals = propose_actions(models.policy, tree.query(), history, *observation, config.expansion_width,
                                {config.seed});
  } catch (const Error& e) {
    if (e.code() != Errc::no_valid_action) throw;
    throw Error(Errc::expansion_empty, e.what());
  }
  if (proposals.empty()) throw Error(Errc::expansion_empty, "no proposals");

  std::vector<int> created;
  for (auto& proposal : proposals) {
    SearchNode child;
    const Action& action = proposal.action;
    if (action.kind == ActionKind::stop) {
      child.observation = observation;
    } else {
      auto anticipated = anticipate_url(models.world, history, *observation, action);
      ObservationPtr cached = anticipated ? cache.find(*anticipated) : nullptr;
      if (cached) {
        child.observation = cached;
      } else {
        A11yTree predicted = predict_next(models.world, history, *observation, action);
        const std::string key = cache_key(predicted, *observation, action);
        child.observation = cache.insert(key, share(std::move(predicted)));
      }
    }
    std::vector<HistoryStep> steps = history;
    steps.push_back({observation, proposal});
    const RewardVerdict verdict = score_trajectory(models.reward, tree.query(), steps, *child.observation);
    child.value = verdict.value;
    child.visits = 1;
    child.proposal = std::move(proposal);
    const int depth = tree.node(id).depth + 1;
    child.terminal = child.proposal->action.kind == ActionKind::stop || depth >= config.max_depth;
    created.push_back(tree.add_child(id, std::move(child)));
  }
  return created;
}

/// Thrown when a search fails mid-way; carries the tree built so far.
class SearchAborted : public Error {
 public:
  SearchAborted(const Error& cause, ActionTree partial)
      : Error(cause.code(), std::string("search aborted: ") + cause.what()),
        partial_(std::make_shared<ActionTree>(std::move(partial))) {}

  const ActionTree& partial() const { return *partial_; }

 private:
  std::shared_ptr<ActionTree> partial_;
};

struct SearchHooks {
  StateCache* cache = nullptr;  // external cache, for inspection
  std::function<void(const ActionTree&)> after_iteration;
};

/// Seeds a cache with every observation already in a tree.
inline void warm_cache(StateCache& cache, const ActionTree& tree) {
  for (const auto& [id, n] : tree.nodes()) {
    if (!n.observation) continue;
    if (!n.observation->url.empty()) {
      if (!cache.contains(n.observation->url)) cache.insert(n.observation->url, n.observation);
    } else if (n.parent && n.action()) {
      const std::string key = cache_key(*n.observation, *tree.node(*n.parent).observation, *n.action());
      if (!cache.contains(key)) cache.insert(key, n.observation);
    }
  }
}

/// Runs select -> expand -> backpropagate until the iteration budget is
/// spent or the tree is exhausted. Pass `resume` to continue a checkpoint.
inline ActionTree run_search(const TaskQuery& query, const A11yTree& initial, ModelSet models,
                             const SearchConfig& config, std::optional<ActionTree> resume = std::nullopt,
                             SearchHooks hooks = {}) {
  validate(config);
  validate(query);
  validate(initial);
  ActionTree tree = resume ? std::move(*resume) : ActionTree(query, config, share(initial));
  tree.set_config(config);

  StateCache local;
  StateCache& cache = hooks.cache ? *hooks.cache : local;
  warm_cache(cache, tree);

  while (tree.iterations_run() < config.max_iterations) {
    int leaf = 0;
    try {
      leaf = select(tree);
    } catch (const Error& e) {
      if (e.code() == Errc::search_exhausted) break;
      throw;
    }
    try {
      auto children = expand(tree, leaf, models, cache);
      backpropagate(tree, children.front());
    } catch (const Error& e) {
      if (e.code() != Errc::expansion_empty) throw SearchAborted(e, std::move(tree));
      tree.node(leaf).terminal = true;
      detail::update_path(tree, leaf);
    }
    tree.set_iterations_run(tree.iterations_run() + 1);
    if (hooks.after_iteration) hooks.after_iteration(tree);
  }
  return tree;
}

// ---------------------------------------------------------------------------
// tree-v1 checkpoints

inline nlohmann::json query_to_json(const TaskQuery& q) {
  nlohmann::json j = {{"task_id", q.task_id}, {"instruction", q.instruction}};
  j["site_hint"] = q.site_hint ? nlohmann::json(*q.site_hint) : nlohmann::json(nullptr);
  return j;
}

inline TaskQuery query_from_json(const nlohmann::json& j) {
  TaskQuery q;
  q.task_id = j.value("task_id", std::string());
  q.instruction = j.at("instruction").get<std::string>();
  if (j.contains("site_hint") && j["site_hint"].is_string()) q.site_hint = j["site_hint"].get<std::string>();
  return q;
}

inline nlohmann::json search_config_to_json(const SearchConfig& c) {
  return {{"exploration_epsilon", c.exploration_epsilon},
          {"expansion_width", c.expansion_width},
          {"max_iterations", c.max_iterations},
          {"max_depth", c.max_depth},
          {"seed", c.seed}};
}

inline SearchConfig search_config_from_json(const nlohmann::json& j, SearchConfig c = {}) {
  c.exploration_epsilon = j.value("exploration_epsilon", c.exploration_epsilon);
  c.expansion_width = j.value("expansion_width", c.expansion_width);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Nodes are written in pre-order so children order survives a reload.
inline nlohmann::json tree_to_json(const ActionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json observations = nlohmann::json::object();
  std::map<std::string, std::string> refs;  // serialized text -> ref

  std::vector<int> stack = {ActionTree::root_id()};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const SearchNode& n = tree.node(id);
    std::string text = serialize(*n.observation);
    auto [it, fresh] = refs.emplace(text, "o" + std::to_string(refs.size()));
    if (fresh) observations[it->second] = std::move(text);
    nlohmann::json entry = {{"node_id", n.node_id},
                            {"parent_id", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
                            {"value", n.value},
                            {"visits", n.visits},
                            {"terminal", n.terminal},
                            {"observation_ref", it->second}};
    if (n.proposal) {
      entry["action"] = format_action(n.proposal->action);
      entry["thought"] = n.proposal->thought;
      entry["raw"] = n.proposal->raw;
    } else {
      entry["action"] = nullptr;
      entry["thought"] = "";
    }
    nodes.push_back(std::move(entry));
    for (auto c = n.children.rbegin(); c != n.children.rend(); ++c) stack.push_back(*c);
  }
  return {{"version", std::string(kTreeFormatVersion)},
          {"query", query_to_json(tree.query())},
          {"config", search_config_to_json(tree.config())},
          {"iterations_run", tree.iterations_run()},
          {"next_node_id", tree.next_id()},
          {"nodes", std::move(nodes)},
          {"observations", std::move(observations)}};
}

inline ActionTree tree_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<std::string>() != kTreeFormatVersion) {
      throw Error(Errc::invalid_checkpoint, "unsupported tree version");
    }
    std::map<std::string, ObservationPtr> observations;
    for (const auto& [ref, text] : doc.at("observations").items()) {
      observations[ref] = share(parse(text.get<std::string>()));
    }
    ActionTree tree;
    bool first = true;
    for (const auto& entry : doc.at("nodes")) {
      SearchNode n;
      n.node_id = entry.at("node_id").get<int>();
      if (!entry.at("parent_id").is_null()) n.parent = entry.at("parent_id").get<int>();
      n.value = entry.at("value").get<double>();
      n.visits = entry.at("visits").get<int>();
      n.terminal = entry.at("terminal").get<bool>();
      auto obs = observations.find(entry.at("observation_ref").get<std::string>());
      if (obs == observations.end()) throw Error(Errc::invalid_checkpoint, "dangling observation_ref");
      n.observation = obs->second;
      if (!entry.at("action").is_null()) {
        ActionProposal p;
        p.action = parse_action(entry.at("action").get<std::string>());
        p.thought = entry.value("thought", std::string());
        p.raw = entry.value("raw", format_action(p.action));
        n.proposal = std::move(p);
      }
      if (first) {
        if (n.parent || n.node_id != ActionTree::root_id() || n.proposal) {
          throw Error(Errc::invalid_checkpoint, "first node must be the root");
        }
        tree = ActionTree(query_from_json(doc.at("query")), search_config_from_json(doc.at("config")),
                          n.observation);
        tree.node(0) = std::move(n);
        first = false;
        continue;
      }
      if (!n.parent || !tree.contains(*n.parent) || tree.contains(n.node_id)) {
        throw Error(Errc::invalid_checkpoint, "node " + std::to_string(n.node_id) + " is out of order");
      }
      n.depth = tree.node(*n.parent).depth + 1;
      tree.insert_loaded(std::move(n));
    }
    if (first) throw Error(Errc::invalid_checkpoint, "checkpoint has no nodes");
    tree.set_iterations_run(doc.at("iterations_run").get<int>());
    tree.set_next_id(doc.value("next_node_id", 0));
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_checkpoint, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::invalid_checkpoint) throw;
    throw Error(Errc::invalid_checkpoint, e.what());
  }
}

inline void save_tree(const ActionTree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write '" + path + "'");
  out << tree_to_json(tree).dump() << '\n';
}

inline ActionTree load_tree(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read '" + path + "'");
  try {
    return tree_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_checkpoint, path + ": " + e.what());
  }
}

}  // namespace websynth
