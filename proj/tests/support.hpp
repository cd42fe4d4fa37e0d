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

// Generators and reference implementations shared by the unit suites and
// the acceptance binary. Oracles here are written independently of the
// library code paths they check: plain enumeration, no shared helpers.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "websynth/websynth.hpp"

namespace websynth::testing {

inline std::string asset(const std::string& relative) { return std::string(WEBSYNTH_ASSET_DIR) + "/" + relative; }

inline WorldPtr fixture_world(const std::string& name) { return load_world(asset("worlds/" + name + ".json")); }

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline bool chance(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

/// Text with the characters the a11y format has to escape.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 12) {
  static const std::vector<std::string> alphabet = {"a", "b", "Z", "0", "7", " ", " ", "[", "]", "\\", "'",
                                                    "\"", "\n", "\t", "-", ":", "\xc3\xa9", "#", "{", "}"};
  std::string out;
  const std::size_t len = pick(rng, max_len + 1);
  for (std::size_t i = 0; i < len; ++i) out += alphabet[pick(rng, alphabet.size())];
  return out;
}

/// Text legal inside an action argument: no brackets, newlines or fences.
inline std::string random_argument(std::mt19937_64& rng, std::size_t max_len = 16) {
  static const std::vector<std::string> alphabet = {"a", "q", "Z", "0", "9", " ", " ", "'", "\"", "\\",
                                                    "-", "=", "/", ".", ":", "`", "\xc3\xa9", "?", "&", "%"};
  std::string out;
  const std::size_t len = pick(rng, max_len + 1);
  for (std::size_t i = 0; i < len; ++i) {
    out += alphabet[pick(rng, alphabet.size())];
    if (out.size() >= 3 && out.compare(out.size() - 3, 3, "```") == 0) out.pop_back();
  }
  return out;
}

inline A11yTree random_tree(std::mt19937_64& rng, std::size_t max_nodes = 25) {
  static const std::vector<std::string> roles = {"link", "button", "textbox", "StaticText", "heading",
                                                 "combobox", "main", "navigation", "row", "cell"};
  const std::size_t n = 1 + pick(rng, max_nodes);
  std::vector<A11yNode> nodes(n);
  std::vector<std::size_t> parent(n, 0);
  std::int64_t next_id = static_cast<std::int64_t>(pick(rng, 50));
  for (std::size_t i = 0; i < n; ++i) {
    A11yNode& node = nodes[i];
    node.role = i == 0 ? "RootWebArea" : roles[pick(rng, roles.size())];
    if (chance(rng, 0.1)) node.role = "r" + random_text(rng, 4);
    if (chance(rng, 0.7)) {
      next_id += 1 + static_cast<std::int64_t>(pick(rng, 1000));
      node.element_id = next_id;
    }
    node.text = random_text(rng);
    if (i > 0) parent[i] = pick(rng, i);
  }
  // children attach after their parents, so build bottom-up
  for (std::size_t i = n; i-- > 1;) nodes[parent[i]].children.insert(nodes[parent[i]].children.begin(), nodes[i]);
  A11yTree tree;
  tree.url = "http://site.local/" + std::to_string(rng() % 100000);
  tree.tab_title = random_text(rng);
  tree.root = std::move(nodes[0]);
  return tree;
}

inline Action random_action(std::mt19937_64& rng) {
  const auto id = static_cast<std::int64_t>(rng() % 1000000000000ULL);
  switch (pick(rng, 7)) {
    case 0: return Action::click(id);
    case 1: return Action::hover(id);
    case 2: return Action::type(id, random_argument(rng), chance(rng, 0.5));
    case 3: return Action::scroll(chance(rng, 0.5) ? ScrollDirection::up : ScrollDirection::down);
    case 4: {
      std::string url = "http://x.local/" + random_argument(rng);
      while (!url.empty() && url.back() == ' ') url.pop_back();
      return Action::go_to(url);
    }
    case 5: return Action::go_back();
    default: return Action::stop(random_argument(rng));
  }
}

/// Random search tree: observations come from a small pool so identical
/// pages recur, values are uniform in [0,1] with some exact 1.0s.
inline ActionTree random_search_tree(std::mt19937_64& rng, std::size_t max_nodes = 40) {
  std::vector<ObservationPtr> pool;
  for (int i = 0; i < 6; ++i) pool.push_back(share(random_tree(rng, 6)));
  ActionTree tree(TaskQuery{"find the thing", std::nullopt, "t" + std::to_string(rng() % 1000)}, SearchConfig{},
                  pool[0]);
  tree.node(0).visits = 1 + static_cast<int>(pick(rng, 10));
  const std::size_t n = 1 + pick(rng, max_nodes);
  std::vector<int> ids = {0};
  for (std::size_t i = 1; i < n; ++i) {
    SearchNode child;
    Action a;
    switch (pick(rng, 5)) {
      case 0: a = Action::type(static_cast<std::int64_t>(pick(rng, 4)), chance(rng, 0.5) ? "red shoes" : "blue hat"); break;
      case 1: a = Action::stop("done"); break;
      case 2: a = Action::go_to(chance(rng, 0.5) ? "http://a.local" : "http://b.local"); break;
      default: a = Action::click(static_cast<std::int64_t>(pick(rng, 6)));
    }
    child.proposal = ActionProposal{"thought " + std::to_string(i), a, format_action(a)};
    child.observation = pool[pick(rng, pool.size())];
    child.value = chance(rng, 0.1) ? 1.0 : std::uniform_real_distribution<double>(0, 1)(rng);
    child.visits = 1 + static_cast<int>(pick(rng, 5));
    ids.push_back(tree.add_child(ids[pick(rng, ids.size())], std::move(child)));
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Oracles

/// Every node with value >= threshold none of whose descendants qualifies,
/// found by checking all pairs; trajectories rebuilt by walking parents.
inline std::vector<Trajectory> valuable_oracle(const ActionTree& tree, double threshold) {
  auto is_ancestor = [&](int a, int d) {
    for (auto p = tree.node(d).parent; p; p = tree.node(*p).parent) {
      if (*p == a) return true;
    }
    return false;
  };
  std::vector<Trajectory> out;
  for (const auto& [id, n] : tree.nodes()) {
    if (id == 0 || n.value < threshold) continue;
    bool deeper = false;
    for (const auto& [other, m] : tree.nodes()) {
      if (other != id && m.value >= threshold && is_ancestor(id, other)) deeper = true;
    }
    if (deeper) continue;
    std::vector<int> chain;
    for (int at = id; at != 0; at = *tree.node(at).parent) chain.insert(chain.begin(), at);
    Trajectory t;
    t.kind = TrajectoryKind::valuable;
    t.query = tree.query();
    t.terminal_value = n.value;
    t.source_node_ids = chain;
    for (int c : chain) {
      const SearchNode& node = tree.node(c);
      t.steps.push_back({tree.node(*node.parent).observation, node.proposal->thought, node.proposal->action});
    }
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) {
    if (a.terminal_value != b.terminal_value) return a.terminal_value > b.terminal_value;
    if (a.steps.size() != b.steps.size()) return a.steps.size() < b.steps.size();
    return a.source_node_ids < b.source_node_ids;
  });
  return out;
}

/// Failed siblings (value below threshold, not stop) of each node on each
/// valuable path, capped per trajectory.
inline std::size_t rollback_count_oracle(const ActionTree& tree, const std::vector<Trajectory>& valuable,
                                         double threshold, int cap) {
  std::size_t total = 0;
  for (const auto& t : valuable) {
    std::size_t failed = 0;
    for (int c : t.source_node_ids) {
      for (const auto& [id, n] : tree.nodes()) {
        if (id == c || n.parent != tree.node(c).parent) continue;
        if (n.value < threshold && n.proposal->action.kind != ActionKind::stop) ++failed;
      }
    }
    total += std::min<std::size_t>(failed, static_cast<std::size_t>(cap));
  }
  return total;
}

/// Violations of root.visits == iterations and of the visit-weighted mean at
/// every internal node.
inline std::vector<std::string> coherence_violations(const ActionTree& tree) {
  std::vector<std::string> out;
  if (tree.root().visits != tree.iterations_run()) {
    out.push_back("root visits " + std::to_string(tree.root().visits) + " != iterations " +
                  std::to_string(tree.iterations_run()));
  }
  for (const auto& [id, n] : tree.nodes()) {
    if (n.children.empty()) continue;
    double num = 0, den = 0;
    for (int c : n.children) {
      num += tree.node(c).visits * tree.node(c).value;
      den += tree.node(c).visits;
    }
    if (std::abs(n.value - num / den) >= 1e-9) out.push_back("node " + std::to_string(id) + " value off");
  }
  return out;
}

/// Breadth-first search over a world's page graph: urls of every reachable
/// page on which evaluate() is 1.
inline std::set<std::string> goal_urls(const World& world) {
  std::set<std::string> goals;
  std::set<std::string> seen = {world.entry_page()};
  std::deque<std::string> queue = {world.entry_page()};
  while (!queue.empty()) {
    const PageSpec& page = world.page(queue.front());
    queue.pop_front();
    if (evaluate(world, SessionState{page.page_id, {}, 0}) == 1.0) goals.insert(page.url);
    for (const auto& rule : page.transitions) {
      if (seen.insert(rule.target).second) queue.push_back(rule.target);
    }
  }
  return goals;
}

/// Handles over a world with an optional per-url predict counter.
struct OracleModels {
  explicit OracleModels(WorldPtr world)
      : policy(as_policy(world)), world_model(as_world_model(world)), reward(as_reward_model(world)) {}
  PolicyModel policy;
  WorldModel world_model;
  RewardModel reward;
  ModelSet set() { return {policy, world_model, reward}; }
};

/// World backend that counts predict() calls by the url it answers with.
class CountingWorld : public WorldBackend {
 public:
  explicit CountingWorld(std::shared_ptr<WorldBackend> inner) : inner_(std::move(inner)) {}
  std::string predict(const WorldRequest& r) override {
    std::string out = inner_->predict(r);
    ++by_url[parse_prediction(out).url];
    return out;
  }
  std::optional<std::string> anticipate_url(const WorldRequest& r) override { return inner_->anticipate_url(r); }
  std::map<std::string, int> by_url;

 private:
  std::shared_ptr<WorldBackend> inner_;
};

inline A11yTree entry_tree(const World& world) { return *world.page(world.entry_page()).tree; }

}  // namespace websynth::testing
