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

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "support.hpp"

namespace websynth {
namespace {

using testing::coherence_violations;
using testing::entry_tree;
using testing::fixture_world;
using testing::OracleModels;

const TaskQuery kQuery{"reach the goal", std::nullopt, "q"};

SearchNode leaf(double value, int visits, std::int64_t click_id) {
  SearchNode n;
  const Action a = Action::click(click_id);
  n.proposal = ActionProposal{"", a, format_action(a)};
  n.observation = share(parse("Tab 0 (current): x\nURL: http://x.local/" + std::to_string(click_id) +
                              "\n[1] [RootWebArea] ['x']\n"));
  n.value = value;
  n.visits = visits;
  return n;
}

ActionTree bare_tree(SearchConfig config = {}) {
  return ActionTree(kQuery, config, share(parse("Tab 0 (current): r\nURL: http://x.local/\n[1] [RootWebArea] ['r']\n")));
}

// ---------------------------------------------------------------------------
// ucb

TEST(Ucb, Formula) {
  EXPECT_DOUBLE_EQ(ucb_score(leaf(0.5, 1, 1), 1, 1.0), 0.5);
  EXPECT_NEAR(ucb_score(leaf(0.6, 2, 1), 8, 1.0), 1.61966699016880882, 1e-12);
  EXPECT_NEAR(ucb_score(leaf(0.6, 2, 1), 8, 2.0), 0.6 + 2.0 * std::sqrt(std::log(8.0) / 2.0), 1e-12);
  EXPECT_EQ(ucb_score(leaf(0.0, 0, 1), 5, 1.0), std::numeric_limits<double>::infinity());
  EXPECT_EQ(ucb_score(leaf(1.0, 0, 1), 1, 0.1), std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// select

TEST(Select, PicksHigherUcb) {
  ActionTree tree = bare_tree();
  tree.node(0).visits = 4;
  const int strong = tree.add_child(0, leaf(0.9, 3, 1));
  const int weak = tree.add_child(0, leaf(0.2, 1, 2));
  const double u_strong = 0.9 + std::sqrt(std::log(4.0) / 3.0);
  const double u_weak = 0.2 + std::sqrt(std::log(4.0) / 1.0);
  ASSERT_GT(u_strong, u_weak);
  EXPECT_EQ(select(tree), strong);
  (void)weak;
}

TEST(Select, UnvisitedChildFirst) {
  ActionTree tree = bare_tree();
  tree.node(0).visits = 10;
  tree.add_child(0, leaf(1.0, 9, 1));
  const int fresh = tree.add_child(0, leaf(0.0, 0, 2));
  EXPECT_EQ(select(tree), fresh);
}

TEST(Select, TiesGoToLowestIdAndEqualVisitsFollowValue) {
  ActionTree tree = bare_tree();
  tree.node(0).visits = 6;
  const int a = tree.add_child(0, leaf(0.5, 2, 1));
  tree.add_child(0, leaf(0.5, 2, 2));
  EXPECT_EQ(select(tree), a);
  const int c = tree.add_child(0, leaf(0.7, 2, 3));
  EXPECT_EQ(select(tree), c);
}

TEST(Select, SkipsTerminalAndExhausts) {
  ActionTree tree = bare_tree();
  tree.node(0).visits = 3;
  SearchNode stop = leaf(1.0, 1, 1);
  stop.terminal = true;
  tree.add_child(0, stop);
  const int open = tree.add_child(0, leaf(0.1, 1, 2));
  EXPECT_EQ(select(tree), open);
  tree.node(open).terminal = true;
  try {
    select(tree);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::search_exhausted);
  }
}

// ---------------------------------------------------------------------------
// backpropagation

TEST(Backprop, WeightedMean) {
  ActionTree tree = bare_tree();
  const int a = tree.add_child(0, leaf(0.5, 2, 1));
  tree.add_child(0, leaf(0.8, 1, 2));
  backpropagate(tree, a);
  EXPECT_NEAR(tree.root().value, 0.6, 1e-12);
  EXPECT_EQ(tree.root().visits, 1);
}

TEST(Backprop, SingleChildAndChain) {
  ActionTree tree = bare_tree();
  const int a = tree.add_child(0, leaf(0.3, 1, 1));
  const int b = tree.add_child(a, leaf(0.9, 1, 2));
  backpropagate(tree, b);
  EXPECT_DOUBLE_EQ(tree.node(a).value, 0.9);
  EXPECT_EQ(tree.node(a).visits, 2);
  EXPECT_DOUBLE_EQ(tree.root().value, 0.9);
  EXPECT_TRUE(coherence_violations(tree).size() <= 1);  // root visits differ from iterations here
}

// ---------------------------------------------------------------------------
// expansion

TEST(Expand, ThreeLinksMatchSimworld) {
  auto world = fixture_world("maze");
  OracleModels models(world);
  ActionTree tree(kQuery, SearchConfig{}, share(entry_tree(*world)));
  StateCache cache;
  const auto created = expand(tree, 0, models.set(), cache);
  ASSERT_EQ(created.size(), 3u);
  std::set<std::string> keys;
  for (int id : created) {
    const SearchNode& n = tree.node(id);
    EXPECT_EQ(n.visits, 1);
    const StepResult truth = step(*world, world->start(), n.proposal->action);
    EXPECT_EQ(*n.observation, *truth.observation);
    EXPECT_DOUBLE_EQ(n.value, evaluate(*world, truth.session) == 1.0 ? 1.0 : 0.25);
    EXPECT_EQ(cache.find(n.observation->url), n.observation);
    keys.insert(canonicalize(n.proposal->action));
  }
  EXPECT_EQ(keys.size(), 3u);
}

TEST(Expand, CacheAvoidsDuplicatePredictions) {
  auto world = fixture_world("converge");
  auto counting = std::make_shared<testing::CountingWorld>(as_world_model(world));
  PolicyModel policy(as_policy(world));
  WorldModel world_model(counting);
  RewardModel reward(as_reward_model(world));
  ActionTree tree(kQuery, SearchConfig{}, share(entry_tree(*world)));
  StateCache cache;
  const auto first = expand(tree, 0, {policy, world_model, reward}, cache);
  const std::string hub = "http://converge.local/hub";
  for (int id : first) {
    if (tree.node(id).proposal->action.kind == ActionKind::stop) continue;
    expand(tree, id, {policy, world_model, reward}, cache);
  }
  EXPECT_EQ(counting->by_url[hub], 1);
  EXPECT_GE(cache.hits(), 1u);
  std::set<const A11yTree*> hub_nodes;
  for (const auto& [id, n] : tree.nodes()) {
    if (n.observation->url == hub) hub_nodes.insert(n.observation.get());
  }
  EXPECT_EQ(hub_nodes.size(), 1u);
}

TEST(Expand, DepthBudgetMarksChildrenTerminal) {
  auto world = fixture_world("maze");
  OracleModels models(world);
  SearchConfig config;
  config.max_depth = 1;
  ActionTree tree(kQuery, config, share(entry_tree(*world)));
  StateCache cache;
  for (int id : expand(tree, 0, models.set(), cache)) EXPECT_TRUE(tree.node(id).terminal);
  EXPECT_THROW(select(tree), Error);
}

TEST(Expand, RejectsNonLeaf) {
  auto world = fixture_world("maze");
  OracleModels models(world);
  ActionTree tree(kQuery, SearchConfig{}, share(entry_tree(*world)));
  StateCache cache;
  expand(tree, 0, models.set(), cache);
  EXPECT_THROW(expand(tree, 0, models.set(), cache), Error);
}

// ---------------------------------------------------------------------------
// run_search

SearchConfig config_with(int iterations, std::uint64_t seed = 1) {
  SearchConfig c;
  c.max_iterations = iterations;
  c.seed = seed;
  return c;
}

TEST(Search, ZeroIterationsIsRootOnly) {
  auto world = fixture_world("maze");
  OracleModels models(world);
  const ActionTree tree = run_search(kQuery, entry_tree(*world), models.set(), config_with(0));
  EXPECT_EQ(tree.size(), 1u);
  EXPECT_EQ(tree.iterations_run(), 0);
  EXPECT_EQ(tree.root().visits, 0);
}

TEST(Search, InvariantsHoldAfterEveryIteration) {
  for (const char* name : {"shop", "forum", "maze", "converge"}) {
    auto world = fixture_world(name);
    OracleModels models(world);
    auto counting = std::make_shared<testing::CountingWorld>(as_world_model(world));
    WorldModel world_model(counting);
    StateCache cache;
    int last_predicts = 0;
    int iterations = 0;
    SearchHooks hooks{&cache, [&](const ActionTree& tree) {
                        ++iterations;
                        ASSERT_TRUE(coherence_violations(tree).empty()) << name;
                        int predicts = 0;
                        for (const auto& [url, count] : counting->by_url) predicts += count;
                        EXPECT_LE(predicts - last_predicts, tree.config().expansion_width);
                        last_predicts = predicts;
                        for (const auto& [id, n] : tree.nodes()) {
                          std::set<std::string> keys;
                          for (int c : n.children) keys.insert(canonicalize(*tree.node(c).action()));
                          ASSERT_EQ(keys.size(), n.children.size());
                        }
                      }};
    const ActionTree tree = run_search(kQuery, entry_tree(*world), {models.policy, world_model, models.reward},
                                       config_with(30), std::nullopt, hooks);
    EXPECT_EQ(tree.iterations_run(), iterations);
    // cache coherence: one observation per url across the tree
    std::map<std::string, std::string> by_url;
    for (const auto& [id, n] : tree.nodes()) {
      const std::string text = serialize(*n.observation);
      auto [it, inserted] = by_url.emplace(n.observation->url, text);
      EXPECT_EQ(it->second, text);
    }
  }
}

TEST(Search, FindsDepthThreeGoal) {
  auto world = fixture_world("maze");
  const auto goals = testing::goal_urls(*world);
  ASSERT_EQ(goals.size(), 1u);
  OracleModels models(world);
  const ActionTree tree = run_search(kQuery, entry_tree(*world), models.set(), config_with(20));
  const SearchNode* best = nullptr;
  for (const auto& [id, n] : tree.nodes()) {
    if (!n.children.empty() || id == 0) continue;
    if (!best || n.value > best->value) best = &n;
  }
  ASSERT_NE(best, nullptr);
  EXPECT_EQ(best->observation->url, *goals.begin());
  EXPECT_DOUBLE_EQ(best->value, 1.0);
}

TEST(Search, DeterministicForSeed) {
  auto world = fixture_world("forum");
  OracleModels a(world);
  OracleModels b(world);
  const auto ta = run_search(kQuery, entry_tree(*world), a.set(), config_with(15, 9));
  const auto tb = run_search(kQuery, entry_tree(*world), b.set(), config_with(15, 9));
  EXPECT_EQ(tree_to_json(ta).dump(), tree_to_json(tb).dump());
}

TEST(Search, ExhaustsSmallWorld) {
  auto world = fixture_world("converge");
  OracleModels models(world);
  const ActionTree tree = run_search(kQuery, entry_tree(*world), models.set(), config_with(500));
  EXPECT_LT(tree.iterations_run(), 500);
  EXPECT_TRUE(is_exhausted(tree, 0));
  EXPECT_TRUE(coherence_violations(tree).empty());
}

TEST(Search, RejectsNarrowExpansion) {
  auto world = fixture_world("maze");
  OracleModels models(world);
  SearchConfig c = config_with(3);
  c.expansion_width = 2;
  EXPECT_THROW(run_search(kQuery, entry_tree(*world), models.set(), c), Error);
}

TEST(Search, AbortCarriesPartialTree) {
  class Broken : public RewardBackend {
   public:
    std::string judge(const RewardRequest&) override {
      if (++calls > 7) throw TransientError("down");
      return "Score: 3";
    }
    int calls = 0;
  };
  auto world = fixture_world("maze");
  PolicyModel policy(as_policy(world));
  WorldModel world_model(as_world_model(world));
  RetryPolicy no_retry;
  no_retry.max_retries = 0;
  RewardModel reward(std::make_shared<Broken>(), no_retry);
  try {
    run_search(kQuery, entry_tree(*world), {policy, world_model, reward}, config_with(10));
    FAIL();
  } catch (const SearchAborted& e) {
    EXPECT_EQ(e.code(), Errc::backend_unavailable);
    EXPECT_EQ(e.partial().iterations_run(), 2);
    EXPECT_TRUE(coherence_violations(e.partial()).empty());
  }
}

// ---------------------------------------------------------------------------
// checkpoints

TEST(Checkpoint, JsonRoundTrip) {
  auto world = fixture_world("shop");
  OracleModels models(world);
  const ActionTree tree = run_search(kQuery, entry_tree(*world), models.set(), config_with(12));
  const nlohmann::json doc = tree_to_json(tree);
  EXPECT_EQ(doc["version"], "tree-v1");
  const ActionTree back = tree_from_json(doc);
  EXPECT_EQ(tree_to_json(back).dump(), doc.dump());
  EXPECT_EQ(back.size(), tree.size());
  EXPECT_EQ(back.iterations_run(), 12);
  EXPECT_TRUE(coherence_violations(back).empty());

  nlohmann::json broken = doc;
  broken["version"] = "tree-v0";
  EXPECT_THROW(tree_from_json(broken), Error);
  broken = doc;
  broken["nodes"][1]["parent_id"] = 4242;
  EXPECT_THROW(tree_from_json(broken), Error);
}

TEST(Checkpoint, ResumeContinuesIterations) {
  auto world = fixture_world("forum");
  OracleModels straight(world);
  const ActionTree full = run_search(kQuery, entry_tree(*world), straight.set(), config_with(20, 3));

  OracleModels first(world);
  const ActionTree half = run_search(kQuery, entry_tree(*world), first.set(), config_with(8, 3));
  const ActionTree loaded = tree_from_json(nlohmann::json::parse(tree_to_json(half).dump()));
  OracleModels second(world);
  const ActionTree resumed = run_search(kQuery, entry_tree(*world), second.set(), config_with(20, 3), loaded);
  EXPECT_EQ(resumed.iterations_run(), 20);
  EXPECT_EQ(tree_to_json(resumed).dump(), tree_to_json(full).dump());
}

}  // namespace
}  // namespace websynth
