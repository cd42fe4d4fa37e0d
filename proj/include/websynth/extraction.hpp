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

// Trajectory collection from a finished action tree:
//
//   prune             merge redundant sibling actions
//   extract_valuable  root paths to the deepest nodes at or above a value
//                     threshold
//   extract_rollbacks for each failed sibling s of a node C on a valuable
//                     path (parent P): ... -> s, go_back, P -> C -> ...

#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"
#include "websynth/error.hpp"
#include "websynth/gateway.hpp"
#include "websynth/text.hpp"
#include "websynth/webmcts.hpp"

namespace websynth {

inline constexpr std::string_view kTrajectoryFormatVersion = "traj-v1";

struct Step {
  ObservationPtr observation;
  std::string thought;
  Action action;
};

inline bool operator==(const Step& a, const Step& b) {
  return a.thought == b.thought && a.action == b.action &&
         (a.observation == b.observation || (a.observation && b.observation && *a.observation == *b.observation));
}

enum class TrajectoryKind { valuable, rollback };

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::valuable;
  TaskQuery query;
  std::vector<Step> steps;
  double terminal_value = 0.0;
  std::vector<int> source_node_ids;

  bool operator==(const Trajectory&) const = default;
};

struct ExtractionConfig {
  double value_threshold = 0.75;
  double similarity_threshold = 0.8;
  int max_rollbacks_per_trajectory = 2;
  bool use_judge_model = false;

  bool operator==(const ExtractionConfig&) const = default;
};

inline void validate(const ExtractionConfig& config) {
  // value_threshold may exceed 1 to disable extraction entirely
  if (config.value_threshold < 0) throw Error(Errc::config_error, "value_threshold must be >= 0");
  if (config.similarity_threshold < 0 || config.similarity_threshold > 1) {
    throw Error(Errc::config_error, "similarity_threshold must be in [0,1]");
  }
  if (config.max_rollbacks_per_trajectory < 0) throw Error(Errc::config_error, "max_rollbacks must be >= 0");
}

/// Decides whether two sibling nodes are the same move.
class RedundancyJudge {
 public:
  virtual ~RedundancyJudge() = default;
  virtual bool redundant(const TaskQuery& query, const SearchNode& a, const SearchNode& b) = 0;
};

/// Writes the reflection preceding a go_back.
class Reflector {
 public:
  virtual ~Reflector() = default;
  virtual std::string reflect(const TaskQuery& query, const Action& failed, const A11yTree& before,
                              const A11yTree& after) = 0;
};

class ChatRedundancyJudge : public RedundancyJudge {
 public:
  explicit ChatRedundancyJudge(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

  bool redundant(const TaskQuery& query, const SearchNode& a, const SearchNode& b) override {
    const std::string prompt =
        "User Instruction: " + query.instruction + "\n\nTwo candidate actions were issued from the same page.\n" +
        "Action A: " + format_action(*a.action()) + "\nAction B: " + format_action(*b.action()) +
        "\n\nDo both actions express the same intent and lead to practically the same page? "
        "Answer with a single word: yes or no.";
    auto out = client_->complete({{"user", prompt}}, 0.0, 1);
    if (out.empty()) throw TransientError("judge returned no choices");
    const auto tokens = word_tokens(out.front());
    if (tokens.empty()) throw Error(Errc::malformed_verdict, "empty judge answer");
    if (tokens.front() == "yes") return true;
    if (tokens.front() == "no") return false;
    throw Error(Errc::malformed_verdict, "judge answer is neither yes nor no");
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

class ChatReflector : public Reflector {
 public:
  explicit ChatReflector(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

  std::string reflect(const TaskQuery& query, const Action& failed, const A11yTree& before,
                      const A11yTree& after) override {
    const std::string prompt =
        "User Instruction: " + query.instruction + "\n\nPrevious page:\n" + serialize(before) +
        "\nAction taken: " + format_action(failed) + "\n\nResulting page:\n" + serialize(after) +
        "\nExplain in two or three sentences why this action deviates from the user's intent and why "
        "going back to the previous page is the right correction.";
    auto out = client_->complete({{"user", prompt}}, 0.0, 1);
    if (out.empty() || detail::trim(out.front()).empty()) throw TransientError("reflector returned nothing");
    return std::string(detail::trim(out.front()));
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

// ---------------------------------------------------------------------------
// Pruning

namespace detail {

inline std::set<std::string> structural_lines(const A11yTree& tree) {
  std::set<std::string> lines;
  for_each_node(tree, [&](const A11yNode& n, std::size_t depth) {
    lines.insert(std::to_string(depth) + "|" + n.role + "|" + n.text);
  });
  return lines;
}

inline const std::string* argument_text(const Action& a) {
  if (a.content) return &*a.content;
  if (a.url) return &*a.url;
  return nullptr;
}

}  // namespace detail

/// Fallback redundancy rule: same kind and element, and either the typed
/// text / url or (for type and goto) the predicted pages are similar.
inline bool similar_actions(const SearchNode& a, const SearchNode& b, double threshold) {
  const Action* x = a.action();
  const Action* y = b.action();
  if (!x || !y || x->kind != y->kind || x->element_id != y->element_id) return false;
  if (canonicalize(*x) == canonicalize(*y)) return true;
  const std::string* tx = detail::argument_text(*x);
  const std::string* ty = detail::argument_text(*y);
  if (!tx || !ty) return false;
  if (token_jaccard(*tx, *ty) >= threshold) return true;
  if (x->kind == ActionKind::type || x->kind == ActionKind::go_to) {
    return jaccard(detail::structural_lines(*a.observation), detail::structural_lines(*b.observation)) >= threshold;
  }
  return false;
}

/// Merges redundant siblings: the lower-value node (ties: higher id) is
/// dropped, its visits and children move to the survivor. Values of the
/// survivor (when it gains children) and its ancestors are recomputed.
inline ActionTree prune(const ActionTree& input, const ExtractionConfig& config,
                        RedundancyJudge* judge = nullptr) {
  ActionTree tree = input;
  auto redundant = [&](const SearchNode& a, const SearchNode& b) {
    if (config.use_judge_model && judge) {
      try {
        return judge->redundant(tree.query(), a, b);
      } catch (const Error&) {
        // judge failure degrades to the textual rule
      }
    }
    return similar_actions(a, b, config.similarity_threshold);
  };

  std::vector<int> touched;
  std::vector<int> queue = {ActionTree::root_id()};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int parent = queue[head];
    bool merged = true;
    while (merged) {
      merged = false;
      const auto children = tree.node(parent).children;
      for (std::size_t i = 0; i < children.size() && !merged; ++i) {
        for (std::size_t j = i + 1; j < children.size() && !merged; ++j) {
          const SearchNode& a = tree.node(children[i]);
          const SearchNode& b = tree.node(children[j]);
          if (!redundant(a, b)) continue;
          const bool keep_a = a.value > b.value || (a.value == b.value && a.node_id < b.node_id);
          const int survivor = keep_a ? a.node_id : b.node_id;
          const int victim = keep_a ? b.node_id : a.node_id;

          SearchNode& s = tree.node(survivor);
          SearchNode& v = tree.node(victim);
          s.visits += v.visits;
          const auto moved = v.children;
          v.children.clear();
          for (int c : moved) {
            tree.node(c).parent = survivor;
            s.children.push_back(c);
          }
          tree.erase_leaf(victim);
          touched.push_back(survivor);
          merged = true;
        }
      }
    }
    for (int c : tree.node(parent).children) queue.push_back(c);
  }

  // a survivor may itself lose a later merge
  std::erase_if(touched, [&](int id) { return !tree.contains(id); });
  std::sort(touched.begin(), touched.end(),
            [&](int x, int y) { return tree.node(x).depth > tree.node(y).depth; });
  for (int id : touched) {
    for (std::optional<int> at = id; at; at = tree.node(*at).parent) {
      SearchNode& n = tree.node(*at);
      if (!n.children.empty()) detail::refresh_value(tree, n);
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Valuable trajectories

inline Trajectory trajectory_for(const ActionTree& tree, int target, TrajectoryKind kind) {
  Trajectory t;
  t.kind = kind;
  t.query = tree.query();
  t.terminal_value = tree.node(target).value;
  const auto path = tree.path_to(target);
  for (std::size_t i = 1; i < path.size(); ++i) {
    const SearchNode& n = tree.node(path[i]);
    t.steps.push_back({tree.node(path[i - 1]).observation, n.proposal->thought, n.proposal->action});
    t.source_node_ids.push_back(n.node_id);
  }
  return t;
}

inline void sort_trajectories(std::vector<Trajectory>& out) {
  std::stable_sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) {
    return std::make_tuple(-a.terminal_value, a.steps.size(), a.source_node_ids) <
           std::make_tuple(-b.terminal_value, b.steps.size(), b.source_node_ids);
  });
}

/// DFS for non-root nodes with value >= threshold that have no qualifying
/// descendant; one root path per node, sorted by (value desc, length asc).
inline std::vector<Trajectory> extract_valuable(const ActionTree& tree, const ExtractionConfig& config) {
  std::vector<int> targets;
  std::function<bool(int)> visit = [&](int id) {
    const SearchNode& n = tree.node(id);
    bool below = false;
    for (int c : n.children) below = visit(c) || below;
    const bool qualifies = n.parent.has_value() && n.value >= config.value_threshold;
    if (qualifies && !below) targets.push_back(id);
    return qualifies || below;
  };
  visit(ActionTree::root_id());

  std::vector<Trajectory> out;
  for (int id : targets) out.push_back(trajectory_for(tree, id, TrajectoryKind::valuable));
  sort_trajectories(out);
  return out;
}

// ---------------------------------------------------------------------------
// Rollback trajectories

/// "The action {a} led to {change}, which does not serve the goal; returning
/// to the previous page."
inline std::string template_reflection(const Action& failed, const A11yTree& before, const A11yTree& after) {
  const A11yDiff d = diff(before, after);
  std::string change;
  if (d.empty()) {
    change = "no visible change on the page";
  } else {
    const std::string counts = std::to_string(d.added.size()) + " added, " + std::to_string(d.removed.size()) +
                               " removed and " + std::to_string(d.changed.size()) + " changed elements";
    if (before.url != after.url) {
      change = "the page '" + after.tab_title + "' (" + counts + ")";
    } else {
      change = counts + " on the same page";
    }
  }
  return "The action " + format_action(failed) + " led to " + change +
         ", which does not serve the goal; returning to the previous page.";
}

/// For every node C on each valuable path, each sibling s of C below the
/// threshold (stop actions excluded) yields root..P, P->s, go_back at s,
/// P->C, ..., target. At most max_rollbacks_per_trajectory per valuable
/// trajectory, in root-first order.
inline std::vector<Trajectory> extract_rollbacks(const ActionTree& tree, const std::vector<Trajectory>& valuable,
                                                 const ExtractionConfig& config, Reflector* reflector = nullptr) {
  std::vector<Trajectory> out;
  for (const Trajectory& base : valuable) {
    int emitted = 0;
    for (std::size_t idx = 0; idx < base.source_node_ids.size(); ++idx) {
      if (emitted >= config.max_rollbacks_per_trajectory) break;
      const SearchNode& c = tree.node(base.source_node_ids[idx]);
      const SearchNode& p = tree.node(*c.parent);
      for (int sibling : p.children) {
        if (emitted >= config.max_rollbacks_per_trajectory) break;
        if (sibling == c.node_id) continue;
        const SearchNode& s = tree.node(sibling);
        if (s.value >= config.value_threshold || s.action()->kind == ActionKind::stop) continue;

        std::string reflection;
        if (reflector) {
          try {
            reflection = reflector->reflect(tree.query(), *s.action(), *p.observation, *s.observation);
          } catch (const Error&) {
            reflection.clear();
          }
        }
        if (reflection.empty()) reflection = template_reflection(*s.action(), *p.observation, *s.observation);

        Trajectory t;
        t.kind = TrajectoryKind::rollback;
        t.query = base.query;
        t.terminal_value = base.terminal_value;
        t.steps.assign(base.steps.begin(), base.steps.begin() + static_cast<std::ptrdiff_t>(idx));
        t.source_node_ids.assign(base.source_node_ids.begin(),
                                 base.source_node_ids.begin() + static_cast<std::ptrdiff_t>(idx));
        t.steps.push_back({p.observation, s.proposal->thought, s.proposal->action});
        t.source_node_ids.push_back(s.node_id);
        t.steps.push_back({s.observation, std::move(reflection), Action::go_back()});
        t.steps.insert(t.steps.end(), base.steps.begin() + static_cast<std::ptrdiff_t>(idx), base.steps.end());
        t.source_node_ids.insert(t.source_node_ids.end(),
                                 base.source_node_ids.begin() + static_cast<std::ptrdiff_t>(idx),
                                 base.source_node_ids.end());
        out.push_back(std::move(t));
        ++emitted;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// traj-v1 JSONL

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"observation", serialize(*s.observation)},
                     {"thought", s.thought},
                     {"action", format_action(s.action)}});
  }
  nlohmann::json j = {{"version", std::string(kTrajectoryFormatVersion)},
                      {"kind", t.kind == TrajectoryKind::valuable ? "valuable" : "rollback"},
                      {"task_id", t.query.task_id},
                      {"instruction", t.query.instruction},
                      {"terminal_value", t.terminal_value},
                      {"source_node_ids", t.source_node_ids},
                      {"steps", std::move(steps)}};
  if (t.query.site_hint) j["site_hint"] = *t.query.site_hint;
  return j;
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != kTrajectoryFormatVersion) {
      throw Error(Errc::invalid_argument, "unsupported trajectory version");
    }
    Trajectory t;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "valuable") {
      t.kind = TrajectoryKind::valuable;
    } else if (kind == "rollback") {
      t.kind = TrajectoryKind::rollback;
    } else {
      throw Error(Errc::invalid_argument, "unknown trajectory kind '" + kind + "'");
    }
    t.query.task_id = j.at("task_id").get<std::string>();
    t.query.instruction = j.at("instruction").get<std::string>();
    if (j.contains("site_hint")) t.query.site_hint = j["site_hint"].get<std::string>();
    t.terminal_value = j.at("terminal_value").get<double>();
    t.source_node_ids = j.value("source_node_ids", std::vector<int>{});
    for (const auto& s : j.at("steps")) {
      t.steps.push_back({share(parse(s.at("observation").get<std::string>())), s.at("thought").get<std::string>(),
                         parse_action(s.at("action").get<std::string>())});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad trajectory record: ") + e.what());
  }
}

}  // namespace websynth
