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

// Deterministic page-graph web environment.
//
// A world is a set of pages (url + a11y tree) and transition rules keyed on
// (kind, element id[, typed content]) or (goto, url). Unmatched actions are
// no-ops. Worlds load from `world-v1` JSON files. The scripted model
// backends at the bottom turn a world into an exact world model, a reward
// model and a heuristic policy.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"
#include "websynth/error.hpp"
#include "websynth/gateway.hpp"
#include "websynth/hash.hpp"
#include "websynth/text.hpp"

namespace websynth {

inline constexpr std::string_view kWorldFormatVersion = "world-v1";

struct TransitionRule {
  ActionKind kind = ActionKind::click;
  std::optional<std::int64_t> element_id;  // click / type
  std::optional<std::string> content;      // type: routes only this content
  std::optional<std::string> url;          // goto
  std::string target;                      // page id
};

struct PageSpec {
  std::string page_id;
  std::string url;
  ObservationPtr tree;
  std::vector<TransitionRule> transitions;
  std::optional<double> goal_score;
};

enum class SuccessKind { string_match, url_match };

struct SuccessPredicate {
  SuccessKind kind = SuccessKind::url_match;
  std::string expected;
};

struct SessionState {
  std::string current;
  std::vector<std::string> history;
  int steps_taken = 0;

  bool operator==(const SessionState&) const = default;
};

struct StepResult {
  SessionState session;
  ObservationPtr observation;
};

namespace detail {

inline std::string normalize_answer(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : trim(text)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline std::string normalize_url(std::string_view url) {
  std::string out(trim(url));
  while (out.size() > 1 && out.back() == '/') out.pop_back();
  return out;
}

inline bool rules_overlap(const TransitionRule& a, const TransitionRule& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == ActionKind::go_to) return normalize_url(*a.url) == normalize_url(*b.url);
  if (a.element_id != b.element_id) return false;
  if (a.kind == ActionKind::type && a.content && b.content) {
    return normalize_answer(*a.content) == normalize_answer(*b.content);
  }
  return true;
}

}  // namespace detail

/// Immutable world definition with page and transition lookups.
class World {
 public:
  World(std::string world_id, std::string entry_page, std::vector<PageSpec> pages, TaskQuery task,
        SuccessPredicate success)
      : world_id_(std::move(world_id)),
        entry_page_(std::move(entry_page)),
        pages_(std::move(pages)),
        task_(std::move(task)),
        success_(std::move(success)) {
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < pages_.size(); ++i) {
      const auto& page = pages_[i];
      if (!by_id_.emplace(page.page_id, i).second) problems.push_back("duplicate page id '" + page.page_id + "'");
      if (page.url.empty()) problems.push_back("page '" + page.page_id + "' has an empty url");
      if (!by_url_.emplace(detail::normalize_url(page.url), i).second) {
        problems.push_back("url '" + page.url + "' used by more than one page");
      }
      if (!page.tree) {
        problems.push_back("page '" + page.page_id + "' has no tree");
        continue;
      }
      if (page.tree->url != page.url) {
        problems.push_back("page '" + page.page_id + "' tree url '" + page.tree->url +
                           "' differs from page url '" + page.url + "'");
      }
      try {
        validate(*page.tree);
      } catch (const Error& e) {
        problems.push_back("page '" + page.page_id + "': " + e.what());
      }
      if (page.goal_score && (*page.goal_score < 0 || *page.goal_score > 1)) {
        problems.push_back("page '" + page.page_id + "' goal_score outside [0,1]");
      }
    }
    if (!by_id_.count(entry_page_)) problems.push_back("entry page '" + entry_page_ + "' does not exist");
    for (const auto& page : pages_) {
      for (std::size_t r = 0; r < page.transitions.size(); ++r) {
        const auto& rule = page.transitions[r];
        const std::string where = "page '" + page.page_id + "' transition " + std::to_string(r);
        if (!by_id_.count(rule.target)) problems.push_back(where + " targets unknown page '" + rule.target + "'");
        switch (rule.kind) {
          case ActionKind::click:
          case ActionKind::type:
            if (!rule.element_id) {
              problems.push_back(where + " needs an element_id");
            } else if (page.tree && !find_element(*page.tree, *rule.element_id)) {
              problems.push_back(where + " references missing element [" + std::to_string(*rule.element_id) + "]");
            }
            break;
          case ActionKind::go_to:
            if (!rule.url) problems.push_back(where + " needs a url");
            break;
          default:
            problems.push_back(where + " has unsupported kind '" + std::string(action_kind_name(rule.kind)) + "'");
        }
        if ((rule.kind == ActionKind::click || rule.kind == ActionKind::type) && !rule.element_id) continue;
        if (rule.kind == ActionKind::go_to && !rule.url) continue;
        for (std::size_t q = 0; q < r; ++q) {
          const auto& other = page.transitions[q];
          if (other.kind == ActionKind::go_to ? !other.url : !other.element_id) continue;
          if (detail::rules_overlap(rule, other)) {
            problems.push_back(where + " is ambiguous with transition " + std::to_string(q));
          }
        }
      }
    }
    if (validate_task(problems); !problems.empty()) {
      std::string message = "world '" + world_id_ + "' is invalid:";
      for (const auto& p : problems) message += "\n  - " + p;
      throw Error(Errc::invalid_world, message);
    }
  }

  const std::string& world_id() const { return world_id_; }
  const std::string& entry_page() const { return entry_page_; }
  const std::vector<PageSpec>& pages() const { return pages_; }
  const TaskQuery& task() const { return task_; }
  const SuccessPredicate& success() const { return success_; }

  const PageSpec& page(const std::string& page_id) const {
    auto it = by_id_.find(page_id);
    if (it == by_id_.end()) throw Error(Errc::invalid_argument, "unknown page '" + page_id + "'");
    return pages_[it->second];
  }

  const PageSpec* page_by_url(std::string_view url) const {
    auto it = by_url_.find(detail::normalize_url(url));
    return it == by_url_.end() ? nullptr : &pages_[it->second];
  }

  SessionState start() const { return {entry_page_, {}, 0}; }

  /// Target page for a concrete action on a page, if any rule matches.
  std::optional<std::string> route(const std::string& page_id, const Action& action) const {
    const PageSpec& from = page(page_id);
    for (const auto& rule : from.transitions) {
      if (rule.kind != action.kind) continue;
      if (rule.kind == ActionKind::go_to) {
        if (detail::normalize_url(*rule.url) == detail::normalize_url(*action.url)) return rule.target;
        continue;
      }
      if (rule.element_id != action.element_id) continue;
      if (rule.kind == ActionKind::type && rule.content &&
          detail::normalize_answer(*rule.content) != detail::normalize_answer(action.content.value_or(""))) {
        continue;
      }
      return rule.target;
    }
    if (action.kind == ActionKind::go_to) {
      if (const PageSpec* known = page_by_url(*action.url)) return known->page_id;
    }
    return std::nullopt;
  }

 private:
  void validate_task(std::vector<std::string>& problems) const {
    if (task_.instruction.empty()) problems.push_back("task instruction is empty");
    if (success_.expected.empty()) problems.push_back("success predicate has no expected value");
  }

  std::string world_id_;
  std::string entry_page_;
  std::vector<PageSpec> pages_;
  TaskQuery task_;
  SuccessPredicate success_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> by_url_;
};

using WorldPtr = std::shared_ptr<const World>;

/// Pure transition function over (world, session, action).
inline StepResult step(const World& world, SessionState session, const Action& action) {
  ++session.steps_taken;
  switch (action.kind) {
    case ActionKind::click:
    case ActionKind::type:
    case ActionKind::go_to:
      if (auto target = world.route(session.current, action); target && *target != session.current) {
        session.history.push_back(session.current);
        session.current = *target;
      }
      break;
    case ActionKind::go_back:
      if (!session.history.empty()) {
        session.current = session.history.back();
        session.history.pop_back();
      }
      break;
    case ActionKind::hover:
    case ActionKind::scroll:
    case ActionKind::stop:
      break;
  }
  ObservationPtr tree = world.page(session.current).tree;
  return {std::move(session), std::move(tree)};
}

/// 1.0 when the success predicate holds, else the page's goal_score, else 0.
inline double evaluate(const World& world, const SessionState& session,
                       const std::optional<std::string>& stop_answer = std::nullopt) {
  const PageSpec& page = world.page(session.current);
  const auto& success = world.success();
  if (success.kind == SuccessKind::string_match) {
    if (stop_answer && detail::normalize_answer(*stop_answer) == detail::normalize_answer(success.expected)) {
      return 1.0;
    }
  } else if (detail::normalize_url(page.url) == detail::normalize_url(success.expected)) {
    return 1.0;
  }
  return page.goal_score.value_or(0.0);
}

// ---------------------------------------------------------------------------
// world-v1 JSON

namespace detail {

inline ActionKind rule_kind(const std::string& name, std::vector<std::string>& problems, const std::string& where) {
  if (name == "click") return ActionKind::click;
  if (name == "type") return ActionKind::type;
  if (name == "goto") return ActionKind::go_to;
  problems.push_back(where + " has unsupported kind '" + name + "'");
  return ActionKind::click;
}

}  // namespace detail

/// Builds a World from a world-v1 document, reporting every problem found.
inline WorldPtr world_from_json(const nlohmann::json& doc) {
  std::vector<std::string> problems;
  auto fail_all = [&](const std::string& id) {
    std::string message = "world '" + id + "' is invalid:";
    for (const auto& p : problems) message += "\n  - " + p;
    throw Error(Errc::invalid_world, message);
  };
  const std::string id = doc.value("world_id", std::string());
  if (doc.value("version", std::string()) != kWorldFormatVersion) {
    problems.push_back("version must be '" + std::string(kWorldFormatVersion) + "'");
  }
  if (id.empty()) problems.push_back("world_id is missing");

  TaskQuery task;
  if (doc.contains("task") && doc["task"].is_object()) {
    const auto& t = doc["task"];
    task.instruction = t.value("instruction", std::string());
    task.task_id = t.value("task_id", id);
    if (t.contains("site_hint") && t["site_hint"].is_string()) task.site_hint = t["site_hint"].get<std::string>();
  } else {
    problems.push_back("task is missing");
  }

  SuccessPredicate success;
  if (doc.contains("success") && doc["success"].is_object()) {
    const std::string kind = doc["success"].value("kind", std::string());
    if (kind == "string_match") {
      success.kind = SuccessKind::string_match;
    } else if (kind != "url_match") {
      problems.push_back("success.kind must be string_match or url_match");
    }
    success.expected = doc["success"].value("expected", std::string());
  } else {
    problems.push_back("success predicate is missing");
  }

  std::vector<PageSpec> pages;
  if (!doc.contains("pages") || !doc["pages"].is_array()) {
    problems.push_back("pages array is missing");
  } else {
    for (std::size_t i = 0; i < doc["pages"].size(); ++i) {
      const auto& p = doc["pages"][i];
      PageSpec page;
      page.page_id = p.value("page_id", std::string());
      const std::string where = "page '" + (page.page_id.empty() ? std::to_string(i) : page.page_id) + "'";
      if (page.page_id.empty()) problems.push_back(where + " has no page_id");
      page.url = p.value("url", std::string());
      try {
        page.tree = share(parse(p.value("tree", std::string())));
      } catch (const Error& e) {
        problems.push_back(where + " tree: " + e.what());
      }
      if (p.contains("goal_score") && !p["goal_score"].is_null()) page.goal_score = p["goal_score"].get<double>();
      for (const auto& r : p.value("transitions", nlohmann::json::array())) {
        TransitionRule rule;
        rule.kind = detail::rule_kind(r.value("kind", std::string()), problems, where);
        if (r.contains("element_id")) rule.element_id = r["element_id"].get<std::int64_t>();
        if (r.contains("content")) rule.content = r["content"].get<std::string>();
        if (r.contains("url")) rule.url = r["url"].get<std::string>();
        rule.target = r.value("target", std::string());
        page.transitions.push_back(std::move(rule));
      }
      pages.push_back(std::move(page));
    }
  }
  if (!problems.empty()) fail_all(id);
  return std::make_shared<const World>(id, doc.value("entry_page", std::string()), std::move(pages),
                                       std::move(task), std::move(success));
}

inline nlohmann::json world_to_json(const World& world) {
  nlohmann::json pages = nlohmann::json::array();
  for (const auto& page : world.pages()) {
    nlohmann::json transitions = nlohmann::json::array();
    for (const auto& rule : page.transitions) {
      nlohmann::json r = {{"kind", std::string(action_kind_name(rule.kind))}, {"target", rule.target}};
      if (rule.element_id) r["element_id"] = *rule.element_id;
      if (rule.content) r["content"] = *rule.content;
      if (rule.url) r["url"] = *rule.url;
      transitions.push_back(std::move(r));
    }
    nlohmann::json p = {{"page_id", page.page_id},
                        {"url", page.url},
                        {"tree", serialize(*page.tree)},
                        {"transitions", std::move(transitions)}};
    if (page.goal_score) p["goal_score"] = *page.goal_score;
    pages.push_back(std::move(p));
  }
  nlohmann::json task = {{"instruction", world.task().instruction}, {"task_id", world.task().task_id}};
  if (world.task().site_hint) task["site_hint"] = *world.task().site_hint;
  return {{"version", std::string(kWorldFormatVersion)},
          {"world_id", world.world_id()},
          {"entry_page", world.entry_page()},
          {"task", std::move(task)},
          {"success",
           {{"kind", world.success().kind == SuccessKind::url_match ? "url_match" : "string_match"},
            {"expected", world.success().expected}}},
          {"pages", std::move(pages)}};
}

inline WorldPtr load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open world file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_world, "world file '" + path + "' is not valid JSON: " + e.what());
  }
  return world_from_json(doc);
}

// ---------------------------------------------------------------------------
// Scripted backends

namespace detail {

inline bool tokens_related(const std::string& a, const std::string& b) {
  if (a == b) return a.size() >= 3;
  std::size_t common = 0;
  while (common < a.size() && common < b.size() && a[common] == b[common]) ++common;
  return common >= 5;
}

inline int keyword_overlap(const std::vector<std::string>& query, std::string_view text) {
  int score = 0;
  for (const auto& token : websynth::word_tokens(text)) {
    for (const auto& q : query) {
      if (tokens_related(token, q)) {
        ++score;
        break;
      }
    }
  }
  return score;
}

/// Session reconstructed from a search path: replays the path actions from
/// the first observation's page; falls back to the current page alone when
/// the path does not land on the observation.
inline std::optional<SessionState> replay_session(const World& world, std::span<const HistoryStep> history,
                                                  const A11yTree& observation) {
  const PageSpec* current = world.page_by_url(observation.url);
  if (!current) return std::nullopt;
  if (!history.empty() && history.front().observation) {
    if (const PageSpec* first = world.page_by_url(history.front().observation->url)) {
      SessionState session{first->page_id, {}, 0};
      for (const auto& s : history) session = step(world, std::move(session), s.proposal.action).session;
      if (session.current == current->page_id) return session;
    }
  }
  return SessionState{current->page_id, {}, 0};
}

inline std::string render_observation_answer(const A11yTree& tree) {
  return std::string(prompts::kThinkPrefix) + " The action leads to the page '" + tree.tab_title + "'.\n" +
         std::string(prompts::kObservationAnchor) + " ```\n" + serialize(tree) + "```\n[END]";
}

}  // namespace detail

/// Exact world model: answers with the simworld step result.
class SimWorldModel : public WorldBackend {
 public:
  explicit SimWorldModel(WorldPtr world) : world_(std::move(world)) {}

  std::string predict(const WorldRequest& request) override {
    return detail::render_observation_answer(*next(request));
  }

  std::optional<std::string> anticipate_url(const WorldRequest& request) override {
    return next(request)->url;
  }

 private:
  ObservationPtr next(const WorldRequest& request) const {
    auto session = detail::replay_session(*world_, request.history, request.observation);
    if (!session) return share(request.observation);
    return step(*world_, std::move(*session), request.action).observation;
  }

  WorldPtr world_;
};

/// Reward model over evaluate(): score = 1 + round(4 * value).
class SimRewardModel : public RewardBackend {
 public:
  explicit SimRewardModel(WorldPtr world) : world_(std::move(world)) {}

  std::string judge(const RewardRequest& request) override {
    const PageSpec* page = world_->page_by_url(request.current.url);
    double value = 0.0;
    if (page) {
      std::optional<std::string> answer;
      if (!request.steps.empty() && request.steps.back().proposal.action.kind == ActionKind::stop) {
        answer = request.steps.back().proposal.action.content;
      }
      value = evaluate(*world_, SessionState{page->page_id, {}, 0}, answer);
    }
    const int score = 1 + static_cast<int>(std::lround(4.0 * value));
    return "Reason: the trajectory reaches '" + request.current.tab_title + "' with task progress " +
           std::to_string(value) + ".\nScore: " + std::to_string(score);
  }

 private:
  WorldPtr world_;
};

/// Heuristic policy: actions with a matching transition on the current
/// page, query-keyword matches first, the rest in seeded order. Proposes
/// stop on pages that satisfy the task and `stop [N/A]` on dead ends.
class SimPolicy : public PolicyBackend {
 public:
  explicit SimPolicy(WorldPtr world) : world_(std::move(world)) {}

  std::vector<std::string> sample(const PolicyRequest& request) override {
    auto candidates = enumerate(request);
    std::vector<std::string> out;
    for (int i = 0; i < request.count; ++i) {
      out.push_back(candidates[static_cast<std::size_t>(request.first_sample + i) % candidates.size()]);
    }
    return out;
  }

  /// All candidate responses in proposal order.
  std::vector<std::string> enumerate(const PolicyRequest& request) const {
    struct Candidate {
      Action action;
      std::string label;
      int relevance = 0;
    };
    std::vector<Candidate> candidates;
    const auto query = word_tokens(request.query.instruction);
    const PageSpec* page = world_->page_by_url(request.observation.url);
    bool solved = false;
    if (page) {
      solved = evaluate(*world_, SessionState{page->page_id, {}, 0}) >= 1.0;
      std::set<std::string> seen;
      for (const auto& rule : page->transitions) {
        Candidate c;
        if (rule.kind == ActionKind::go_to) {
          c.action = Action::go_to(*rule.url);
          c.label = *rule.url;
        } else {
          const A11yNode* node = find_element(request.observation, *rule.element_id);
          if (!node) continue;
          c.label = node->text;
          c.action = rule.kind == ActionKind::type
                         ? Action::type(*rule.element_id, rule.content.value_or(node->text), true)
                         : Action::click(*rule.element_id);
        }
        if (!seen.insert(canonicalize(c.action)).second) continue;
        c.relevance = detail::keyword_overlap(query, c.label);
        candidates.push_back(std::move(c));
      }
    }
    // seeded Fisher-Yates, then stable by relevance
    std::mt19937_64 rng(mix_seed(request.seed, request.observation.url));
    for (std::size_t i = candidates.size(); i > 1; --i) {
      std::swap(candidates[i - 1], candidates[rng() % i]);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.relevance > b.relevance; });

    std::vector<std::string> out;
    const std::string objective = "Let's think step-by-step. The objective is '" + request.query.instruction + "'. ";
    if (solved || candidates.empty()) {
      const std::string answer = solved ? request.observation.tab_title : "N/A";
      out.push_back(objective + (solved ? "The current page completes the objective. "
                                        : "Nothing on this page moves the task forward. ") +
                    std::string(kActionAnchor) + " ```" + format_action(Action::stop(answer)) + "```");
    }
    for (const auto& c : candidates) {
      out.push_back(objective + "The element '" + c.label + "' on page '" + request.observation.tab_title +
                    "' can move the task forward. " + std::string(kActionAnchor) + " ```" +
                    format_action(c.action) + "```");
    }
    return out;
  }

 private:
  WorldPtr world_;
};

inline std::shared_ptr<WorldBackend> as_world_model(WorldPtr world) {
  return std::make_shared<SimWorldModel>(std::move(world));
}
inline std::shared_ptr<RewardBackend> as_reward_model(WorldPtr world) {
  return std::make_shared<SimRewardModel>(std::move(world));
}
inline std::shared_ptr<PolicyBackend> as_policy(WorldPtr world) {
  return std::make_shared<SimPolicy>(std::move(world));
}

}  // namespace websynth
