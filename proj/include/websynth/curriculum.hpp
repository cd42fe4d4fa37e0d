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

// UI-understanding datasets built from transition triples (before, action,
// after): dense captions, element functionality and state transitions, plus
// per-step behavior-cloning records flattened from trajectories.
//
// Record builders take a model (captioner, describer, narrator). Scripted
// versions derive their text from the accessibility tree alone and are used
// for offline runs and tests.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"
#include "websynth/error.hpp"
#include "websynth/extraction.hpp"
#include "websynth/gateway.hpp"
#include "websynth/hash.hpp"
#include "websynth/prompts.hpp"
#include "websynth/simworld.hpp"

namespace websynth {

inline constexpr std::string_view kTripleFormatVersion = "triple-v1";
inline constexpr std::string_view kSftFormatVersion = "sft-v1";
inline constexpr std::string_view kTemplateFormatVersion = "templates-v1";

struct TransitionTriple {
  A11yTree before;
  Action action;
  A11yTree after;
  std::string source;

  bool operator==(const TransitionTriple&) const = default;
};

inline nlohmann::json triple_to_json(const TransitionTriple& t) {
  return {{"version", std::string(kTripleFormatVersion)},
          {"source", t.source},
          {"before", serialize(t.before)},
          {"action", format_action(t.action)},
          {"after", serialize(t.after)}};
}

inline TransitionTriple triple_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != kTripleFormatVersion) {
      throw Error(Errc::invalid_argument, "unsupported triple version");
    }
    TransitionTriple t{parse(j.at("before").get<std::string>()), parse_action(j.at("action").get<std::string>()),
                       parse(j.at("after").get<std::string>()), j.at("source").get<std::string>()};
    if (t.action.kind == ActionKind::stop) throw Error(Errc::invalid_argument, "triple action cannot be stop");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad triple record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Records

enum class TaskClass { dense_caption, element_functionality, state_transition, behavior_clone };

inline constexpr std::array<TaskClass, 3> kUiClasses = {TaskClass::dense_caption, TaskClass::element_functionality,
                                                       TaskClass::state_transition};

inline std::string_view task_class_name(TaskClass c) {
  switch (c) {
    case TaskClass::dense_caption: return "dense_caption";
    case TaskClass::element_functionality: return "element_functionality";
    case TaskClass::state_transition: return "state_transition";
    case TaskClass::behavior_clone: return "behavior_clone";
  }
  return "?";
}

inline TaskClass task_class_from_name(std::string_view name) {
  for (auto c : {TaskClass::dense_caption, TaskClass::element_functionality, TaskClass::state_transition,
                 TaskClass::behavior_clone}) {
    if (task_class_name(c) == name) return c;
  }
  throw Error(Errc::invalid_argument, "unknown task class '" + std::string(name) + "'");
}

/// Lesson order: the three UI classes first, trajectories last.
inline int stage_of(TaskClass c) {
  switch (c) {
    case TaskClass::dense_caption: return 1;
    case TaskClass::element_functionality: return 2;
    case TaskClass::state_transition: return 3;
    case TaskClass::behavior_clone: return 4;
  }
  return 0;
}

struct SFTRecord {
  TaskClass task_class = TaskClass::dense_caption;
  int stage = 1;
  std::string instruction;
  std::string context;
  std::string response;
  std::string template_id;
  std::string provenance;
  std::map<std::string, std::string> slots;  // template placeholders

  bool operator==(const SFTRecord&) const = default;
};

inline void validate(const SFTRecord& r) {
  if (r.instruction.empty() || r.response.empty()) {
    throw Error(Errc::invalid_argument, "record " + r.provenance + " has an empty instruction or response");
  }
}

inline nlohmann::json record_to_json(const SFTRecord& r) {
  return {{"version", std::string(kSftFormatVersion)},
          {"task_class", std::string(task_class_name(r.task_class))},
          {"stage", r.stage},
          {"template_id", r.template_id},
          {"instruction", r.instruction},
          {"context", r.context},
          {"response", r.response},
          {"provenance", r.provenance},
          {"slots", r.slots}};
}

inline SFTRecord record_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != kSftFormatVersion) {
      throw Error(Errc::invalid_argument, "unsupported record version");
    }
    SFTRecord r;
    r.task_class = task_class_from_name(j.at("task_class").get<std::string>());
    r.stage = j.at("stage").get<int>();
    r.template_id = j.at("template_id").get<std::string>();
    r.instruction = j.at("instruction").get<std::string>();
    r.context = j.at("context").get<std::string>();
    r.response = j.at("response").get<std::string>();
    r.provenance = j.at("provenance").get<std::string>();
    r.slots = j.value("slots", std::map<std::string, std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad sft record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Instruction templates

struct InstructionTemplate {
  std::string id;
  std::string text;  // may contain {id} and {interaction}

  bool operator==(const InstructionTemplate&) const = default;
};

struct TemplatePool {
  std::map<TaskClass, std::vector<InstructionTemplate>> by_class;

  const std::vector<InstructionTemplate>& templates(TaskClass c) const {
    static const std::vector<InstructionTemplate> none;
    auto it = by_class.find(c);
    return it == by_class.end() ? none : it->second;
  }
  bool operator==(const TemplatePool&) const = default;
};

/// Pool shipped as assets/templates-v1.json; the first entry of each class
/// is used when a record is built, the others by enhance_instructions.
inline TemplatePool default_template_pool() {
  TemplatePool pool;
  pool.by_class[TaskClass::dense_caption] = {
      {"cap-v1", "Detail the main sections and functionalities available in this interface."},
      {"cap-v2", "Describe the layout of this page and what each region lets a user do."},
      {"cap-v3", "Give a structured overview of the content and controls shown on this screen."}};
  pool.by_class[TaskClass::element_functionality] = {
      {"fn-v1", "What job does the element [{id}] accomplish?"},
      {"fn-v2", "Explain what happens for the user when element [{id}] is used."},
      {"fn-v3", "Describe the purpose of the element [{id}] on this page."}};
  pool.by_class[TaskClass::state_transition] = {
      {"tr-v1", "Predict how the UI evolves when this user interaction occurs: {interaction}"},
      {"tr-v2", "After the interaction {interaction}, how will the page change?"},
      {"tr-v3", "Describe the next page state that follows this interaction: {interaction}"}};
  return pool;
}

inline nlohmann::json template_pool_to_json(const TemplatePool& pool) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [c, list] : pool.by_class) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& t : list) items.push_back({{"id", t.id}, {"text", t.text}});
    classes[std::string(task_class_name(c))] = std::move(items);
  }
  return {{"version", std::string(kTemplateFormatVersion)}, {"classes", std::move(classes)}};
}

inline TemplatePool template_pool_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != kTemplateFormatVersion) {
      throw Error(Errc::config_error, "unsupported template pool version");
    }
    TemplatePool pool;
    for (const auto& [name, items] : j.at("classes").items()) {
      auto& list = pool.by_class[task_class_from_name(name)];
      for (const auto& item : items) {
        list.push_back({item.at("id").get<std::string>(), item.at("text").get<std::string>()});
      }
      if (list.empty()) throw Error(Errc::config_error, "template class '" + name + "' is empty");
    }
    return pool;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, std::string("bad template pool: ") + e.what());
  }
}

inline TemplatePool load_template_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open template pool '" + path + "'");
  try {
    return template_pool_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config_error, "template pool '" + path + "': " + e.what());
  }
}

inline std::string fill_template(std::string_view text, const std::map<std::string, std::string>& slots) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '{') {
      const auto close = text.find('}', i);
      if (close != std::string_view::npos) {
        auto it = slots.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(const A11yTree& page) = 0;
};

class Describer {
 public:
  virtual ~Describer() = default;
  /// `context` is the compressed fragment around the target.
  virtual std::string describe(const A11yTree& context, std::int64_t target_id) = 0;
};

class Narrator {
 public:
  virtual ~Narrator() = default;
  virtual std::string narrate(const TransitionTriple& triple, const A11yDiff& changes) = 0;
};

class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual std::string paraphrase(const std::string& instruction) = 0;
};

namespace detail {

inline std::string quoted_list(const std::vector<std::string>& items, std::size_t limit) {
  std::string out;
  const std::size_t n = std::min(items.size(), limit);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += i + 1 == n ? " and " : ", ";
    out += "'" + items[i] + "'";
  }
  return out;
}

inline std::string counted(std::size_t n, std::string_view noun) {
  return std::to_string(n) + " " + std::string(noun) + (n == 1 ? "" : "s");
}

inline bool contains_word(std::string_view text, std::string_view word) {
  return to_lower(text).find(word) != std::string::npos;
}

inline std::string element_label(const A11yNode& node) {
  return "'type:" + node.role + ", text:" + node.text + "'";
}

// Line text of a serialized node, reparsed: role and text.
inline std::optional<A11yNode> reparse_line(const std::string& line) {
  try {
    return parse_node_line(detail::trim(line));
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline std::vector<std::string> salient_texts(const std::vector<std::string>& lines, bool prefer_inputs) {
  std::vector<std::string> primary;
  std::vector<std::string> rest;
  for (const auto& line : lines) {
    auto node = reparse_line(line);
    if (!node || node->text.empty()) continue;
    const bool input = is_text_entry_role(node->role) || node->role == "radio" || node->role == "checkbox";
    const bool heading = node->role == "heading" || node->role == "link" || node->role == "article";
    (prefer_inputs ? input : heading) ? primary.push_back(node->text) : rest.push_back(node->text);
  }
  primary.insert(primary.end(), rest.begin(), rest.end());
  return primary;
}

}  // namespace detail

/// "click [7716], where [7716] is 'type:link, text:Submit'"
inline std::string describe_interaction(const Action& action, const A11yTree& before) {
  std::string out = format_action(action);
  if (action.element_id) {
    if (const A11yNode* node = find_element(before, *action.element_id)) {
      out += ", where [" + std::to_string(*action.element_id) + "] is " + detail::element_label(*node);
    }
  }
  return out;
}

/// Layout summary from roles: sections, search bars, tables.
class ScriptedCaptioner : public Captioner {
 public:
  std::string caption(const A11yTree& page) override {
    std::string out = "The page '" + page.tab_title + "' at " + page.url + " is organized into ";
    std::vector<std::string> sections;
    for (const auto& child : page.root.children) {
      std::size_t controls = 0;
      for_each_node(A11yTree{page.url, page.tab_title, child}, [&](const A11yNode& n, std::size_t) {
        if (n.element_id && is_interactive_role(n.role)) ++controls;
      });
      std::string s = "a " + child.role + " region";
      if (!child.text.empty()) s += " '" + child.text + "'";
      s += " with " + detail::counted(controls, "interactive element");
      sections.push_back(std::move(s));
    }
    if (sections.empty()) {
      out += "a single empty area.";
    } else {
      for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i > 0) out += i + 1 == sections.size() ? " and " : ", ";
        out += sections[i];
      }
      out += ".";
    }

    std::vector<std::string> searches;
    std::vector<const A11yNode*> tables;
    for_each_node(page, [&](const A11yNode& n, std::size_t) {
      if (n.role == "searchbox" || (is_text_entry_role(n.role) && detail::contains_word(n.text, "search"))) {
        searches.push_back(n.text);
      }
      if (n.role == "table") tables.push_back(&n);
    });
    for (const auto& label : searches) {
      out += " A search bar labeled '" + label + "' lets users look up specific entries.";
    }
    for (const A11yNode* table : tables) {
      std::vector<std::string> columns;
      std::size_t rows = 0;
      for_each_node(A11yTree{page.url, page.tab_title, *table}, [&](const A11yNode& n, std::size_t) {
        if (n.role == "columnheader") columns.push_back(n.text);
        if (n.role == "row") ++rows;
      });
      if (!columns.empty() && rows > 0) --rows;  // header row
      out += " A table lists " + std::to_string(rows) + " rows";
      if (!columns.empty()) out += " with columns for " + detail::quoted_list(columns, columns.size());
      out += ".";
    }

    const auto controls = interactive_elements(page);
    std::size_t links = 0, buttons = 0, inputs = 0;
    for (const A11yNode* n : controls) {
      if (n->role == "link") ++links;
      if (n->role == "button") ++buttons;
      if (is_text_entry_role(n->role)) ++inputs;
    }
    out += " Overall the interface offers " + detail::counted(links, "link") + ", " +
           detail::counted(buttons, "button") + " and " + detail::counted(inputs, "input field") + ".";
    return out;
  }
};

/// Role-driven description; mentions filtering when the neighborhood says so.
class ScriptedDescriber : public Describer {
 public:
  std::string describe(const A11yTree& context, std::int64_t target_id) override {
    const A11yNode* target = find_element(context, target_id);
    if (!target) throw Error(Errc::unknown_element, "element " + std::to_string(target_id) + " not in context");
    bool filtering = false;
    for_each_node(context, [&](const A11yNode& n, std::size_t) {
      if (detail::contains_word(n.text, "filter")) filtering = true;
    });
    const std::string& label = target->text;
    if (filtering && (target->role == "link" || target->role == "button" || target->role == "tab" ||
                      target->role == "option" || target->role == "menuitem")) {
      return "The functionality of this element is to filter the listed items based on specific " +
             detail::to_lower(label) + ". By selecting '" + label +
             "', users can narrow down the results to entries that match the chosen category.";
    }
    if (target->role == "link") {
      return "The functionality of this element is to navigate to the '" + label +
             "' page, where users can view its content.";
    }
    if (target->role == "button") {
      return "The functionality of this element is to trigger the '" + label + "' action on the current page.";
    }
    if (is_text_entry_role(target->role)) {
      return "The functionality of this element is to accept text input for '" + label +
             "', which the page uses when the form is submitted.";
    }
    return "The functionality of this element is to let users interact with the " + target->role + " '" + label +
           "'.";
  }
};

/// Change summary from the diff, then "In summary, " plus a caption of the
/// page that results.
class ScriptedNarrator : public Narrator {
 public:
  std::string narrate(const TransitionTriple& triple, const A11yDiff& changes) override {
    std::string out;
    const std::string interaction = describe_interaction(triple.action, triple.before);
    if (changes.empty() && triple.before.url == triple.after.url) {
      out = "The interaction " + interaction + " leaves the page as it was: there is no layout change.";
    } else {
      out = "After " + interaction + ", the page moves from '" + triple.before.tab_title + "' to '" +
            triple.after.tab_title + "'.";
      std::vector<std::string> removed = detail::salient_texts(changes.removed, false);
      std::vector<std::string> added = detail::salient_texts(changes.added, true);
      if (!removed.empty()) {
        out += " This is evident from the removal of " + std::to_string(changes.removed.size()) +
               " elements of the previous content, such as " + detail::quoted_list(removed, 4) + ".";
      }
      if (!added.empty()) {
        bool inputs = false;
        for (const auto& line : changes.added) {
          auto node = detail::reparse_line(line);
          if (node && is_text_entry_role(node->role)) inputs = true;
        }
        out += std::string(" The new page adds ") + std::to_string(changes.added.size()) +
               (inputs ? " elements including input fields" : " elements") + " such as " +
               detail::quoted_list(added, 4) + ".";
      }
      if (!changes.changed.empty()) {
        out += " " + std::to_string(changes.changed.size()) + " elements keep their place but change their text.";
      }
    }
    std::string caption = ScriptedCaptioner().caption(triple.after);
    if (!caption.empty()) caption[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(caption[0])));
    out += "\n\nIn summary, " + caption;
    return out;
  }
};

namespace detail {

inline std::string chat_once(ChatClient& client, const std::string& web_state, const std::string& instruction,
                             Errc unavailable) {
  try {
    auto out = client.complete({{"user", prompts::ui_user_message(web_state, instruction)}}, 0.0, 1);
    if (out.empty() || trim(out.front()).empty()) throw Error(unavailable, "empty completion");
    return std::string(trim(out.front()));
  } catch (const Error& e) {
    if (e.code() == unavailable) throw;
    throw Error(unavailable, e.what());
  }
}

}  // namespace detail

class ChatCaptioner : public Captioner {
 public:
  explicit ChatCaptioner(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  std::string caption(const A11yTree& page) override {
    return detail::chat_once(*client_, serialize(page), default_template_pool().templates(TaskClass::dense_caption)[0].text,
                             Errc::captioner_unavailable);
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

class ChatDescriber : public Describer {
 public:
  explicit ChatDescriber(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  std::string describe(const A11yTree& context, std::int64_t target_id) override {
    const auto& t = default_template_pool().templates(TaskClass::element_functionality)[0];
    return detail::chat_once(*client_, serialize(context), fill_template(t.text, {{"id", std::to_string(target_id)}}),
                             Errc::describer_unavailable);
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

class ChatNarrator : public Narrator {
 public:
  explicit ChatNarrator(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  std::string narrate(const TransitionTriple& triple, const A11yDiff&) override {
    const auto& t = default_template_pool().templates(TaskClass::state_transition)[0];
    const std::string state = serialize(triple.before) + "\nNEXT PAGE:\n" + serialize(triple.after);
    std::string out =
        detail::chat_once(*client_, state,
                          fill_template(t.text, {{"interaction", describe_interaction(triple.action, triple.before)}}) +
                              "\nDescribe the change, then caption the new page after 'In summary,'.",
                          Errc::narrator_unavailable);
    if (out.find("In summary,") == std::string::npos) {
      throw Error(Errc::narrator_unavailable, "narration lacks an 'In summary,' caption");
    }
    return out;
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

class ChatParaphraser : public Paraphraser {
 public:
  explicit ChatParaphraser(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  std::string paraphrase(const std::string& instruction) override {
    auto out = client_->complete(
        {{"user", "Rewrite this instruction with different wording and the same meaning. Keep any bracketed "
                  "element ids unchanged. Reply with the rewritten instruction only.\n\n" +
                      instruction}},
        0.7, 1);
    if (out.empty() || detail::trim(out.front()).empty()) throw TransientError("empty paraphrase");
    return std::string(detail::trim(out.front()));
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

// ---------------------------------------------------------------------------
// Record builders

inline std::string with_think_prefix(std::string response) {
  const std::string_view prefix = prompts::kThinkPrefix;
  if (response.compare(0, prefix.size(), prefix) == 0) return response;
  return std::string(prefix) + " " + response;
}

namespace detail {

inline SFTRecord base_record(TaskClass c, std::map<std::string, std::string> slots, std::string provenance,
                             const TemplatePool& pool) {
  const auto& templates = pool.templates(c);
  if (templates.empty()) throw Error(Errc::invalid_argument, "template pool has no entry for this class");
  SFTRecord r;
  r.task_class = c;
  r.stage = stage_of(c);
  r.template_id = templates.front().id;
  r.instruction = fill_template(templates.front().text, slots);
  r.slots = std::move(slots);
  r.provenance = std::move(provenance);
  return r;
}

template <typename Fn>
std::string call_model(Fn&& fn, Errc unavailable) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == unavailable || e.code() == Errc::unknown_element) throw;
    throw Error(unavailable, e.what());
  }
}

}  // namespace detail

inline SFTRecord build_caption_record(const TransitionTriple& triple, Captioner& captioner,
                                      std::string provenance = {}, const TemplatePool& pool = default_template_pool()) {
  validate(triple.before);
  SFTRecord r = detail::base_record(TaskClass::dense_caption, {}, std::move(provenance), pool);
  r.context = serialize(triple.before);
  r.response = with_think_prefix(
      detail::call_model([&] { return captioner.caption(triple.before); }, Errc::captioner_unavailable));
  validate(r);
  return r;
}

inline SFTRecord build_functionality_record(const TransitionTriple& triple, std::int64_t target_id,
                                            Describer& describer, std::size_t window = kDefaultCompressionWindow,
                                            std::string provenance = {},
                                            const TemplatePool& pool = default_template_pool()) {
  const A11yTree fragment = compress_around(triple.before, target_id, window);
  SFTRecord r = detail::base_record(TaskClass::element_functionality, {{"id", std::to_string(target_id)}},
                                    std::move(provenance), pool);
  r.context = serialize(fragment);
  r.response = with_think_prefix(detail::call_model([&] { return describer.describe(fragment, target_id); },
                                                    Errc::describer_unavailable));
  validate(r);
  return r;
}

inline SFTRecord build_transition_record(const TransitionTriple& triple, const A11yDiff& changes, Narrator& narrator,
                                         std::string provenance = {},
                                         const TemplatePool& pool = default_template_pool()) {
  SFTRecord r = detail::base_record(TaskClass::state_transition,
                                    {{"interaction", describe_interaction(triple.action, triple.before)}},
                                    std::move(provenance), pool);
  r.context = serialize(triple.before);
  r.response = with_think_prefix(
      detail::call_model([&] { return narrator.narrate(triple, changes); }, Errc::narrator_unavailable));
  validate(r);
  return r;
}

// ---------------------------------------------------------------------------
// Exploration

/// Seeded uniform random walk over interactive elements. A page without
/// interactive elements is a dead end: the walk returns to the entry page
/// through a goto, which is recorded as a triple.
inline std::vector<TransitionTriple> collect_triples(const World& world, int steps, std::uint64_t seed) {
  if (steps < 1) throw Error(Errc::invalid_argument, "steps must be >= 1");
  static const std::array<std::string_view, 4> kWords = {"search", "hello world", "42", "report"};
  std::mt19937_64 rng(seed);
  std::vector<TransitionTriple> out;
  out.reserve(static_cast<std::size_t>(steps));
  SessionState session = world.start();
  while (static_cast<int>(out.size()) < steps) {
    const PageSpec& page = world.page(session.current);
    const auto elements = interactive_elements(*page.tree);
    Action action;
    if (elements.empty()) {
      action = Action::go_to(world.page(world.entry_page()).url);
    } else {
      const A11yNode* pick = elements[static_cast<std::size_t>(rng() % elements.size())];
      if (is_text_entry_role(pick->role)) {
        action = Action::type(*pick->element_id, std::string(kWords[static_cast<std::size_t>(rng() % kWords.size())]));
      } else {
        action = Action::click(*pick->element_id);
      }
    }
    StepResult next = step(world, session, action);
    if (elements.empty()) next.session = {world.entry_page(), {}, next.session.steps_taken};
    out.push_back({*page.tree, action, *next.observation, world.world_id()});
    session = std::move(next.session);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curriculum assembly

struct ClassWeights {
  int caption = 2;
  int functionality = 6;
  int transition = 7;

  int of(TaskClass c) const {
    switch (c) {
      case TaskClass::dense_caption: return caption;
      case TaskClass::element_functionality: return functionality;
      case TaskClass::state_transition: return transition;
      default: return 0;
    }
  }
  int total() const { return caption + functionality + transition; }
};

struct CurriculumModels {
  Captioner& captioner;
  Describer& describer;
  Narrator& narrator;
};

struct CurriculumOptions {
  ClassWeights weights;
  std::size_t window = kDefaultCompressionWindow;
  std::uint64_t seed = 0;
};

/// Element a functionality record is about: the acted-on element when it is
/// interactive, otherwise a seeded pick. nullopt when the page has none.
inline std::optional<std::int64_t> functionality_target(const TransitionTriple& t, std::uint64_t seed,
                                                        std::string_view key) {
  if (t.action.element_id) {
    const A11yNode* node = find_element(t.before, *t.action.element_id);
    if (node && is_interactive_role(node->role)) return t.action.element_id;
  }
  const auto elements = interactive_elements(t.before);
  if (elements.empty()) return std::nullopt;
  return *elements[mix_seed(seed, key) % elements.size()]->element_id;
}

/// One record per triple. Classes are assigned greedily to the class furthest
/// behind its weighted share, which keeps every prefix close to the target
/// ratio; classes a triple cannot serve are skipped for that triple.
inline std::vector<SFTRecord> build_curriculum(const std::vector<TransitionTriple>& triples, CurriculumModels models,
                                               const CurriculumOptions& options = {},
                                               const TemplatePool& pool = default_template_pool()) {
  const ClassWeights& w = options.weights;
  if (w.caption < 0 || w.functionality < 0 || w.transition < 0 || w.total() <= 0) {
    throw Error(Errc::config_error, "class weights must be non-negative with a positive sum");
  }
  std::map<TaskClass, long long> counts;
  std::vector<SFTRecord> out;
  out.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const TransitionTriple& t = triples[i];
    const std::string provenance = t.source + "#" + std::to_string(i);
    const auto target = functionality_target(t, options.seed, provenance);
    const long long n = static_cast<long long>(out.size()) + 1;

    std::optional<TaskClass> chosen;
    long long best = 0;
    for (TaskClass c : kUiClasses) {
      if (w.of(c) == 0) continue;
      if (c == TaskClass::element_functionality && !target) continue;
      // deficit scaled by the weight total to stay in integers
      const long long deficit = n * w.of(c) - counts[c] * w.total();
      if (!chosen || deficit > best) {
        chosen = c;
        best = deficit;
      }
    }
    if (!chosen) continue;
    ++counts[*chosen];
    switch (*chosen) {
      case TaskClass::dense_caption:
        out.push_back(build_caption_record(t, models.captioner, provenance, pool));
        break;
      case TaskClass::element_functionality:
        out.push_back(build_functionality_record(t, *target, models.describer, options.window, provenance, pool));
        break;
      default:
        out.push_back(build_transition_record(t, diff(t.before, t.after), models.narrator, provenance, pool));
        break;
    }
  }
  return out;
}

/// Replaces each UI record's instruction with a pool variant chosen by a hash
/// of (seed, provenance, class), optionally paraphrased, and gives responses
/// the step-by-step prefix. Behavior-clone records pass through unchanged.
/// Without a paraphraser the operation is idempotent.
inline std::size_t enhance_template_index(const SFTRecord& r, std::uint64_t seed, std::size_t pool_size) {
  return static_cast<std::size_t>(mix_seed(seed, r.provenance + "|" + std::string(task_class_name(r.task_class))) %
                                  pool_size);
}

inline std::vector<SFTRecord> enhance_instructions(std::vector<SFTRecord> records, const TemplatePool& pool,
                                                   std::uint64_t seed = 0, Paraphraser* paraphraser = nullptr) {
  for (SFTRecord& r : records) {
    if (r.task_class == TaskClass::behavior_clone) continue;
    const auto& templates = pool.templates(r.task_class);
    if (templates.empty()) throw Error(Errc::invalid_argument, "template pool has no entry for this class");
    const InstructionTemplate& t = templates[enhance_template_index(r, seed, templates.size())];
    r.template_id = t.id;
    r.instruction = fill_template(t.text, r.slots);
    if (paraphraser) {
      try {
        std::string variant = paraphraser->paraphrase(r.instruction);
        if (!detail::trim(variant).empty()) r.instruction = std::move(variant);
      } catch (const Error&) {
        // keep the pool variant
      }
    }
    r.response = with_think_prefix(std::move(r.response));
  }
  return records;
}

/// One record per trajectory step: instruction is the policy prompt with the
/// steps so far, response is the thought followed by the anchored action.
inline std::vector<SFTRecord> behavior_clone_records(const std::vector<Trajectory>& trajectories) {
  std::vector<SFTRecord> out;
  for (std::size_t ti = 0; ti < trajectories.size(); ++ti) {
    const Trajectory& t = trajectories[ti];
    const std::string kind = t.kind == TrajectoryKind::valuable ? "valuable" : "rollback";
    for (std::size_t si = 0; si < t.steps.size(); ++si) {
      std::vector<prompts::StepView> history;
      for (std::size_t h = 0; h < si; ++h) {
        history.push_back({t.steps[h].observation.get(), t.steps[h].thought, &t.steps[h].action});
      }
      const Step& s = t.steps[si];
      SFTRecord r;
      r.task_class = TaskClass::behavior_clone;
      r.stage = stage_of(r.task_class);
      r.template_id = std::string(prompts::kPolicyId);
      r.instruction = prompts::policy_user_message(t.query.instruction, history, *s.observation);
      r.context = serialize(*s.observation);
      r.response = (s.thought.empty() ? std::string() : s.thought + " ") + std::string(kActionAnchor) + " ```" +
                   format_action(s.action) + "```";
      r.provenance = t.query.task_id + ":" + kind + ":" + std::to_string(ti) + ":" + std::to_string(si);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace websynth
