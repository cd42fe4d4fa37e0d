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

// Web action space: click, type, hover, scroll, goto, go_back, stop.
//
//   click [id]            type [id] [content] [1|0]     hover [id]
//   scroll [down|up]      goto [url]                     go_back
//   stop [answer]

#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "websynth/error.hpp"

namespace websynth {

enum class ActionKind { click, type, hover, scroll, go_to, go_back, stop };
enum class ScrollDirection { up, down };

inline std::string_view action_kind_name(ActionKind kind) {
  switch (kind) {
    case ActionKind::click: return "click";
    case ActionKind::type: return "type";
    case ActionKind::hover: return "hover";
    case ActionKind::scroll: return "scroll";
    case ActionKind::go_to: return "goto";
    case ActionKind::go_back: return "go_back";
    case ActionKind::stop: return "stop";
  }
  return "";
}

struct Action {
  ActionKind kind = ActionKind::go_back;
  std::optional<std::int64_t> element_id;
  std::optional<std::string> content;
  std::optional<bool> press_enter;
  std::optional<ScrollDirection> direction;
  std::optional<std::string> url;

  static Action click(std::int64_t id) { return {ActionKind::click, id, {}, {}, {}, {}}; }
  static Action hover(std::int64_t id) { return {ActionKind::hover, id, {}, {}, {}, {}}; }
  static Action type(std::int64_t id, std::string text, bool enter = true) {
    return {ActionKind::type, id, std::move(text), enter, {}, {}};
  }
  static Action scroll(ScrollDirection dir) { return {ActionKind::scroll, {}, {}, {}, dir, {}}; }
  static Action go_to(std::string target) { return {ActionKind::go_to, {}, {}, {}, {}, std::move(target)}; }
  static Action go_back() { return {}; }
  static Action stop(std::string answer) { return {ActionKind::stop, {}, std::move(answer), {}, {}, {}}; }

  bool operator==(const Action&) const = default;
};

/// A policy sample: the reasoning, the parsed action and the verbatim output.
struct ActionProposal {
  std::string thought;
  Action action;
  std::string raw;

  bool operator==(const ActionProposal&) const = default;
};

namespace detail {

inline bool valid_argument_text(std::string_view text) {
  return text.find_first_of("[]\n\r") == std::string_view::npos &&
         text.find("```") == std::string_view::npos;
}

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view text) {
  const auto ws = " \t\r\n";
  const auto begin = text.find_first_not_of(ws);
  if (begin == std::string_view::npos) return {};
  return text.substr(begin, text.find_last_not_of(ws) - begin + 1);
}

}  // namespace detail

/// Throws InvalidArgument when fields do not match the kind.
inline void validate(const Action& a) {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::invalid_argument, std::string(action_kind_name(a.kind)) + ": " + why);
  };
  const bool wants_id = a.kind == ActionKind::click || a.kind == ActionKind::type ||
                        a.kind == ActionKind::hover;
  const bool wants_content = a.kind == ActionKind::type || a.kind == ActionKind::stop;
  if (wants_id != a.element_id.has_value()) fail("element id presence");
  if (a.element_id && *a.element_id < 0) fail("negative element id");
  if (wants_content != a.content.has_value()) fail("content presence");
  if (a.content && !detail::valid_argument_text(*a.content)) fail("content contains brackets");
  if ((a.kind == ActionKind::type) != a.press_enter.has_value()) fail("press_enter presence");
  if ((a.kind == ActionKind::scroll) != a.direction.has_value()) fail("direction presence");
  if ((a.kind == ActionKind::go_to) != a.url.has_value()) fail("url presence");
  if (a.url && (a.url->empty() || !detail::valid_argument_text(*a.url) ||
                detail::trim(*a.url).size() != a.url->size())) {
    fail("bad url");
  }
}

inline std::string format_action(const Action& a) {
  const std::string name(action_kind_name(a.kind));
  switch (a.kind) {
    case ActionKind::click:
    case ActionKind::hover:
      return name + " [" + std::to_string(*a.element_id) + "]";
    case ActionKind::type:
      return name + " [" + std::to_string(*a.element_id) + "] [" + *a.content + "] [" +
             (*a.press_enter ? "1" : "0") + "]";
    case ActionKind::scroll:
      return name + (*a.direction == ScrollDirection::down ? " [down]" : " [up]");
    case ActionKind::go_to:
      return name + " [" + *a.url + "]";
    case ActionKind::go_back:
      return name;
    case ActionKind::stop:
      return name + " [" + *a.content + "]";
  }
  return name;
}

/// Dedup key: lowercased, whitespace-collapsed format_action().
inline std::string canonicalize(const Action& a) {
  const std::string formatted = format_action(a);
  std::string out;
  bool pending_space = false;
  for (char c : formatted) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      // no space directly inside brackets
      if (c != ']' && out.back() != '[') out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline constexpr std::string_view kActionAnchor = "In summary, the next action I will perform is";

namespace detail {

// The action text inside a model response: the first ``` block after the
// last anchor phrase, else the last ``` block, else the whole string.
inline std::string_view extract_action_text(std::string_view text) {
  auto block_after = [&](std::size_t from) -> std::optional<std::string_view> {
    const std::size_t open = text.find("```", from);
    if (open == std::string_view::npos) return std::nullopt;
    const std::size_t close = text.find("```", open + 3);
    if (close == std::string_view::npos) return text.substr(open + 3);
    return text.substr(open + 3, close - open - 3);
  };
  const std::size_t anchor = text.rfind(kActionAnchor);
  if (anchor != std::string_view::npos) {
    const std::size_t after = anchor + kActionAnchor.size();
    if (auto block = block_after(after)) return *block;
    return text.substr(after);
  }
  std::optional<std::string_view> last;
  for (std::size_t from = 0;;) {
    const std::size_t open = text.find("```", from);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find("```", open + 3);
    if (close == std::string_view::npos) break;
    last = text.substr(open + 3, close - open - 3);
    from = close + 3;
  }
  return last ? *last : text;
}

inline std::int64_t parse_element_id(std::string_view text) {
  text = trim(text);
  if (text.empty() || text.size() > 18) {
    throw Error(Errc::invalid_argument, "bad element id '" + std::string(text) + "'");
  }
  std::int64_t id = 0;
  for (char c : text) {
    if (c < '0' || c > '9') {
      throw Error(Errc::invalid_argument, "bad element id '" + std::string(text) + "'");
    }
    id = id * 10 + (c - '0');
  }
  return id;
}

}  // namespace detail

/// Parses a raw model response or a bare action string. Never crashes on
/// arbitrary input: returns an Action or throws UnparsableAction /
/// InvalidArgument.
inline Action parse_action(std::string_view text) {
  std::string_view body = detail::trim(detail::extract_action_text(text));
  if (body.empty()) throw Error(Errc::unparsable_action, "empty action");

  std::size_t pos = 0;
  while (pos < body.size() && (std::isalpha(static_cast<unsigned char>(body[pos])) || body[pos] == '_')) {
    ++pos;
  }
  const std::string kind = detail::to_lower(body.substr(0, pos));

  std::vector<std::string> args;
  while (true) {
    while (pos < body.size() && std::isspace(static_cast<unsigned char>(body[pos]))) ++pos;
    if (pos == body.size()) break;
    if (body[pos] != '[') {
      throw Error(Errc::unparsable_action, "unexpected text in '" + std::string(body) + "'");
    }
    const std::size_t close = body.find(']', pos + 1);
    if (close == std::string_view::npos) {
      throw Error(Errc::unparsable_action, "unterminated bracket in '" + std::string(body) + "'");
    }
    std::string_view arg = body.substr(pos + 1, close - pos - 1);
    if (arg.find('[') != std::string_view::npos) {
      throw Error(Errc::unparsable_action, "nested brackets in '" + std::string(body) + "'");
    }
    args.emplace_back(arg);
    pos = close + 1;
  }

  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) {
      throw Error(Errc::unparsable_action,
                  "wrong number of arguments for '" + kind + "' in '" + std::string(body) + "'");
    }
  };

  Action a;
  if (kind == "click" || kind == "hover") {
    arity(1, 1);
    a.kind = kind == "click" ? ActionKind::click : ActionKind::hover;
    a.element_id = detail::parse_element_id(args[0]);
  } else if (kind == "type") {
    arity(2, 3);
    a.kind = ActionKind::type;
    a.element_id = detail::parse_element_id(args[0]);
    a.content = args[1];
    a.press_enter = true;
    if (args.size() == 3) {
      std::string_view flag = detail::trim(args[2]);
      if (flag.substr(0, 17) == "press_enter_after") {
        flag = detail::trim(flag.substr(17));
        if (flag.empty() || flag.front() != '=') {
          throw Error(Errc::invalid_argument, "bad press_enter_after flag");
        }
        flag = detail::trim(flag.substr(1));
      }
      if (flag == "1") {
        a.press_enter = true;
      } else if (flag == "0") {
        a.press_enter = false;
      } else {
        throw Error(Errc::invalid_argument, "press_enter_after must be 0 or 1");
      }
    }
  } else if (kind == "scroll") {
    arity(1, 1);
    a.kind = ActionKind::scroll;
    std::string dir = detail::to_lower(detail::trim(args[0]));
    if (dir.rfind("direction", 0) == 0) {
      std::string_view rest = detail::trim(std::string_view(dir).substr(9));
      if (rest.empty() || rest.front() != '=') {
        throw Error(Errc::invalid_argument, "bad scroll argument '" + args[0] + "'");
      }
      dir = std::string(detail::trim(rest.substr(1)));
    }
    if (dir == "down") {
      a.direction = ScrollDirection::down;
    } else if (dir == "up") {
      a.direction = ScrollDirection::up;
    } else {
      throw Error(Errc::invalid_argument, "scroll direction must be up or down, got '" + args[0] + "'");
    }
  } else if (kind == "goto") {
    arity(1, 1);
    a.kind = ActionKind::go_to;
    a.url = std::string(detail::trim(args[0]));
    if (a.url->empty()) throw Error(Errc::invalid_argument, "goto needs a url");
  } else if (kind == "go_back") {
    arity(0, 0);
    a.kind = ActionKind::go_back;
  } else if (kind == "stop") {
    arity(0, 1);
    a.kind = ActionKind::stop;
    a.content = args.empty() ? std::string() : args[0];
  } else {
    throw Error(Errc::unparsable_action, "unknown action '" + std::string(body) + "'");
  }
  return a;
}

}  // namespace websynth
