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

// Accessibility-tree observations: data model, a11y-v1 text format, line
// diff and local compression around one element.
//
// a11y-v1 layout:
//
//   Tab 0 (current): <tab title>
//   URL: <url>
//   [1] [RootWebArea] ['Title']
//     [12] [link] ['Forums']
//     [] [StaticText] [Plain text]
//
// Depth is two spaces per level. Nodes with an element id quote their text,
// id-less nodes do not. Inside brackets `\`, `]` and newlines are escaped.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "websynth/error.hpp"

namespace websynth {

inline constexpr std::string_view kA11yFormatVersion = "a11y-v1";

struct A11yNode {
  std::optional<std::int64_t> element_id;
  std::string role;
  std::string text;
  std::vector<A11yNode> children;

  bool operator==(const A11yNode&) const = default;
};

struct A11yTree {
  std::string url;
  std::string tab_title;
  A11yNode root;

  bool operator==(const A11yTree&) const = default;
};

using ObservationPtr = std::shared_ptr<const A11yTree>;

inline ObservationPtr share(A11yTree tree) {
  return std::make_shared<const A11yTree>(std::move(tree));
}

struct A11yDiff {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::vector<std::pair<std::string, std::string>> changed;

  bool empty() const { return added.empty() && removed.empty() && changed.empty(); }
  bool operator==(const A11yDiff&) const = default;
};

namespace detail {

inline void escape_into(std::string& out, std::string_view text) {
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case ']': out += "\\]"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
}

template <typename Fn>
void for_each_node(const A11yNode& node, std::size_t depth, Fn&& fn) {
  fn(node, depth);
  for (const auto& child : node.children) for_each_node(child, depth + 1, fn);
}

}  // namespace detail

/// Visits nodes in document (pre-)order with their depth below the root.
template <typename Fn>
void for_each_node(const A11yTree& tree, Fn&& fn) {
  detail::for_each_node(tree.root, 0, fn);
}

inline std::size_t node_count(const A11yTree& tree) {
  std::size_t count = 0;
  for_each_node(tree, [&](const A11yNode&, std::size_t) { ++count; });
  return count;
}

inline const A11yNode* find_element(const A11yTree& tree, std::int64_t element_id) {
  const A11yNode* found = nullptr;
  for_each_node(tree, [&](const A11yNode& node, std::size_t) {
    if (!found && node.element_id == element_id) found = &node;
  });
  return found;
}

inline bool is_interactive_role(std::string_view role) {
  static const std::set<std::string_view> roles = {
      "link",     "button",   "textbox",  "searchbox", "combobox", "checkbox",
      "radio",    "menuitem", "tab",      "option",    "switch",   "slider",
      "spinbutton"};
  return roles.count(role) > 0;
}

inline bool is_text_entry_role(std::string_view role) {
  return role == "textbox" || role == "searchbox" || role == "combobox";
}

/// Nodes that carry an id and an interactive role, in document order.
inline std::vector<const A11yNode*> interactive_elements(const A11yTree& tree) {
  std::vector<const A11yNode*> out;
  for_each_node(tree, [&](const A11yNode& node, std::size_t) {
    if (node.element_id && is_interactive_role(node.role)) out.push_back(&node);
  });
  return out;
}

/// Throws MalformedObservation (empty role) or DuplicateId.
inline void validate(const A11yTree& tree) {
  std::set<std::int64_t> seen;
  for_each_node(tree, [&](const A11yNode& node, std::size_t) {
    if (node.role.empty()) throw Error(Errc::malformed_observation, "node with empty role");
    if (node.element_id && !seen.insert(*node.element_id).second) {
      throw Error(Errc::duplicate_id, "element id " + std::to_string(*node.element_id) +
                                          " appears more than once");
    }
  });
}

/// One node without indentation, e.g. `[1234] [button] ['Add to Cart']`.
inline std::string serialize_node_line(const A11yNode& node) {
  std::string line = "[";
  if (node.element_id) line += std::to_string(*node.element_id);
  line += "] [";
  detail::escape_into(line, node.role);
  line += "] [";
  if (node.element_id) {
    line += '\'';
    detail::escape_into(line, node.text);
    line += '\'';
  } else {
    detail::escape_into(line, node.text);
  }
  line += ']';
  return line;
}

inline std::string serialize(const A11yTree& tree) {
  std::string out = "Tab 0 (current): ";
  detail::escape_into(out, tree.tab_title);
  out += "\nURL: ";
  detail::escape_into(out, tree.url);
  out += '\n';
  for_each_node(tree, [&](const A11yNode& node, std::size_t depth) {
    out.append(2 * depth, ' ');
    out += serialize_node_line(node);
    out += '\n';
  });
  return out;
}

/// serialize() preceded by a `# a11y-v1` version line, for standalone files.
inline std::string serialize_document(const A11yTree& tree) {
  return "# " + std::string(kA11yFormatVersion) + "\n" + serialize(tree);
}

namespace detail {

inline std::string unescape(std::string_view text, std::size_t line_no) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (++i == text.size()) {
      throw Error(Errc::malformed_observation,
                  "dangling escape on line " + std::to_string(line_no));
    }
    switch (text[i]) {
      case '\\': out += '\\'; break;
      case ']': out += ']'; break;
      case 'n': out += '\n'; break;
      default:
        throw Error(Errc::malformed_observation,
                    "unknown escape on line " + std::to_string(line_no));
    }
  }
  return out;
}

// Reads `[...]` starting at pos; returns the raw (still escaped) contents.
inline std::string_view read_bracket(std::string_view line, std::size_t& pos, std::size_t line_no) {
  if (pos >= line.size() || line[pos] != '[') {
    throw Error(Errc::malformed_observation, "expected '[' on line " + std::to_string(line_no));
  }
  const std::size_t start = ++pos;
  while (pos < line.size() && line[pos] != ']') {
    if (line[pos] == '\\') ++pos;
    ++pos;
  }
  if (pos >= line.size()) {
    throw Error(Errc::malformed_observation, "unterminated '[' on line " + std::to_string(line_no));
  }
  return line.substr(start, pos++ - start);
}

inline void expect_space(std::string_view line, std::size_t& pos, std::size_t line_no) {
  if (pos >= line.size() || line[pos] != ' ') {
    throw Error(Errc::malformed_observation, "expected ' ' on line " + std::to_string(line_no));
  }
  ++pos;
}

inline std::string_view strip_prefix(std::string_view line, std::string_view prefix,
                                     std::size_t line_no) {
  if (line.substr(0, prefix.size()) != prefix) {
    throw Error(Errc::malformed_observation, "expected '" + std::string(prefix) + "' on line " +
                                                 std::to_string(line_no));
  }
  return line.substr(prefix.size());
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace detail

/// Parses a single node line (indentation already removed).
inline A11yNode parse_node_line(std::string_view line, std::size_t line_no = 1) {
  std::size_t pos = 0;
  A11yNode node;
  const std::string_view id_field = detail::read_bracket(line, pos, line_no);
  if (!id_field.empty()) {
    std::int64_t id = 0;
    for (char c : id_field) {
      if (c < '0' || c > '9' || id > (INT64_MAX - 9) / 10) {
        throw Error(Errc::malformed_observation,
                    "bad element id '" + std::string(id_field) + "' on line " +
                        std::to_string(line_no));
      }
      id = id * 10 + (c - '0');
    }
    node.element_id = id;
  }
  detail::expect_space(line, pos, line_no);
  node.role = detail::unescape(detail::read_bracket(line, pos, line_no), line_no);
  if (node.role.empty()) {
    throw Error(Errc::malformed_observation, "empty role on line " + std::to_string(line_no));
  }
  detail::expect_space(line, pos, line_no);
  std::string_view text = detail::read_bracket(line, pos, line_no);
  if (pos != line.size()) {
    throw Error(Errc::malformed_observation,
                "trailing characters on line " + std::to_string(line_no));
  }
  if (node.element_id) {
    if (text.size() < 2 || text.front() != '\'' || text.back() != '\'') {
      throw Error(Errc::malformed_observation,
                  "element text must be quoted on line " + std::to_string(line_no));
    }
    text = text.substr(1, text.size() - 2);
  }
  node.text = detail::unescape(text, line_no);
  return node;
}

/// Inverse of serialize(). Accepts an optional leading `# a11y-v1` line and
/// a missing trailing newline.
inline A11yTree parse(std::string_view text) {
  auto lines = detail::split_lines(text);
  std::size_t first = 0;
  if (!lines.empty() && lines[0].substr(0, 2) == "# ") {
    if (lines[0].substr(2) != kA11yFormatVersion) {
      throw Error(Errc::malformed_observation,
                  "unsupported observation format '" + std::string(lines[0].substr(2)) + "'");
    }
    first = 1;
  }
  if (lines.size() < first + 3) {
    throw Error(Errc::malformed_observation, "observation needs a tab line, URL line and a root");
  }
  A11yTree tree;
  tree.tab_title = detail::unescape(
      detail::strip_prefix(lines[first], "Tab 0 (current): ", first + 1), first + 1);
  tree.url = detail::unescape(detail::strip_prefix(lines[first + 1], "URL: ", first + 2), first + 2);

  // Stack of open nodes: stack[d] is the most recent node at depth d.
  std::vector<A11yNode*> stack;
  std::set<std::int64_t> seen;
  for (std::size_t i = first + 2; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    std::string_view line = lines[i];
    if (line.empty() && i + 1 == lines.size()) break;
    std::size_t indent = 0;
    while (indent < line.size() && line[indent] == ' ') ++indent;
    if (indent % 2 != 0) {
      throw Error(Errc::malformed_observation, "odd indentation on line " + std::to_string(line_no));
    }
    const std::size_t depth = indent / 2;
    A11yNode node = parse_node_line(line.substr(indent), line_no);
    if (node.element_id && !seen.insert(*node.element_id).second) {
      throw Error(Errc::duplicate_id, "element id " + std::to_string(*node.element_id) +
                                          " repeated on line " + std::to_string(line_no));
    }
    if (stack.empty()) {
      if (depth != 0) {
        throw Error(Errc::malformed_observation, "root must not be indented");
      }
      tree.root = std::move(node);
      stack.push_back(&tree.root);
      continue;
    }
    if (depth == 0) {
      throw Error(Errc::malformed_observation, "second root on line " + std::to_string(line_no));
    }
    if (depth > stack.size()) {
      throw Error(Errc::malformed_observation,
                  "indentation jumps more than one level on line " + std::to_string(line_no));
    }
    stack.resize(depth);
    A11yNode* parent = stack.back();
    parent->children.push_back(std::move(node));
    stack.push_back(&parent->children.back());
  }
  if (stack.empty()) throw Error(Errc::malformed_observation, "observation has no root node");
  return tree;
}

namespace detail {

struct PositionedLine {
  std::string line;
  std::string key;  // role + parent path + sibling index
};

inline void collect_positioned(const A11yNode& node, const std::string& parent_path,
                               std::size_t index, std::vector<PositionedLine>& out) {
  const std::string path = parent_path + "/" + std::to_string(index);
  out.push_back({serialize_node_line(node), node.role + "@" + path});
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    collect_positioned(node.children[i], path, i, out);
  }
}

// Entries of `from` whose line is not matched by an equal line in `other`
// (multiset semantics, first occurrences consumed first).
inline std::vector<PositionedLine> multiset_minus(const std::vector<PositionedLine>& from,
                                                  const std::vector<PositionedLine>& other) {
  std::map<std::string, std::size_t> budget;
  for (const auto& entry : other) ++budget[entry.line];
  std::vector<PositionedLine> out;
  for (const auto& entry : from) {
    auto it = budget.find(entry.line);
    if (it != budget.end() && it->second > 0) {
      --it->second;
    } else {
      out.push_back(entry);
    }
  }
  return out;
}

}  // namespace detail

/// Line diff between consecutive observations. A removed and an added line at
/// the same structural position (role, parent path, sibling index) are
/// reported together as `changed`, since element ids are not stable between
/// renders.
inline A11yDiff diff(const A11yTree& before, const A11yTree& after) {
  std::vector<detail::PositionedLine> lines_before;
  std::vector<detail::PositionedLine> lines_after;
  detail::collect_positioned(before.root, "", 0, lines_before);
  detail::collect_positioned(after.root, "", 0, lines_after);

  auto removed = detail::multiset_minus(lines_before, lines_after);
  auto added = detail::multiset_minus(lines_after, lines_before);

  std::map<std::string, std::size_t> added_by_key;
  for (std::size_t i = 0; i < added.size(); ++i) added_by_key.emplace(added[i].key, i);

  A11yDiff result;
  std::vector<bool> added_used(added.size(), false);
  for (const auto& entry : removed) {
    auto it = added_by_key.find(entry.key);
    if (it != added_by_key.end()) {
      added_used[it->second] = true;
      result.changed.emplace_back(entry.line, added[it->second].line);
    } else {
      result.removed.push_back(entry.line);
    }
  }
  for (std::size_t i = 0; i < added.size(); ++i) {
    if (!added_used[i]) result.added.push_back(added[i].line);
  }
  return result;
}

namespace detail {

inline A11yNode truncate_depth(const A11yNode& node, std::size_t levels) {
  A11yNode out{node.element_id, node.role, node.text, {}};
  if (levels > 0) {
    for (const auto& child : node.children) out.children.push_back(truncate_depth(child, levels - 1));
  }
  return out;
}

inline bool path_to(const A11yNode& node, std::int64_t target, std::vector<std::size_t>& path) {
  if (node.element_id == target) return true;
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    path.push_back(i);
    if (path_to(node.children[i], target, path)) return true;
    path.pop_back();
  }
  return false;
}

inline A11yNode compress_level(const A11yNode& node, const std::vector<std::size_t>& path,
                               std::size_t step, std::size_t window) {
  if (step == path.size()) return truncate_depth(node, window);
  A11yNode out{node.element_id, node.role, node.text, {}};
  const std::size_t on_path = path[step];
  const std::size_t lo = on_path > window ? on_path - window : 0;
  const std::size_t hi = std::min(node.children.size() - 1, on_path + window);
  for (std::size_t i = lo; i <= hi; ++i) {
    if (i == on_path) {
      out.children.push_back(compress_level(node.children[i], path, step + 1, window));
    } else {
      out.children.push_back(truncate_depth(node.children[i], window));
    }
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kDefaultCompressionWindow = 2;

/// Keeps the root-to-target path, the siblings within `window` positions of
/// each path node, and the descendants of those siblings and of the target
/// down to `window` levels. Structure and order are preserved.
inline A11yTree compress_around(const A11yTree& tree, std::int64_t target_id,
                                std::size_t window = kDefaultCompressionWindow) {
  std::vector<std::size_t> path;
  if (!detail::path_to(tree.root, target_id, path)) {
    throw Error(Errc::unknown_element, "element [" + std::to_string(target_id) + "] not in tree");
  }
  return A11yTree{tree.url, tree.tab_title, detail::compress_level(tree.root, path, 0, window)};
}

}  // namespace websynth
