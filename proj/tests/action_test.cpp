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

#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "support.hpp"

namespace websynth {
namespace {

Errc error_of(std::string_view text) {
  try {
    parse_action(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parsed: " << text;
  return Errc::io_error;
}

TEST(Action, ParsesAnchoredBlock) {
  const Action a = parse_action("Let's think step-by-step. The cart button is visible. "
                                "In summary, the next action I will perform is ```click [1234]```");
  EXPECT_EQ(a, Action::click(1234));
}

TEST(Action, AnchorWinsOverEarlierBlocks) {
  const Action a = parse_action("Earlier I tried ```click [1]```. In summary, the next action I will perform is "
                                "```hover [2]``` and then nothing else.");
  EXPECT_EQ(a, Action::hover(2));
  EXPECT_EQ(parse_action("first ```click [1]``` then ```click [3]```"), Action::click(3));
}

TEST(Action, ParsesTypeWithSpaces) {
  const Action a = parse_action("type [1201] [bus stop near CMU] [1]");
  EXPECT_EQ(a.kind, ActionKind::type);
  EXPECT_EQ(a.element_id, 1201);
  EXPECT_EQ(a.content, "bus stop near CMU");
  EXPECT_EQ(a.press_enter, true);
  EXPECT_EQ(parse_action("type [5] [x]").press_enter, true);
  EXPECT_EQ(parse_action("type [5] [x] [press_enter_after=0]").press_enter, false);
}

TEST(Action, ParsesNullaryAndOthers) {
  const Action back = parse_action("go_back");
  EXPECT_EQ(back.kind, ActionKind::go_back);
  EXPECT_FALSE(back.element_id || back.content || back.press_enter || back.direction || back.url);
  EXPECT_EQ(parse_action("scroll [down]"), Action::scroll(ScrollDirection::down));
  EXPECT_EQ(parse_action("scroll [direction=up]"), Action::scroll(ScrollDirection::up));
  EXPECT_EQ(parse_action("goto [http://shop.local/cart]"), Action::go_to("http://shop.local/cart"));
  EXPECT_EQ(parse_action("stop [N/A]"), Action::stop("N/A"));
}

TEST(Action, Formats) {
  EXPECT_EQ(format_action(Action::stop("N/A")), "stop [N/A]");
  EXPECT_EQ(format_action(Action::click(7716)), "click [7716]");
  EXPECT_EQ(format_action(Action::type(3, "hello", false)), "type [3] [hello] [0]");
  EXPECT_EQ(format_action(Action::scroll(ScrollDirection::down)), "scroll [down]");
  EXPECT_EQ(format_action(Action::go_to("http://a.local")), "goto [http://a.local]");
  EXPECT_EQ(format_action(Action::go_back()), "go_back");
}

TEST(Action, FuzzedRoundTrip) {
  std::mt19937_64 rng(99);
  std::set<ActionKind> kinds;
  for (int i = 0; i < 2000; ++i) {
    const Action a = testing::random_action(rng);
    validate(a);
    kinds.insert(a.kind);
    const std::string text = format_action(a);
    ASSERT_EQ(parse_action(text), a) << text;
    ASSERT_EQ(parse_action("In summary, the next action I will perform is ```" + text + "```"), a) << text;
  }
  EXPECT_EQ(kinds.size(), 7u);
}

TEST(Action, CanonicalFolding) {
  EXPECT_EQ(canonicalize(parse_action("Click  [12]")), canonicalize(parse_action("click [12]")));
  EXPECT_EQ(canonicalize(Action::type(4, "red   shoes")), canonicalize(Action::type(4, "red shoes")));
  EXPECT_EQ(canonicalize(Action::type(4, " red shoes ")), canonicalize(Action::type(4, "red shoes")));
  EXPECT_NE(canonicalize(Action::type(1201, "CMU")), canonicalize(Action::type(1201, "Carnegie Mellon University")));
  EXPECT_NE(canonicalize(Action::type(4, "x", true)), canonicalize(Action::type(4, "x", false)));
  EXPECT_NE(canonicalize(Action::click(4)), canonicalize(Action::hover(4)));
}

TEST(Action, Errors) {
  EXPECT_EQ(error_of(""), Errc::unparsable_action);
  EXPECT_EQ(error_of("dance [3]"), Errc::unparsable_action);
  EXPECT_EQ(error_of("click"), Errc::unparsable_action);
  EXPECT_EQ(error_of("click [1] [2]"), Errc::unparsable_action);
  EXPECT_EQ(error_of("click [1"), Errc::unparsable_action);
  EXPECT_EQ(error_of("type [1] [a [b]] [1]"), Errc::unparsable_action);
  EXPECT_EQ(error_of("go_back [now]"), Errc::unparsable_action);
  EXPECT_EQ(error_of("click 12"), Errc::unparsable_action);
  EXPECT_EQ(error_of("scroll [sideways]"), Errc::invalid_argument);
  EXPECT_EQ(error_of("click [abc]"), Errc::invalid_argument);
  EXPECT_EQ(error_of("click [-4]"), Errc::invalid_argument);
  EXPECT_EQ(error_of("type [1] [x] [2]"), Errc::invalid_argument);
  EXPECT_EQ(error_of("goto [ ]"), Errc::invalid_argument);
}

TEST(Action, ValidateRejectsMismatchedFields) {
  Action a = Action::click(3);
  a.content = "x";
  EXPECT_THROW(validate(a), Error);
  Action b = Action::scroll(ScrollDirection::up);
  b.press_enter = true;
  EXPECT_THROW(validate(b), Error);
  Action c = Action::type(1, "a]b");
  EXPECT_THROW(validate(c), Error);
}

TEST(Action, ArbitraryInputNeverCrashes) {
  std::mt19937_64 rng(7);
  const std::string noise = "[]` =\n0a_";
  int parsed = 0;
  for (int i = 0; i < 20000; ++i) {
    std::string text = format_action(testing::random_action(rng));
    const std::size_t edits = rng() % 3;
    for (std::size_t j = 0; j < edits && !text.empty(); ++j) text[rng() % text.size()] = noise[rng() % noise.size()];
    try {
      validate(parse_action(text));
      ++parsed;
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == Errc::unparsable_action || e.code() == Errc::invalid_argument) << text;
    }
  }
  EXPECT_GT(parsed, 0);
}

}  // namespace
}  // namespace websynth
