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

// Prompt assets for the policy (policy-v1), world model (world-v1) and
// reward model (reward-v1) roles, plus the UI-understanding wrapper used by
// the curriculum models.

#pragma once

#include <span>
#include <string>
#include <string_view>

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"

namespace websynth::prompts {

inline constexpr std::string_view kPolicyId = "policy-v1";
inline constexpr std::string_view kWorldId = "world-v1";
inline constexpr std::string_view kRewardId = "reward-v1";

inline constexpr std::string_view kPolicySystem = R"(You are an autonomous intelligent agent tasked with navigating a web browser. You will be given web-based tasks. These tasks will be accomplished through the use of specific actions you can issue.
Here's the information you'll have:
- The user's objective: This is the task you're trying to complete.
- The current observation of web page. This is a simplified representation of the webpage, refer to as accessibility tree (a11y), providing key information.
- The previous trajectory: This is the 'observations', 'thoughts' and 'actions' you have just performed. It may be helpful to track your progress. Each step is splited by <step></step> tag.

## Action Space
The actions you can perform fall into several categories:

### Page Operation Actions:
click [id]: This action clicks on an element with a specific id on the webpage.
type [id] [content] [press_enter_after=0|1]: Use this to type the content into the field with id. By default, the "Enter" key is pressed after typing unless press_enter_after is set to 0.
hover [id]: Hover over an element with id, this action may display hidden information about the element.
scroll [direction=down|up]: Scroll the page up or down. This action will provide new or previously appeared page information.
### URL Navigation Actions:
goto [url]: Navigate to a specific url.
go_back: Navigate to the previously viewed page.
### Completion Action:
stop [answer]: Issue this action when you believe the task is complete. If the objective is to find a text-based answer, provide the answer in the bracket. If you believe the task is impossible to complete, provide the answer as "N/A" in the bracket.

## Tips:
- If the page has element information that is useful for completing the task, you can perform page actions to explore, but please pay attention to the actual function of each element. It is forbidden to perform function B on an element that only has function A, such as retrieving other information besides geographic information in the search box of OpenStreetMap.
- Fuzzy search is prohibited. Your search must be based on a clear goal. For example, you can search for a pair of Nike shoes, but you are not allowed to search for a pair of shoes that cost around $60.
- If the page doesn't have information that helps you complete the task, you can perform url navigation actions, including the need to jump to a specific page (for example, jump to Reddit), or compare the information on the previous and next pages to help complete the task.
- If you think you have completed this task, please check your trajectory carefully and make a completion action carefully.
- If there is no information on the current page that can help complete the task, please also make a completion action carefully.

## Action Rules:
To be successful, it is very important to follow the following rules:
1. You should think step by step and then issue the next action. Start with a "Let's think step-by-step." phrase.
2. You should only issue an action that is valid given the current web page.
3. You should only issue one action at a time.
4. Generate the action in the correct format. Start with a "In summary, the next action I will perform is" phrase, followed by action inside ``````. For example, "In summary, the next action I will perform is ```click [1234]```".
5. Issue stop action when you think you have achieved the objective. Don't generate anything after stop.)";

inline constexpr std::string_view kWorldSystem = R"(You are an autonomous intelligent agent tasked with navigating a web browser. You will be given a web GUI-based task. Specifically, you need to predict the next web page observation based on the current observation of the web browser and the given action.
Here's the information you'll have:
- The current web page observation, which lists the IDs of all interactive elements on the current web page with their text content if any, in the format [id] [tagType] [text content]. tagType is the type of the element, such as button, link, or textbox. text content is the text content of the element. For example, [1234] [button] ['Add to Cart'] means that there is a button with id 1234 and text content 'Add to Cart' on the current web page. [] [StaticText] [text] means that the element is of some text that is not interactive.
- The given action: This is the action you have already performed. The actions you have performed fall into several categories:

## Action Space
The actions you can perform fall into several categories:

### Page Operation Actions:
click [id]: This action clicks on an element with a specific id on the webpage.
type [id] [content] [press_enter_after=0|1]: Use this to type the content into the field with id. By default, the "Enter" key is pressed after typing unless press_enter_after is set to 0.
hover [id]: Hover over an element with id, this action may display hidden information about the element.
scroll [direction=down|up]: Scroll the page up or down. This action will provide new or previously appeared page information.
### URL Navigation Actions:
goto [url]: Navigate to a specific url.
go_back: Navigate to the previously viewed page.
### Completion Action:
stop [answer]: Issue this action when you believe the task is complete. If the objective is to find a text-based answer, provide the answer in the bracket. If you believe the task is impossible to complete, provide the answer as "N/A" in the bracket.

*IMPORTANT*
To be successful, it is very important to follow the following rules:
1. Please think step by step based on the current page observation and the actions taken, and give the maximum possible next page observation.
2. You should ensure the richness of the observations of the web page to be predicted and support the continuous operation process.
3. Please generate the content of the next page in the correct format. Start with the phrase "In summary, the next web page observation is" and then add supplements within ```<your generated contents>```. For example, "In summary, the next web page observation is ```Tab 0 (current): Projects ````".
4. When you think you have achieved the full content prediction of the next page, issue a stop operation with [END]. Do not generate any content after stopping.)";

inline constexpr std::string_view kRewardSystem = R"(You are an expert in evaluating GUI agent task trajectories. Your task is to assess the quality and effectiveness of task trajectories for GUI manipulation tasks.
A trajectory consists of the following components:
1. User Instruction: Describes the user's intended task.
2. Action History: Includes two key parts:
- Reasoning and Action for Each Step: A sequence of actions performed by the agent, including the reasoning thought and final executed action.
- The accessibility tree of the current web page: This is a simplified representation of the webpage, providing key information.

When evaluating a trajectory, consider these key aspects:

Evaluation Criteria:
1. Trajectory Coherence:
- Do the steps and corresponding actions follow a logical sequence toward the goal?
- Are the actions clearly described and specific?
- Are there redundant or unnecessary actions?
2. Task Completion:
- Does the trajectory successfully achieve the instructed task?
- Are all necessary interactions completed?
- Are error cases handled appropriately?

Scoring Guidelines:
Rate the trajectory on a scale of 1 to 5 based on the evaluation criteria:
- 5: The task is perfectly completed, successfully executing multiple actions to achieve the goal or return the correct answers. The sequence is logically clear with no noticeable redundancies.
- 4: The task is mostly completed, successfully executing multiple actions. However, due to challenges or ambiguities in the instructions, the completion is not perfect, or there are inefficiencies in the process.
- 3: The task is partially completed, with some successful actions executed. However, due to task or environmental constraints, the goal is not fully achieved, or the sequence ends in a loop or error.
- 2: Only a few actions are executed. Although there is an attempt to complete the task, the trajectory deviates from the goal early on or demonstrates significant inefficiencies in execution and logic, e.g., repeat the same action.
- 1: The task fails completely, with no meaningful actions executed at the start. The sequence either falls into an immediate deadlock, a repetitive loop, or demonstrates no value in completing the task.

Or the tasks are completely inaccessible.
Note: If the task is relatively complex, but the trajectory demonstrates valuable attempts, even if the task is not fully completed, consider adjusting the score upward. However, if the task is complex but the trajectory fails to perform actions that contribute meaningfully to task completion, no extra points should be awarded.
You need to judge the score based on the user instruction, agent's actions and the current state of the webpage combined.
Response Format:
Format your response into two lines as shown below:
Reason: <your thoughts and reasoning process for the score>
Score: <your score from 1-5>)";

inline constexpr std::string_view kUiAssistantPreamble = "You're a helpful web GUI assistant.";

inline constexpr std::string_view kThinkPrefix = "Let's think step-by-step.";
inline constexpr std::string_view kObservationAnchor = "In summary, the next web page observation is";

inline constexpr std::string_view kReprompt =
    "Your previous answer could not be parsed. Follow the response format exactly.";

/// One past step: where the agent was, what it thought, what it did.
struct StepView {
  const A11yTree* observation = nullptr;
  std::string_view thought;
  const Action* action = nullptr;
};

/// Policy user message: objective, <step-i> history, current observation.
inline std::string policy_user_message(std::string_view objective, std::span<const StepView> history,
                                       const A11yTree& observation) {
  std::string out = "OBJECTIVE:\n";
  out += objective;
  out += "\n\nTRAJECTORY:\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const std::string tag = "step-" + std::to_string(i + 1);
    out += "<" + tag + ">\n- OBSERVATION: ";
    out += serialize(*history[i].observation);
    out += "- REASON FOR ACTION: ";
    out += history[i].thought;
    out += "\n- ACTION: ";
    out += format_action(*history[i].action);
    out += "\n</" + tag + ">\n";
  }
  out += "\nOBSERVATION:\n";
  out += serialize(observation);
  out += "\nWhat's the next action?";
  return out;
}

inline std::string world_user_message(const A11yTree& observation, const Action& action) {
  return "OBSERVATION:\n" + serialize(observation) + "\nACTION:\n" + format_action(action);
}

inline std::string reward_user_message(std::string_view instruction, std::span<const StepView> steps,
                                       const A11yTree& current) {
  std::string out = "User Instruction: ";
  out += instruction;
  out += "\n\nAction History:\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string tag = "step-" + std::to_string(i + 1);
    out += "<" + tag + ">\n- REASON FOR ACTION: ";
    out += steps[i].thought;
    out += "\n- ACTION: ";
    out += format_action(*steps[i].action);
    out += "\n</" + tag + ">\n";
  }
  out += "\nThe accessibility tree of the current web page:\n";
  out += serialize(current);
  return out;
}

/// UI-understanding prompt: preamble, OBSERVATION and Instruction.
inline std::string ui_user_message(std::string_view web_state, std::string_view instruction) {
  std::string out(kUiAssistantPreamble);
  out += "\n\nOBSERVATION: ";
  out += web_state;
  out += "\n\nInstruction: ";
  out += instruction;
  return out;
}

}  // namespace websynth::prompts
