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

// Model gateway: the policy agent, world model and process reward model
// behind one request/response contract.
//
// A backend returns raw model text; the gateway builds the prompt, retries
// transient failures with exponential backoff, re-prompts once on malformed
// output and parses the result. Remote chat-completion backends and scripted
// backends (see simworld.hpp) plug in the same way, so both go through the
// same parsers.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"
#include "websynth/error.hpp"
#include "websynth/prompts.hpp"

namespace websynth {

struct TaskQuery {
  std::string instruction;
  std::optional<std::string> site_hint;
  std::string task_id;

  bool operator==(const TaskQuery&) const = default;
};

inline void validate(const TaskQuery& query) {
  if (query.instruction.empty()) {
    throw Error(Errc::invalid_argument, "task '" + query.task_id + "' has an empty instruction");
  }
}

/// Reward model output. value == (score - 1) / 4.
struct RewardVerdict {
  int score = 1;
  std::string reason;
  double value = 0.0;

  bool operator==(const RewardVerdict&) const = default;
};

inline RewardVerdict make_verdict(int score, std::string reason) {
  if (score < 1 || score > 5) {
    throw Error(Errc::score_out_of_range, "score " + std::to_string(score) + " outside 1..5");
  }
  return {score, std::move(reason), (score - 1) / 4.0};
}

struct ModelEndpointConfig {
  std::string base_url;
  std::string model_name;
  double temperature = 0.7;
  int max_retries = 2;
  std::chrono::milliseconds timeout{60000};
  int request_parallelism = 1;
};

inline void validate(const ModelEndpointConfig& config) {
  if (config.base_url.empty()) throw Error(Errc::config_error, "endpoint base_url is empty");
  if (config.model_name.empty()) throw Error(Errc::config_error, "endpoint model_name is empty");
  if (config.temperature < 0) throw Error(Errc::config_error, "temperature must be >= 0");
  if (config.max_retries < 0) throw Error(Errc::config_error, "max_retries must be >= 0");
  if (config.request_parallelism < 1) throw Error(Errc::config_error, "request_parallelism must be >= 1");
}

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

using ChatPrompt = std::vector<ChatMessage>;

/// One step of a search path: the observation the action was taken from and
/// the proposal that produced it.
struct HistoryStep {
  ObservationPtr observation;
  ActionProposal proposal;
};

struct PolicyRequest {
  const TaskQuery& query;
  std::span<const HistoryStep> history;
  const A11yTree& observation;
  int first_sample = 0;  // index of the first sample in this batch
  int count = 1;
  std::uint64_t seed = 0;
  const ChatPrompt& prompt;
};

struct WorldRequest {
  std::span<const HistoryStep> history;
  const A11yTree& observation;
  const Action& action;
  int attempt = 0;
  const ChatPrompt& prompt;
};

struct RewardRequest {
  const TaskQuery& query;
  std::span<const HistoryStep> steps;
  const A11yTree& current;
  int attempt = 0;
  const ChatPrompt& prompt;
};

class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  /// Returns up to request.count raw samples.
  virtual std::vector<std::string> sample(const PolicyRequest& request) = 0;
};

class WorldBackend {
 public:
  virtual ~WorldBackend() = default;
  virtual std::string predict(const WorldRequest& request) = 0;
  /// URL the action is known to lead to without running a prediction.
  virtual std::optional<std::string> anticipate_url(const WorldRequest&) { return std::nullopt; }
};

class RewardBackend {
 public:
  virtual ~RewardBackend() = default;
  virtual std::string judge(const RewardRequest& request) = 0;
};

/// Plain chat-completion client; implemented over HTTP in http_backend.hpp.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::vector<std::string> complete(const ChatPrompt& prompt, double temperature, int n) = 0;
};

// ---------------------------------------------------------------------------
// Retries and concurrency

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds base_delay{250};
  std::chrono::milliseconds max_delay{8000};
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  std::chrono::milliseconds delay_for(int retry) const {
    auto delay = base_delay * (std::int64_t{1} << std::min(retry, 20));
    return std::min(delay, max_delay);
  }
};

struct CallStats {
  std::atomic<std::uint64_t> calls{0};     // gateway operations
  std::atomic<std::uint64_t> attempts{0};  // backend invocations, retries included
  std::atomic<std::uint64_t> retries{0};
  std::atomic<std::uint64_t> failures{0};
};

/// Counting semaphore bounding in-flight requests to one endpoint.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int slots) : free_(std::max(slots, 1)) {}

  class Guard {
   public:
    explicit Guard(ConcurrencyLimiter* owner) : owner_(owner) {
      if (owner_) owner_->acquire();
    }
    ~Guard() {
      if (owner_) owner_->release();
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    ConcurrencyLimiter* owner_;
  };

 private:
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++free_;
    }
    cv_.notify_one();
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  int free_;
};

/// A model role: backend plus retry policy, limiter and call accounting.
template <typename Backend>
class ModelHandle {
 public:
  explicit ModelHandle(std::shared_ptr<Backend> backend, RetryPolicy retry = {},
                       std::shared_ptr<ConcurrencyLimiter> limiter = nullptr)
      : backend_(std::move(backend)), retry_(std::move(retry)), limiter_(std::move(limiter)) {}

  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;

  Backend& backend() { return *backend_; }
  const CallStats& stats() const { return stats_; }
  const RetryPolicy& retry_policy() const { return retry_; }

  void count_call() { ++stats_.calls; }

  /// Runs fn(backend) with up to max_retries retries on TransientError.
  template <typename Fn>
  auto invoke(Fn&& fn) -> decltype(fn(std::declval<Backend&>())) {
    for (int attempt = 0;; ++attempt) {
      ++stats_.attempts;
      try {
        ConcurrencyLimiter::Guard guard(limiter_.get());
        return fn(*backend_);
      } catch (const TransientError& e) {
        if (attempt >= retry_.max_retries) {
          ++stats_.failures;
          throw Error(Errc::backend_unavailable,
                      std::string(e.what()) + " (after " + std::to_string(attempt + 1) + " attempts)");
        }
        ++stats_.retries;
        if (retry_.sleep) retry_.sleep(retry_.delay_for(attempt));
      }
    }
  }

 private:
  std::shared_ptr<Backend> backend_;
  RetryPolicy retry_;
  std::shared_ptr<ConcurrencyLimiter> limiter_;
  CallStats stats_;
};

using PolicyModel = ModelHandle<PolicyBackend>;
using WorldModel = ModelHandle<WorldBackend>;
using RewardModel = ModelHandle<RewardBackend>;

// ---------------------------------------------------------------------------
// Output parsers

namespace detail {

inline std::vector<prompts::StepView> step_views(std::span<const HistoryStep> steps) {
  std::vector<prompts::StepView> views;
  views.reserve(steps.size());
  for (const auto& step : steps) {
    views.push_back({step.observation.get(), step.proposal.thought, &step.proposal.action});
  }
  return views;
}

inline std::optional<std::string_view> block_after_anchor(std::string_view text, std::string_view anchor) {
  std::size_t from = 0;
  const std::size_t at = text.rfind(anchor);
  if (at != std::string_view::npos) {
    from = at + anchor.size();
  } else {
    // no anchor: fall back to the last complete block
    std::optional<std::string_view> last;
    for (std::size_t pos = 0;;) {
      const std::size_t open = text.find("```", pos);
      if (open == std::string_view::npos) break;
      const std::size_t close = text.find("```", open + 3);
      if (close == std::string_view::npos) break;
      last = text.substr(open + 3, close - open - 3);
      pos = close + 3;
    }
    return last;
  }
  const std::size_t open = text.find("```", from);
  if (open == std::string_view::npos) return std::nullopt;
  const std::size_t close = text.find("```", open + 3);
  if (close == std::string_view::npos) return std::nullopt;
  return text.substr(open + 3, close - open - 3);
}

}  // namespace detail

/// Splits a policy response into (thought, action). The thought is the text
/// before the action anchor.
inline ActionProposal parse_proposal(std::string raw) {
  ActionProposal proposal;
  proposal.action = parse_action(raw);
  validate(proposal.action);
  std::string_view text = raw;
  const std::size_t anchor = text.rfind(kActionAnchor);
  std::string_view thought;
  if (anchor != std::string_view::npos) {
    thought = text.substr(0, anchor);
  } else if (const std::size_t block = text.find("```"); block != std::string_view::npos) {
    thought = text.substr(0, block);
  }
  proposal.thought = std::string(detail::trim(thought));
  proposal.raw = std::move(raw);
  return proposal;
}

/// The observation inside a world-model response.
inline A11yTree parse_prediction(std::string_view raw) {
  auto block = detail::block_after_anchor(raw, prompts::kObservationAnchor);
  if (!block) throw Error(Errc::malformed_prediction, "no observation block in model output");
  std::string_view body = *block;
  while (!body.empty() && (body.front() == '\n' || body.front() == '\r')) body.remove_prefix(1);
  try {
    A11yTree tree = parse(body);
    validate(tree);
    return tree;
  } catch (const Error& e) {
    throw Error(Errc::malformed_prediction, e.what());
  }
}

/// Reads the last `Score: n` line (and the last `Reason:` line).
inline RewardVerdict parse_verdict(std::string_view raw) {
  std::optional<std::string_view> score_line;
  std::string reason;
  for (auto line : detail::split_lines(raw)) {
    line = detail::trim(line);
    if (line.substr(0, 6) == "Score:") score_line = detail::trim(line.substr(6));
    if (line.substr(0, 7) == "Reason:") reason = std::string(detail::trim(line.substr(7)));
  }
  if (!score_line || score_line->empty()) {
    throw Error(Errc::malformed_verdict, "no 'Score:' line in reward output");
  }
  std::string_view digits = *score_line;
  if (digits.size() > 2 && digits.substr(digits.size() - 2) == "/5") digits.remove_suffix(2);
  bool negative = false;
  if (!digits.empty() && digits.front() == '-') {
    negative = true;
    digits.remove_prefix(1);
  }
  if (digits.empty() || digits.size() > 6 ||
      !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(Errc::malformed_verdict, "score '" + std::string(*score_line) + "' is not an integer");
  }
  int score = std::stoi(std::string(digits));
  return make_verdict(negative ? -score : score, std::move(reason));
}

// ---------------------------------------------------------------------------
// Gateway operations

struct SamplingOptions {
  std::uint64_t seed = 0;
};

/// Samples up to 2k policy outputs until k canonically distinct, parsable
/// actions are found. Returns between 1 and k proposals in sample order.
inline std::vector<ActionProposal> propose_actions(PolicyModel& policy, const TaskQuery& query,
                                                   std::span<const HistoryStep> history,
                                                   const A11yTree& observation, int k,
                                                   SamplingOptions options = {}) {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  policy.count_call();
  const auto views = detail::step_views(history);
  const ChatPrompt prompt = {
      {"system", std::string(prompts::kPolicySystem)},
      {"user", prompts::policy_user_message(query.instruction, views, observation)}};

  std::vector<ActionProposal> proposals;
  std::set<std::string> seen;
  const int budget = 2 * k;
  int drawn = 0;
  while (drawn < budget && static_cast<int>(proposals.size()) < k) {
    const int batch = std::min(k, budget - drawn);
    PolicyRequest request{query, history, observation, drawn, batch, options.seed, prompt};
    auto samples = policy.invoke([&](PolicyBackend& b) { return b.sample(request); });
    if (samples.empty()) break;
    drawn += static_cast<int>(samples.size());
    for (auto& raw : samples) {
      if (static_cast<int>(proposals.size()) >= k) break;
      try {
        ActionProposal proposal = parse_proposal(std::move(raw));
        if (seen.insert(canonicalize(proposal.action)).second) proposals.push_back(std::move(proposal));
      } catch (const Error&) {
        // unparsable sample: skip
      }
    }
  }
  if (proposals.empty()) {
    throw Error(Errc::no_valid_action, "policy produced no parsable action in " +
                                           std::to_string(drawn) + " samples");
  }
  return proposals;
}

/// URL the action leads to, when known without a prediction.
inline std::optional<std::string> anticipate_url(WorldModel& world, std::span<const HistoryStep> history,
                                                 const A11yTree& observation, const Action& action) {
  if (action.kind == ActionKind::go_to) return action.url;
  const ChatPrompt none;
  WorldRequest request{history, observation, action, 0, none};
  return world.backend().anticipate_url(request);
}

/// Next observation predicted by the world model. One re-prompt on
/// malformed output, then MalformedPrediction.
inline A11yTree predict_next(WorldModel& world, std::span<const HistoryStep> history,
                             const A11yTree& observation, const Action& action) {
  if (action.kind == ActionKind::stop) {
    throw Error(Errc::invalid_argument, "stop has no successor observation");
  }
  world.count_call();
  ChatPrompt prompt = {{"system", std::string(prompts::kWorldSystem)},
                       {"user", prompts::world_user_message(observation, action)}};
  for (int attempt = 0;; ++attempt) {
    WorldRequest request{history, observation, action, attempt, prompt};
    std::string raw = world.invoke([&](WorldBackend& b) { return b.predict(request); });
    try {
      return parse_prediction(raw);
    } catch (const Error& e) {
      if (attempt >= 1) throw;
      prompt.push_back({"assistant", std::move(raw)});
      prompt.push_back({"user", std::string(prompts::kReprompt)});
    }
  }
}

/// Judges the path so far. One re-prompt on a missing score line.
inline RewardVerdict score_trajectory(RewardModel& reward, const TaskQuery& query,
                                      std::span<const HistoryStep> steps, const A11yTree& current) {
  reward.count_call();
  const auto views = detail::step_views(steps);
  ChatPrompt prompt = {{"system", std::string(prompts::kRewardSystem)},
                       {"user", prompts::reward_user_message(query.instruction, views, current)}};
  for (int attempt = 0;; ++attempt) {
    RewardRequest request{query, steps, current, attempt, prompt};
    std::string raw = reward.invoke([&](RewardBackend& b) { return b.judge(request); });
    try {
      return parse_verdict(raw);
    } catch (const Error& e) {
      if (e.code() != Errc::malformed_verdict || attempt >= 1) throw;
      prompt.push_back({"assistant", std::move(raw)});
      prompt.push_back({"user", std::string(prompts::kReprompt)});
    }
  }
}

// ---------------------------------------------------------------------------
// Chat-completion backed roles

class ChatPolicyBackend : public PolicyBackend {
 public:
  ChatPolicyBackend(std::shared_ptr<ChatClient> client, double temperature)
      : client_(std::move(client)), temperature_(temperature) {}

  std::vector<std::string> sample(const PolicyRequest& request) override {
    return client_->complete(request.prompt, temperature_, request.count);
  }

 private:
  std::shared_ptr<ChatClient> client_;
  double temperature_;
};

class ChatWorldBackend : public WorldBackend {
 public:
  ChatWorldBackend(std::shared_ptr<ChatClient> client, double temperature)
      : client_(std::move(client)), temperature_(temperature) {}

  std::string predict(const WorldRequest& request) override {
    auto out = client_->complete(request.prompt, temperature_, 1);
    if (out.empty()) throw TransientError("world model returned no choices");
    return out.front();
  }

 private:
  std::shared_ptr<ChatClient> client_;
  double temperature_;
};

class ChatRewardBackend : public RewardBackend {
 public:
  ChatRewardBackend(std::shared_ptr<ChatClient> client, double temperature)
      : client_(std::move(client)), temperature_(temperature) {}

  std::string judge(const RewardRequest& request) override {
    auto out = client_->complete(request.prompt, temperature_, 1);
    if (out.empty()) throw TransientError("reward model returned no choices");
    return out.front();
  }

 private:
  std::shared_ptr<ChatClient> client_;
  double temperature_;
};

}  // namespace websynth
