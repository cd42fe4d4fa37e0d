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

// JSON-over-HTTP chat-completion client.
//
// Request:  {"model", "messages": [{"role", "content"}], "temperature", "n"}
// Response: {"choices": [{"message": {"content"}}]}
//
// The bearer token is read from an environment variable (WEBSYNTH_API_KEY by
// default). Connection failures, 408, 429 and 5xx are transient and retried
// by the gateway; other statuses fail immediately.

#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "websynth/error.hpp"
#include "websynth/gateway.hpp"

namespace websynth {

inline constexpr const char* kApiKeyVariable = "WEBSYNTH_API_KEY";

inline nlohmann::json chat_request_body(const std::string& model, const ChatPrompt& prompt,
                                        double temperature, int n) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : prompt) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", model}, {"messages", messages}, {"temperature", temperature}, {"n", n}};
}

inline std::vector<std::string> parse_chat_response(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw TransientError(std::string("unparsable chat response: ") + e.what());
  }
  if (!doc.contains("choices") || !doc["choices"].is_array()) {
    throw TransientError("chat response has no choices array");
  }
  std::vector<std::string> out;
  for (const auto& choice : doc["choices"]) {
    const auto message = choice.find("message");
    if (message == choice.end() || !message->contains("content") || !(*message)["content"].is_string()) {
      continue;
    }
    out.push_back((*message)["content"].get<std::string>());
  }
  return out;
}

struct EndpointAddress {
  std::string origin;  // scheme://host[:port]
  std::string path;    // .../chat/completions
};

inline EndpointAddress split_endpoint(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) {
    throw Error(Errc::config_error, "base_url '" + base_url + "' needs a scheme");
  }
  const auto slash = base_url.find('/', scheme + 3);
  EndpointAddress address;
  address.origin = base_url.substr(0, slash);
  std::string path = slash == std::string::npos ? "" : base_url.substr(slash);
  while (!path.empty() && path.back() == '/') path.pop_back();
  const std::string suffix = "/chat/completions";
  if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0) {
    path += suffix;
  }
  address.path = path;
  return address;
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ModelEndpointConfig config, const char* token_variable = kApiKeyVariable)
      : config_(std::move(config)), address_(split_endpoint(config_.base_url)) {
    validate(config_);
    if (const char* token = std::getenv(token_variable)) token_ = token;
  }

  std::vector<std::string> complete(const ChatPrompt& prompt, double temperature, int n) override {
    httplib::Client client(address_.origin);
    const auto seconds = config_.timeout.count() / 1000;
    const auto micros = (config_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    const std::string body = chat_request_body(config_.model_name, prompt, temperature, n).dump();
    auto result = client.Post(address_.path, headers, body, "application/json");
    if (!result) {
      throw TransientError("request to " + address_.origin + address_.path + " failed: " +
                           httplib::to_string(result.error()));
    }
    const int status = result->status;
    if (status == 408 || status == 429 || status >= 500) {
      throw TransientError("endpoint returned HTTP " + std::to_string(status));
    }
    if (status != 200) {
      throw Error(Errc::backend_failure, "endpoint returned HTTP " + std::to_string(status) + ": " +
                                             result->body.substr(0, 200));
    }
    return parse_chat_response(result->body);
  }

  const ModelEndpointConfig& config() const { return config_; }

 private:
  ModelEndpointConfig config_;
  EndpointAddress address_;
  std::string token_;
};

}  // namespace websynth
