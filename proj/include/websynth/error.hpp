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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace websynth {

enum class Errc {
  malformed_observation,
  duplicate_id,
  unknown_element,
  unparsable_action,
  invalid_argument,
  backend_unavailable,
  backend_failure,
  no_valid_action,
  malformed_prediction,
  malformed_verdict,
  score_out_of_range,
  search_exhausted,
  expansion_empty,
  captioner_unavailable,
  describer_unavailable,
  narrator_unavailable,
  dead_end,
  invalid_world,
  config_error,
  io_error,
  invalid_checkpoint,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::malformed_observation: return "MalformedObservation";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::unknown_element: return "UnknownElement";
    case Errc::unparsable_action: return "UnparsableAction";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::backend_failure: return "BackendFailure";
    case Errc::no_valid_action: return "NoValidAction";
    case Errc::malformed_prediction: return "MalformedPrediction";
    case Errc::malformed_verdict: return "MalformedVerdict";
    case Errc::score_out_of_range: return "ScoreOutOfRange";
    case Errc::search_exhausted: return "SearchExhausted";
    case Errc::expansion_empty: return "ExpansionEmpty";
    case Errc::captioner_unavailable: return "CaptionerUnavailable";
    case Errc::describer_unavailable: return "DescriberUnavailable";
    case Errc::narrator_unavailable: return "NarratorUnavailable";
    case Errc::dead_end: return "DeadEnd";
    case Errc::invalid_world: return "InvalidWorld";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
    case Errc::invalid_checkpoint: return "InvalidCheckpoint";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the Errc codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Thrown by model backends for failures worth retrying (timeouts, 429, 5xx).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message) : Error(Errc::backend_failure, message) {}
};

}  // namespace websynth
