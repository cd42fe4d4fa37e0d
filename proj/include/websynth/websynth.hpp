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

#include "websynth/a11y.hpp"
#include "websynth/action.hpp"
#include "websynth/curriculum.hpp"
#include "websynth/error.hpp"
#include "websynth/extraction.hpp"
#include "websynth/gateway.hpp"
#include "websynth/http_backend.hpp"
#include "websynth/orchestrator.hpp"
#include "websynth/prompts.hpp"
#include "websynth/simworld.hpp"
#include "websynth/webmcts.hpp"
