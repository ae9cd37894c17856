// Copyright 2026 The medcorr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "medcorr/cli.hpp"
#include "medcorr/config.hpp"
#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/gateway.hpp"
#include "medcorr/live_client.hpp"
#include "medcorr/metrics.hpp"
#include "medcorr/optimize.hpp"
#include "medcorr/pipelines.hpp"
#include "medcorr/prediction.hpp"
#include "medcorr/program.hpp"
#include "medcorr/retrieval.hpp"
#include "medcorr/text.hpp"
