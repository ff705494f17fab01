// Copyright 2026 The qstable Authors.
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

#include "qstable/alpha.hpp"
#include "qstable/analysis.hpp"
#include "qstable/coding.hpp"
#include "qstable/cs_recovery.hpp"
#include "qstable/error.hpp"
#include "qstable/estimators.hpp"
#include "qstable/experiments.hpp"
#include "qstable/parallel.hpp"
#include "qstable/power_stable.hpp"
#include "qstable/rng.hpp"
#include "qstable/tabulation.hpp"
