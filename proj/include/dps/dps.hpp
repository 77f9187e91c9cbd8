// Copyright 2026 The DPS Authors. All Rights Reserved.
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

#include "dps/analysis.hpp"
#include "dps/checkpoint.hpp"
#include "dps/errors.hpp"
#include "dps/reconstruction.hpp"
#include "dps/rng.hpp"
#include "dps/sampling.hpp"
#include "dps/signals.hpp"
#include "dps/svg.hpp"
#include "dps/text_io.hpp"
#include "dps/training.hpp"

namespace dps {
inline constexpr const char* kVersion = "0.1.0";
}
