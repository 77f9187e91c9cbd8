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

#include <stdexcept>

namespace dps {

/// Invalid configuration or arguments (bad sizes, rates, modes).
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Filesystem or serialization failure.
struct storage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values encountered during optimization.
struct divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant; indicates a bug, not a user error.
struct internal_error : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace dps
