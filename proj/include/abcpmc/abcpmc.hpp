// Copyright 2026 The abcpmc Authors
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

#ifndef ABCPMC_ABCPMC_HPP_
#define ABCPMC_ABCPMC_HPP_

#include "abcpmc/core.hpp"
#include "abcpmc/density.hpp"
#include "abcpmc/engine.hpp"
#include "abcpmc/harness.hpp"
#include "abcpmc/io.hpp"
#include "abcpmc/models.hpp"
#include "abcpmc/random.hpp"
#include "abcpmc/ratio.hpp"
#include "abcpmc/schedule.hpp"

#endif  // ABCPMC_ABCPMC_HPP_
