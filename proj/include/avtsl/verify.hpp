/*
 * Copyright 2026 The AVTSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <vector>

#include "avtsl/grad_check.hpp"

namespace avtsl {

inline constexpr double kOpTolerance = 1e-5;
inline constexpr double kCompositeTolerance = 1e-4;

// Gradient checks of every differentiable op on random shapes (dims <= 7),
// at 64-bit precision.
std::vector<GradCheckResult> grad_check_ops(std::uint64_t seed);

// Composed stages: interactor, tri-modal fusion, predictors, and the full
// loss of a tiny model (V_n = 4, T_n = 3, d = 8, H = 2) with pseudo-labels
// held fixed at the evaluation point.
std::vector<GradCheckResult> grad_check_model(std::uint64_t seed);

bool all_passed(const std::vector<GradCheckResult>& results);

} // namespace avtsl
