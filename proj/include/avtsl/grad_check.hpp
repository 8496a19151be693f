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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "avtsl/tensor.hpp"

namespace avtsl {

struct GradCheckOptions
{
  double eps = 1e-5;
  double tolerance = 1e-5;
  // Denominator floor of the relative error, so gradients that are zero up
  // to rounding are compared on an absolute scale.
  double floor = 1e-4;
  // Cap on checked entries per input (0 = all). Entries are strided evenly.
  Index max_entries_per_input = 0;
};

struct GradCheckResult
{
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double tolerance = 0.0;
  Index checked = 0;
  // Entries where the finite difference itself is unstable (a perturbation
  // crossed a kink or an argmax tie); excluded from the error.
  Index skipped = 0;
  bool passed = false;
};

using LossFn = std::function<Tensor<double>(Tape<double>&)>;

// Compares reverse-mode gradients of f with respect to each input against
// central differences. f must rebuild the loss from the current input
// values on the tape it is given.
inline GradCheckResult grad_check(const std::string& name, const LossFn& f, const std::vector<Parameter<double>*>& inputs,
                                  const GradCheckOptions& opt = {})
{
  GradCheckResult res;
  res.name = name;
  res.tolerance = opt.tolerance;

  for (auto* p : inputs) p->zero_grad();
  {
    Tape<double> tape;
    auto loss = f(tape);
    if (loss.size() != 1) throw ContractError("grad_check '" + name + "': loss is not a scalar");
    tape.backward(loss);
  }

  auto eval = [&f]() {
    Tape<double> tape(false);
    return f(tape).item();
  };

  for (auto* p : inputs) {
    Index n = p->value.size();
    Index stride = 1;
    if (opt.max_entries_per_input > 0 && n > opt.max_entries_per_input)
      stride = (n + opt.max_entries_per_input - 1) / opt.max_entries_per_input;
    for (Index i = 0; i < n; i += stride) {
      double& x = p->value.data()[i];
      const double x0 = x;
      auto central = [&](double h) {
        x = x0 + h;
        double up = eval();
        x = x0 - h;
        double down = eval();
        x = x0;
        return (up - down) / (2.0 * h);
      };
      double numeric = central(opt.eps);
      double coarse = central(2.0 * opt.eps);
      double analytic = p->grad.data()[i];

      double scale = std::max({std::abs(numeric), std::abs(coarse), opt.floor});
      // Smooth functions give nearly equal differences at both step sizes;
      // a large disagreement means a discontinuity inside the stencil.
      if (std::abs(numeric - coarse) / scale > 1e-2) {
        ++res.skipped;
        continue;
      }
      double abs_err = std::abs(analytic - numeric);
      double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), opt.floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_rel_error = std::max(res.max_rel_error, rel_err);
      ++res.checked;
    }
  }
  // Too many unstable entries means the check did not really run.
  res.passed = res.checked > 0 && res.max_rel_error < opt.tolerance && res.skipped * 20 <= res.checked + res.skipped;
  return res;
}

} // namespace avtsl
