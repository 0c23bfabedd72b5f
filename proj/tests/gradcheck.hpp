// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cricbench/autograd.hpp"

namespace cricbench::testing {

// Central finite-difference check of a scalar-valued function of several
// tensors, run in double precision. Returns the worst relative error.
inline double gradcheck(
    const std::function<ag::VarD(std::vector<ag::VarD>&)>& fn,
    std::vector<TensorD> inputs, double h = 1e-5) {
  auto eval = [&](const std::vector<TensorD>& xs) {
    ag::NoGrad ng;
    std::vector<ag::VarD> vars;
    for (auto& t : xs) vars.emplace_back(t, false);
    return fn(vars).value()[0];
  };

  std::vector<ag::VarD> vars;
  for (auto& t : inputs) vars.emplace_back(t, true);
  ag::VarD loss = fn(vars);
  ag::backward(loss);

  double worst = 0.0;
  for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
    for (long i = 0; i < inputs[vi].numel(); ++i) {
      auto xs = inputs;
      xs[vi][i] += h;
      double fp = eval(xs);
      xs[vi][i] -= 2 * h;
      double fm = eval(xs);
      double numeric = (fp - fm) / (2 * h);
      double analytic = vars[vi].grad()[i];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace cricbench::testing
