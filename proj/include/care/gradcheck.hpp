#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "care/types.hpp"

namespace care {

struct GradCheckReport {
  std::string name;
  Scalar max_rel_err = 0.0;
  Scalar tolerance = 0.0;
  bool pass = false;
};

// Central finite difference of `value` at `x` with the given step.
VecX central_difference(const std::function<Scalar(const VecX&)>& value,
                        const VecX& x, Scalar step = 1e-5);

// Relative error with a unit floor: |a-b| / max(1, |a|, |b|).
Scalar rel_error(const VecX& analytic, const VecX& numeric);

// Finite-difference suites for every analytic gradient: the evidential
// losses with respect to logits and theta, the co-training losses with
// respect to both logit batches, and all of them end-to-end through the
// model parameters. 10 random instances per suite.
std::vector<GradCheckReport> run_gradcheck(std::uint64_t seed);

}  // namespace care
