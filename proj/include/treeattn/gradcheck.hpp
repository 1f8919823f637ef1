#pragma once

#include <functional>
#include <string>

#include "treeattn/params.hpp"

namespace treeattn {

struct GradCheckOptions {
  double epsilon = 1e-5;    // central-difference step
  double tolerance = 1e-4;  // max allowed relative error
  // Deliberately corrupts one analytic gradient entry before comparing, to
  // prove the checker actually detects mismatches.
  bool corrupt_one = false;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares tape gradients against central differences over every parameter
// element.  build_loss must be a pure function of the store contents: it is
// re-evaluated under perturbed parameters, and two evaluations at the same
// point must agree bitwise (ConsistencyError otherwise).  Relative error is
// |a - n| / max(1, |a|, |n|).
GradCheckReport check_gradients(
    ParamStore& store,
    const std::function<Tensor(ParamContext&)>& build_loss,
    const GradCheckOptions& opts = {});

}  // namespace treeattn
