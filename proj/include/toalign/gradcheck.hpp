#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "toalign/tensor.hpp"

namespace toalign {

// Numerical differentiation support used by the gradient suites. It only ever
// re-runs forward evaluations, so it is independent of the tape's reverse
// pass.

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// |analytic - numeric| scaled by the larger magnitude, floored so that
// near-zero derivative pairs compare absolutely.
double relative_error(double analytic, double numeric);

// Central difference of eval() w.r.t. one tensor entry, perturbing in place.
double central_difference(const std::function<double()>& eval, TensorPtr wrt, std::size_t index,
                          double step);

// Compares an analytic gradient vector against central differences at the
// given entries (all entries when `indices` is empty).
GradCheckReport check_gradient(const std::function<double()>& eval, TensorPtr wrt,
                               const std::vector<double>& analytic, double step,
                               const std::vector<std::size_t>& indices = {});

}  // namespace toalign
