#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vbs/tensor.hpp"

namespace vbs {

// Central-difference comparison of the analytic gradient of fn at input.
// Returns max over elements of |a - n| / max(1, |a|, |n|).
double finite_diff_check(const std::function<TensorPtr(const TensorPtr&)>& fn,
                         const TensorPtr& input, double h);

// Same check for a parameter perturbed in place while loss_fn is re-evaluated.
double finite_diff_param(const std::function<TensorPtr()>& loss_fn, const TensorPtr& param,
                         double h);

struct GradCheckResult {
    std::string op;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Randomized finite-difference suite covering every differentiable op.
// One entry per registered op; tolerance applied per entry.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                 double h = 1e-5);

}  // namespace vbs
