#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spinal/tensor.hpp"

namespace spinal::gradcheck {

// Central finite difference of a scalar-valued function with respect to
// every element of `x`.
Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double step = 1e-5);

// Worst elementwise relative error between two gradients; magnitudes below
// `floor` are compared absolutely.
double max_relative_error(const Tensor& analytic, const Tensor& numeric,
                          double floor = 1e-8);

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct Report {
  std::vector<CheckResult> checks;
  bool all_pass = true;
  double seconds = 0.0;
};

// Finite-difference verification of every layer, both losses, and a tiny
// full model. `corrupt_bpd` perturbs the BPD gradient before comparison
// (negative control for the reporting path).
Report run_suite(std::uint64_t seed = 42, bool corrupt_bpd = false);

}  // namespace spinal::gradcheck
