#pragma once

#include <span>
#include <string>
#include <vector>

#include "spinal/loss.hpp"

namespace spinal {

// Sample Pearson correlation. Throws NumericError when either sequence is
// constant (the statistic is undefined, not zero).
double pearson_r(std::span<const double> a, std::span<const double> b);

struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
};

// One-way ANOVA for two groups; p from the F-distribution tail. Zero
// within-group variance with nonzero between-group variance yields an
// infinite-F sentinel with p = 0.
AnovaResult anova_oneway(std::span<const double> group1,
                         std::span<const double> group2);

// I_x(a, b) via Lentz continued fraction with the symmetry switch at
// x > (a+1)/(a+b+2). Absolute error below 1e-10.
double regularized_incomplete_beta(double x, double a, double b);

// Mean Euclidean point error in pixels after de-normalizing to (height,
// width).
double mean_radial_error(const LandmarkBatch& pred, const LandmarkBatch& gt,
                         int height, int width);

struct EvalReport {
  double pearson_r = 0.0;
  double anova_f = 0.0;
  double anova_p = 1.0;
  double mean_radial_error = 0.0;
  std::vector<double> per_vertebra;  // mean radial error per vertebra, px

  std::string to_json() const;
};

}  // namespace spinal
