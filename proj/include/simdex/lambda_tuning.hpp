#pragma once

// Penalty grids on the admissible rate window and GCV selection.

#include <vector>

#include "simdex/plse.hpp"

namespace simdex {

/// Log-spaced values on [c_lo n^{-2/5}, c_hi n^{-1/4}], increasing.
struct LambdaGrid {
  std::vector<double> values;
  Eigen::Index n = 0;
  double c_lo = 0.1;
  double c_hi = 2.0;
};

inline constexpr double kDefaultGridLo = 0.1;
inline constexpr double kDefaultGridHi = 2.0;
inline constexpr int kDefaultGridCount = 15;

[[nodiscard]] LambdaGrid lambda_grid(Eigen::Index n, int count = kDefaultGridCount,
                                     double c_lo = kDefaultGridLo,
                                     double c_hi = kDefaultGridHi);

enum class GcvForm {
  kLinear,   // qn / (1 - trace/n), the default
  kSquared,  // qn / (1 - trace/n)^2, the classical variant
};

/// Throws std::domain_error when trace >= n.
[[nodiscard]] double gcv_score(double qn, double trace, Eigen::Index n,
                               GcvForm form = GcvForm::kLinear);

/// Fits every grid value from the largest lambda down, warm-starting each
/// fit at the previous estimate, and returns the fit with the smallest GCV
/// (ties go to the smaller lambda). The full curve is kept in gcv_curve.
/// Only the first (largest) lambda runs the random restarts of opts.
[[nodiscard]] PlseFit select_lambda(const Dataset& data, const LambdaGrid& grid,
                                    const OptimOptions& opts = {},
                                    GcvForm form = GcvForm::kLinear);

}  // namespace simdex
