#pragma once

// Exact one-dimensional penalized least squares with a natural cubic spline.
//
// The fitted function minimizes
//
//     (1/n) sum_i (y_i - m(t_i))^2 + lambda^2 * J(m),   J(m) = int m''(u)^2 du
//
// NOTE: lambda enters SQUARED. Every function here takes lambda itself and
// squares it internally; never pass lambda^2.

#include <span>
#include <vector>

namespace simdex {

/// Distinct index values with their multiplicities and the mean response at
/// each. Sites are strictly increasing; weights sum to n.
struct KnotVector {
  std::vector<double> sites;
  std::vector<double> weights;
  std::vector<double> pooled;

  [[nodiscard]] std::size_t size() const { return sites.size(); }
  [[nodiscard]] double total_weight() const;
};

/// Natural cubic spline stored in value / second-derivative form.
struct SmoothingSplineFit {
  KnotVector knots;
  std::vector<double> values;
  std::vector<double> second_derivatives;  // zero at both ends
  double lambda = 0.0;
  double roughness = 0.0;  // int m''^2, in the units of the sites
  double edf = 0.0;        // trace of the hat matrix

  [[nodiscard]] double lower() const { return knots.sites.front(); }
  [[nodiscard]] double upper() const { return knots.sites.back(); }

  /// Cubic inside the knot hull, linear continuation outside.
  [[nodiscard]] double operator()(double u) const;
  [[nodiscard]] double derivative(double u) const;
};

/// Default tie tolerance: 1e-10 times the range of t.
[[nodiscard]] double default_tie_tolerance(std::span<const double> t);

/// Sorts t and merges values whose chained gaps are <= tie_tol. A merged
/// site sits at the mean of its members; its response is the mean y.
[[nodiscard]] KnotVector pool_knots(std::span<const double> t,
                                    std::span<const double> y,
                                    double tie_tol = 0.0);

/// Throws std::domain_error if lambda <= 0, the knots are malformed or a
/// pooled response is not finite.
[[nodiscard]] SmoothingSplineFit fit_spline(const KnotVector& knots,
                                            double lambda);

[[nodiscard]] double eval(const SmoothingSplineFit& fit, double u);
[[nodiscard]] double eval_deriv(const SmoothingSplineFit& fit, double u);

/// Trace of the smoother matrix, via the banded inverse of the
/// Reinsch system (no dense matrix is formed).
[[nodiscard]] double hat_trace(const KnotVector& knots, double lambda);

/// (1/W) sum_j w_j (pooled_j - values_j)^2 + lambda^2 * roughness, where W is
/// the total weight. Within-tie scatter of the raw data is not included.
[[nodiscard]] double pooled_objective(const SmoothingSplineFit& fit);

}  // namespace simdex
