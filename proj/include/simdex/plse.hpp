#pragma once

// Penalized least squares for the single index model
//
//     L_n(m, theta; lambda) = (1/n) sum_i (y_i - m(theta'x_i))^2 + lambda^2 J(m)
//
// The link is profiled out exactly (one banded spline solve per theta) and
// theta is moved along sphere paths by gradient descent with backtracking.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simdex/common.hpp"
#include "simdex/sphere.hpp"
#include "simdex/spline.hpp"

namespace simdex {

// Relative tie tolerance for projected index values. Projections of many
// covariate rows produce near ties; below about 1e-6 * range the banded
// inverse behind the hat trace loses accuracy like eps / gap^2.
inline constexpr double kIndexTieTolerance = 1e-6;

struct OptimOptions {
  int max_iter = 200;
  // Stop when |gradient| <= grad_tol * (gradient scale of the data).
  double grad_tol = 1e-7;
  // Stop when backtracking shrinks the path step below this.
  double step_tol = 1e-10;
  // Stop when an accepted step lowers the loss by less than this fraction.
  double value_tol = 1e-14;
  double armijo_shrink = 0.5;
  double armijo_c = 1e-4;
  int extra_starts = 4;
  std::uint64_t seed = 0;
  bool ols_start = true;
  // Tried before the OLS start, in order (warm starts).
  std::vector<Vector> initial_points;
  // Ties in the index closer than tie_tol_rel * range are pooled.
  double tie_tol_rel = kIndexTieTolerance;
};

/// One point of a GCV search.
struct GcvPoint {
  double lambda = 0.0;
  double qn = 0.0;
  double trace = 0.0;
  double gcv = 0.0;
  double loss = 0.0;
  bool converged = false;
};

struct PlseFit {
  UnitIndex theta_hat;
  SmoothingSplineFit spline{};
  double lambda = 0.0;
  double loss = 0.0;   // qn + lambda^2 * roughness
  double qn = 0.0;     // (1/n) sum of squared residuals
  double gcv = 0.0;
  double trace = 0.0;  // edf of the link
  bool converged = false;
  int iterations = 0;
  int restarts_used = 0;
  int best_start = 0;
  std::string stop_reason{};
  std::vector<double> start_losses{};  // loss at each initial point
  std::vector<GcvPoint> gcv_curve{};   // filled by select_lambda
};

struct ProfileResult {
  double loss = 0.0;
  double qn = 0.0;
  SmoothingSplineFit spline{};
};

/// T(theta) = inf_m L_n(m, theta; lambda) with its minimizing spline.
[[nodiscard]] ProfileResult profile_loss(const Dataset& data, const UnitIndex& theta,
                                         double lambda,
                                         double tie_tol_rel = kIndexTieTolerance);

/// Derivative of T along zeta_s(theta, e_j) at s = 0 for each tangent
/// coordinate j: -(2/n) sum_i r_i m'(theta'x_i) H'x_i. The penalty term does
/// not contribute because the spline is the inner minimizer.
[[nodiscard]] Vector profile_gradient(const Dataset& data, const UnitIndex& theta,
                                      const SmoothingSplineFit& spline,
                                      const TangentFrame& frame);

/// Multi-start profile descent. Throws NumericalError if no start yields a
/// finite loss.
[[nodiscard]] PlseFit fit_plse(const Dataset& data, double lambda,
                               const OptimOptions& opts = {});

/// Canonicalized least-squares slope vector (e1 when y is constant).
[[nodiscard]] UnitIndex ols_direction(const Dataset& data);

/// m(theta'x) for every row of x_new.
[[nodiscard]] Vector predict(const PlseFit& fit, const Matrix& x_new);

}  // namespace simdex
