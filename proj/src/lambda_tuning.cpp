#include "simdex/lambda_tuning.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace simdex {

LambdaGrid lambda_grid(Eigen::Index n, int count, double c_lo, double c_hi) {
  if (n < 2) throw std::domain_error("lambda_grid: n must be at least 2");
  if (count < 1) throw std::domain_error("lambda_grid: count must be positive");
  if (!(c_lo > 0.0) || !(c_hi > 0.0)) throw std::domain_error("lambda_grid: constants must be positive");
  const double nn = static_cast<double>(n);
  const double lo = c_lo * std::pow(nn, -0.4);
  const double hi = c_hi * std::pow(nn, -0.25);
  if (!(lo <= hi)) throw std::domain_error("lambda_grid: empty interval");
  if (count >= 2 && !(lo < hi)) throw std::domain_error("lambda_grid: empty interval");
  LambdaGrid grid{{}, n, c_lo, c_hi};
  grid.values.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    grid.values.push_back(lo);
    return grid;
  }
  const double log_lo = std::log(lo), log_hi = std::log(hi);
  for (int i = 0; i < count; ++i) {
    if (i == 0) grid.values.push_back(lo);
    else if (i == count - 1) grid.values.push_back(hi);
    else grid.values.push_back(std::exp(log_lo + (log_hi - log_lo) * i / (count - 1)));
  }
  return grid;
}

double gcv_score(double qn, double trace, Eigen::Index n, GcvForm form) {
  const double nn = static_cast<double>(n);
  if (!(trace < nn)) {
    throw std::domain_error("gcv_score: trace " + std::to_string(trace) +
                            " must be below n = " + std::to_string(n));
  }
  const double denom = 1.0 - trace / nn;
  return form == GcvForm::kSquared ? qn / (denom * denom) : qn / denom;
}

PlseFit select_lambda(const Dataset& data, const LambdaGrid& grid, const OptimOptions& opts,
                      GcvForm form) {
  if (grid.values.empty()) throw std::domain_error("select_lambda: empty grid");
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (!(grid.values[i] > 0.0) || (i > 0 && !(grid.values[i] > grid.values[i - 1]))) {
      throw std::domain_error("select_lambda: grid must be positive and increasing");
    }
  }
  std::vector<GcvPoint> curve(grid.values.size());
  std::optional<PlseFit> best;
  std::optional<Vector> warm;
  std::string last_error;
  for (std::size_t i = grid.values.size(); i-- > 0;) {
    const double lambda = grid.values[i];
    OptimOptions local = opts;
    if (warm) {
      local.initial_points.insert(local.initial_points.begin(), *warm);
      local.extra_starts = 0;
      local.ols_start = false;
    }
    GcvPoint& point = curve[i];
    point.lambda = lambda;
    try {
      PlseFit fit = fit_plse(data, lambda, local);
      point.qn = fit.qn;
      point.trace = fit.trace;
      point.loss = fit.loss;
      point.converged = fit.converged;
      point.gcv = gcv_score(fit.qn, fit.trace, data.n(), form);
      fit.gcv = point.gcv;
      warm = fit.theta_hat.coords();
      // Descending in lambda, so "<=" hands ties to the smaller lambda.
      if (!best || point.gcv <= best->gcv) best = std::move(fit);
    } catch (const std::exception& e) {
      point.gcv = std::numeric_limits<double>::quiet_NaN();
      last_error = e.what();
    }
  }
  if (!best) throw NumericalError("select_lambda: every grid point failed: " + last_error);
  best->gcv_curve = std::move(curve);
  return *best;
}

}  // namespace simdex
