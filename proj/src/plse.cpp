#include "simdex/plse.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "simdex/lambda_tuning.hpp"

namespace simdex {
namespace {

ProfileResult profile_at(const Dataset& data, const Vector& theta, double lambda,
                         double tie_tol_rel) {
  const Vector t = data.x * theta;
  const std::span<const double> ts(t.data(), static_cast<std::size_t>(t.size()));
  const std::span<const double> ys(data.y.data(), static_cast<std::size_t>(data.y.size()));
  ProfileResult out;
  out.spline = fit_spline(pool_knots(ts, ys, tie_tol_rel * (t.maxCoeff() - t.minCoeff())), lambda);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double r = data.y(i) - out.spline(t(i));
    ss += r * r;
  }
  out.qn = ss / static_cast<double>(data.n());
  out.loss = out.qn + lambda * lambda * out.spline.roughness;
  return out;
}

Vector gradient_at(const Dataset& data, const Vector& theta,
                   const SmoothingSplineFit& spline, const Matrix& h) {
  const Vector t = data.x * theta;
  Vector weights(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    weights(i) = (data.y(i) - spline(t(i))) * spline.derivative(t(i));
  }
  return (-2.0 / static_cast<double>(data.n())) * (h.transpose() * (data.x.transpose() * weights));
}

struct Descent {
  Vector theta;
  ProfileResult profile;
  bool converged = false;
  int iterations = 0;
  std::string reason;
};

double gradient_scale(const Dataset& data) {
  const double n = static_cast<double>(data.n());
  const double var_y = (data.y.array() - data.y.mean()).square().sum() / n;
  const Matrix xc = data.x.rowwise() - data.x.colwise().mean();
  const double rms_x = std::sqrt(xc.squaredNorm() / n);
  const double scale = var_y * rms_x;
  return scale > 0.0 ? scale : 1.0;
}

Descent descend(const Dataset& data, const Vector& start, double lambda,
                const OptimOptions& opts, double grad_scale) {
  Descent run;
  run.theta = canonicalize(start).coords();
  run.profile = profile_at(data, run.theta, lambda, opts.tie_tol_rel);
  if (!std::isfinite(run.profile.loss)) {
    run.reason = "non-finite loss";
    return run;
  }
  if (data.d() == 1) {
    run.converged = true;
    run.reason = "one-dimensional index";
    return run;
  }

  Vector prev_theta, prev_grad;  // ambient coordinates
  double step = 0.1;
  for (run.iterations = 0; run.iterations < opts.max_iter; ++run.iterations) {
    const TangentFrame frame = tangent_frame(run.theta, run.theta);
    const Vector g = gradient_at(data, run.theta, run.profile.spline, frame.h);
    const double gnorm = g.norm();
    if (!(gnorm > opts.grad_tol * grad_scale)) {
      run.converged = true;
      run.reason = "gradient";
      return run;
    }
    const Vector ambient_grad = frame.h * g;
    // Barzilai-Borwein length for the trial step, then Armijo backtracking.
    if (prev_theta.size() > 0) {
      const Vector dx = run.theta - prev_theta;
      const double curvature = dx.dot(ambient_grad - prev_grad);
      step = curvature > 0.0 ? dx.squaredNorm() / curvature * gnorm : 2.0 * step;
    }
    if (!std::isfinite(step) || step <= 0.0) step = 1.0;
    step = std::min(step, 1.0);
    const Vector direction = -g / gnorm;

    bool accepted = false;
    Vector trial_theta;
    ProfileResult trial;
    while (step >= opts.step_tol) {
      trial_theta = canonicalize(path_point(frame, direction, step)).coords();
      trial = profile_at(data, trial_theta, lambda, opts.tie_tol_rel);
      if (std::isfinite(trial.loss) &&
          trial.loss <= run.profile.loss - opts.armijo_c * step * gnorm) {
        accepted = true;
        break;
      }
      step *= opts.armijo_shrink;
    }
    if (!accepted) {
      run.converged = true;
      run.reason = "step";
      return run;
    }
    const double decrease = run.profile.loss - trial.loss;
    prev_theta = run.theta;
    prev_grad = ambient_grad;
    // A sign flip by canonicalize is a reflection of the index; compare
    // iterates on the same side for the secant pair.
    if (trial_theta.dot(prev_theta) < 0.0) prev_theta = -prev_theta, prev_grad = -prev_grad;
    run.theta = trial_theta;
    run.profile = std::move(trial);
    if (decrease <= opts.value_tol * std::max(std::abs(run.profile.loss), std::numeric_limits<double>::min())) {
      ++run.iterations;
      run.converged = true;
      run.reason = "value";
      return run;
    }
  }
  run.reason = "max_iter";
  return run;
}

}  // namespace

ProfileResult profile_loss(const Dataset& data, const UnitIndex& theta, double lambda,
                           double tie_tol_rel) {
  validate_dataset(data, 1);
  if (theta.dim() != data.d()) throw std::domain_error("profile_loss: theta has wrong dimension");
  return profile_at(data, theta.coords(), lambda, tie_tol_rel);
}

Vector profile_gradient(const Dataset& data, const UnitIndex& theta,
                        const SmoothingSplineFit& spline, const TangentFrame& frame) {
  if (frame.theta.size() != theta.dim() || (frame.theta - theta.coords()).norm() > 1e-12) {
    throw std::domain_error("profile_gradient: frame is not anchored at theta");
  }
  if (theta.dim() != data.d()) throw std::domain_error("profile_gradient: theta has wrong dimension");
  return gradient_at(data, theta.coords(), spline, frame.h);
}

UnitIndex ols_direction(const Dataset& data) {
  const Eigen::Index d = data.d();
  Matrix design(data.n(), d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = data.x;
  const Vector beta = design.colPivHouseholderQr().solve(data.y);
  const Vector slope = beta.tail(d);
  const Matrix xc = data.x.rowwise() - data.x.colwise().mean();
  const double x_scale = std::sqrt(xc.squaredNorm() / static_cast<double>(data.n()));
  const double y_scale = data.y.cwiseAbs().maxCoeff();
  // A constant response leaves only roundoff in the slope.
  if (!slope.allFinite() || slope.norm() * x_scale <= 1e-12 * y_scale) {
    return canonicalize(Vector::Unit(d, 0));
  }
  return canonicalize(slope);
}

PlseFit fit_plse(const Dataset& data, double lambda, const OptimOptions& opts) {
  validate_dataset(data, 2);
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::domain_error("fit_plse: lambda must be positive");
  const Eigen::Index d = data.d();

  std::vector<Vector> starts;
  for (const Vector& v : opts.initial_points) {
    if (v.size() != d) throw std::domain_error("fit_plse: initial point has wrong dimension");
    starts.push_back(v);
  }
  if (opts.ols_start) starts.push_back(ols_direction(data).coords());
  if (d > 1) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss;
    for (int s = 0; s < opts.extra_starts; ++s) {
      Vector v(d);
      for (Eigen::Index i = 0; i < d; ++i) v(i) = gauss(rng);
      starts.push_back(v);
    }
  }
  if (starts.empty()) starts.push_back(Vector::Unit(d, 0));

  const double scale = gradient_scale(data);
  std::optional<Descent> best;
  PlseFit fit{.theta_hat = canonicalize(starts.front()), .lambda = lambda};
  int best_index = -1;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    Descent run = descend(data, starts[s], lambda, opts, scale);
    fit.start_losses.push_back(profile_at(data, canonicalize(starts[s]).coords(), lambda, opts.tie_tol_rel).loss);
    if (!std::isfinite(run.profile.loss)) continue;
    if (!best || run.profile.loss < best->profile.loss) {
      best = std::move(run);
      best_index = static_cast<int>(s);
    }
  }
  if (!best) throw NumericalError("fit_plse: loss is not finite at any start");

  fit.theta_hat = canonicalize(best->theta);
  fit.spline = std::move(best->profile.spline);
  fit.loss = best->profile.loss;
  fit.qn = best->profile.qn;
  fit.trace = fit.spline.edf;
  const double n = static_cast<double>(data.n());
  fit.gcv = fit.trace < n ? gcv_score(fit.qn, fit.trace, data.n())
                          : std::numeric_limits<double>::infinity();
  fit.converged = best->converged;
  fit.iterations = best->iterations;
  fit.restarts_used = static_cast<int>(starts.size());
  fit.best_start = best_index;
  fit.stop_reason = best->reason;
  return fit;
}

Vector predict(const PlseFit& fit, const Matrix& x_new) {
  if (x_new.cols() != fit.theta_hat.dim()) {
    throw std::domain_error("predict: expected " + std::to_string(fit.theta_hat.dim()) +
                            " columns, got " + std::to_string(x_new.cols()));
  }
  const Vector t = x_new * fit.theta_hat.coords();
  Vector out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) out(i) = fit.spline(t(i));
  return out;
}

}  // namespace simdex
