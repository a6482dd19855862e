#pragma once

// Plug-in semiparametric inference for the index estimate.

#include <optional>
#include <vector>

#include "simdex/plse.hpp"

namespace simdex {

/// The efficient information estimate is singular or too ill-conditioned to
/// invert.
class SingularInformationError : public NumericalError {
 public:
  SingularInformationError(const std::string& what, double eigenvalue)
      : NumericalError(what), eigenvalue_(eigenvalue) {}
  [[nodiscard]] double eigenvalue() const { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// Local-linear Gaussian-kernel estimate of u -> E[X | theta'X = u].
/// Evaluation is clamped to the observed index range.
class ConditionalMean {
 public:
  ConditionalMean(const Dataset& data, const UnitIndex& theta, double bandwidth);

  [[nodiscard]] Vector operator()(double u) const;
  [[nodiscard]] double bandwidth() const { return bandwidth_; }
  [[nodiscard]] double lower() const { return index_.front(); }
  [[nodiscard]] double upper() const { return index_.back(); }

 private:
  std::vector<double> index_;  // sorted theta'x
  Matrix x_;                   // rows in the same order
  double bandwidth_;
};

/// 1.06 * sd(theta'X) * n^{-1/5}.
[[nodiscard]] double rule_of_thumb_bandwidth(const Dataset& data, const UnitIndex& theta);

/// Uses the rule-of-thumb bandwidth when none is given (needs n >= 10).
/// Throws std::domain_error if all index values coincide.
[[nodiscard]] ConditionalMean estimate_h(const Dataset& data, const UnitIndex& theta,
                                         std::optional<double> bandwidth = std::nullopt);

/// Row i: r_i m'(theta'x_i) H'(x_i - h(theta'x_i)), with H anchored at the
/// estimate. n x (d-1).
[[nodiscard]] Matrix efficient_scores(const Dataset& data, const PlseFit& fit,
                                      const ConditionalMean& h);

struct InferenceReport {
  double sigma2_hat = 0.0;
  Matrix info;       // (d-1) x (d-1), (1/n) scores' scores
  Matrix cov_theta;  // d x d, asymptotic covariance of sqrt(n)(theta_hat - theta0)
  Vector se;         // sqrt(diag(cov_theta) / n)
  Vector h_bandwidths;
};

/// cov = sigma2^2 H info^{-1} H'. Throws SingularInformationError when the
/// information has a non-positive eigenvalue or condition number > 1e12.
[[nodiscard]] InferenceReport asymptotic_covariance(const Dataset& data, const PlseFit& fit,
                                                    const Matrix& scores);

/// estimate_h, efficient_scores and asymptotic_covariance in sequence.
[[nodiscard]] InferenceReport infer(const Dataset& data, const PlseFit& fit,
                                    std::optional<double> bandwidth = std::nullopt);

}  // namespace simdex
