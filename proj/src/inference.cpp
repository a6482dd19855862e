#include "simdex/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace simdex {

ConditionalMean::ConditionalMean(const Dataset& data, const UnitIndex& theta, double bandwidth)
    : bandwidth_(bandwidth) {
  validate_dataset(data, 1);
  if (theta.dim() != data.d()) throw std::domain_error("estimate_h: theta has wrong dimension");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw std::domain_error("estimate_h: bandwidth must be positive");
  }
  const Vector t = data.x * theta.coords();
  if (t.maxCoeff() == t.minCoeff()) throw std::domain_error("estimate_h: all index values are equal");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return t(a) < t(b); });
  index_.reserve(order.size());
  x_.resize(data.n(), data.d());
  for (std::size_t i = 0; i < order.size(); ++i) {
    index_.push_back(t(order[i]));
    x_.row(static_cast<Eigen::Index>(i)) = data.x.row(order[i]);
  }
}

Vector ConditionalMean::operator()(double u) const {
  u = std::clamp(u, index_.front(), index_.back());
  // Gaussian weights below exp(-32) are dropped.
  const double reach = 8.0 * bandwidth_;
  const auto first = std::lower_bound(index_.begin(), index_.end(), u - reach) - index_.begin();
  const auto last = std::upper_bound(index_.begin(), index_.end(), u + reach) - index_.begin();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  Vector t0 = Vector::Zero(x_.cols()), t1 = Vector::Zero(x_.cols());
  for (auto i = first; i < last; ++i) {
    const double z = index_[static_cast<std::size_t>(i)] - u;
    const double w = std::exp(-0.5 * (z / bandwidth_) * (z / bandwidth_));
    s0 += w;
    s1 += w * z;
    s2 += w * z * z;
    t0 += w * x_.row(i).transpose();
    t1 += (w * z) * x_.row(i).transpose();
  }
  const double det = s0 * s2 - s1 * s1;
  if (det > 1e-12 * s0 * s2) return (s2 * t0 - s1 * t1) / det;
  return t0 / s0;
}

double rule_of_thumb_bandwidth(const Dataset& data, const UnitIndex& theta) {
  const Vector t = data.x * theta.coords();
  const double n = static_cast<double>(t.size());
  const double sd = std::sqrt((t.array() - t.mean()).square().sum() / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

ConditionalMean estimate_h(const Dataset& data, const UnitIndex& theta,
                           std::optional<double> bandwidth) {
  if (!bandwidth) {
    if (data.n() < 10) throw std::domain_error("estimate_h: automatic bandwidth needs n >= 10");
    bandwidth = rule_of_thumb_bandwidth(data, theta);
  }
  return ConditionalMean(data, theta, *bandwidth);
}

Matrix efficient_scores(const Dataset& data, const PlseFit& fit, const ConditionalMean& h) {
  validate_dataset(data, 1);
  const Eigen::Index d = data.d();
  if (fit.theta_hat.dim() != d) throw std::domain_error("efficient_scores: fit has wrong dimension");
  const Matrix frame = reference_completion(fit.theta_hat.coords());
  const Vector t = data.x * fit.theta_hat.coords();
  Matrix scores(data.n(), d - 1);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const Vector centered = data.x.row(i).transpose() - h(t(i));
    if (centered.size() != d) throw std::domain_error("efficient_scores: h has wrong dimension");
    const double weight = (data.y(i) - fit.spline(t(i))) * fit.spline.derivative(t(i));
    scores.row(i) = weight * (frame.transpose() * centered).transpose();
  }
  return scores;
}

InferenceReport asymptotic_covariance(const Dataset& data, const PlseFit& fit,
                                      const Matrix& scores) {
  validate_dataset(data, 1);
  const Eigen::Index d = data.d();
  const double n = static_cast<double>(data.n());
  if (scores.rows() != data.n() || scores.cols() != d - 1) {
    throw std::domain_error("asymptotic_covariance: scores must be n x (d-1)");
  }
  if (data.n() <= d) throw std::domain_error("asymptotic_covariance: need n > d");
  InferenceReport out;
  const Vector resid = data.y - predict(fit, data.x);
  out.sigma2_hat = resid.squaredNorm() / n;
  out.info = scores.transpose() * scores / n;
  out.cov_theta = Matrix::Zero(d, d);
  out.se = Vector::Zero(d);
  // Residuals at roundoff level count as an exact fit.
  const double y_scale = data.y.squaredNorm() / n;
  if (d == 1 || out.sigma2_hat <= 1e-24 * y_scale) return out;

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(out.info);
  const double smallest = eig.eigenvalues().minCoeff();
  const double largest = eig.eigenvalues().maxCoeff();
  if (!(smallest > 0.0) || largest / smallest > 1e12) {
    std::ostringstream msg;
    msg << "efficient information is singular: smallest eigenvalue " << smallest
        << ", largest " << largest;
    throw SingularInformationError(msg.str(), smallest);
  }
  const Matrix info_inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                          eig.eigenvectors().transpose();
  const Matrix frame = reference_completion(fit.theta_hat.coords());
  Matrix cov = out.sigma2_hat * out.sigma2_hat * frame * info_inv * frame.transpose();
  out.cov_theta = 0.5 * (cov + cov.transpose());
  out.se = (out.cov_theta.diagonal().array().max(0.0) / n).sqrt();
  return out;
}

InferenceReport infer(const Dataset& data, const PlseFit& fit, std::optional<double> bandwidth) {
  const ConditionalMean h = estimate_h(data, fit.theta_hat, bandwidth);
  InferenceReport report = asymptotic_covariance(data, fit, efficient_scores(data, fit, h));
  report.h_bandwidths = Vector::Constant(data.d(), h.bandwidth());
  return report;
}

}  // namespace simdex
