#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace simdex {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when an estimator cannot produce a finite result (all starts
/// diverged, every grid point failed, ...). Invalid arguments raise
/// std::domain_error instead.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n observations of d covariates plus a scalar response.
struct Dataset {
  Matrix x;  // n x d
  Vector y;  // n

  [[nodiscard]] Eigen::Index n() const { return x.rows(); }
  [[nodiscard]] Eigen::Index d() const { return x.cols(); }
};

/// Throws std::domain_error unless x and y agree in size, n >= min_rows and
/// every entry is finite.
void validate_dataset(const Dataset& data, Eigen::Index min_rows = 1);

}  // namespace simdex
