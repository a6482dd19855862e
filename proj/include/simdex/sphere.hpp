#pragma once

// Geometry of the index parameter space: the unit sphere with a
// non-negative first coordinate, tangent frames built from two Householder
// reflectors, and the path used for descent steps.

#include <span>

#include "simdex/common.hpp"

namespace simdex {

/// Unit vector with first coordinate >= 0. Construct through canonicalize()
/// or from_unit(); the invariant holds for every live instance.
class UnitIndex {
 public:
  /// Accepts a vector already in the parameter space (norm 1 within 1e-12,
  /// first coordinate >= 0); throws std::domain_error otherwise.
  static UnitIndex from_unit(const Vector& v);

  [[nodiscard]] const Vector& coords() const { return v_; }
  [[nodiscard]] Eigen::Index dim() const { return v_.size(); }
  [[nodiscard]] double operator[](Eigen::Index i) const { return v_(i); }

 private:
  explicit UnitIndex(Vector v) : v_(std::move(v)) {}
  friend UnitIndex canonicalize(const Vector& v);
  Vector v_;
};

/// v / |v|, negated when the first coordinate is negative. A first
/// coordinate of exactly zero keeps its sign. Throws on a zero vector.
[[nodiscard]] UnitIndex canonicalize(const Vector& v);

/// Orthonormal d x (d-1) basis of the hyperplane orthogonal to theta.
struct TangentFrame {
  Vector theta;
  Vector ref;
  Matrix h;
};

/// Fixed completion of ref: columns 2..d of the reflector I - 2vv'/v'v with
/// v = e1 + ref. That reflector sends e1 to -ref, so the columns span ref's
/// orthogonal complement.
[[nodiscard]] Matrix reference_completion(const Vector& ref);

/// H_theta = T_p T_d H_ref where T_d reflects ref onto theta and T_p fixes
/// theta while restoring orientation. Inputs must be unit vectors; antipodal
/// pairs are rejected.
[[nodiscard]] TangentFrame tangent_frame(const Vector& theta, const Vector& ref);
[[nodiscard]] TangentFrame tangent_frame(const UnitIndex& theta, const UnitIndex& ref);

/// zeta_s = sqrt(1 - s^2 |eta|^2) theta + s H eta. Requires |s eta| <= 1.
/// The result is a unit vector but may have a negative first coordinate.
[[nodiscard]] Vector path_point(const TangentFrame& frame, const Vector& eta, double s);

}  // namespace simdex
