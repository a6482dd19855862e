#include "simdex/sphere.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace simdex {
namespace {

constexpr double kUnitTol = 1e-12;

void require_unit(const Vector& v, const char* what) {
  if (v.size() < 1 || !v.allFinite() || std::abs(v.norm() - 1.0) > kUnitTol) {
    throw std::domain_error(std::string(what) + ": expected a unit vector");
  }
}

}  // namespace

UnitIndex UnitIndex::from_unit(const Vector& v) {
  require_unit(v, "UnitIndex");
  if (v(0) < 0.0) throw std::domain_error("UnitIndex: first coordinate is negative");
  return UnitIndex(v);
}

UnitIndex canonicalize(const Vector& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::domain_error("canonicalize: zero or non-finite vector");
  }
  if (v.size() == 1) return UnitIndex(Vector::Ones(1));
  // Leave vectors that are already unit untouched so the map is idempotent.
  Vector u = std::abs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() ? v : Vector(v / norm);
  if (u(0) < 0.0) u = -u;
  return UnitIndex(std::move(u));
}

Matrix reference_completion(const Vector& ref) {
  require_unit(ref, "reference_completion");
  const Eigen::Index d = ref.size();
  Vector v = ref;
  v(0) += 1.0;
  const double vv = v.squaredNorm();
  Matrix h(d, d - 1);
  if (vv == 0.0) {
    // ref = -e1: the reflector degenerates; -e1's complement is e2..ed.
    h = Matrix::Identity(d, d).rightCols(d - 1);
    return h;
  }
  for (Eigen::Index j = 1; j < d; ++j) {
    Vector col = Vector::Unit(d, j) - (2.0 * v(j) / vv) * v;
    h.col(j - 1) = col;
  }
  return h;
}

TangentFrame tangent_frame(const Vector& theta, const Vector& ref) {
  require_unit(theta, "tangent_frame");
  require_unit(ref, "tangent_frame");
  if (theta.size() != ref.size()) throw std::domain_error("tangent_frame: dimension mismatch");
  TangentFrame f{theta, ref, reference_completion(ref)};
  if (theta == ref) return f;
  // T_p T_d is the rotation of span{ref, theta} carrying ref to theta. With
  // c = theta'ref and w = theta - c ref it acts on x orthogonal to ref as
  // x - (w'x) [w / (1 + c) + ref], free of small divisors near ref.
  const double c = theta.dot(ref);
  if (1.0 + c < 1e-12) throw std::domain_error("tangent_frame: theta and ref are antipodal");
  const Vector w = theta - c * ref;
  const Eigen::RowVectorXd wx = w.transpose() * f.h;
  f.h -= (w / (1.0 + c) + ref) * wx;
  return f;
}

TangentFrame tangent_frame(const UnitIndex& theta, const UnitIndex& ref) {
  return tangent_frame(theta.coords(), ref.coords());
}

Vector path_point(const TangentFrame& frame, const Vector& eta, double s) {
  if (eta.size() != frame.h.cols()) throw std::domain_error("path_point: eta has wrong length");
  const double step = std::abs(s) * eta.norm();
  // A few ulps of slack for unit directions built by normalization.
  if (!(step <= 1.0 + 8 * std::numeric_limits<double>::epsilon())) throw std::domain_error("path_point: |s eta| exceeds 1");
  if (s == 0.0) return frame.theta;
  return std::sqrt(std::max(0.0, 1.0 - step * step)) * frame.theta + s * (frame.h * eta);
}

}  // namespace simdex
