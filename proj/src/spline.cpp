#include "simdex/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace simdex {
namespace {

void check_knots(const KnotVector& k) {
  const std::size_t m = k.sites.size();
  if (m == 0) throw std::domain_error("spline: no knots");
  if (k.weights.size() != m || k.pooled.size() != m) {
    throw std::domain_error("spline: knot arrays differ in length");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(k.sites[i])) {
      throw std::domain_error("spline: non-finite knot site");
    }
    if (!(k.weights[i] > 0.0) || !std::isfinite(k.weights[i])) {
      throw std::domain_error("spline: knot weights must be positive");
    }
    if (!std::isfinite(k.pooled[i])) {
      throw std::domain_error("spline: non-finite response");
    }
    if (i > 0 && !(k.sites[i] > k.sites[i - 1])) {
      throw std::domain_error("spline: knot sites must be strictly increasing");
    }
  }
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::domain_error("spline: lambda must be positive and finite");
  }
}

// Upper triangular U with two super-diagonals, u0[i] = U(i,i),
// u1[i] = U(i,i+1), u2[i] = U(i,i+2), such that U'U = B for the Reinsch
// matrix B = R + alpha Q'W^{-1}Q. Built by Givens rotations on the stacked
// least-squares design [sqrt(alpha) W^{-1/2} Q ; L_R'] (R = L_R L_R'),
// which avoids squaring the condition number of B.
struct BandedTriangle {
  std::vector<double> u0, u1, u2;
  std::vector<double> rhs;  // rotated right-hand side
  std::vector<bool> filled;

  explicit BandedTriangle(std::size_t m)
      : u0(m, 0.0), u1(m, 0.0), u2(m, 0.0), rhs(m, 0.0), filled(m, false) {}

  // Rotates a row with entries row[0..2] at columns lead..lead+2 (clipped to
  // the matrix) and right-hand side b into the triangle.
  void absorb(std::size_t lead, std::array<double, 3> row, double b) {
    const std::size_t m = u0.size();
    for (std::size_t j = lead; j < m; ++j) {
      const double a = row[0];
      if (!filled[j]) {
        if (a == 0.0 && row[1] == 0.0 && row[2] == 0.0) return;
        u0[j] = a;
        u1[j] = row[1];
        u2[j] = row[2];
        rhs[j] = b;
        filled[j] = true;
        return;
      }
      if (a != 0.0) {
        const double r = std::hypot(u0[j], a);
        const double c = u0[j] / r, s = a / r;
        const double n1 = -s * u1[j] + c * row[1];
        const double n2 = -s * u2[j] + c * row[2];
        u0[j] = r;
        u1[j] = c * u1[j] + s * row[1];
        u2[j] = c * u2[j] + s * row[2];
        const double nb = -s * rhs[j] + c * b;
        rhs[j] = c * rhs[j] + s * b;
        b = nb;
        row = {n1, n2, 0.0};
      } else {
        row = {row[1], row[2], 0.0};
      }
    }
  }

  [[nodiscard]] std::vector<double> back_substitute() const {
    const std::size_t m = u0.size();
    std::vector<double> x(m);
    for (std::size_t i = m; i-- > 0;) {
      double v = rhs[i];
      if (i + 1 < m) v -= u1[i] * x[i + 1];
      if (i + 2 < m) v -= u2[i] * x[i + 2];
      x[i] = v / u0[i];
    }
    return x;
  }

  // Entries of (U'U)^{-1} within the band: s0[i] = (i,i), s1[i] = (i,i+1),
  // s2[i] = (i,i+2). Backward recursion from U Sigma = U'^{-1}, whose
  // diagonal is 1/U(i,i).
  void inverse_band(std::vector<double>& s0, std::vector<double>& s1,
                    std::vector<double>& s2) const {
    const std::size_t m = u0.size();
    s0.assign(m, 0.0);
    s1.assign(m, 0.0);
    s2.assign(m, 0.0);
    for (std::size_t i = m; i-- > 0;) {
      const bool has1 = i + 1 < m;
      const bool has2 = i + 2 < m;
      const double a = has1 ? u1[i] / u0[i] : 0.0;
      const double b = has2 ? u2[i] / u0[i] : 0.0;
      if (has2) s2[i] = -a * s1[i + 1] - b * s0[i + 2];
      if (has1) s1[i] = -a * s0[i + 1] - (has2 ? b * s1[i + 1] : 0.0);
      s0[i] = 1.0 / (u0[i] * u0[i]) - (has1 ? a * s1[i] : 0.0) - (has2 ? b * s2[i] : 0.0);
    }
  }
};

// The Reinsch system on sites rescaled to [0, 1]. Column j of Q belongs to
// interior knot j+1 and has entries at rows j, j+1, j+2.
struct ReinschSystem {
  std::size_t k = 0;
  std::vector<double> h;           // rescaled spacings, size k-1
  std::vector<double> q0, q1, q2;  // Q(j,j), Q(j+1,j), Q(j+2,j)
  double alpha = 0.0;              // n lambda^2 / range^3
  double range = 1.0;

  ReinschSystem(const KnotVector& knots, double lambda) : k(knots.size()) {
    const auto& t = knots.sites;
    range = t.back() - t.front();
    h.resize(k - 1);
    for (std::size_t i = 0; i + 1 < k; ++i) h[i] = (t[i + 1] - t[i]) / range;
    const std::size_t m = k - 2;
    q0.resize(m);
    q1.resize(m);
    q2.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      q0[j] = 1.0 / h[j];
      q1[j] = -1.0 / h[j] - 1.0 / h[j + 1];
      q2[j] = 1.0 / h[j + 1];
    }
    alpha = knots.total_weight() * lambda * lambda / (range * range * range);
  }

  // Q entry at (row, col), zero outside the band.
  [[nodiscard]] double q(std::size_t row, std::size_t col) const {
    if (row == col) return q0[col];
    if (row == col + 1) return q1[col];
    if (row == col + 2) return q2[col];
    return 0.0;
  }

  [[nodiscard]] BandedTriangle factor(const std::vector<double>& w,
                                      const std::vector<double>& y) const {
    const std::size_t m = k - 2;
    // R = L L' with L lower bidiagonal: l0 diagonal, l1[j] = L(j+1, j).
    std::vector<double> l0(m), l1(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double diag = (h[j] + h[j + 1]) / 3.0;
      if (j > 0) diag -= l1[j - 1] * l1[j - 1];
      l0[j] = std::sqrt(diag);
      if (j + 1 < m) l1[j] = (h[j + 1] / 6.0) / l0[j];
    }
    BandedTriangle tri(m);
    const double sa = std::sqrt(alpha);
    // Rows in order of their leading column keeps the fill inside the band.
    for (std::size_t lead = 0; lead < m; ++lead) {
      const std::size_t first_row = lead == 0 ? 0 : lead + 2;
      for (std::size_t r = first_row; r <= lead + 2; ++r) {
        std::array<double, 3> row{0.0, 0.0, 0.0};
        const double scale = sa / std::sqrt(w[r]);
        for (std::size_t c = lead; c < std::min(lead + 3, m); ++c) row[c - lead] = scale * q(r, c);
        tri.absorb(lead, row, std::sqrt(w[r]) * y[r] / sa);
      }
      tri.absorb(lead, {l0[lead], l1[lead], 0.0}, 0.0);
    }
    return tri;
  }
};

// tr(A) = k - tr(alpha W^{-1} Q B^{-1} Q') = k - tr(B^{-1}(B - R))
//       = 2 + tr(B^{-1} R).
// R has small, well-scaled entries, unlike Q near tied knots.
double trace_from_factor(const ReinschSystem& sys, const BandedTriangle& tri) {
  std::vector<double> s0, s1, s2;
  tri.inverse_band(s0, s1, s2);
  const std::size_t m = sys.k - 2;
  const auto& h = sys.h;
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    acc += (h[i] + h[i + 1]) / 3.0 * s0[i];
    if (i + 1 < m) acc += 2.0 * (h[i + 1] / 6.0) * s1[i];
  }
  return 2.0 + acc;
}

double spline_roughness(const std::vector<double>& t,
                        const std::vector<double>& gamma) {
  double j = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double a = gamma[i], b = gamma[i + 1];
    j += (t[i + 1] - t[i]) * (a * a + a * b + b * b) / 3.0;
  }
  return j;
}

}  // namespace

double KnotVector::total_weight() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

double default_tie_tolerance(std::span<const double> t) {
  if (t.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  return 1e-10 * (*hi - *lo);
}

KnotVector pool_knots(std::span<const double> t, std::span<const double> y,
                      double tie_tol) {
  if (t.empty()) throw std::domain_error("pool_knots: empty input");
  if (t.size() != y.size()) throw std::domain_error("pool_knots: t and y differ in length");
  if (!(tie_tol >= 0.0)) throw std::domain_error("pool_knots: tie_tol must be >= 0");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) {
      throw std::domain_error("pool_knots: non-finite input");
    }
  }
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });

  KnotVector out;
  out.sites.reserve(t.size());
  out.weights.reserve(t.size());
  out.pooled.reserve(t.size());
  double prev = t[order.front()];
  double sum_t = 0.0, sum_y = 0.0, count = 0.0;
  auto flush = [&] {
    out.sites.push_back(sum_t / count);
    out.weights.push_back(count);
    out.pooled.push_back(sum_y / count);
  };
  for (std::size_t idx : order) {
    if (count > 0.0 && t[idx] - prev > tie_tol) {
      flush();
      sum_t = sum_y = count = 0.0;
    }
    sum_t += t[idx];
    sum_y += y[idx];
    count += 1.0;
    prev = t[idx];
  }
  flush();
  // A merged site is a mean, so it can only coincide with a neighbour when
  // tie_tol is zero and rounding is hostile; keep the strict ordering anyway.
  for (std::size_t i = 1; i < out.sites.size(); ++i) {
    if (!(out.sites[i] > out.sites[i - 1])) {
      out.sites[i] = std::nextafter(out.sites[i - 1], INFINITY);
    }
  }
  return out;
}

SmoothingSplineFit fit_spline(const KnotVector& knots, double lambda) {
  check_lambda(lambda);
  check_knots(knots);
  SmoothingSplineFit fit;
  fit.knots = knots;
  fit.lambda = lambda;
  const std::size_t k = knots.size();
  fit.second_derivatives.assign(k, 0.0);

  if (k == 1) {
    fit.values = knots.pooled;
    fit.edf = 1.0;
    return fit;
  }
  if (k == 2) {
    fit.values = knots.pooled;
    fit.edf = 2.0;
    return fit;
  }

  const ReinschSystem sys(knots, lambda);
  const BandedTriangle tri = sys.factor(knots.weights, knots.pooled);
  const std::size_t m = k - 2;
  const auto& y = knots.pooled;
  const std::vector<double> gamma = tri.back_substitute();

  // g = y - alpha W^{-1} Q gamma
  fit.values = y;
  for (std::size_t j = 0; j < m; ++j) {
    fit.values[j] -= sys.alpha * sys.q0[j] * gamma[j] / knots.weights[j];
    fit.values[j + 1] -= sys.alpha * sys.q1[j] * gamma[j] / knots.weights[j + 1];
    fit.values[j + 2] -= sys.alpha * sys.q2[j] * gamma[j] / knots.weights[j + 2];
  }
  const double r2 = sys.range * sys.range;
  for (std::size_t j = 0; j < m; ++j) fit.second_derivatives[j + 1] = gamma[j] / r2;
  fit.roughness = spline_roughness(knots.sites, fit.second_derivatives);
  fit.edf = trace_from_factor(sys, tri);
  return fit;
}

double SmoothingSplineFit::operator()(double u) const {
  const auto& t = knots.sites;
  const std::size_t k = t.size();
  if (k == 1) return values.front();
  if (u <= t.front()) return values.front() + derivative(t.front()) * (u - t.front());
  if (u >= t.back()) return values.back() + derivative(t.back()) * (u - t.back());
  const std::size_t i =
      static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), u) - t.begin()) - 1;
  const double h = t[i + 1] - t[i];
  const double a = u - t[i];
  const double b = t[i + 1] - u;
  const double m0 = second_derivatives[i], m1 = second_derivatives[i + 1];
  return (b * values[i] + a * values[i + 1]) / h +
         ((b * b * b - h * h * b) * m0 + (a * a * a - h * h * a) * m1) / (6.0 * h);
}

double SmoothingSplineFit::derivative(double u) const {
  const auto& t = knots.sites;
  const std::size_t k = t.size();
  if (k == 1) return 0.0;
  std::size_t i;
  if (u <= t.front()) {
    i = 0;
    u = t.front();
  } else if (u >= t.back()) {
    i = k - 2;
    u = t.back();
  } else {
    i = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), u) - t.begin()) - 1;
  }
  const double h = t[i + 1] - t[i];
  const double a = u - t[i];
  const double b = t[i + 1] - u;
  const double m0 = second_derivatives[i], m1 = second_derivatives[i + 1];
  return (values[i + 1] - values[i]) / h +
         ((h * h - 3.0 * b * b) * m0 + (3.0 * a * a - h * h) * m1) / (6.0 * h);
}

double eval(const SmoothingSplineFit& fit, double u) { return fit(u); }
double eval_deriv(const SmoothingSplineFit& fit, double u) { return fit.derivative(u); }

double hat_trace(const KnotVector& knots, double lambda) {
  check_lambda(lambda);
  check_knots(knots);
  if (knots.size() <= 2) return static_cast<double>(knots.size());
  const ReinschSystem sys(knots, lambda);
  return trace_from_factor(sys, sys.factor(knots.weights, knots.pooled));
}

double pooled_objective(const SmoothingSplineFit& fit) {
  const auto& k = fit.knots;
  double ss = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double r = k.pooled[i] - fit.values[i];
    ss += k.weights[i] * r * r;
  }
  return ss / k.total_weight() + fit.lambda * fit.lambda * fit.roughness;
}

}  // namespace simdex
