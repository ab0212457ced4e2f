#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "idapbc/errors.hpp"

namespace idapbc {

namespace detail {

template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm, double fb,
                       double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  // The floor keeps tiny tolerances from chasing round-off.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(left + right);
  if (std::abs(delta) <= std::max(15.0 * tol, floor)) return left + right + delta / 15.0;
  if (depth <= 0) throw quadrature_failure("adaptive Simpson: recursion limit reached");
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of `f` over [a, b] to absolute tolerance `tol`.
/// Works for b < a (returns the signed integral). Throws quadrature_failure when
/// the tolerance cannot be met within `max_depth` bisections.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double value = detail::simpson_recurse(f, a, b, fa, fm, fb, whole, tol, max_depth);
  if (!std::isfinite(value)) throw quadrature_failure("adaptive Simpson: non-finite integrand");
  return value;
}

/// 16-point Gauss-Legendre rule on [a, b].
template <class F>
double gauss_legendre_16(const F& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 16>::integrate(f, a, b);
}

}  // namespace idapbc
