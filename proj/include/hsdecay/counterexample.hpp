#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hsdecay/error.hpp"
#include "hsdecay/numerics.hpp"
#include "hsdecay/parallel.hpp"

namespace hsdecay {

// u(x) = e^{iz} / (z + i), z = x1 + i x2: harmonic on the upper half-plane,
// |u|^2 = e^{-2 x2} / (x1^2 + (x2 + 1)^2).
inline complex counterexample_field(double x1, double x2) {
  complex const z(x1, x2), i(0.0, 1.0);
  return std::exp(i * z) / (z + i);
}

struct inner_integral {
  double value = 0.0;      // truncated integral plus tail
  double truncated = 0.0;  // adaptive quadrature over [-X, X]
  double tail = 0.0;       // asymptotic expansion of the two tails beyond |x1| = X
  double quad_error = 0.0;
};

// int_R dx1 / (x1^2 + c^2), c = 1 + x2, as quadrature on [-X, X] and
// 2 (1/X - c^2/(3X^3) + c^4/(5X^5) - c^6/(7X^7)) for the tails.
inline inner_integral counterexample_inner(double x2, double X) {
  double const c = 1.0 + x2;
  if (!(x2 >= 0.0)) fail(error_kind::precondition, "x2 must be nonnegative");
  if (!(X > 4.0 * c)) fail(error_kind::precondition, "x1 truncation must exceed 4 (1 + x2) for the tail expansion");
  auto f = [c](double x) { return 1.0 / (x * x + c * c); };
  inner_integral r;
  double err = 0.0;
  // split at c so the peak is resolved before the long flat stretch
  double const peak = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, c, 15, 1e-14, &err);
  r.quad_error = err;
  double const rest = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, c, X, 15, 1e-14, &err);
  r.quad_error = 2.0 * (r.quad_error + err);
  r.truncated = 2.0 * (peak + rest);
  double const q = (c / X) * (c / X);
  r.tail = 2.0 / X * (1.0 - q / 3.0 + q * q / 5.0 - q * q * q / 7.0);
  r.value = r.truncated + r.tail;
  return r;
}

struct counterexample_row {
  double lambda = 0.0;
  double T = 0.0;
  double X = 0.0;
  double value = 0.0;      // I_{T,X}(lambda); may be inf when only log_value is finite
  double log_value = 0.0;
  double tail_bound = std::numeric_limits<double>::infinity();  // bound on the s-integral beyond T
  double growth_slope = 0.0;  // lambda = 1: dI/d ln(1+T); lambda > 1: d ln I / dT
  std::string status;         // converged, unconverged, divergent-log, divergent-exp
  bool divergent = false;
};

namespace detail {
// log of int_0^T e^{2(lam-1)s} inner(s) ds; for lam > 1 the integrand is
// rescaled by e^{-2(lam-1)T} to stay finite.
inline double log_partial_integral(double lam, double T, double X) {
  double const k = 2.0 * (lam - 1.0);
  double const shift = k > 0.0 ? k * T : 0.0;
  auto f = [&](double s) { return std::exp(k * s - shift) * counterexample_inner(s, std::max(X, 8.0 * (1.0 + s))).value; };
  double const v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, T, 20, 1e-11);
  return std::log(v) + shift;
}
}  // namespace detail

// Weighted L^2 mass of u over (0, T) x (-X, X) with weight e^{2 lam x2}. The
// truncation X grows with x2 where needed so the tail expansion stays valid.
inline counterexample_row harmonic_counterexample(double lam, double T, double X = 1e3) {
  if (!(lam >= 0.0) || !std::isfinite(lam)) fail(error_kind::precondition, "lambda must be a nonnegative number");
  if (!(T > 0.0) || !std::isfinite(T)) fail(error_kind::precondition, "T must be positive");
  counterexample_row row;
  row.lambda = lam;
  row.T = T;
  row.X = X;
  row.log_value = detail::log_partial_integral(lam, T, X);
  row.value = std::exp(row.log_value);
  if (lam < 1.0) {
    // inner(s) <= pi / (1 + s) on the whole line
    double const k = 2.0 * (1.0 - lam);
    row.tail_bound = std::numbers::pi * std::exp(-k * T) / (k * (1.0 + T));
    row.status = row.tail_bound < 1e-3 * row.value ? "converged" : "unconverged";
    return row;
  }
  // lam >= 1: integrand >= inner(s) ~ pi / (1 + s), not integrable
  row.divergent = true;
  std::vector<double> x, y;
  for (double f : {0.125, 0.25, 0.5, 1.0}) {
    double const Tj = f * T;
    double const lv = f == 1.0 ? row.log_value : detail::log_partial_integral(lam, Tj, X);
    if (lam == 1.0) {
      x.push_back(std::log1p(Tj));
      y.push_back(std::exp(lv));
    } else {
      x.push_back(Tj);
      y.push_back(lv);
    }
  }
  row.growth_slope = least_squares_line(x, y).slope;
  row.status = lam == 1.0 ? "divergent-log" : "divergent-exp";
  return row;
}

inline std::vector<counterexample_row> counterexample_table(std::vector<double> const& lambdas, double T,
                                                            double X = 1e3, std::size_t threads = 1) {
  return parallel_map<counterexample_row>(lambdas.size(), [&](std::size_t i) {
    return harmonic_counterexample(lambdas[i], T, X);
  }, threads);
}

struct plane_box {
  double x1_lo = -2.0, x1_hi = 2.0;
  double x2_lo = 0.5, x2_hi = 2.0;
};

struct harmonicity_result {
  double max_abs = 0.0;  // max |five-point Laplacian| over interior nodes
  double at_x1 = 0.0, at_x2 = 0.0;
  std::size_t nodes = 0;
};

template <typename Fn>
harmonicity_result discrete_laplacian_max(Fn&& u, plane_box const& box, double h) {
  if (!(h > 0.0) || !(box.x1_hi > box.x1_lo) || !(box.x2_hi > box.x2_lo)) fail(error_kind::grid, "need a nonempty box and h > 0");
  auto count = [h](double lo, double hi) {
    double const n = (hi - lo) / h;
    auto const r = std::llround(n);
    if (r < 2 || std::abs(n - static_cast<double>(r)) > 1e-8 * n) fail(error_kind::grid, "h must divide the box edges");
    return static_cast<std::size_t>(r);
  };
  std::size_t const n1 = count(box.x1_lo, box.x1_hi), n2 = count(box.x2_lo, box.x2_hi);
  harmonicity_result res;
  for (std::size_t i = 1; i < n1; ++i) {
    for (std::size_t j = 1; j < n2; ++j) {
      double const x = box.x1_lo + static_cast<double>(i) * h, y = box.x2_lo + static_cast<double>(j) * h;
      auto const lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)) / (h * h);
      double const a = std::abs(lap);
      ++res.nodes;
      if (a > res.max_abs) {
        res.max_abs = a;
        res.at_x1 = x;
        res.at_x2 = y;
      }
    }
  }
  return res;
}

// The region must sit in the closed upper half-plane, away from the pole at (0, -1).
inline harmonicity_result harmonicity_check(plane_box const& box, double h) {
  if (!(box.x2_lo >= 0.0)) fail(error_kind::precondition, "region must lie in the upper half-plane (pole at x2 = -1)");
  return discrete_laplacian_max(counterexample_field, box, h);
}

}  // namespace hsdecay
