#pragma once

#include <boost/math/differentiation/autodiff.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hsdecay/error.hpp"
#include "hsdecay/numerics.hpp"
#include "hsdecay/parallel.hpp"
#include "hsdecay/profile.hpp"

namespace hsdecay {

// Smallest support start accepted for the t^(4/3) weight; omega' and omega'''
// blow up at t = 0.
inline constexpr double min_support_start = 1e-3;

// ---- profiles -------------------------------------------------------------

inline double standard_bump(double s, double p = 1.0) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(-p / (1.0 - s * s));
}

// c_i(t) = amplitude_i * exp(-p / (1 - s^2)), s the affine image of t onto
// (-1, 1). Zero outside (t_lo, t_hi).
inline spectral_profile bump_profile(uniform_grid const& t, double t_lo, double t_hi, std::vector<complex> const& amplitudes,
                                     std::vector<double> eigs, double alpha = 0.0, double p = 1.0) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo) || t_lo < t.lo || t_hi > t.hi)
    fail(error_kind::grid, "bump support must satisfy 0 < t_lo < t_hi inside the t-grid");
  if (amplitudes.size() != eigs.size()) fail(error_kind::schema, "one amplitude per eigenvalue is required");
  if (!(p > 0.0)) fail(error_kind::schema, "bump parameter must be positive");
  spectral_profile out = make_profile(std::move(eigs), alpha, t);
  double const mid = 0.5 * (t_lo + t_hi), half = 0.5 * (t_hi - t_lo);
  for (std::size_t k = 0; k < t.points; ++k) {
    double const b = standard_bump((t[k] - mid) / half, p);
    if (b == 0.0) continue;
    for (std::size_t i = 0; i < out.modes(); ++i) out.at(i, k) = amplitudes[i] * b;
  }
  return out;
}

// C^2 step 6x^5 - 15x^4 + 10x^3 on [0, 1]: sup h' = 15/8, sup |h''| = 10/sqrt(3).
inline double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

// Cut-off supported in (eps/2, 2R), equal to 1 on [eps, R], rising over
// [eps/2, eps] and falling over the taper [R, 2R].
inline double cutoff_value(double t, double eps, double r) {
  if (t <= 0.5 * eps || t >= 2.0 * r) return 0.0;
  if (t < eps) return smoothstep5((t - 0.5 * eps) / (0.5 * eps));
  if (t <= r) return 1.0;
  return 1.0 - smoothstep5((t - r) / r);
}

struct taper_report {
  double sup_d1 = 0.0;  // sup |h'| on [R, 2R], centered differences
  double sup_d2 = 0.0;  // sup |h''| on [R, 2R]
  double bound_d1 = 0.0;
  double bound_d2 = 0.0;
  bool within() const { return sup_d1 <= bound_d1 && sup_d2 <= bound_d2; }
};

inline taper_report measure_taper(uniform_grid const& t, double eps, double r) {
  if (!(eps > 0.0) || !(r > eps)) fail(error_kind::precondition, "cut-off needs 0 < eps < R");
  if (t.hi < 2.0 * r || t.lo > r) fail(error_kind::grid, "t-grid must cover the taper [R, 2R]");
  double const h = t.step();
  taper_report rep;
  rep.bound_d1 = 2.0 / r;
  rep.bound_d2 = 8.0 / (r * r);
  for (std::size_t k = 1; k + 1 < t.points; ++k) {
    double const x = t[k];
    if (x < r || x > 2.0 * r) continue;
    double const f0 = cutoff_value(t[k - 1], eps, r), f1 = cutoff_value(x, eps, r), f2 = cutoff_value(t[k + 1], eps, r);
    rep.sup_d1 = std::max(rep.sup_d1, std::abs(f2 - f0) / (2.0 * h));
    rep.sup_d2 = std::max(rep.sup_d2, std::abs(f2 - 2.0 * f1 + f0) / (h * h));
  }
  return rep;
}

inline spectral_profile cutoff_profile(uniform_grid const& t, double eps, double r, std::vector<complex> const& amplitudes,
                                       std::vector<double> eigs, double alpha = 0.0) {
  if (amplitudes.size() != eigs.size()) fail(error_kind::schema, "one amplitude per eigenvalue is required");
  if (!(eps > 0.0) || !(r > eps)) fail(error_kind::precondition, "cut-off needs 0 < eps < R");
  if (t.lo > 0.5 * eps || t.hi < 2.0 * r) fail(error_kind::grid, "cut-off support lies outside the t-grid");
  spectral_profile out = make_profile(std::move(eigs), alpha, t);
  for (std::size_t k = 0; k < t.points; ++k) {
    double const h = cutoff_value(t[k], eps, r);
    for (std::size_t i = 0; i < out.modes(); ++i) out.at(i, k) = amplitudes[i] * h;
  }
  return out;
}

// ---- algebraic identities -------------------------------------------------

struct conjugation_result {
  double max_residual = 0.0;
  double at_t = 0.0;
};

// Both sides of e^Omega (d_t^2 - A)(e^{-Omega} psi) = (d_t^2 - A_omega - L) psi
// with Omega = lam t^{4/3}, omega = Omega', A_omega = A - omega^2 and
// L = 2 omega d_t + omega', by centered differences (order h^2).
inline conjugation_result conjugation_identity_check(spectral_profile const& psi, double weight_lambda) {
  psi.validate();
  if (!(weight_lambda > 0.0)) fail(error_kind::precondition, "weight lambda must be positive");
  double const scale = psi.max_abs();
  for (std::size_t k = 0; k < psi.t.points; ++k)
    if (psi.t[k] < min_support_start)
      for (std::size_t i = 0; i < psi.modes(); ++i)
        if (std::abs(psi.at(i, k)) > 1e-14 * scale)
          fail(error_kind::precondition, "profile support touches t = 0 where omega' is singular");
  double const h = psi.t.step();
  conjugation_result res;
  for (std::size_t k = 1; k + 1 < psi.t.points; ++k) {
    double const t = psi.t[k];
    if (t < min_support_start) continue;
    double const big = weight_lambda * std::pow(t, 4.0 / 3.0);
    double const om = 4.0 * weight_lambda / 3.0 * std::cbrt(t);
    double const om1 = 4.0 * weight_lambda / 9.0 * std::pow(t, -2.0 / 3.0);
    double e_m = std::exp(-weight_lambda * std::pow(std::max(psi.t[k - 1], 0.0), 4.0 / 3.0) + big);
    double e_p = std::exp(-weight_lambda * std::pow(psi.t[k + 1], 4.0 / 3.0) + big);
    double s = 0.0;
    for (std::size_t i = 0; i < psi.modes(); ++i) {
      complex const p0 = psi.at(i, k), pm = psi.at(i, k - 1), pp = psi.at(i, k + 1);
      double const mu = psi.eigs[i];
      // e^{Omega(t)} [ (phi_{k+1} - 2 phi_k + phi_{k-1}) / h^2 - mu phi_k ], phi = e^{-Omega} psi
      complex const lhs = (e_p * pp - 2.0 * p0 + e_m * pm) / (h * h) - mu * p0;
      complex const d1 = (pp - pm) / (2.0 * h);
      complex const d2 = (pp - 2.0 * p0 + pm) / (h * h);
      complex const rhs = d2 - (mu - om * om) * p0 - 2.0 * om * d1 - om1 * p0;
      s += std::norm(lhs - rhs);
    }
    double const r = std::sqrt(s);
    if (r > res.max_residual) {
      res.max_residual = r;
      res.at_t = t;
    }
  }
  return res;
}

struct weight_sign_row {
  double t = 0.0;
  double value = 0.0;        // -(omega'^2 + 2 omega omega'' + omega''') from derivatives of omega
  double closed_form = 0.0;  // (8/81) lam t^{-4/3} (6 lam - 5 t^{-4/3})
  double rel_diff = 0.0;
  bool positive = false;      // value > 0
  bool admissible = false;    // lam >= t^{-4/3}
};

// Derivatives of omega = (4 lam / 3) t^{1/3} are taken by forward-mode
// automatic differentiation, independently of the closed form.
inline std::vector<weight_sign_row> weight_sign_check(double weight_lambda, std::vector<double> const& t_points) {
  using boost::math::differentiation::make_fvar;
  std::vector<weight_sign_row> out;
  for (double t : t_points) {
    if (!(t > 0.0)) fail(error_kind::precondition, "weight sign check needs t > 0");
    auto const x = make_fvar<double, 3>(t);
    auto const om = (4.0 * weight_lambda / 3.0) * pow(x, 1.0 / 3.0);
    double const w0 = om.derivative(0), w1 = om.derivative(1), w2 = om.derivative(2), w3 = om.derivative(3);
    weight_sign_row row;
    row.t = t;
    row.value = -(w1 * w1 + 2.0 * w0 * w2 + w3);
    double const tm = std::pow(t, -4.0 / 3.0);
    row.closed_form = 8.0 / 81.0 * weight_lambda * tm * (6.0 * weight_lambda - 5.0 * tm);
    double const denom = std::abs(row.closed_form);
    row.rel_diff = denom > 0.0 ? std::abs(row.value - row.closed_form) / denom : std::abs(row.value);
    row.positive = row.value > 0.0;
    row.admissible = weight_lambda >= tm;
    out.push_back(row);
  }
  return out;
}

// ---- weighted inequalities ------------------------------------------------

struct carleman_report {
  std::string weight;  // "t^4/3" or "gap"
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double quad_err = 0.0;
  double lhs_coarse = 0.0;
  double rhs_coarse = 0.0;
  bool resolved = true;
  bool passed = false;
  std::string verdict;  // pass, fail, unresolved, exploratory
  double weight_lambda = 0.0;
  double eps = 0.0;
  double a = 0.0, b = 0.0, w = 0.0, m = 0.0;
  double alpha = 0.0;
  std::size_t modes = 0;
  std::size_t t_points = 0;
};

struct verify_options {
  double resolution_tol = 1e-6;  // relative change under grid doubling
  bool force = false;            // skip the 3a^2 > alpha check; no pass/fail semantics
};

namespace detail {

inline void require_vanishing_ends(spectral_profile const& p, bool at_start) {
  double const scale = p.max_abs();
  for (std::size_t i = 0; i < p.modes(); ++i) {
    if (std::abs(p.at(i, p.t.points - 1)) > 1e-12 * scale)
      fail(error_kind::precondition, "profile must vanish at the end of the t-grid (compact support)");
    if (at_start && std::abs(p.at(i, 0)) > 1e-12 * scale)
      fail(error_kind::precondition, "profile must vanish at the start of the t-grid (compact support)");
  }
}

// (int e^{W(t)} ||phi||^2, int e^{W(t)} ||(d_t^2 - A) phi||^2) by Simpson.
template <typename LogWeight>
std::pair<double, double> weighted_integrals(spectral_profile const& p, LogWeight&& log_weight) {
  spectral_profile const psi = apply_operator(p, true);
  std::vector<double> f(p.t.points), g(p.t.points);
  for (std::size_t k = 0; k < p.t.points; ++k) {
    double const a = p.norm2(k), b = psi.norm2(k);
    if (a == 0.0 && b == 0.0) {
      f[k] = g[k] = 0.0;
      continue;
    }
    double const lw = log_weight(p.t[k]);
    if (lw > 700.0) fail(error_kind::solver, "weight overflows double precision on the profile support");
    double const w = std::exp(lw);
    f[k] = w * a;
    g[k] = w * b;
  }
  double const h = p.t.step();
  return {simpson(f, h), simpson(g, h)};
}

inline bool relatively_close(double x, double y, double tol) {
  double const s = std::max(std::abs(x), std::abs(y));
  return s == 0.0 || std::abs(x - y) <= tol * s;
}

template <typename LogWeight>
void fill_report(carleman_report& rep, spectral_profile const& p, double lhs_factor, LogWeight&& log_weight,
                 verify_options const& opt) {
  auto const [l, r] = weighted_integrals(p, log_weight);
  auto const c = coarsen(p);
  auto const [lc, rc] = weighted_integrals(c, log_weight);
  rep.lhs = lhs_factor * l;
  rep.rhs = r;
  rep.lhs_coarse = lhs_factor * lc;
  rep.rhs_coarse = rc;
  rep.margin = rep.rhs - rep.lhs;
  // Simpson and the five-point stencil are both order h^4.
  rep.quad_err = (std::abs(rep.lhs - rep.lhs_coarse) + std::abs(rep.rhs - rep.rhs_coarse)) / 15.0;
  rep.modes = p.modes();
  rep.t_points = p.t.points;
  rep.resolved = relatively_close(rep.lhs, rep.lhs_coarse, opt.resolution_tol) &&
                 relatively_close(rep.rhs, rep.rhs_coarse, opt.resolution_tol);
  rep.passed = rep.margin >= -(rep.quad_err + 1e-9 * rep.rhs);
  if (!rep.resolved) {
    rep.verdict = "unresolved";
    rep.passed = false;
  } else {
    rep.verdict = rep.passed ? "pass" : "fail";
  }
}

}  // namespace detail

// lam^3 int e^{2 lam t^{4/3}} ||phi||^2 <= int e^{2 lam t^{4/3}} ||(d_t^2 - A) phi||^2
// for phi vanishing on t < eps and lam >= eps^{-4/3}.
inline carleman_report verify_carleman_43(spectral_profile const& phi, double weight_lambda, double eps,
                                          verify_options const& opt = {}) {
  phi.validate();
  if (!(eps >= min_support_start)) fail(error_kind::precondition, "eps must be at least 1e-3");
  if (phi.t.lo < 0.0) fail(error_kind::precondition, "t-grid must lie in t >= 0");
  double const lam_min = std::pow(eps, -4.0 / 3.0);
  if (!(weight_lambda >= lam_min * (1.0 - 1e-12)))
    fail(error_kind::precondition, "weight lambda below eps^(-4/3)");
  double const scale = phi.max_abs();
  for (std::size_t k = 0; k < phi.t.points && phi.t[k] < eps; ++k)
    for (std::size_t i = 0; i < phi.modes(); ++i)
      if (std::abs(phi.at(i, k)) > 1e-12 * scale) fail(error_kind::precondition, "profile does not vanish for t < eps");
  detail::require_vanishing_ends(phi, false);
  carleman_report rep;
  rep.weight = "t^4/3";
  rep.weight_lambda = weight_lambda;
  rep.eps = eps;
  rep.alpha = phi.alpha;
  double const lam3 = weight_lambda * weight_lambda * weight_lambda;
  detail::fill_report(rep, phi, lam3, [&](double t) { return 2.0 * weight_lambda * std::pow(t, 4.0 / 3.0); }, opt);
  return rep;
}

struct gap_parameters {
  double a = 0.0, b = 0.0, w = 0.0, m = 0.0;
};

inline gap_parameters check_gap_preconditions(std::vector<double> const& eigs, double a, double b, double alpha,
                                              bool force = false) {
  if (!(a > 0.0) || !(b > a)) fail(error_kind::precondition, "gap needs 0 < a < b");
  if (!(alpha >= 0.0)) fail(error_kind::precondition, "alpha must be nonnegative");
  for (double mu : eigs) {
    if (mu < -alpha) fail(error_kind::precondition, "eigenvalue below -alpha");
    if (mu > a * a && mu < b * b) fail(error_kind::precondition, "spectrum meets the gap (a^2, b^2)");
  }
  if (!force && !(3.0 * a * a > alpha)) fail(error_kind::precondition, "gap requires 3 a^2 > alpha");
  return {a, b, 0.5 * (a + b), b - a};
}

// (a^2 m^2 / 4) int e^{2wt} ||phi||^2 <= int e^{2wt} ||(d_t^2 - A) phi||^2,
// w = (a+b)/2, m = b - a, under a spectral gap (a^2, b^2) with 3a^2 > alpha.
inline carleman_report verify_carleman_gap(spectral_profile const& phi, double a, double b, double alpha,
                                           verify_options const& opt = {}) {
  phi.validate();
  auto const g = check_gap_preconditions(phi.eigs, a, b, alpha, opt.force);
  if (phi.t.lo < 0.0) fail(error_kind::precondition, "t-grid must lie in t >= 0");
  detail::require_vanishing_ends(phi, true);
  carleman_report rep;
  rep.weight = "gap";
  rep.a = a;
  rep.b = b;
  rep.w = g.w;
  rep.m = g.m;
  rep.alpha = alpha;
  detail::fill_report(rep, phi, a * a * g.m * g.m / 4.0, [&](double t) { return 2.0 * g.w * t; }, opt);
  if (opt.force && !(3.0 * a * a > alpha)) {
    rep.verdict = "exploratory";
    rep.passed = false;
  }
  return rep;
}

// ---- first-order reduction ------------------------------------------------

struct system_check_result {
  std::size_t modes = 0;
  std::vector<bool> below;  // mode in range(P_-)
  Eigen::MatrixXd b0, b1, b2, q0, q1, q2;
  // Extreme eigenvalues on the ranges of Q_0, Q_1, Q_2; empty when the range is trivial.
  std::optional<double> min_eig_b0;  // of B_0^* + B_0 - m Q_0
  std::optional<double> min_eig_b1;  // of B_1^* + B_1 - m Q_1
  std::optional<double> max_eig_b2;  // of B_2^* + B_2 + m Q_2
  double identity_residual[3] = {0.0, 0.0, 0.0};
  double identity_scale = 0.0;  // max_t ||d_t Phi||, for relative reading
  double tolerance = 1e-10;

  bool certificates_hold() const {
    return (!min_eig_b0 || *min_eig_b0 >= -tolerance) && (!min_eig_b1 || *min_eig_b1 >= -tolerance) &&
           (!max_eig_b2 || *max_eig_b2 <= tolerance);
  }
  double identity_residual_max() const {
    return std::max({identity_residual[0], identity_residual[1], identity_residual[2]});
  }
};

namespace detail {
inline std::optional<double> restricted_extreme(Eigen::MatrixXd const& m, Eigen::MatrixXd const& q, bool smallest) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    if (q(i, i) > 0.5) idx.push_back(i);
  if (idx.empty()) return std::nullopt;
  auto const k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd r(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) r(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(error_kind::solver, "symmetric eigenvalue solver failed");
  return smallest ? es.eigenvalues().minCoeff() : es.eigenvalues().maxCoeff();
}
}  // namespace detail

// Builds P_-, P_+, N = (A P_+)^{1/2}, Q_0..Q_2 and B_0..B_2 as explicit
// 2M x 2M matrices (top block rows first), checks the matrix inequalities on
// the ranges of Q_j, and evaluates d_t Phi_j - B_j Phi_j - Psi_j by centered
// differences, where Phi = e^{wt}(phi' + (a P_- + N) phi, phi' - (a P_- + N) phi)
// and Psi = e^{wt}(psi, psi).
inline system_check_result first_order_system_check(spectral_profile const& phi, double a, double b) {
  phi.validate();
  auto const g = check_gap_preconditions(phi.eigs, a, b, phi.alpha);
  std::size_t const mm = phi.modes();
  auto const n2 = static_cast<Eigen::Index>(2 * mm);
  system_check_result res;
  res.modes = mm;
  res.below.resize(mm);
  Eigen::VectorXd pminus = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mm));
  Eigen::VectorXd nroot = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mm));
  for (std::size_t i = 0; i < mm; ++i) {
    auto const ii = static_cast<Eigen::Index>(i);
    res.below[i] = phi.eigs[i] <= a * a;
    if (res.below[i]) pminus(ii) = 1.0;
    else nroot(ii) = std::sqrt(phi.eigs[i]);
  }
  Eigen::VectorXd const pplus = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(mm)) - pminus;
  Eigen::VectorXd mu(static_cast<Eigen::Index>(mm));
  for (std::size_t i = 0; i < mm; ++i) mu(static_cast<Eigen::Index>(i)) = phi.eigs[i];
  auto const m = static_cast<Eigen::Index>(mm);
  Eigen::MatrixXd const pm = pminus.asDiagonal(), pp = pplus.asDiagonal(), amat = mu.asDiagonal(),
                        nmat = nroot.asDiagonal(), id = Eigen::MatrixXd::Identity(m, m);
  res.q0 = Eigen::MatrixXd::Zero(n2, n2);
  res.q1 = Eigen::MatrixXd::Zero(n2, n2);
  res.q2 = Eigen::MatrixXd::Zero(n2, n2);
  res.q0.topLeftCorner(m, m) = pm;
  res.q0.bottomRightCorner(m, m) = pm;
  res.q1.topLeftCorner(m, m) = pp;
  res.q2.bottomRightCorner(m, m) = pp;
  Eigen::MatrixXd blk(n2, n2);
  blk.topLeftCorner(m, m) = amat + a * a * id;
  blk.topRightCorner(m, m) = -amat + a * a * id;
  blk.bottomLeftCorner(m, m) = amat - a * a * id;
  blk.bottomRightCorner(m, m) = -amat - a * a * id;
  res.b0 = blk / (2.0 * a) * res.q0 + g.w * res.q0;
  res.b1 = Eigen::MatrixXd::Zero(n2, n2);
  res.b1.topLeftCorner(m, m) = nmat;
  res.b1 += g.w * res.q1;
  res.b2 = Eigen::MatrixXd::Zero(n2, n2);
  res.b2.bottomRightCorner(m, m) = -nmat;
  res.b2 += g.w * res.q2;

  res.min_eig_b0 = detail::restricted_extreme(res.b0.transpose() + res.b0 - g.m * res.q0, res.q0, true);
  res.min_eig_b1 = detail::restricted_extreme(res.b1.transpose() + res.b1 - g.m * res.q1, res.q1, true);
  res.max_eig_b2 = detail::restricted_extreme(res.b2.transpose() + res.b2 + g.m * res.q2, res.q2, false);

  // Identity residual on the t-grid.
  std::size_t const nt = phi.t.points;
  if (nt < 7) fail(error_kind::grid, "system check needs at least 7 t points");
  double const h = phi.t.step();
  std::vector<Eigen::VectorXcd> big_phi(nt, Eigen::VectorXcd::Zero(n2)), big_psi(nt, Eigen::VectorXcd::Zero(n2));
  for (std::size_t i = 0; i < mm; ++i) {
    auto const s = phi.series(i);
    auto const d1 = first_difference<complex>(s, h);
    auto const d2 = second_difference<complex>(s, h);
    double const shift = res.below[i] ? a : nroot(static_cast<Eigen::Index>(i));
    auto const ii = static_cast<Eigen::Index>(i);
    for (std::size_t k = 1; k + 1 < nt; ++k) {
      double const e = std::exp(g.w * phi.t[k]);
      big_phi[k](ii) = e * (d1[k] + shift * s[k]);
      big_phi[k](ii + m) = e * (d1[k] - shift * s[k]);
      complex const psi = d2[k] - phi.eigs[i] * s[k];
      big_psi[k](ii) = e * psi;
      big_psi[k](ii + m) = e * psi;
    }
  }
  Eigen::MatrixXd const* qs[3] = {&res.q0, &res.q1, &res.q2};
  Eigen::MatrixXd const* bs[3] = {&res.b0, &res.b1, &res.b2};
  for (std::size_t k = 2; k + 2 < nt; ++k) {
    Eigen::VectorXcd const dphi = (big_phi[k + 1] - big_phi[k - 1]) / (2.0 * h);
    res.identity_scale = std::max(res.identity_scale, dphi.norm());
    for (int j = 0; j < 3; ++j) {
      Eigen::MatrixXcd const q = qs[j]->cast<complex>();
      Eigen::VectorXcd const r = q * dphi - bs[j]->cast<complex>() * (q * big_phi[k]) - q * big_psi[k];
      res.identity_residual[j] = std::max(res.identity_residual[j], r.norm());
    }
  }
  return res;
}

// ---- elliptic regularity ratio --------------------------------------------

struct ellreg_result {
  std::vector<double> s;
  std::vector<double> ratio;  // int_s^{s+1} ||phi'||^2 / int_{s-eps}^{s+1+eps} ||phi||^2
  double sup_ratio = 0.0;
  double beta_observed = 0.0;  // max_t ||(d_t^2 - A) phi|| / ||phi||
  // 2(alpha + beta) + 4 sup(h')^2 for the quintic cut-off rising over eps.
  double explicit_bound = 0.0;
  bool within_bound() const { return sup_ratio <= explicit_bound; }
};

inline ellreg_result ellreg_bound_check(spectral_profile const& phi, double eps, std::vector<double> const& s_list) {
  phi.validate();
  if (!(eps > 0.0)) fail(error_kind::precondition, "eps must be positive");
  if (s_list.empty()) fail(error_kind::precondition, "need at least one window start");
  double const h = phi.t.step();
  std::vector<double> d1n(phi.t.points, 0.0);
  for (std::size_t i = 0; i < phi.modes(); ++i) {
    auto const d1 = first_difference<complex>(phi.series(i), h);
    for (std::size_t k = 0; k < phi.t.points; ++k) d1n[k] += std::norm(d1[k]);
  }
  auto const n2 = phi.norm2_series();
  spectral_profile const psi = apply_operator(phi, true);
  ellreg_result res;
  for (std::size_t k = 2; k + 2 < phi.t.points; ++k) {
    if (n2[k] <= 0.0) continue;
    res.beta_observed = std::max(res.beta_observed, std::sqrt(psi.norm2(k) / n2[k]));
  }
  for (double s : s_list) {
    if (s - eps < phi.t.lo - 1e-12 || s + 1.0 + eps > phi.t.hi + 1e-12)
      fail(error_kind::grid, "ratio window leaves the t-grid");
    double const num = integrate_window(d1n, phi.t, s, s + 1.0);
    double const den = integrate_window(n2, phi.t, s - eps, s + 1.0 + eps);
    if (!(den > 0.0)) fail(error_kind::precondition, "zero denominator window");
    res.s.push_back(s);
    res.ratio.push_back(num / den);
    res.sup_ratio = std::max(res.sup_ratio, num / den);
  }
  double const hp = 1.875 / eps;
  res.explicit_bound = 2.0 * (phi.alpha + res.beta_observed) + 4.0 * hp * hp;
  return res;
}

// ---- seeded ensembles -----------------------------------------------------

struct ensemble43_options {
  std::uint64_t seed = 1;
  std::size_t cases = 300;
  std::vector<double> eps_values{0.5, 1.0, 2.0};
  std::vector<double> lambda_factors{1.0, 2.0, 4.0};
  std::size_t max_modes = 16;
  double mu_max = 50.0;
  double step = 5e-4;
  std::size_t threads = 1;
  verify_options verify;
};

struct ensemble_gap_options {
  std::uint64_t seed = 1;
  std::size_t cases = 300;
  std::size_t max_modes = 16;
  std::int64_t max_n = 6;  // gaps between n^2 and (n+1)^2, n <= max_n
  double step = 5e-4;
  std::size_t threads = 1;
  verify_options verify;
};

namespace detail {
inline std::vector<complex> random_amplitudes(std::mt19937_64& rng, std::size_t n) {
  std::vector<complex> a(n);
  for (auto& z : a) z = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
  return a;
}
}  // namespace detail

struct case_43 {
  spectral_profile phi;
  double weight_lambda = 0.0;
  double eps = 0.0;
};

inline case_43 make_case_43(ensemble43_options const& opt, std::size_t index) {
  std::mt19937_64 rng(derive_seed(opt.seed, index));
  case_43 c;
  c.eps = opt.eps_values[index % opt.eps_values.size()];
  double const factor = opt.lambda_factors[(index / opt.eps_values.size()) % opt.lambda_factors.size()];
  c.weight_lambda = factor * std::pow(c.eps, -4.0 / 3.0);
  auto const modes = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(opt.max_modes)));
  std::vector<double> eigs(modes);
  for (auto& mu : eigs) mu = uniform(rng, 0.0, opt.mu_max);
  double const t_lo = c.eps + uniform(rng, 0.0, 1.0);
  double const t_hi = t_lo + uniform(rng, 1.0, 3.0);
  auto const grid = grid_with_step(0.0, t_hi + 0.5, opt.step);
  c.phi = bump_profile(grid, t_lo, t_hi, detail::random_amplitudes(rng, modes), std::move(eigs));
  return c;
}

inline std::vector<carleman_report> run_ensemble_43(ensemble43_options const& opt) {
  return parallel_map<carleman_report>(
      opt.cases,
      [&](std::size_t i) {
        auto const c = make_case_43(opt, i);
        return verify_carleman_43(c.phi, c.weight_lambda, c.eps, opt.verify);
      },
      opt.threads);
}

struct case_gap {
  spectral_profile phi;
  double a = 0.0, b = 0.0;
};

// Eigenvalues drawn from {-alpha} and the squares {k^2}; the gap (a^2, b^2)
// sits inside (n^2, (n+1)^2) so it is free of spectrum by construction.
inline case_gap make_case_gap(ensemble_gap_options const& opt, std::size_t index) {
  std::mt19937_64 rng(derive_seed(opt.seed ^ 0x9a9ULL, index));
  case_gap c;
  auto const n = uniform_int(rng, 1, opt.max_n);
  c.a = static_cast<double>(n) + uniform(rng, 0.0, 0.4);
  c.b = static_cast<double>(n) + uniform(rng, 0.6, 1.0);
  double const alpha = uniform(rng, 0.0, 1.0) < 0.5 ? 0.0 : uniform(rng, 0.0, 2.9 * c.a * c.a);
  auto const modes = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(opt.max_modes)));
  std::vector<double> eigs(modes);
  for (auto& mu : eigs) {
    auto const k = uniform_int(rng, -1, opt.max_n + 3);
    mu = k < 0 ? -alpha : static_cast<double>(k * k);
  }
  double const t_lo = uniform(rng, 0.2, 1.0);
  double const t_hi = t_lo + uniform(rng, 1.0, 3.0);
  auto const grid = grid_with_step(0.0, t_hi + 0.5, opt.step);
  c.phi = bump_profile(grid, t_lo, t_hi, detail::random_amplitudes(rng, modes), std::move(eigs), alpha);
  return c;
}

inline std::vector<carleman_report> run_ensemble_gap(ensemble_gap_options const& opt) {
  return parallel_map<carleman_report>(
      opt.cases,
      [&](std::size_t i) {
        auto const c = make_case_gap(opt, i);
        return verify_carleman_gap(c.phi, c.a, c.b, c.phi.alpha, opt.verify);
      },
      opt.threads);
}

}  // namespace hsdecay
