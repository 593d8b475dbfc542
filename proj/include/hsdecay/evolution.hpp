#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include "hsdecay/error.hpp"
#include "hsdecay/numerics.hpp"
#include "hsdecay/parallel.hpp"
#include "hsdecay/profile.hpp"

namespace hsdecay {

// b(t): constant b0, b0 e^{-rate t}, or b0 / (1 + rate t).
struct bound_profile {
  enum class shape { constant, exponential, algebraic };
  shape kind = shape::constant;
  double b0 = 0.0;
  double rate = 0.0;

  double operator()(double t) const {
    switch (kind) {
      case shape::constant: return b0;
      case shape::exponential: return b0 * std::exp(-rate * t);
      case shape::algebraic: return b0 / (1.0 + rate * t);
    }
    return b0;
  }
  double sup() const { return b0; }  // every shape is nonincreasing in t >= 0
  bool decays() const { return b0 == 0.0 || (kind != shape::constant && rate > 0.0); }
};

enum class perturbation_kind { zero, diagonal, full };

inline char const* to_string(perturbation_kind k) {
  switch (k) {
    case perturbation_kind::zero: return "zero";
    case perturbation_kind::diagonal: return "diagonal";
    case perturbation_kind::full: return "full";
  }
  return "zero";
}

// B(t) = b(t) S with a fixed real matrix S of operator norm <= 1, so
// ||B(t)|| <= b(t) holds at every t by construction.
struct perturbation_family {
  perturbation_kind kind = perturbation_kind::zero;
  bound_profile bound;
  Eigen::MatrixXd shape;
  double shape_norm = 0.0;  // largest singular value of S, computed

  std::size_t modes() const { return static_cast<std::size_t>(shape.rows()); }
  double beta() const { return kind == perturbation_kind::zero ? 0.0 : bound.sup(); }
  bool decays() const { return kind == perturbation_kind::zero || bound.decays(); }
  bool is_zero() const { return kind == perturbation_kind::zero || bound.b0 == 0.0; }
  double operator_norm_at(double t) const { return kind == perturbation_kind::zero ? 0.0 : bound(t) * shape_norm; }
};

namespace detail {
inline double spectral_norm(Eigen::MatrixXd const& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

inline void check_bound(bound_profile const& b) {
  if (!std::isfinite(b.b0) || b.b0 < 0.0 || !std::isfinite(b.rate) || b.rate < 0.0)
    fail(error_kind::precondition, "perturbation bound needs b0 >= 0 and rate >= 0");
}
}  // namespace detail

inline perturbation_family zero_perturbation(std::size_t modes) {
  perturbation_family f;
  f.shape = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(modes), static_cast<Eigen::Index>(modes));
  return f;
}

// Diagonal entries clipped to [-1, 1].
inline perturbation_family diagonal_perturbation(std::vector<double> const& diag, bound_profile b) {
  detail::check_bound(b);
  perturbation_family f;
  f.kind = perturbation_kind::diagonal;
  f.bound = b;
  auto const n = static_cast<Eigen::Index>(diag.size());
  f.shape = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) f.shape(i, i) = std::clamp(diag[static_cast<std::size_t>(i)], -1.0, 1.0);
  f.shape_norm = n ? f.shape.diagonal().cwiseAbs().maxCoeff() : 0.0;
  return f;
}

inline perturbation_family random_diagonal_perturbation(std::size_t modes, bound_profile b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> d(modes);
  for (auto& x : d) x = uniform(rng, -1.0, 1.0);
  return diagonal_perturbation(d, b);
}

// Gaussian matrix divided by its computed spectral norm.
inline perturbation_family random_full_perturbation(std::size_t modes, bound_profile b, std::uint64_t seed) {
  detail::check_bound(b);
  perturbation_family f;
  f.kind = perturbation_kind::full;
  f.bound = b;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  auto const n = static_cast<Eigen::Index>(modes);
  f.shape.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) f.shape(i, j) = gauss(rng);
  double const s = detail::spectral_norm(f.shape);
  if (s > 0.0) f.shape /= s;
  f.shape_norm = detail::spectral_norm(f.shape);
  return f;
}

struct evolve_options {
  double T = 0.0;  // 0: 30 / sqrt(min positive eigenvalue), or 30 without one
  double step = 1e-2;
};

inline double default_horizon(std::vector<double> const& eigs) {
  double m = std::numeric_limits<double>::infinity();
  for (double mu : eigs)
    if (mu > 0.0) m = std::min(m, mu);
  return std::isfinite(m) ? 30.0 / std::sqrt(m) : 30.0;
}

struct evolve_result {
  spectral_profile profile;
  double residual = 0.0;  // ||(d_t^2 - A - B) phi|| / ||phi|| in L^2(t), five-point stencil
  double rcond = 0.0;     // reciprocal condition estimate of the discrete system
  double T = 0.0;
};

namespace detail {
// Rows are scaled by -h^2: (2 + h^2 (mu + B)) phi_k - phi_{k-1} - phi_{k+1} = 0.
// Far end: phi_N = 0 for mu > 0, reflecting ghost phi_{N+1} = phi_{N-1} otherwise.
inline bool dirichlet_far_end(double mu) { return mu > 0.0; }

inline constexpr double min_rcond = 1e-13;

inline void check_factor(lapack_int info, double rcond, char const* what) {
  if (info < 0) fail(error_kind::solver, std::string(what) + ": invalid LAPACK argument");
  if (info > 0 || !(rcond > min_rcond))
    fail(error_kind::solver, std::string(what) + ": singular discrete system (resonant horizon?), rcond = " +
                                 std::to_string(info > 0 ? 0.0 : rcond));
}

inline double solve_mode(double mu, double const* b_diag, double h, std::size_t n, complex g, complex* out) {
  std::vector<complex> dl(n - 1, complex(-1.0)), d(n), du(n - 1, complex(-1.0)), du2(n >= 2 ? n - 2 : 1);
  std::vector<lapack_int> ipiv(n);
  for (std::size_t r = 0; r < n; ++r) d[r] = 2.0 + h * h * (mu + b_diag[r]);
  if (dirichlet_far_end(mu)) {
    d[n - 1] = 1.0;
    dl[n - 2] = 0.0;
  } else {
    dl[n - 2] = -2.0;
  }
  double anorm = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    double s = std::abs(d[c]);
    if (c > 0) s += std::abs(du[c - 1]);
    if (c + 1 < n) s += std::abs(dl[c]);
    anorm = std::max(anorm, s);
  }
  auto const nn = static_cast<lapack_int>(n);
  lapack_int info = LAPACKE_zgttrf(nn, dl.data(), d.data(), du.data(), du2.data(), ipiv.data());
  double rcond = 0.0;
  if (info == 0) LAPACKE_zgtcon('1', nn, dl.data(), d.data(), du.data(), du2.data(), ipiv.data(), anorm, &rcond);
  check_factor(info, rcond, "tridiagonal evolution solve");
  std::vector<complex> rhs(n, complex{});
  rhs[0] = g;
  LAPACKE_zgttrs(LAPACK_COL_MAJOR, 'N', nn, 1, dl.data(), d.data(), du.data(), du2.data(), ipiv.data(), rhs.data(), nn);
  std::copy(rhs.begin(), rhs.end(), out);
  return rcond;
}
}  // namespace detail

// Decaying solution of (d_t^2 - A - B(t)) phi = 0 on [0, T] with phi(0) = g:
// centered second differences, phi(T) = 0 for positive modes (reflecting end
// for mu <= 0, whose solutions do not decay), one direct banded solve.
inline evolve_result solve_decaying(std::vector<double> const& eigs, perturbation_family const& B,
                                    std::vector<complex> const& g, evolve_options const& opt = {}) {
  std::size_t const M = eigs.size();
  if (M == 0) fail(error_kind::precondition, "need at least one eigenvalue");
  if (g.size() != M) fail(error_kind::arity, "boundary vector length must match the number of eigenvalues");
  if (B.kind != perturbation_kind::zero && B.modes() != M)
    fail(error_kind::arity, "perturbation size must match the number of eigenvalues");
  for (double mu : eigs)
    if (!std::isfinite(mu)) fail(error_kind::precondition, "eigenvalues must be finite");
  double const T = opt.T > 0.0 ? opt.T : default_horizon(eigs);
  if (!(opt.step > 0.0) || !std::isfinite(T)) fail(error_kind::precondition, "need T > 0 and step > 0");
  double alpha = 0.0;
  for (double mu : eigs) alpha = std::max(alpha, -mu);

  evolve_result res;
  res.T = T;
  res.profile = make_profile(eigs, alpha, grid_with_step(0.0, T, opt.step));
  auto& p = res.profile;
  std::size_t const N = p.t.points - 1;  // unknowns at t_1 .. t_N
  double const h = p.t.step();
  std::vector<double> bt(N);
  for (std::size_t k = 0; k < N; ++k) bt[k] = B.kind == perturbation_kind::zero ? 0.0 : B.bound(p.t[k + 1]);

  bool const coupled = B.kind == perturbation_kind::full && !B.is_zero();
  if (!coupled) {
    res.rcond = std::numeric_limits<double>::infinity();
    std::vector<double> bd(N);
    std::vector<complex> sol(N);
    for (std::size_t i = 0; i < M; ++i) {
      double const s = B.kind == perturbation_kind::zero ? 0.0 : B.shape(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
      for (std::size_t k = 0; k < N; ++k) bd[k] = s * bt[k];
      res.rcond = std::min(res.rcond, detail::solve_mode(eigs[i], bd.data(), h, N, g[i], sol.data()));
      p.at(i, 0) = g[i];
      for (std::size_t k = 0; k < N; ++k) p.at(i, k + 1) = sol[k];
    }
  } else {
    // unknown (k, i) -> (k - 1) M + i; bandwidth M on both sides
    std::size_t const n = N * M;
    lapack_int const kl = static_cast<lapack_int>(M), ku = kl, ldab = 2 * kl + ku + 1;
    std::vector<complex> ab(static_cast<std::size_t>(ldab) * n, complex{});
    auto at = [&](std::size_t r, std::size_t c) -> complex& {
      return ab[static_cast<std::size_t>(kl + ku) + r - c + c * static_cast<std::size_t>(ldab)];
    };
    std::vector<complex> rhs(n, complex{});
    for (std::size_t k = 0; k < N; ++k) {
      for (std::size_t i = 0; i < M; ++i) {
        std::size_t const r = k * M + i;
        bool const last = k + 1 == N;
        if (last && detail::dirichlet_far_end(eigs[i])) {
          at(r, r) = 1.0;
          continue;
        }
        for (std::size_t j = 0; j < M; ++j)
          at(r, k * M + j) = h * h * bt[k] * B.shape(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        at(r, r) += 2.0 + h * h * eigs[i];
        if (k > 0) at(r, r - M) = last ? -2.0 : -1.0;
        if (!last) at(r, r + M) = -1.0;
        if (k == 0) rhs[r] = g[i];
      }
    }
    double anorm = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      std::size_t const r0 = c >= static_cast<std::size_t>(ku) ? c - static_cast<std::size_t>(ku) : 0;
      std::size_t const r1 = std::min(n - 1, c + static_cast<std::size_t>(kl));
      for (std::size_t r = r0; r <= r1; ++r) s += std::abs(at(r, c));
      anorm = std::max(anorm, s);
    }
    std::vector<lapack_int> ipiv(n);
    auto const nn = static_cast<lapack_int>(n);
    lapack_int info = LAPACKE_zgbtrf(LAPACK_COL_MAJOR, nn, nn, kl, ku, ab.data(), ldab, ipiv.data());
    double rcond = 0.0;
    if (info == 0) LAPACKE_zgbcon(LAPACK_COL_MAJOR, '1', nn, kl, ku, ab.data(), ldab, ipiv.data(), anorm, &rcond);
    detail::check_factor(info, rcond, "banded evolution solve");
    LAPACKE_zgbtrs(LAPACK_COL_MAJOR, 'N', nn, kl, ku, 1, ab.data(), ldab, ipiv.data(), rhs.data(), nn);
    res.rcond = rcond;
    for (std::size_t i = 0; i < M; ++i) {
      p.at(i, 0) = g[i];
      for (std::size_t k = 0; k < N; ++k) p.at(i, k + 1) = rhs[k * M + i];
    }
  }

  // Five-point residual of the three-point solution: O(h^2) truncation error.
  auto const Aphi = apply_operator(p, true);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < p.t.points; ++k) {
    double const b = (B.kind == perturbation_kind::zero || k == 0 || k + 1 == p.t.points) ? 0.0 : B.bound(p.t[k]);
    for (std::size_t i = 0; i < M; ++i) {
      complex r = Aphi.at(i, k);
      if (b != 0.0 && k > 0 && k + 1 < p.t.points)
        for (std::size_t j = 0; j < M; ++j)
          r -= b * B.shape(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * p.at(j, k);
      num += std::norm(r);
      den += std::norm(p.at(i, k));
    }
  }
  res.residual = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return res;
}

struct decay_estimate {
  double rate = 0.0;  // -slope of log ||phi|| on [t_a, t_b]
  double t_a = 0.0;
  double t_b = 0.0;
  double residual = 0.0;  // RMS of the log-linear fit
  std::size_t samples = 0;
  std::vector<double> window_rates;  // geometric sliding windows ending at t_b
  bool superexp = false;
};

struct decay_options {
  std::optional<double> t_a, t_b;  // default: [lo + 2L/3, lo + 0.9 L]
  std::size_t scan_windows = 4;
  double scan_ratio = 1.5;    // consecutive scan windows [t_b q^{-j-1}, t_b q^{-j}]
  double growth_factor = 1.1;
};

namespace detail {
inline line_fit log_norm_fit(spectral_profile const& phi, std::vector<double> const& n2, double a, double b) {
  std::vector<double> x, y;
  for (std::size_t k = 0; k < phi.t.points; ++k) {
    double const t = phi.t[k];
    if (t < a - 1e-12 || t > b + 1e-12) continue;
    if (!(n2[k] > 0.0)) fail(error_kind::precondition, "profile norm vanishes inside the fit window");
    x.push_back(t);
    y.push_back(0.5 * std::log(n2[k]));
  }
  if (x.size() < 2) fail(error_kind::grid, "fit window holds fewer than two samples");
  return least_squares_line(x, y);
}
}  // namespace detail

inline decay_estimate decay_rate_estimate(spectral_profile const& phi, decay_options const& opt = {}) {
  phi.validate();
  double const L = phi.t.hi - phi.t.lo;
  decay_estimate est;
  est.t_a = opt.t_a.value_or(phi.t.lo + 2.0 * L / 3.0);
  est.t_b = opt.t_b.value_or(phi.t.lo + 0.9 * L);
  if (!(est.t_b > est.t_a) || est.t_a < phi.t.lo - 1e-12 || est.t_b > phi.t.hi + 1e-12)
    fail(error_kind::grid, "fit window must be an interval inside the t-grid");
  auto const n2 = phi.norm2_series();
  auto const fit = detail::log_norm_fit(phi, n2, est.t_a, est.t_b);
  est.rate = -fit.slope;
  est.residual = fit.rms_residual;
  est.samples = fit.samples;

  // Windowed rates from early to late; the flag needs each to beat the
  // previous one by the growth factor.
  double hi = est.t_b;
  std::vector<double> rates;
  for (std::size_t j = 0; j < opt.scan_windows; ++j) {
    double const lo = hi / opt.scan_ratio;
    if (lo < phi.t.lo || hi - lo < 2.0 * phi.t.step()) break;
    rates.push_back(-detail::log_norm_fit(phi, n2, lo, hi).slope);
    hi = lo;
  }
  std::reverse(rates.begin(), rates.end());
  est.window_rates = rates;
  est.superexp = rates.size() >= 3 && rates.front() > 0.0;
  for (std::size_t j = 1; est.superexp && j < rates.size(); ++j)
    if (!(rates[j] > opt.growth_factor * rates[j - 1])) est.superexp = false;
  return est;
}

struct scan_row {
  std::size_t id = 0;
  double rate = 0.0;
  double expected = 0.0;  // B = 0 prediction: sqrt of the smallest excited eigenvalue, 0 if a mode <= 0 is excited
  double nearest = 0.0;   // nearest of {0} and sqrt(mu_i), mu_i > 0
  double distance = 0.0;
  double residual = 0.0;
  bool superexp = false;
};

inline double predicted_rate(std::vector<double> const& eigs, std::vector<complex> const& g) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < eigs.size(); ++i) {
    if (g[i] == complex{}) continue;
    if (eigs[i] <= 0.0) return 0.0;
    m = std::min(m, eigs[i]);
  }
  return std::isfinite(m) ? std::sqrt(m) : 0.0;
}

inline double nearest_spectral_rate(std::vector<double> const& eigs, double rate) {
  double best = 0.0;
  for (double mu : eigs)
    if (mu > 0.0 && std::abs(std::sqrt(mu) - rate) < std::abs(best - rate)) best = std::sqrt(mu);
  return best;
}

// Solution-like profiles for the elliptic-regularity check: decaying
// solutions of (d_t^2 - A - B) phi = 0, so ||(d_t^2 - A) phi|| <= beta ||phi||.
struct solution_family_options {
  std::uint64_t seed = 1;
  double alpha_max = 4.0;  // eigenvalues drawn from [-alpha, mu_max], alpha in [0, alpha_max]
  double beta_max = 1.0;   // constant bound b0 in [0, beta_max] for a full B
  double mu_max = 20.0;
  std::size_t max_modes = 6;
  double T = 8.0;
};

struct solution_case {
  std::vector<double> eigs;
  double alpha = 0.0;
  perturbation_family B;
  std::vector<complex> g;
};

inline solution_case make_solution_case(solution_family_options const& opt, std::size_t index) {
  std::mt19937_64 rng(derive_seed(opt.seed ^ 0x5e1ULL, index));
  solution_case c;
  c.alpha = uniform(rng, 0.0, opt.alpha_max);
  auto const modes = static_cast<std::size_t>(uniform_int(rng, 2, static_cast<std::int64_t>(std::max<std::size_t>(opt.max_modes, 2))));
  for (std::size_t i = 0; i < modes; ++i) c.eigs.push_back(uniform(rng, -c.alpha, opt.mu_max));
  c.B = random_full_perturbation(modes, {bound_profile::shape::constant, uniform(rng, 0.0, opt.beta_max), 0.0}, rng());
  for (std::size_t i = 0; i < modes; ++i) c.g.push_back({uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)});
  return c;
}

inline spectral_profile solution_like_profile(solution_family_options const& opt, std::size_t index, double step) {
  auto const c = make_solution_case(opt, index);
  evolve_options eo;
  eo.T = opt.T;
  eo.step = step;
  auto sol = solve_decaying(c.eigs, c.B, c.g, eo);
  sol.profile.alpha = c.alpha;
  return sol.profile;
}

// A nonzero perturbation must stay below half the smallest separation of
// sqrt(mu) between excited modes.
inline void check_scan_perturbation(std::vector<double> const& eigs, perturbation_family const& B,
                                    std::vector<std::vector<complex>> const& boundaries) {
  if (B.is_zero()) return;
  std::vector<double> roots;
  for (std::size_t i = 0; i < eigs.size(); ++i) {
    bool excited = false;
    for (auto const& g : boundaries) excited = excited || g[i] != complex{};
    if (excited) roots.push_back(std::sqrt(std::max(eigs[i], 0.0)));
  }
  std::sort(roots.begin(), roots.end());
  double sep = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < roots.size(); ++i) sep = std::min(sep, roots[i] - roots[i - 1]);
  if (!(B.beta() < 0.5 * sep))
    fail(error_kind::precondition, "perturbation size " + std::to_string(B.beta()) +
                                       " is not below half the separation of excited rates");
}

inline std::vector<scan_row> rate_spectrum_scan(std::vector<double> const& eigs, perturbation_family const& B,
                                                std::vector<std::vector<complex>> const& boundaries,
                                                evolve_options const& opt = {}, std::size_t threads = 1) {
  for (auto const& g : boundaries)
    if (g.size() != eigs.size()) fail(error_kind::arity, "boundary vector length must match the number of eigenvalues");
  check_scan_perturbation(eigs, B, boundaries);
  return parallel_map<scan_row>(boundaries.size(), [&](std::size_t id) {
    auto const sol = solve_decaying(eigs, B, boundaries[id], opt);
    auto const est = decay_rate_estimate(sol.profile);
    scan_row row;
    row.id = id;
    row.rate = est.rate;
    row.expected = predicted_rate(eigs, boundaries[id]);
    row.nearest = nearest_spectral_rate(eigs, est.rate);
    row.distance = std::abs(est.rate - row.nearest);
    row.residual = sol.residual;
    row.superexp = est.superexp;
    return row;
  }, threads);
}

}  // namespace hsdecay
