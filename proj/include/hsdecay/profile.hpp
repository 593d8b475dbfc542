#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hsdecay/error.hpp"
#include "hsdecay/field.hpp"
#include "hsdecay/numerics.hpp"

namespace hsdecay {

// phi(t) = sum_i c_i(t) e_i for an orthonormal eigenbasis of a diagonal
// truncation of A, A e_i = mu_i e_i, with A + alpha >= 0.
struct spectral_profile {
  std::vector<double> eigs;
  double alpha = 0.0;
  uniform_grid t;
  std::vector<complex> coeffs;  // coeffs[i * t.points + k]

  std::size_t modes() const { return eigs.size(); }

  complex& at(std::size_t mode, std::size_t k) { return coeffs[mode * t.points + k]; }
  complex at(std::size_t mode, std::size_t k) const { return coeffs[mode * t.points + k]; }

  std::span<complex const> series(std::size_t mode) const { return {coeffs.data() + mode * t.points, t.points}; }
  std::span<complex> series(std::size_t mode) { return {coeffs.data() + mode * t.points, t.points}; }

  double norm2(std::size_t k) const {
    double s = 0.0;
    for (std::size_t i = 0; i < modes(); ++i) s += std::norm(at(i, k));
    return s;
  }

  std::vector<double> norm2_series() const {
    std::vector<double> out(t.points, 0.0);
    for (std::size_t i = 0; i < modes(); ++i)
      for (std::size_t k = 0; k < t.points; ++k) out[k] += std::norm(at(i, k));
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (auto c : coeffs) m = std::max(m, std::abs(c));
    return m;
  }

  void validate() const {
    if (!(alpha >= 0.0)) fail(error_kind::schema, "alpha must be nonnegative");
    if (t.points < 2 || !(t.hi > t.lo)) fail(error_kind::grid, "profile needs an increasing t-grid");
    if (coeffs.size() != modes() * t.points) fail(error_kind::schema, "profile coefficient count mismatch");
    for (double mu : eigs)
      if (!std::isfinite(mu) || mu < -alpha - 1e-12 * std::max(1.0, alpha))
        fail(error_kind::precondition, "eigenvalue below -alpha");
  }
};

inline spectral_profile make_profile(std::vector<double> eigs, double alpha, uniform_grid t) {
  spectral_profile p;
  p.eigs = std::move(eigs);
  p.alpha = alpha;
  p.t = t;
  p.coeffs.assign(p.modes() * t.points, complex{});
  p.validate();
  return p;
}

// psi = (d_t^2 - A) phi per mode; five-point second difference in the
// interior, three-point next to the ends, zero at the endpoints.
inline spectral_profile apply_operator(spectral_profile const& p, bool fourth_order = true) {
  spectral_profile out = p;
  double const h = p.t.step();
  for (std::size_t i = 0; i < p.modes(); ++i) {
    auto const d2 = fourth_order ? second_difference4<complex>(p.series(i), h) : second_difference<complex>(p.series(i), h);
    auto s = out.series(i);
    for (std::size_t k = 0; k < p.t.points; ++k) s[k] = d2[k] - p.eigs[i] * p.at(i, k);
    s[0] = s[p.t.points - 1] = complex{};
  }
  return out;
}

// Every other t sample; needs an odd point count.
inline spectral_profile coarsen(spectral_profile const& p) {
  if (p.t.points % 2 == 0 || p.t.points < 5) fail(error_kind::grid, "coarsening needs an odd number (>= 5) of t points");
  spectral_profile c = make_profile(p.eigs, p.alpha, p.t.coarsened());
  for (std::size_t i = 0; i < p.modes(); ++i)
    for (std::size_t k = 0; k < c.t.points; ++k) c.at(i, k) = p.at(i, 2 * k);
  return c;
}

// CSV: "eigs,mu_1,...", "alpha,a", "t_range,lo,hi", "t_points,n", "re,im",
// then one row per (mode, t) with mode outer.
inline void write_profile_csv(spectral_profile const& p, std::ostream& out) {
  p.validate();
  out << std::setprecision(17) << "eigs";
  for (double mu : p.eigs) out << "," << mu;
  out << "\nalpha," << p.alpha << "\nt_range," << p.t.lo << "," << p.t.hi << "\nt_points," << p.t.points << "\nre,im\n";
  for (auto c : p.coeffs) out << c.real() << "," << c.imag() << "\n";
}

inline spectral_profile read_profile_csv(std::istream& in) {
  spectral_profile p;
  std::string line;
  bool have_eigs = false, have_t = false, have_tp = false;
  while (std::getline(in, line)) {
    auto tok = detail::split_csv(line);
    if (tok.empty() || tok[0].empty()) continue;
    std::string const& key = tok[0];
    if (key == "re") break;
    if (key == "eigs") {
      for (std::size_t i = 1; i < tok.size(); ++i) p.eigs.push_back(detail::to_double(tok[i], "eigs"));
      have_eigs = true;
    } else if (key == "alpha" && tok.size() == 2) {
      p.alpha = detail::to_double(tok[1], "alpha");
    } else if (key == "t_range" && tok.size() == 3) {
      p.t.lo = detail::to_double(tok[1], "t_range");
      p.t.hi = detail::to_double(tok[2], "t_range");
      have_t = true;
    } else if (key == "t_points" && tok.size() == 2) {
      p.t.points = static_cast<std::size_t>(detail::to_integer(tok[1], "t_points"));
      have_tp = true;
    } else {
      fail(error_kind::schema, "unknown or malformed profile header line '" + line + "'");
    }
  }
  if (!have_eigs || !have_t || !have_tp) fail(error_kind::schema, "profile header is incomplete");
  p.coeffs.assign(p.modes() * p.t.points, complex{});
  for (auto& c : p.coeffs) {
    if (!std::getline(in, line)) fail(error_kind::schema, "profile file ends early");
    auto tok = detail::split_csv(line);
    if (tok.size() != 2) fail(error_kind::schema, "profile rows must be 're,im'");
    c = {detail::to_double(tok[0], "re"), detail::to_double(tok[1], "im")};
  }
  p.validate();
  return p;
}

inline spectral_profile load_profile(std::string const& path) {
  std::ifstream in(path);
  if (!in) fail(error_kind::io, "cannot open profile file '" + path + "'");
  return read_profile_csv(in);
}

inline void save_profile(spectral_profile const& p, std::string const& path) {
  std::ofstream out(path);
  if (!out) fail(error_kind::io, "cannot write profile file '" + path + "'");
  write_profile_csv(p, out);
  if (!out) fail(error_kind::io, "error while writing '" + path + "'");
}

}  // namespace hsdecay
