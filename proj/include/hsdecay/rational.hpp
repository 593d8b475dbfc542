#pragma once

#include <gmpxx.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "hsdecay/error.hpp"

namespace hsdecay {

using rational = mpq_class;

// Square matrix of exact rationals, row-major.
struct rational_matrix {
  std::size_t n = 0;
  std::vector<rational> data;

  explicit rational_matrix(std::size_t dim = 0) : n(dim), data(dim * dim, rational(0)) {}
  rational& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  rational const& operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }

  bool symmetric() const {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
  }
};

inline rational_matrix inverse(rational_matrix a) {
  std::size_t const n = a.n;
  rational_matrix inv(n);
  for (std::size_t i = 0; i < n; ++i) inv(i, i) = 1;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    while (p < n && a(p, c) == 0) ++p;
    if (p == n) fail(error_kind::degenerate_lattice, "exact Gram matrix is singular");
    if (p != c)
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a(p, j), a(c, j));
        std::swap(inv(p, j), inv(c, j));
      }
    rational const piv = a(c, c);
    for (std::size_t j = 0; j < n; ++j) {
      a(c, j) /= piv;
      inv(c, j) /= piv;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a(r, c) == 0) continue;
      rational const f = a(r, c);
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

inline mpz_class lcm(mpz_class const& a, mpz_class const& b) {
  mpz_class r;
  mpz_lcm(r.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return r;
}

inline mpz_class gcd(mpz_class const& a, mpz_class const& b) {
  mpz_class r;
  mpz_gcd(r.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return r;
}

inline std::int64_t to_int64(mpz_class const& z) {
  if (!z.fits_slong_p()) fail(error_kind::budget_exceeded, "integer exceeds 64-bit range");
  return static_cast<std::int64_t>(z.get_si());
}

namespace detail {
inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}
}  // namespace detail

// Parses "p/q", "p", or a finite decimal such as "-1.25" or "3e-2" exactly.
inline rational parse_rational(std::string_view text) {
  std::string s = detail::trim(text);
  if (s.empty()) fail(error_kind::schema, "empty rational");
  if (s.front() == '+') s.erase(0, 1);
  try {
    if (s.find('/') != std::string::npos) {
      rational q(s, 10);
      if (q.get_den() == 0) fail(error_kind::schema, "zero denominator in '" + s + "'");
      q.canonicalize();
      return q;
    }
    bool neg = false;
    if (!s.empty() && s.front() == '-') {
      neg = true;
      s.erase(0, 1);
    }
    long exponent = 0;
    if (auto e = s.find_first_of("eE"); e != std::string::npos) {
      exponent = std::stol(s.substr(e + 1));
      s.resize(e);
    }
    std::string digits;
    long frac = 0;
    bool seen_dot = false;
    for (char c : s) {
      if (c == '.') {
        if (seen_dot) fail(error_kind::schema, "malformed number '" + std::string(text) + "'");
        seen_dot = true;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        digits.push_back(c);
        if (seen_dot) ++frac;
      } else {
        fail(error_kind::schema, "malformed number '" + std::string(text) + "'");
      }
    }
    if (digits.empty()) fail(error_kind::schema, "malformed number '" + std::string(text) + "'");
    mpz_class num(digits, 10);
    exponent -= frac;
    mpz_class scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(exponent)));
    rational q = exponent >= 0 ? rational(num * scale) : rational(num, scale);
    q.canonicalize();
    return neg ? rational(-q) : q;
  } catch (error const&) {
    throw;
  } catch (std::exception const&) {
    fail(error_kind::schema, "malformed rational '" + std::string(text) + "'");
  }
}

// Real literal with an optional power of pi: "2*pi", "pi/2", "4pi^2", "0.5".
inline double parse_real(std::string_view text) {
  std::string s = detail::trim(text);
  auto const at = s.find("pi");
  if (at == std::string::npos) return parse_rational(s).get_d();
  std::string coeff = s.substr(0, at);
  std::string rest = s.substr(at + 2);
  int power = 1;
  if (!rest.empty() && rest.front() == '^') {
    std::size_t used = 0;
    power = std::stoi(rest.substr(1), &used);
    rest = rest.substr(1 + used);
  }
  while (!coeff.empty() && (coeff.back() == '*' || std::isspace(static_cast<unsigned char>(coeff.back()))))
    coeff.pop_back();
  double c = 1.0;
  if (coeff == "-") c = -1.0;
  else if (!coeff.empty()) c = parse_rational(coeff).get_d();
  rest = detail::trim(rest);
  if (!rest.empty()) {
    if (rest.front() != '/') fail(error_kind::schema, "malformed real '" + std::string(text) + "'");
    c /= parse_rational(rest.substr(1)).get_d();
  }
  return c * std::pow(std::numbers::pi, power);
}

}  // namespace hsdecay
