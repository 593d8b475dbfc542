#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "hsdecay/lattice.hpp"

namespace hsdecay {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(json const& obj, std::set<std::string> const& allowed, std::string const& where) {
  if (!obj.is_object()) fail(error_kind::schema, where + " must be a JSON object");
  for (auto const& [key, _] : obj.items())
    if (!allowed.contains(key)) fail(error_kind::schema, "unknown key '" + key + "' in " + where);
}

// Rational from "p/q", a decimal string, an integer, or a [p, q] pair.
inline rational rational_from_json(json const& v) {
  if (v.is_string()) return parse_rational(v.get<std::string>());
  if (v.is_number_integer()) return rational(mpz_class(std::to_string(v.get<long long>()), 10));
  if (v.is_number_float()) return parse_rational(v.dump());
  if (v.is_array() && v.size() == 2) {
    rational const p = rational_from_json(v[0]);
    rational const q = rational_from_json(v[1]);
    if (q == 0) fail(error_kind::schema, "zero denominator in rational pair");
    rational r = p / q;
    r.canonicalize();
    return r;
  }
  fail(error_kind::schema, "expected a rational, got " + v.dump());
}

inline double real_from_json(json const& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_real(v.get<std::string>());
  fail(error_kind::schema, "expected a real number, got " + v.dump());
}

inline rational_matrix rational_matrix_from_json(json const& v, std::size_t n, char const* what) {
  if (!v.is_array() || v.size() != n) fail(error_kind::schema, std::string(what) + " must be an n x n array");
  rational_matrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!v[i].is_array() || v[i].size() != n)
      fail(error_kind::schema, std::string(what) + " must be an n x n array");
    for (std::size_t j = 0; j < n; ++j) m(i, j) = rational_from_json(v[i][j]);
  }
  return m;
}

}  // namespace detail

// {"dim": n, "basis": [[e_1], ..., [e_n]], "gram_exact": [[...]], "gram_scale": s}
// Each inner basis array is one basis vector. Entries may be numbers or strings
// such as "2*pi". Exact Gram entries are "p/q" strings, integers or [p, q]
// pairs. "dual_gram_exact"/"dual_gram_scale" give the Gram of the dual basis
// instead.
inline lattice lattice_from_json(json const& doc) {
  detail::reject_unknown_keys(
      doc, {"id", "dim", "basis", "gram_exact", "gram_scale", "dual_gram_exact", "dual_gram_scale"}, "lattice");
  if (!doc.contains("basis")) fail(error_kind::schema, "lattice requires 'basis'");
  json const& b = doc["basis"];
  if (!b.is_array() || b.empty()) fail(error_kind::schema, "'basis' must be a nonempty array of vectors");
  std::size_t const n = b.size();
  if (doc.contains("dim") && doc["dim"].get<std::size_t>() != n)
    fail(error_kind::schema, "'dim' does not match the number of basis vectors");
  Eigen::MatrixXd basis(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    if (!b[c].is_array() || b[c].size() != n) fail(error_kind::schema, "basis vectors must have length dim");
    for (std::size_t r = 0; r < n; ++r)
      basis(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::real_from_json(b[c][r]);
  }
  if (doc.contains("gram_exact") && doc.contains("dual_gram_exact"))
    fail(error_kind::schema, "give at most one of 'gram_exact' and 'dual_gram_exact'");
  if (doc.contains("gram_scale") && !doc.contains("gram_exact"))
    fail(error_kind::schema, "'gram_scale' requires 'gram_exact'");
  if (doc.contains("dual_gram_scale") && !doc.contains("dual_gram_exact"))
    fail(error_kind::schema, "'dual_gram_scale' requires 'dual_gram_exact'");
  std::optional<exact_gram> gram;
  if (doc.contains("gram_exact")) {
    gram = exact_gram{detail::rational_matrix_from_json(doc["gram_exact"], n, "gram_exact"),
                      doc.contains("gram_scale") ? detail::real_from_json(doc["gram_scale"]) : 1.0};
  } else if (doc.contains("dual_gram_exact")) {
    exact_gram dual{detail::rational_matrix_from_json(doc["dual_gram_exact"], n, "dual_gram_exact"),
                    doc.contains("dual_gram_scale") ? detail::real_from_json(doc["dual_gram_scale"]) : 1.0};
    if (!(dual.scale > 0.0)) fail(error_kind::schema, "'dual_gram_scale' must be positive");
    gram = exact_gram{inverse(dual.entries), two_pi * two_pi / dual.scale};
  }
  return lattice(std::move(basis), std::move(gram), doc.value("id", std::string{}));
}

inline lattice load_lattice(std::string const& path) {
  std::ifstream in(path);
  if (!in) fail(error_kind::io, "cannot open lattice file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (json::exception const& e) {
    fail(error_kind::schema, "lattice file '" + path + "': " + e.what());
  }
  return lattice_from_json(doc);
}

// Comma-separated quasimomentum coordinates. All-rational input ("1/3,0")
// yields an exact form; any float-only token ("0.1234") falls back to floats.
inline quasimomentum parse_quasimomentum(std::string const& text, std::size_t dim) {
  if (detail::trim(text).empty()) return quasimomentum::zero(dim);
  std::vector<rational> exact;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) exact.push_back(parse_rational(tok));
  if (exact.size() != dim) fail(error_kind::schema, "quasimomentum needs " + std::to_string(dim) + " coordinates");
  for (auto const& q : exact)
    if (abs(q.get_den()) > 1000000000) {
      std::vector<double> mu;
      for (auto const& e : exact) mu.push_back(e.get_d());
      return quasimomentum::from_coefficients(std::move(mu));
    }
  return quasimomentum::from_rationals(std::move(exact));
}

inline json lattice_to_json(lattice const& lat) {
  json doc;
  doc["dim"] = lat.dim();
  json basis = json::array();
  for (Eigen::Index c = 0; c < lat.basis().cols(); ++c) {
    json v = json::array();
    for (Eigen::Index r = 0; r < lat.basis().rows(); ++r) v.push_back(lat.basis()(r, c));
    basis.push_back(v);
  }
  doc["basis"] = basis;
  if (lat.gram_exact()) {
    json g = json::array();
    for (std::size_t i = 0; i < lat.dim(); ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < lat.dim(); ++j) row.push_back(lat.gram_exact()->entries(i, j).get_str());
      g.push_back(row);
    }
    doc["gram_exact"] = g;
    doc["gram_scale"] = lat.gram_exact()->scale;
  }
  if (!lat.id().empty()) doc["id"] = lat.id();
  return doc;
}

}  // namespace hsdecay
