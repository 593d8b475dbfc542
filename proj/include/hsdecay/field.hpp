#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "hsdecay/error.hpp"
#include "hsdecay/lattice.hpp"
#include "hsdecay/numerics.hpp"

namespace hsdecay {

enum class field_kind { sample, potential };

inline char const* to_string(field_kind k) { return k == field_kind::sample ? "sample" : "potential"; }

// Complex samples on a box of whole lattice cells times a t-grid. Spatial
// points sit at lattice coordinates s = cell_lo + i / P (P points per cell per
// axis, i = 0 .. cells*P - 1), so the grid is commensurate with the cell by
// construction. Storage is values[it * nx + ix] with ix row-major over axes
// (last axis fastest).
struct sampled_field {
  field_kind kind = field_kind::sample;
  std::vector<std::int64_t> cell_lo;
  std::vector<std::size_t> cells;
  std::size_t points_per_cell = 1;
  uniform_grid t;
  std::vector<complex> values;

  std::size_t dim() const { return cells.size(); }

  std::size_t points_along(std::size_t axis) const { return cells[axis] * points_per_cell; }

  std::size_t nx() const {
    std::size_t n = 1;
    for (std::size_t a = 0; a < dim(); ++a) n *= points_along(a);
    return n;
  }

  complex& at(std::size_t ix, std::size_t it) { return values[it * nx() + ix]; }
  complex at(std::size_t ix, std::size_t it) const { return values[it * nx() + ix]; }

  // Per-axis point index of a flat spatial index.
  std::vector<std::size_t> unflatten(std::size_t ix) const {
    std::vector<std::size_t> idx(dim());
    for (std::size_t a = dim(); a-- > 0;) {
      idx[a] = ix % points_along(a);
      ix /= points_along(a);
    }
    return idx;
  }

  // Lattice (fractional) coordinates of a spatial point.
  std::vector<double> fractional(std::size_t ix) const {
    auto const idx = unflatten(ix);
    std::vector<double> s(dim());
    for (std::size_t a = 0; a < dim(); ++a)
      s[a] = static_cast<double>(cell_lo[a]) + static_cast<double>(idx[a]) / static_cast<double>(points_per_cell);
    return s;
  }

  void validate() const {
    if (dim() == 0 || cell_lo.size() != dim()) fail(error_kind::schema, "field needs matching cells and cell_lo");
    if (points_per_cell == 0) fail(error_kind::grid, "points per cell must be positive");
    for (auto c : cells)
      if (c == 0) fail(error_kind::grid, "field box needs at least one cell per axis");
    if (t.points < 1) fail(error_kind::grid, "t-grid needs at least one point");
    if (values.size() != nx() * t.points) fail(error_kind::schema, "field value count does not match its grids");
  }
};

inline sampled_field make_field(field_kind kind, std::vector<std::int64_t> cell_lo, std::vector<std::size_t> cells,
                                std::size_t points_per_cell, uniform_grid t) {
  sampled_field f;
  f.kind = kind;
  f.cell_lo = std::move(cell_lo);
  f.cells = std::move(cells);
  f.points_per_cell = points_per_cell;
  f.t = t;
  f.values.assign(f.nx() * t.points, complex{});
  f.validate();
  return f;
}

// Points per cell for a fractional grid spacing; the spacing has to divide
// the cell edge exactly.
inline std::size_t points_for_spacing(double spacing) {
  if (!(spacing > 0.0) || spacing > 1.0) fail(error_kind::grid, "grid spacing must lie in (0, 1] cell edges");
  double const p = 1.0 / spacing;
  double const r = std::round(p);
  if (std::abs(p - r) > 1e-9 * p) fail(error_kind::grid, "grid spacing does not divide the cell edge");
  return static_cast<std::size_t>(r);
}

// Cartesian coordinates x = E s of a lattice-coordinate point.
inline Eigen::VectorXd cartesian_point(lattice const& lat, std::vector<double> const& s) {
  return lat.basis() * Eigen::Map<Eigen::VectorXd const>(s.data(), static_cast<Eigen::Index>(s.size()));
}

// Largest deviation between copies of the first cell across the box.
inline double periodicity_defect(sampled_field const& f) {
  double worst = 0.0;
  std::size_t const p = f.points_per_cell;
  for (std::size_t it = 0; it < f.t.points; ++it)
    for (std::size_t ix = 0; ix < f.nx(); ++ix) {
      auto idx = f.unflatten(ix);
      std::size_t base = 0;
      for (std::size_t a = 0; a < f.dim(); ++a) base = base * f.points_along(a) + idx[a] % p;
      worst = std::max(worst, std::abs(f.at(ix, it) - f.at(base, it)));
    }
  return worst;
}

inline void require_periodic(sampled_field const& v, double tol = 1e-12) {
  if (v.kind != field_kind::potential) fail(error_kind::schema, "expected a potential field");
  double const d = periodicity_defect(v);
  if (d > tol) {
    std::ostringstream os;
    os << "potential is not lattice periodic (defect " << d << ")";
    fail(error_kind::precondition, os.str());
  }
}

// ---- file formats ---------------------------------------------------------
//
// CSV: "key,value..." header lines
//   kind,sample
//   dim,2
//   cells,3,3
//   cell_lo,-1,-1
//   points_per_cell,8        (or: spacing,0.125)
//   t_range,0,5
//   t_points,101
// then a line "re,im" and one row per sample, spatial index outer and t
// inner.
//
// Binary: magic "HSDF", u32 version 1, u32 kind, u32 dim, dim x i64 cell_lo,
// dim x u64 cells, u64 points_per_cell, f64 t_lo, f64 t_hi, u64 t_points, then
// the values as interleaved f64 (re, im) in the same order as the CSV rows.

namespace detail {

inline std::vector<std::string> split_csv(std::string const& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  return out;
}

inline double to_double(std::string const& s, char const* what) {
  try {
    std::size_t used = 0;
    double const v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (std::exception const&) {
    fail(error_kind::schema, std::string("bad number for ") + what + ": '" + s + "'");
  }
}

inline std::int64_t to_integer(std::string const& s, char const* what) {
  double const v = to_double(s, what);
  if (v != std::floor(v)) fail(error_kind::grid, std::string(what) + " must be an integer, got '" + s + "'");
  return static_cast<std::int64_t>(v);
}

}  // namespace detail

inline void write_field_csv(sampled_field const& f, std::ostream& out) {
  f.validate();
  out << std::setprecision(17);
  out << "kind," << to_string(f.kind) << "\n";
  out << "dim," << f.dim() << "\n";
  out << "cells";
  for (auto c : f.cells) out << "," << c;
  out << "\ncell_lo";
  for (auto c : f.cell_lo) out << "," << c;
  out << "\npoints_per_cell," << f.points_per_cell << "\n";
  out << "t_range," << f.t.lo << "," << f.t.hi << "\n";
  out << "t_points," << f.t.points << "\n";
  out << "re,im\n";
  for (std::size_t ix = 0; ix < f.nx(); ++ix)
    for (std::size_t it = 0; it < f.t.points; ++it) out << f.at(ix, it).real() << "," << f.at(ix, it).imag() << "\n";
}

inline sampled_field read_field_csv(std::istream& in) {
  sampled_field f;
  std::string line;
  bool have_dim = false, have_ppc = false, have_t = false, have_tp = false;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    auto tok = detail::split_csv(line);
    if (tok.empty() || tok[0].empty()) continue;
    std::string const& key = tok[0];
    if (key == "re") break;
    auto need = [&](std::size_t n) {
      if (tok.size() != n + 1) fail(error_kind::schema, "field header '" + key + "' has the wrong number of entries");
    };
    if (key == "kind") {
      need(1);
      if (tok[1] == "sample") f.kind = field_kind::sample;
      else if (tok[1] == "potential") f.kind = field_kind::potential;
      else fail(error_kind::schema, "unknown field kind '" + tok[1] + "'");
    } else if (key == "dim") {
      need(1);
      dim = static_cast<std::size_t>(detail::to_integer(tok[1], "dim"));
      have_dim = true;
    } else if (key == "cells") {
      for (std::size_t i = 1; i < tok.size(); ++i) f.cells.push_back(static_cast<std::size_t>(detail::to_integer(tok[i], "cells")));
    } else if (key == "cell_lo") {
      for (std::size_t i = 1; i < tok.size(); ++i) f.cell_lo.push_back(detail::to_integer(tok[i], "cell_lo"));
    } else if (key == "points_per_cell") {
      need(1);
      f.points_per_cell = static_cast<std::size_t>(detail::to_integer(tok[1], "points_per_cell"));
      have_ppc = true;
    } else if (key == "spacing") {
      need(1);
      f.points_per_cell = points_for_spacing(detail::to_double(tok[1], "spacing"));
      have_ppc = true;
    } else if (key == "t_range") {
      need(2);
      f.t.lo = detail::to_double(tok[1], "t_range");
      f.t.hi = detail::to_double(tok[2], "t_range");
      have_t = true;
    } else if (key == "t_points") {
      need(1);
      f.t.points = static_cast<std::size_t>(detail::to_integer(tok[1], "t_points"));
      have_tp = true;
    } else {
      fail(error_kind::schema, "unknown field header key '" + key + "'");
    }
  }
  if (!have_dim || !have_ppc || !have_t || !have_tp) fail(error_kind::schema, "field header is incomplete");
  if (f.cells.size() != dim || f.cell_lo.size() != dim) fail(error_kind::schema, "field header dimension mismatch");
  if (f.t.points > 1 && !(f.t.hi > f.t.lo)) fail(error_kind::grid, "t_range must be increasing");
  std::size_t const nx = f.nx();
  f.values.assign(nx * f.t.points, complex{});
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t it = 0; it < f.t.points; ++it) {
      if (!std::getline(in, line)) fail(error_kind::schema, "field file ends early");
      auto tok = detail::split_csv(line);
      if (tok.size() != 2) fail(error_kind::schema, "field rows must be 're,im'");
      f.at(ix, it) = {detail::to_double(tok[0], "re"), detail::to_double(tok[1], "im")};
    }
  while (std::getline(in, line))
    if (!detail::trim(line).empty()) fail(error_kind::schema, "trailing data after field values");
  f.validate();
  return f;
}

namespace detail {
template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<char const*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(error_kind::schema, "binary field file ends early");
  return v;
}
}  // namespace detail

inline void write_field_binary(sampled_field const& f, std::ostream& out) {
  f.validate();
  out.write("HSDF", 4);
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint32_t>(out, f.kind == field_kind::sample ? 0 : 1);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.dim()));
  for (auto c : f.cell_lo) detail::put<std::int64_t>(out, c);
  for (auto c : f.cells) detail::put<std::uint64_t>(out, c);
  detail::put<std::uint64_t>(out, f.points_per_cell);
  detail::put<double>(out, f.t.lo);
  detail::put<double>(out, f.t.hi);
  detail::put<std::uint64_t>(out, f.t.points);
  for (std::size_t ix = 0; ix < f.nx(); ++ix)
    for (std::size_t it = 0; it < f.t.points; ++it) {
      detail::put<double>(out, f.at(ix, it).real());
      detail::put<double>(out, f.at(ix, it).imag());
    }
}

inline sampled_field read_field_binary(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HSDF", 4) != 0) fail(error_kind::schema, "not a binary field file");
  if (detail::get<std::uint32_t>(in) != 1) fail(error_kind::schema, "unsupported binary field version");
  sampled_field f;
  auto const kind = detail::get<std::uint32_t>(in);
  if (kind > 1) fail(error_kind::schema, "unknown field kind in binary file");
  f.kind = kind == 0 ? field_kind::sample : field_kind::potential;
  auto const dim = detail::get<std::uint32_t>(in);
  if (dim == 0 || dim > 8) fail(error_kind::schema, "unsupported field dimension");
  for (std::uint32_t a = 0; a < dim; ++a) f.cell_lo.push_back(detail::get<std::int64_t>(in));
  for (std::uint32_t a = 0; a < dim; ++a) f.cells.push_back(detail::get<std::uint64_t>(in));
  f.points_per_cell = detail::get<std::uint64_t>(in);
  f.t.lo = detail::get<double>(in);
  f.t.hi = detail::get<double>(in);
  f.t.points = detail::get<std::uint64_t>(in);
  f.values.assign(f.nx() * f.t.points, complex{});
  for (std::size_t ix = 0; ix < f.nx(); ++ix)
    for (std::size_t it = 0; it < f.t.points; ++it) {
      double const re = detail::get<double>(in);
      double const im = detail::get<double>(in);
      f.at(ix, it) = {re, im};
    }
  f.validate();
  return f;
}

// Binary if the file starts with the magic bytes, CSV otherwise.
inline sampled_field load_field(std::string const& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(error_kind::io, "cannot open field file '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  if (std::memcmp(magic, "HSDF", 4) == 0) return read_field_binary(in);
  return read_field_csv(in);
}

inline void save_field(sampled_field const& f, std::string const& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) fail(error_kind::io, "cannot write field file '" + path + "'");
  if (binary) write_field_binary(f, out);
  else write_field_csv(f, out);
  if (!out) fail(error_kind::io, "error while writing '" + path + "'");
}

}  // namespace hsdecay
