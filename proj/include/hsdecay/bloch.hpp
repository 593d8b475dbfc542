#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "hsdecay/dft.hpp"
#include "hsdecay/error.hpp"
#include "hsdecay/field.hpp"
#include "hsdecay/lattice.hpp"
#include "hsdecay/numerics.hpp"
#include "hsdecay/parallel.hpp"

namespace hsdecay {

enum class representation { physical, spectral };

// One fiber phi_theta(t, .) on the torus. Physical values live on the P^n cell
// grid; spectral coefficients c_m, m in (-P/2, P/2]^n in FFT order, satisfy
//   c_m = sqrt(|O|) / P^n * sum_s phi(s) e^{-2 pi i m.s},
// which makes the conversion unitary from the discrete L^2(O) to l^2.
struct bloch_fiber {
  std::vector<double> mu;  // theta = sum mu_i f_i
  uniform_grid t;
  std::size_t points_per_cell = 1;
  double cell_volume = 1.0;
  representation active = representation::physical;
  std::vector<complex> data;  // data[it * P^n + index]

  std::size_t dim() const { return mu.size(); }
  std::size_t cell_points() const {
    std::size_t n = 1;
    for (std::size_t a = 0; a < dim(); ++a) n *= points_per_cell;
    return n;
  }
  std::span<complex> slice(std::size_t it) { return {data.data() + it * cell_points(), cell_points()}; }
  std::span<complex const> slice(std::size_t it) const { return {data.data() + it * cell_points(), cell_points()}; }

  void to_spectral(cell_dft const& dft) {
    if (active == representation::spectral) return;
    double const scale = std::sqrt(cell_volume) / static_cast<double>(cell_points());
    for (std::size_t it = 0; it < t.points; ++it) {
      auto y = dft.forward(slice(it));
      auto s = slice(it);
      for (std::size_t i = 0; i < y.size(); ++i) s[i] = scale * y[i];
    }
    active = representation::spectral;
  }

  void to_physical(cell_dft const& dft) {
    if (active == representation::physical) return;
    double const scale = 1.0 / std::sqrt(cell_volume);
    for (std::size_t it = 0; it < t.points; ++it) {
      auto y = dft.backward(slice(it));
      auto s = slice(it);
      for (std::size_t i = 0; i < y.size(); ++i) s[i] = scale * y[i];
    }
    active = representation::physical;
  }

  // ||phi(t)||^2 in L^2(O); identical in both representations.
  double norm2(std::size_t it) const {
    double s = 0.0;
    for (auto v : slice(it)) s += std::norm(v);
    return active == representation::spectral ? s : s * cell_volume / static_cast<double>(cell_points());
  }
};

inline cell_dft make_dft(bloch_fiber const& f) { return cell_dft(f.dim(), f.points_per_cell); }

// Signed frequency vector m of flat FFT index k.
inline std::vector<std::int64_t> mode_frequency(std::size_t k, std::size_t dim, std::size_t points) {
  std::vector<std::int64_t> m(dim);
  auto const p = static_cast<std::int64_t>(points);
  for (std::size_t a = dim; a-- > 0;) {
    auto const kk = static_cast<std::int64_t>(k % points);
    m[a] = 2 * kk <= p ? kk : kk - p;
    k /= points;
  }
  return m;
}

// Eigenvalues |F(m + mu)|^2 - E of A_theta on the discrete modes, FFT order.
inline std::vector<double> mode_eigenvalues(dual_lattice const& dual, std::vector<double> const& mu,
                                            std::size_t points, double energy) {
  std::size_t const n = dual.dim();
  if (mu.size() != n) fail(error_kind::schema, "quasimomentum dimension mismatch");
  std::size_t total = 1;
  for (std::size_t a = 0; a < n; ++a) total *= points;
  std::vector<double> out(total);
  Eigen::VectorXd c(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < total; ++k) {
    auto const m = mode_frequency(k, n, points);
    for (std::size_t a = 0; a < n; ++a) c(static_cast<Eigen::Index>(a)) = static_cast<double>(m[a]) + mu[a];
    out[k] = (dual.basis() * c).squaredNorm() - energy;
  }
  return out;
}

// Midpoint quasimomentum grid mu = (i + 1/2) / K per axis, row-major.
inline std::vector<std::vector<double>> theta_grid(std::size_t dim, std::size_t per_axis) {
  if (per_axis == 0) fail(error_kind::grid, "theta grid needs at least one point per axis");
  std::size_t total = 1;
  for (std::size_t a = 0; a < dim; ++a) total *= per_axis;
  std::vector<std::vector<double>> out(total, std::vector<double>(dim));
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t r = i;
    for (std::size_t a = dim; a-- > 0;) {
      out[i][a] = (static_cast<double>(r % per_axis) + 0.5) / static_cast<double>(per_axis);
      r /= per_axis;
    }
  }
  return out;
}

// Optional decay envelope |u(x + l, t)| <= amplitude * exp(-rate |j|_inf) for
// the cell l = E j, used to bound the part of the lattice sum that is not
// sampled.
struct decay_envelope {
  double amplitude = 0.0;
  double rate = 0.0;
};

struct forward_options {
  std::int64_t l_max = std::numeric_limits<std::int64_t>::max();
  std::optional<decay_envelope> envelope;
};

struct forward_result {
  bloch_fiber fiber;
  // Bound on sup_t ||omitted lattice terms||_{L^2(O)}: sampled cells beyond
  // l_max plus, with an envelope, everything outside the sampled box. Without
  // an envelope u is taken to vanish outside the box.
  double tail_bound = 0.0;
  bool assumes_zero_outside = true;
};

namespace detail {

// sum_{r > inner} ((2r+1)^n - (2r-1)^n) e^{-rate r}
inline double shell_sum(std::size_t n, std::int64_t inner, double rate) {
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::int64_t r = std::max<std::int64_t>(inner + 1, 0); r < inner + 10'000'000; ++r) {
    double const count = r == 0 ? 1.0
                                : std::pow(2.0 * static_cast<double>(r) + 1.0, static_cast<double>(n)) -
                                      std::pow(2.0 * static_cast<double>(r) - 1.0, static_cast<double>(n));
    double const term = count * std::exp(-rate * static_cast<double>(r));
    s += term;
    if (r > inner + 1 && term < 1e-17 * s) break;
  }
  return s;
}

inline void require_same_cell_grid(sampled_field const& u, lattice const& lat) {
  if (u.dim() != lat.dim()) fail(error_kind::grid, "field dimension does not match the lattice");
}

}  // namespace detail

// (U_theta u)(x) = sum_{|j|_inf <= l_max} e^{-i theta.(x + l)} u(x + l, t) on
// the cell grid, where theta.(x + l) = 2 pi mu.(s + j) in lattice coordinates.
inline forward_result gelfand_forward(sampled_field const& u, lattice const& lat, std::vector<double> const& mu,
                                      forward_options const& opt = {}) {
  u.validate();
  detail::require_same_cell_grid(u, lat);
  if (mu.size() != u.dim()) fail(error_kind::schema, "quasimomentum dimension mismatch");
  std::size_t const n = u.dim();
  std::size_t const p = u.points_per_cell;
  forward_result res;
  bloch_fiber& f = res.fiber;
  f.mu = mu;
  f.t = u.t;
  f.points_per_cell = p;
  f.cell_volume = unit_cell_volume(lat);
  f.data.assign(f.cell_points() * u.t.points, complex{});

  std::vector<double> excluded_norm2(u.t.points, 0.0);
  std::vector<double> excluded_sum(u.t.points, 0.0);
  std::size_t const cp = f.cell_points();
  double const dv = f.cell_volume / static_cast<double>(cp);
  std::size_t cell_count = 1;
  for (auto c : u.cells) cell_count *= c;
  std::vector<std::size_t> local(n);
  for (std::size_t ci = 0; ci < cell_count; ++ci) {
    // Cell multi-index j.
    std::vector<std::int64_t> j(n);
    std::vector<std::size_t> cidx(n);
    std::size_t r = ci;
    for (std::size_t a = n; a-- > 0;) {
      cidx[a] = r % u.cells[a];
      r /= u.cells[a];
      j[a] = u.cell_lo[a] + static_cast<std::int64_t>(cidx[a]);
    }
    std::int64_t jinf = 0;
    for (auto v : j) jinf = std::max(jinf, std::abs(v));
    bool const include = jinf <= opt.l_max;
    std::vector<double> cell_norm2(u.t.points, 0.0);
    for (std::size_t k = 0; k < cp; ++k) {
      std::size_t rr = k;
      for (std::size_t a = n; a-- > 0;) {
        local[a] = rr % p;
        rr /= p;
      }
      std::size_t ix = 0;
      double phase = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        ix = ix * u.points_along(a) + cidx[a] * p + local[a];
        double const s = static_cast<double>(local[a]) / static_cast<double>(p);
        phase += mu[a] * (s + static_cast<double>(j[a]));
      }
      complex const w = std::polar(1.0, -two_pi * phase);
      for (std::size_t it = 0; it < u.t.points; ++it) {
        complex const v = u.at(ix, it);
        if (include) f.data[it * cp + k] += w * v;
        else cell_norm2[it] += std::norm(v) * dv;
      }
    }
    if (!include)
      for (std::size_t it = 0; it < u.t.points; ++it) excluded_sum[it] += std::sqrt(cell_norm2[it]);
  }
  double tail = 0.0;
  for (double v : excluded_sum) tail = std::max(tail, v);
  if (opt.envelope) {
    // Largest L with the whole cube |j|_inf <= L inside the sampled box.
    std::int64_t inner = std::numeric_limits<std::int64_t>::max();
    for (std::size_t a = 0; a < n; ++a) {
      std::int64_t const lo = u.cell_lo[a];
      std::int64_t const hi = lo + static_cast<std::int64_t>(u.cells[a]) - 1;
      inner = std::min(inner, std::min(-lo, hi));
    }
    inner = std::max<std::int64_t>(inner, -1);
    tail += opt.envelope->amplitude * std::sqrt(f.cell_volume) * detail::shell_sum(n, inner, opt.envelope->rate);
    res.assumes_zero_outside = false;
  }
  res.tail_bound = tail;
  return res;
}

// Fibers on the full midpoint theta grid with K points per axis.
struct fiber_set {
  std::size_t per_axis = 0;
  std::vector<bloch_fiber> fibers;
  double tail_bound = 0.0;
};

inline fiber_set gelfand_forward_grid(sampled_field const& u, lattice const& lat, std::size_t per_axis,
                                      forward_options const& opt = {}, std::size_t threads = 1) {
  auto const grid = theta_grid(u.dim(), per_axis);
  auto results = parallel_map<forward_result>(
      grid.size(), [&](std::size_t i) { return gelfand_forward(u, lat, grid[i], opt); }, threads);
  fiber_set out;
  out.per_axis = per_axis;
  for (auto& r : results) {
    out.tail_bound = std::max(out.tail_bound, r.tail_bound);
    out.fibers.push_back(std::move(r.fiber));
  }
  return out;
}

// u(s + j) = K^{-n} sum_theta e^{2 pi i mu.(s + j)} phi_theta(s) on the
// requested output box. Exact when u occupies fewer than K cells per axis.
inline sampled_field gelfand_inverse(fiber_set const& set, std::vector<std::int64_t> const& cell_lo,
                                     std::vector<std::size_t> const& cells) {
  if (set.fibers.empty()) fail(error_kind::precondition, "inverse transform needs at least one fiber");
  bloch_fiber const& first = set.fibers.front();
  std::size_t const n = first.dim();
  auto const grid = theta_grid(n, set.per_axis);
  if (grid.size() != set.fibers.size()) fail(error_kind::grid, "fiber count does not fill the theta grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    bloch_fiber const& f = set.fibers[i];
    if (f.dim() != n || !(f.t == first.t) || f.points_per_cell != first.points_per_cell)
      fail(error_kind::grid, "fibers do not share t-grid and cell grid");
    if (f.active != representation::physical) fail(error_kind::precondition, "inverse needs physical fibers");
    for (std::size_t a = 0; a < n; ++a)
      if (std::abs(f.mu[a] - grid[i][a]) > 1e-12) fail(error_kind::grid, "fibers are not on the midpoint theta grid");
  }
  if (cell_lo.size() != n || cells.size() != n) fail(error_kind::schema, "output box dimension mismatch");
  sampled_field u = make_field(field_kind::sample, cell_lo, cells, first.points_per_cell, first.t);
  std::size_t const p = first.points_per_cell;
  std::size_t const cp = first.cell_points();
  double const weight = 1.0 / static_cast<double>(grid.size());
  for (std::size_t ix = 0; ix < u.nx(); ++ix) {
    auto const idx = u.unflatten(ix);
    std::size_t k = 0;
    std::vector<double> pos(n);
    for (std::size_t a = 0; a < n; ++a) {
      k = k * p + idx[a] % p;
      pos[a] = static_cast<double>(cell_lo[a]) + static_cast<double>(idx[a]) / static_cast<double>(p);
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double phase = 0.0;
      for (std::size_t a = 0; a < n; ++a) phase += grid[g][a] * pos[a];
      complex const w = weight * std::polar(1.0, two_pi * phase);
      bloch_fiber const& f = set.fibers[g];
      for (std::size_t it = 0; it < u.t.points; ++it) u.at(ix, it) += w * f.data[it * cp + k];
    }
  }
  return u;
}

// ||u(t)||^2 over the sampled box, rectangle rule on the periodic cell grid.
inline std::vector<double> field_norm2(sampled_field const& u, lattice const& lat) {
  double const dv = unit_cell_volume(lat) / std::pow(static_cast<double>(u.points_per_cell), static_cast<double>(u.dim()));
  std::vector<double> out(u.t.points, 0.0);
  for (std::size_t it = 0; it < u.t.points; ++it)
    for (std::size_t ix = 0; ix < u.nx(); ++ix) out[it] += std::norm(u.at(ix, it)) * dv;
  return out;
}

// K^{-n} sum_theta ||phi_theta(t)||^2, the discrete counterpart of the
// normalized theta integral.
inline std::vector<double> fiber_set_norm2(fiber_set const& set) {
  std::vector<double> out(set.fibers.front().t.points, 0.0);
  double const w = 1.0 / static_cast<double>(set.fibers.size());
  for (auto const& f : set.fibers)
    for (std::size_t it = 0; it < out.size(); ++it) out[it] += w * f.norm2(it);
  return out;
}

struct residual_profile {
  std::vector<double> t;
  std::vector<double> r;
  double max() const {
    double m = 0.0;
    for (double v : r) m = std::max(m, v);
    return m;
  }
};

// r(t) = ||(d_t^2 - A_theta) phi - V_t phi||_{L^2(T)} at interior t points.
// A_theta acts on modes, V_t on cell values, d_t^2 by centered differences.
// A potential sampled at a single t is taken constant in t.
inline residual_profile fiber_residual(bloch_fiber const& fiber_in, sampled_field const& v, dual_lattice const& dual,
                                       double energy) {
  if (fiber_in.t.points < 5) fail(error_kind::grid, "fiber residual needs at least 5 t-grid points");
  require_periodic(v);
  if (v.dim() != fiber_in.dim() || v.points_per_cell != fiber_in.points_per_cell)
    fail(error_kind::grid, "potential and fiber cell grids differ");
  bool const static_v = v.t.points == 1;
  if (!static_v && !(v.t == fiber_in.t)) fail(error_kind::grid, "potential and fiber t-grids differ");
  cell_dft const dft(fiber_in.dim(), fiber_in.points_per_cell);
  bloch_fiber phys = fiber_in;
  phys.to_physical(dft);
  bloch_fiber modal = fiber_in;
  modal.to_spectral(dft);
  std::size_t const n = fiber_in.dim();
  std::size_t const p = fiber_in.points_per_cell;
  std::size_t const cp = fiber_in.cell_points();
  auto const lam = mode_eigenvalues(dual, fiber_in.mu, p, energy);
  // First-cell potential values on the fiber's cell grid.
  std::vector<std::size_t> v_index(cp);
  for (std::size_t k = 0; k < cp; ++k) {
    std::size_t r = k, ix = 0, stride = 1;
    for (std::size_t a = n; a-- > 0;) {
      ix += (r % p) * stride;
      stride *= v.points_along(a);
      r /= p;
    }
    v_index[k] = ix;
  }
  double const h = fiber_in.t.step();
  double const inv_h2 = 1.0 / (h * h);
  double const scale = std::sqrt(fiber_in.cell_volume) / static_cast<double>(cp);
  residual_profile out;
  std::vector<complex> vphi(cp);
  for (std::size_t it = 1; it + 1 < fiber_in.t.points; ++it) {
    std::size_t const vt = static_v ? 0 : it;
    for (std::size_t k = 0; k < cp; ++k) vphi[k] = v.at(v_index[k], vt) * phys.data[it * cp + k];
    auto const vhat = dft.forward(vphi);
    double s = 0.0;
    for (std::size_t k = 0; k < cp; ++k) {
      complex const c = modal.data[it * cp + k];
      complex const dd = (modal.data[(it + 1) * cp + k] - 2.0 * c + modal.data[(it - 1) * cp + k]) * inv_h2;
      s += std::norm(dd - lam[k] * c - scale * vhat[k]);
    }
    out.t.push_back(fiber_in.t[it]);
    out.r.push_back(std::sqrt(s));
  }
  return out;
}

struct weighted_norm_result {
  double value = 0.0;
  // Share of the value carried by the outermost layer of cells; a large share
  // means the box truncates significant mass.
  double boundary_share = 0.0;
};

// Quadrature of int <x>^{2 kappa} e^{2 lam t^sigma} |u|^2 over the sampled
// box, sigma in {1, 4/3}; rectangle rule in x, Simpson in t.
inline weighted_norm_result weighted_norm(sampled_field const& u, lattice const& lat, double kappa, double lam,
                                          double sigma = 1.0) {
  u.validate();
  detail::require_same_cell_grid(u, lat);
  if (sigma != 1.0 && std::abs(sigma - 4.0 / 3.0) > 1e-12)
    fail(error_kind::precondition, "weight exponent must be 1 or 4/3");
  if (sigma != 1.0 && u.t.lo < 0.0) fail(error_kind::precondition, "t^(4/3) weight needs t >= 0");
  std::size_t const n = u.dim();
  double const dv = unit_cell_volume(lat) / std::pow(static_cast<double>(u.points_per_cell), static_cast<double>(n));
  std::vector<double> inner(u.t.points, 0.0), outer_layer(u.t.points, 0.0);
  for (std::size_t ix = 0; ix < u.nx(); ++ix) {
    double const x2 = cartesian_point(lat, u.fractional(ix)).squaredNorm();
    double const wx = std::pow(1.0 + x2, kappa);
    auto const idx = u.unflatten(ix);
    bool edge = false;
    for (std::size_t a = 0; a < n; ++a) {
      std::size_t const cell = idx[a] / u.points_per_cell;
      if (u.cells[a] > 2 && (cell == 0 || cell + 1 == u.cells[a])) edge = true;
    }
    for (std::size_t it = 0; it < u.t.points; ++it) {
      double const v = wx * std::norm(u.at(ix, it)) * dv;
      inner[it] += v;
      if (edge) outer_layer[it] += v;
    }
  }
  auto time_weight = [&](double t) {
    double const ts = sigma == 1.0 ? t : std::pow(t, sigma);
    return std::exp(2.0 * lam * ts);
  };
  for (std::size_t it = 0; it < u.t.points; ++it) {
    double const w = time_weight(u.t[it]);
    inner[it] *= w;
    outer_layer[it] *= w;
  }
  weighted_norm_result res;
  if (u.t.points == 1) {
    res.value = inner[0];
    res.boundary_share = inner[0] > 0.0 ? outer_layer[0] / inner[0] : 0.0;
    return res;
  }
  double const h = u.t.step();
  res.value = simpson(inner, h);
  double const edge_total = simpson(outer_layer, h);
  res.boundary_share = res.value > 0.0 ? edge_total / res.value : 0.0;
  return res;
}

}  // namespace hsdecay
