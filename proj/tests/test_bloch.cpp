#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hsdecay/bloch.hpp"

using namespace hsdecay;

namespace {

lattice skewed() {
  Eigen::MatrixXd b(2, 2);
  b << 1.0, 0.4, 0.0, 1.3;
  return lattice(b);
}

sampled_field random_field(std::mt19937_64& rng, std::vector<std::int64_t> lo, std::vector<std::size_t> cells,
                           std::size_t ppc, uniform_grid t) {
  auto u = make_field(field_kind::sample, std::move(lo), std::move(cells), ppc, t);
  for (auto& v : u.values) v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
  return u;
}

// Lattice sum written out directly from the definition, one point at a time.
complex naive_fiber_value(sampled_field const& u, lattice const& lat, std::vector<double> const& mu,
                          std::vector<double> const& s, std::size_t it) {
  Eigen::Vector2d const theta = dual_basis(lat).basis() * Eigen::Vector2d(mu[0], mu[1]);
  complex sum{};
  for (std::size_t ix = 0; ix < u.nx(); ++ix) {
    auto const frac = u.fractional(ix);
    double const d0 = frac[0] - s[0], d1 = frac[1] - s[1];
    if (std::abs(d0 - std::round(d0)) > 1e-12 || std::abs(d1 - std::round(d1)) > 1e-12) continue;
    Eigen::VectorXd const x = cartesian_point(lat, frac);
    sum += std::polar(1.0, -theta.dot(x)) * u.at(ix, it);
  }
  return sum;
}

}  // namespace

TEST(Gelfand, SingleCellSupportIsPhaseTimesField) {
  std::mt19937_64 rng(1);
  auto const lat = skewed();
  auto const u = random_field(rng, {0, 0}, {1, 1}, 6, make_grid(0, 1, 3));
  auto const dual = dual_basis(lat);
  for (auto const& mu : {std::vector<double>{0.1, 0.7}, std::vector<double>{0.5, 0.25}}) {
    auto const f = gelfand_forward(u, lat, mu).fiber;
    Eigen::Vector2d const theta = dual.basis() * Eigen::Vector2d(mu[0], mu[1]);
    for (std::size_t ix = 0; ix < u.nx(); ++ix)
      for (std::size_t it = 0; it < 3; ++it) {
        complex const expect = std::polar(1.0, -theta.dot(cartesian_point(lat, u.fractional(ix)))) * u.at(ix, it);
        EXPECT_LT(std::abs(f.data[it * 36 + ix] - expect), 1e-13);
      }
  }
}

TEST(Gelfand, DualLatticeModulationMultipliesFiber) {
  std::mt19937_64 rng(2);
  auto const lat = skewed();
  auto const dual = dual_basis(lat);
  auto u = random_field(rng, {-1, 0}, {3, 2}, 4, make_grid(0, 1, 2));
  std::vector<double> const mu{0.3, 0.6};
  auto const base = gelfand_forward(u, lat, mu).fiber;
  Eigen::Vector2d const k0 = dual.basis() * Eigen::Vector2d(2, -1);
  auto w = u;
  for (std::size_t ix = 0; ix < u.nx(); ++ix)
    for (std::size_t it = 0; it < 2; ++it)
      w.at(ix, it) *= std::polar(1.0, k0.dot(cartesian_point(lat, u.fractional(ix))));
  auto const mod = gelfand_forward(w, lat, mu).fiber;
  for (std::size_t k = 0; k < 16; ++k) {
    std::vector<double> s{static_cast<double>(k / 4) / 4.0, static_cast<double>(k % 4) / 4.0};
    complex const phase = std::polar(1.0, k0.dot(cartesian_point(lat, s)));
    for (std::size_t it = 0; it < 2; ++it) EXPECT_LT(std::abs(mod.data[it * 16 + k] - phase * base.data[it * 16 + k]), 1e-12);
  }
}

TEST(Gelfand, MatchesDirectLatticeSum) {
  std::mt19937_64 rng(3);
  auto const lat = skewed();
  auto const u = random_field(rng, {-1, -1}, {3, 3}, 3, make_grid(0, 1, 2));
  std::vector<double> const mu{0.15, 0.85};
  auto const f = gelfand_forward(u, lat, mu).fiber;
  for (std::size_t k = 0; k < 9; ++k) {
    std::vector<double> s{static_cast<double>(k / 3) / 3.0, static_cast<double>(k % 3) / 3.0};
    for (std::size_t it = 0; it < 2; ++it)
      EXPECT_LT(std::abs(f.data[it * 9 + k] - naive_fiber_value(u, lat, mu, s, it)), 1e-12);
  }
}

TEST(Gelfand, ParsevalOnThetaGrid) {
  std::mt19937_64 rng(4);
  auto const lat = skewed();
  for (int trial = 0; trial < 5; ++trial) {
    auto const u = random_field(rng, {-1, -1}, {3, 3}, 4, make_grid(0, 1, 3));
    auto const set = gelfand_forward_grid(u, lat, 6);
    auto const lhs = fiber_set_norm2(set);
    auto const rhs = field_norm2(u, lat);
    // Independent side: direct sum over samples times the cell volume element.
    double direct = 0.0;
    for (std::size_t ix = 0; ix < u.nx(); ++ix) direct += std::norm(u.at(ix, 0));
    direct *= 1.3 / 16.0;
    EXPECT_NEAR(rhs[0], direct, 1e-12 * direct);
    for (std::size_t it = 0; it < 3; ++it) EXPECT_NEAR(lhs[it], rhs[it], 1e-6 * rhs[it]);
  }
}

TEST(Gelfand, RoundTripIsExactForBandLimitedData) {
  std::mt19937_64 rng(5);
  auto const lat = skewed();
  auto const u = random_field(rng, {-1, 0}, {3, 2}, 5, make_grid(0, 2, 4));
  auto const set = gelfand_forward_grid(u, lat, 4, {}, 3);
  auto const back = gelfand_inverse(set, u.cell_lo, u.cells);
  double err = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) err = std::max(err, std::abs(back.values[i] - u.values[i]));
  EXPECT_LT(err, 1e-8);
}

TEST(Gelfand, BumpReconstructedInItsCell) {
  auto const lat = skewed();
  auto u = make_field(field_kind::sample, {1, 0}, {1, 1}, 8, make_grid(0, 1, 2));
  for (std::size_t ix = 0; ix < u.nx(); ++ix) {
    auto const s = u.fractional(ix);
    double const a = s[0] - 1.5, b = s[1] - 0.5;
    u.at(ix, 0) = u.at(ix, 1) = std::exp(-20.0 * (a * a + b * b));
  }
  auto const set = gelfand_forward_grid(u, lat, 4);
  auto const back = gelfand_inverse(set, {-1, -1}, {4, 3});
  double leak = 0.0, err = 0.0;
  for (std::size_t ix = 0; ix < back.nx(); ++ix) {
    auto const s = back.fractional(ix);
    bool const home = s[0] >= 1.0 && s[0] < 2.0 && s[1] >= 0.0 && s[1] < 1.0;
    if (home) {
      auto const idx = back.unflatten(ix);
      std::size_t const src = (idx[0] - 16) * 8 + (idx[1] - 8);
      err = std::max(err, std::abs(back.at(ix, 0) - u.at(src, 0)));
    } else {
      leak = std::max(leak, std::abs(back.at(ix, 0)));
    }
  }
  EXPECT_LT(leak, 1e-8);
  EXPECT_LT(err, 1e-8);
}

TEST(Gelfand, ZeroFibersGiveZeroField) {
  fiber_set set;
  set.per_axis = 2;
  for (auto const& mu : theta_grid(2, 2)) {
    bloch_fiber f;
    f.mu = mu;
    f.t = make_grid(0, 1, 3);
    f.points_per_cell = 4;
    f.data.assign(16 * 3, complex{});
    set.fibers.push_back(f);
  }
  auto const u = gelfand_inverse(set, {0, 0}, {2, 2});
  for (auto v : u.values) EXPECT_EQ(v, complex{});
}

TEST(Gelfand, MismatchedFibersRejected) {
  std::mt19937_64 rng(6);
  auto const lat = skewed();
  auto const u = random_field(rng, {0, 0}, {1, 1}, 4, make_grid(0, 1, 3));
  auto set = gelfand_forward_grid(u, lat, 2);
  set.fibers[1].t = make_grid(0, 2, 3);
  EXPECT_THROW(gelfand_inverse(set, {0, 0}, {1, 1}), error);
}

TEST(Gelfand, FiberContinuousInTheta) {
  std::mt19937_64 rng(7);
  auto const lat = skewed();
  auto const u = random_field(rng, {-1, -1}, {3, 3}, 4, make_grid(0, 1, 2));
  auto const ref = gelfand_forward(u, lat, {0.3, 0.4}).fiber;
  std::vector<double> ratios;
  for (double d : {1e-1, 1e-2, 1e-3, 1e-4}) {
    auto const f = gelfand_forward(u, lat, {0.3 + d, 0.4 - d}).fiber;
    double s = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) s += std::norm(f.data[i] - ref.data[i]);
    ratios.push_back(std::sqrt(s) / d);
  }
  // Lipschitz with a stable constant as the step shrinks.
  EXPECT_NEAR(ratios[3] / ratios[2], 1.0, 1e-2);
  for (double r : ratios) EXPECT_LT(r, 2.0 * ratios.back());
}

TEST(Gelfand, TailBoundCountsExcludedCellsAndEnvelope) {
  auto const lat = skewed();
  auto u = make_field(field_kind::sample, {-2, -2}, {5, 5}, 2, make_grid(0, 1, 2));
  for (auto& v : u.values) v = 1.0;
  auto const all = gelfand_forward(u, lat, {0.5, 0.5});
  EXPECT_EQ(all.tail_bound, 0.0);
  EXPECT_TRUE(all.assumes_zero_outside);
  auto const cut = gelfand_forward(u, lat, {0.5, 0.5}, {1, std::nullopt});
  // 16 excluded cells with L^2 norm sqrt(|O|) each.
  EXPECT_NEAR(cut.tail_bound, 16.0 * std::sqrt(1.3), 1e-12);
  auto const env = gelfand_forward(u, lat, {0.5, 0.5}, {2, decay_envelope{1.0, 3.0}});
  double shells = 0.0;
  for (int r = 3; r < 60; ++r) shells += ((2.0 * r + 1) * (2.0 * r + 1) - (2.0 * r - 1) * (2.0 * r - 1)) * std::exp(-3.0 * r);
  EXPECT_NEAR(env.tail_bound, std::sqrt(1.3) * shells, 1e-12);
  EXPECT_FALSE(env.assumes_zero_outside);
}

TEST(BlochFiber, SpectralConversionIsUnitary) {
  std::mt19937_64 rng(8);
  bloch_fiber f;
  f.mu = {0.2, 0.9};
  f.t = make_grid(0, 1, 3);
  f.points_per_cell = 6;
  f.cell_volume = 1.3;
  f.data.resize(36 * 3);
  for (auto& v : f.data) v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
  auto const original = f;
  auto const dft = make_dft(f);
  double const before = f.norm2(1);
  f.to_spectral(dft);
  EXPECT_NEAR(f.norm2(1), before, 1e-10 * before);
  f.to_physical(dft);
  for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_LT(std::abs(f.data[i] - original.data[i]), 1e-12);
}

namespace {

// phi = g(t) e^{2 pi i m.s} / sqrt|O| in physical form: one spectral mode.
bloch_fiber single_mode(std::vector<double> mu, std::size_t ppc, double volume, uniform_grid t,
                        std::vector<std::int64_t> m, std::function<double(double)> g) {
  bloch_fiber f;
  f.mu = std::move(mu);
  f.t = t;
  f.points_per_cell = ppc;
  f.cell_volume = volume;
  std::size_t const cp = f.cell_points();
  f.data.resize(cp * t.points);
  for (std::size_t it = 0; it < t.points; ++it)
    for (std::size_t k = 0; k < cp; ++k) {
      double const s0 = static_cast<double>(k / ppc) / static_cast<double>(ppc);
      double const s1 = static_cast<double>(k % ppc) / static_cast<double>(ppc);
      double const ph = two_pi * (static_cast<double>(m[0]) * s0 + static_cast<double>(m[1]) * s1);
      f.data[it * cp + k] = g(t[it]) * std::polar(1.0, ph) / std::sqrt(volume);
    }
  return f;
}

sampled_field constant_potential(std::size_t ppc, double value) {
  auto v = make_field(field_kind::potential, {0, 0}, {1, 1}, ppc, uniform_grid{0, 1, 1});
  for (auto& x : v.values) x = value;
  return v;
}

}  // namespace

TEST(FiberResidual, FreeDecayingModeConvergesAtOrderTwo) {
  auto const lat = skewed();
  auto const dual = dual_basis(lat);
  std::vector<double> const mu{0.25, 0.5};
  std::vector<std::int64_t> const m{1, -1};
  double const energy = 2.0;
  Eigen::Vector2d const k = dual.basis() * Eigen::Vector2d(1.25, -0.5);
  double const lam = k.squaredNorm() - energy;
  ASSERT_GT(lam, 0.0);
  double const rate = std::sqrt(lam);
  std::vector<double> maxima;
  for (std::size_t pts : {41u, 81u, 161u}) {
    auto const f = single_mode(mu, 4, 1.3, make_grid(0, 1, pts), m, [&](double t) { return std::exp(-rate * t); });
    auto const r = fiber_residual(f, constant_potential(4, 0.0), dual, energy);
    maxima.push_back(r.r[(pts - 1) / 2 - 1]);  // residual at t = 1/2
  }
  EXPECT_NEAR(maxima[0] / maxima[1], 4.0, 0.1);
  EXPECT_NEAR(maxima[1] / maxima[2], 4.0, 0.1);
}

TEST(FiberResidual, ManufacturedConstantPotential) {
  auto const lat = skewed();
  auto const dual = dual_basis(lat);
  std::vector<double> const mu{0.1, 0.3};
  Eigen::Vector2d const k = dual.basis() * Eigen::Vector2d(0.1, 1.3);
  double const lam = k.squaredNorm();
  std::vector<double> maxima;
  for (std::size_t pts : {41u, 81u}) {
    auto const f = single_mode(mu, 4, 1.3, make_grid(0, 1, pts), {0, 1}, [](double t) { return std::exp(-t); });
    maxima.push_back(fiber_residual(f, constant_potential(4, 1.0 - lam), dual, 0.0).max());
  }
  EXPECT_LT(maxima[1], 1e-4);
  EXPECT_NEAR(maxima[0] / maxima[1], 4.0, 0.1);
}

TEST(FiberResidual, RandomDataLeavesResidualAndCoarseGridRejected) {
  std::mt19937_64 rng(9);
  auto const dual = dual_basis(skewed());
  bloch_fiber f;
  f.mu = {0.5, 0.5};
  f.t = make_grid(0, 1, 6);
  f.points_per_cell = 4;
  f.cell_volume = 1.3;
  f.data.resize(16 * 6);
  for (auto& v : f.data) v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
  auto v = make_field(field_kind::potential, {0, 0}, {2, 1}, 4, uniform_grid{0, 1, 1});
  for (std::size_t ix = 0; ix < v.nx(); ++ix) v.at(ix, 0) = static_cast<double>(v.unflatten(ix)[1]);
  auto const r = fiber_residual(f, v, dual, 0.0);
  EXPECT_EQ(r.r.size(), 4u);
  for (double x : r.r) EXPECT_GT(x, 0.0);
  f.t = make_grid(0, 1, 4);
  f.data.resize(16 * 4);
  try {
    fiber_residual(f, v, dual, 0.0);
    FAIL();
  } catch (error const& e) {
    EXPECT_EQ(e.kind(), error_kind::grid);
  }
  // Potential that is not periodic across its cells.
  f.t = make_grid(0, 1, 6);
  f.data.resize(16 * 6);
  v.at(20, 0) = 5.0;
  EXPECT_THROW(fiber_residual(f, v, dual, 0.0), error);
}

TEST(WeightedNorm, Examples) {
  auto const lat = skewed();
  auto u = make_field(field_kind::sample, {0, 0}, {1, 1}, 4, make_grid(0, 1, 11));
  EXPECT_EQ(weighted_norm(u, lat, 1.0, 1.0).value, 0.0);
  for (auto& v : u.values) v = 1.0;
  EXPECT_NEAR(weighted_norm(u, lat, 0.0, 0.0).value, 1.3, 1e-14);
  auto w = make_field(field_kind::sample, {0, 0}, {1, 1}, 4, make_grid(0, 2, 401));
  for (std::size_t it = 0; it < w.t.points; ++it)
    for (std::size_t ix = 0; ix < w.nx(); ++ix) w.at(ix, it) = std::exp(-w.t[it]);
  EXPECT_NEAR(weighted_norm(w, lat, 0.0, 0.5).value, 1.3 * (1.0 - std::exp(-2.0)), 1e-8);
  // t^(4/3) weight against a closed form-free check: lam = 0 equals sigma = 1.
  EXPECT_NEAR(weighted_norm(w, lat, 0.0, 0.0, 4.0 / 3.0).value, weighted_norm(w, lat, 0.0, 0.0).value, 1e-15);
  EXPECT_THROW(weighted_norm(w, lat, 0.0, 0.0, 2.0), error);
  // Spatial weight grows the value.
  EXPECT_GT(weighted_norm(w, lat, 1.0, 0.5).value, weighted_norm(w, lat, 0.0, 0.5).value);
}

TEST(FieldFiles, CsvAndBinaryRoundTrip) {
  std::mt19937_64 rng(10);
  auto const u = random_field(rng, {-1, 2}, {2, 1}, 3, make_grid(0.5, 2.5, 4));
  std::stringstream csv;
  write_field_csv(u, csv);
  auto const a = read_field_csv(csv);
  EXPECT_EQ(a.values, u.values);
  EXPECT_EQ(a.cell_lo, u.cell_lo);
  std::stringstream bin;
  write_field_binary(u, bin);
  auto const b = read_field_binary(bin);
  EXPECT_EQ(b.values, u.values);
  EXPECT_TRUE(b.t == u.t);
}

TEST(FieldFiles, IncommensurateGridRejected) {
  std::stringstream bad("kind,sample\ndim,1\ncells,1\ncell_lo,0\nspacing,0.3\nt_range,0,1\nt_points,2\nre,im\n");
  try {
    read_field_csv(bad);
    FAIL();
  } catch (error const& e) {
    EXPECT_EQ(e.kind(), error_kind::grid);
  }
  std::stringstream shifted("kind,sample\ndim,1\ncells,1\ncell_lo,0.5\npoints_per_cell,2\nt_range,0,1\nt_points,2\nre,im\n");
  try {
    read_field_csv(shifted);
    FAIL();
  } catch (error const& e) {
    EXPECT_EQ(e.kind(), error_kind::grid);
  }
  std::stringstream unknown("kind,sample\ncolour,red\n");
  EXPECT_THROW(read_field_csv(unknown), error);
  EXPECT_EQ(points_for_spacing(0.125), 8u);
}
