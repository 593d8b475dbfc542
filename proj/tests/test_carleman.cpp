#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hsdecay/carleman.hpp"

using namespace hsdecay;

namespace {

spectral_profile single_bump(double mu, double lo, double hi, double step = 1e-3, double t_end = 4.0) {
  auto const grid = grid_with_step(0.0, t_end, step);
  return bump_profile(grid, lo, hi, {complex(1.0)}, {mu});
}

template <typename Fn>
void expect_refusal(Fn&& fn) {
  try {
    fn();
    FAIL() << "expected a precondition refusal";
  } catch (error const& e) {
    EXPECT_EQ(e.kind(), error_kind::precondition) << e.what();
    EXPECT_EQ(e.exit_code(), 2);
  }
}

}  // namespace

TEST(BumpProfile, StandardBumpPeakAndSupport) {
  auto const p = single_bump(1.0, 1.0, 3.0);
  EXPECT_EQ(p.at(0, 0), complex{});
  EXPECT_EQ(p.at(0, p.t.points - 1), complex{});
  EXPECT_NEAR(p.max_abs(), std::exp(-1.0), 1e-15);
  for (std::size_t k = 0; k < p.t.points; ++k)
    if (p.t[k] <= 1.0 || p.t[k] >= 3.0) EXPECT_EQ(p.at(0, k), complex{});
  auto const zero = bump_profile(p.t, 1.0, 3.0, {complex{}, complex{}}, {1.0, 2.0});
  EXPECT_EQ(zero.max_abs(), 0.0);
  EXPECT_THROW(bump_profile(p.t, 1.0, 5.0, {complex(1.0)}, {1.0}), error);
}

TEST(BumpProfile, TaperDerivativeBounds) {
  auto const grid = make_grid(0.0, 25.0, 25001);
  auto const rep = measure_taper(grid, 0.5, 10.0);
  EXPECT_LE(rep.sup_d1, 2.0 / 10.0);
  EXPECT_LE(rep.sup_d2, 8.0 / 100.0);
  EXPECT_NEAR(rep.sup_d1, 1.875 / 10.0, 1e-6);
  EXPECT_NEAR(rep.sup_d2, 10.0 / std::sqrt(3.0) / 100.0, 1e-4);
  EXPECT_TRUE(rep.within());
  auto const p = cutoff_profile(grid, 0.5, 10.0, {complex(2.0)}, {0.0});
  EXPECT_EQ(p.at(0, 0), complex{});
  EXPECT_DOUBLE_EQ(p.at(0, 5000).real(), 2.0);  // t = 5
  EXPECT_EQ(p.at(0, 22000), complex{});         // t = 22 > 2R
}

TEST(Conjugation, ResidualSmallAndSecondOrder) {
  auto const p = single_bump(1.0, 1.0, 3.0, 1e-3);
  auto const r1 = conjugation_identity_check(p, 1.0);
  EXPECT_LT(r1.max_residual, 1e-4);
  auto const p2 = single_bump(1.0, 1.0, 3.0, 2e-3);
  auto const r2 = conjugation_identity_check(p2, 1.0);
  EXPECT_NEAR(r2.max_residual / r1.max_residual, 4.0, 0.8);
  auto const zero = bump_profile(p.t, 1.0, 3.0, {complex{}}, {1.0});
  EXPECT_EQ(conjugation_identity_check(zero, 1.0).max_residual, 0.0);
}

TEST(Conjugation, SupportAtOriginRejected) {
  auto const grid = make_grid(0.0, 2.0, 2001);
  auto p = make_profile({1.0}, 0.0, grid);
  for (std::size_t k = 0; k < grid.points; ++k) p.at(0, k) = std::cos(grid[k]) * std::cos(grid[k]);
  expect_refusal([&] { conjugation_identity_check(p, 1.0); });
}

TEST(WeightSign, ExamplesAndRandomAgreement) {
  auto rows = weight_sign_check(1.0, {1.0, 16.0});
  EXPECT_NEAR(rows[0].value, 8.0 / 81.0, 1e-15);
  EXPECT_TRUE(rows[0].positive);
  EXPECT_TRUE(rows[0].admissible);
  EXPECT_NEAR(rows[1].value, 0.014394357481115934, 1e-15);
  double const t = 2.0;
  auto const root = weight_sign_check(5.0 / 6.0 * std::pow(t, -4.0 / 3.0), {t});
  EXPECT_NEAR(root[0].value, 0.0, 1e-15);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    double const lam = uniform(rng, 0.05, 10.0);
    double const tt = uniform(rng, 0.05, 20.0);
    auto const r = weight_sign_check(lam, {tt})[0];
    EXPECT_LT(r.rel_diff, 1e-10) << lam << " " << tt;
    EXPECT_EQ(r.admissible, lam >= std::pow(tt, -4.0 / 3.0));
    if (r.admissible) EXPECT_TRUE(r.positive);
  }
  expect_refusal([] { weight_sign_check(1.0, {0.0}); });
}

TEST(Carleman43, ZeroProfilePasses) {
  auto const p = bump_profile(grid_with_step(0, 4, 1e-3), 1.0, 3.0, {complex{}}, {1.0});
  auto const r = verify_carleman_43(p, 1.0, 1.0);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.verdict, "pass");
}

TEST(Carleman43, SingleModeExample) {
  auto const r = verify_carleman_43(single_bump(1.0, 1.0, 3.0, 5e-4), 1.0, 1.0);
  EXPECT_TRUE(r.resolved);
  EXPECT_GE(r.margin, 0.0);
  EXPECT_TRUE(r.passed);
  EXPECT_DOUBLE_EQ(r.margin, r.rhs - r.lhs);
}

TEST(Carleman43, IndependentQuadratureOfOneMode) {
  // Exact derivatives of the bump instead of finite differences.
  auto const p = single_bump(3.0, 1.2, 2.7, 5e-4);
  double const lam = 1.5;
  auto const r = verify_carleman_43(p, lam, 1.0);
  double const mid = 1.95, half = 0.75;
  std::vector<double> f(p.t.points), g(p.t.points);
  for (std::size_t k = 0; k < p.t.points; ++k) {
    double const s = (p.t[k] - mid) / half;
    double val = 0.0, d2 = 0.0;
    if (std::abs(s) < 1.0) {
      double const u = 1.0 - s * s;
      val = std::exp(-1.0 / u);
      // d/ds e^{-1/u} = -2s/u^2 e^{-1/u}; second derivative in s:
      double const ds = -2.0 * s / (u * u);
      double const dds = (-2.0 * u * u - 8.0 * s * s * u) / (u * u * u * u);
      d2 = (ds * ds + dds) * val / (half * half);
    }
    double const w = std::exp(2.0 * lam * std::pow(p.t[k], 4.0 / 3.0));
    f[k] = w * val * val;
    g[k] = w * (d2 - 3.0 * val) * (d2 - 3.0 * val);
  }
  double const lhs = lam * lam * lam * simpson(f, p.t.step());
  double const rhs = simpson(g, p.t.step());
  EXPECT_NEAR(r.lhs, lhs, 1e-7 * lhs);
  EXPECT_NEAR(r.rhs, rhs, 1e-6 * rhs);
}

TEST(Carleman43, RefusesSmallLambdaAndEarlySupport) {
  auto const p = single_bump(1.0, 1.0, 3.0);
  expect_refusal([&] { verify_carleman_43(p, 0.5, 1.0); });
  expect_refusal([&] { verify_carleman_43(p, 10.0, 1.5); });
  expect_refusal([&] { verify_carleman_43(p, 1e9, 1e-4); });
}

TEST(Carleman43, RandomEnsemblePasses) {
  ensemble43_options opt;
  opt.seed = 77;
  opt.cases = 30;
  auto const reports = run_ensemble_43(opt);
  for (auto const& r : reports) {
    EXPECT_TRUE(r.passed) << r.verdict << " lhs=" << r.lhs << " rhs=" << r.rhs;
    EXPECT_GT(r.lhs, 0.0);
  }
}

TEST(CarlemanGap, ExampleAndZero) {
  auto const grid = grid_with_step(0.0, 4.0, 5e-4);
  auto const p = bump_profile(grid, 1.0, 3.0, {complex(1.0), complex{}}, {1.0, 9.0});
  auto const r = verify_carleman_gap(p, 2.0, 3.0, 0.0);
  EXPECT_TRUE(r.passed);
  EXPECT_GE(r.margin, 0.0);
  EXPECT_DOUBLE_EQ(r.a * r.a * r.m * r.m / 4.0, 1.0);
  auto const z = bump_profile(grid, 1.0, 3.0, {complex{}}, {1.0});
  EXPECT_TRUE(verify_carleman_gap(z, 2.0, 3.0, 0.0).passed);
}

TEST(CarlemanGap, Refusals) {
  auto const grid = grid_with_step(0.0, 4.0, 1e-3);
  auto const p = bump_profile(grid, 1.0, 3.0, {complex(1.0), complex(1.0)}, {1.0, 9.0});
  expect_refusal([&] { verify_carleman_gap(p, 0.5, 1.5, 0.0); });
  auto const q = bump_profile(grid, 1.0, 3.0, {complex(1.0)}, {-4.0}, 4.0);
  expect_refusal([&] { verify_carleman_gap(q, 1.0, 1.5, 4.0); });  // 3a^2 = 3 <= 4
  verify_options force;
  force.force = true;
  auto const r = verify_carleman_gap(q, 1.0, 1.5, 4.0, force);
  EXPECT_EQ(r.verdict, "exploratory");
}

TEST(CarlemanGap, RandomEnsemblePasses) {
  ensemble_gap_options opt;
  opt.seed = 5;
  opt.cases = 30;
  for (auto const& r : run_ensemble_gap(opt)) EXPECT_TRUE(r.passed) << r.verdict << " " << r.lhs << " " << r.rhs;
}

TEST(FirstOrderSystem, BlockArithmetic) {
  auto const grid = grid_with_step(0.0, 4.0, 1e-3);
  auto const above = bump_profile(grid, 1.0, 3.0, {complex(1.0)}, {9.0});
  auto const r1 = first_order_system_check(above, 2.0, 3.0);
  Eigen::MatrixXd const s1 = r1.b1.transpose() + r1.b1;
  EXPECT_NEAR(s1(0, 0), 11.0, 1e-12);
  EXPECT_NEAR(*r1.min_eig_b1, 10.0, 1e-12);
  EXPECT_FALSE(r1.min_eig_b0.has_value());
  EXPECT_TRUE(r1.certificates_hold());

  auto const below = bump_profile(grid, 1.0, 3.0, {complex(1.0)}, {1.0});
  auto const r0 = first_order_system_check(below, 2.0, 3.0);
  Eigen::MatrixXd const s0 = r0.b0.transpose() + r0.b0;
  // mu/a + a + 2w = 0.5 + 2 + 5 and -mu/a - a + 2w = -0.5 - 2 + 5.
  EXPECT_NEAR(s0(0, 0), 7.5, 1e-12);
  EXPECT_NEAR(s0(1, 1), 2.5, 1e-12);
  EXPECT_NEAR(s0(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(*r0.min_eig_b0, 1.5, 1e-12);
  EXPECT_TRUE(r0.certificates_hold());
}

TEST(FirstOrderSystem, IdentityResidualSecondOrder) {
  std::vector<double> res;
  for (double step : {2e-3, 1e-3}) {
    auto const grid = grid_with_step(0.0, 4.0, step);
    auto const p = bump_profile(grid, 1.0, 3.0, {complex(1.0, 0.5), complex(-0.3, 1.0), complex(0.7)}, {1.0, 9.0, -2.0}, 2.0);
    auto const r = first_order_system_check(p, 2.0, 3.0);
    EXPECT_TRUE(r.certificates_hold());
    res.push_back(r.identity_residual_max());
  }
  EXPECT_NEAR(res[0] / res[1], 4.0, 0.4);
  auto const zero = bump_profile(grid_with_step(0.0, 4.0, 1e-3), 1.0, 3.0, {complex{}}, {1.0});
  EXPECT_EQ(first_order_system_check(zero, 2.0, 3.0).identity_residual_max(), 0.0);
}

TEST(EllReg, ExponentialClosedForm) {
  auto const grid = make_grid(0.0, 6.0, 6001);
  auto p = make_profile({4.0}, 0.0, grid);
  for (std::size_t k = 0; k < grid.points; ++k) p.at(0, k) = std::exp(-2.0 * grid[k]);
  double const eps = 0.5;
  auto const r = ellreg_bound_check(p, eps, {1.0, 2.0, 3.0});
  for (std::size_t i = 0; i < r.s.size(); ++i) {
    double const s = r.s[i];
    double const num = 4.0 * (std::exp(-4.0 * s) - std::exp(-4.0 * (s + 1.0))) / 4.0;
    double const den = (std::exp(-4.0 * (s - eps)) - std::exp(-4.0 * (s + 1.0 + eps))) / 4.0;
    EXPECT_NEAR(r.ratio[i], num / den, 1e-4 * num / den);
  }
  EXPECT_NEAR(r.ratio[0], r.ratio[2], 1e-4 * r.ratio[0]);
  EXPECT_LT(r.beta_observed, 1e-5);
  EXPECT_TRUE(r.within_bound());
}

TEST(EllReg, ConstantProfileHasZeroNumerator) {
  auto const grid = make_grid(0.0, 4.0, 401);
  auto p = make_profile({0.0}, 0.0, grid);
  for (auto& c : p.coeffs) c = 1.0;
  auto const r = ellreg_bound_check(p, 0.5, {1.0, 2.0});
  EXPECT_NEAR(r.sup_ratio, 0.0, 1e-20);
  auto z = make_profile({0.0}, 0.0, grid);
  expect_refusal([&] { ellreg_bound_check(z, 0.5, {1.0}); });
  EXPECT_THROW(ellreg_bound_check(p, 0.5, {3.0}), error);
}

TEST(EllReg, TwoModeFamilyStableUnderRefinement) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    double const mu1 = uniform(rng, 0.0, 4.0), mu2 = uniform(rng, 4.0, 16.0);
    std::vector<double> sups;
    for (std::size_t pts : {2001u, 4001u}) {
      auto const grid = make_grid(0.0, 8.0, pts);
      auto p = make_profile({mu1, mu2}, 0.0, grid);
      for (std::size_t k = 0; k < pts; ++k) {
        p.at(0, k) = std::exp(-std::sqrt(mu1) * grid[k]);
        p.at(1, k) = 0.5 * std::exp(-std::sqrt(mu2) * grid[k]);
      }
      auto const r = ellreg_bound_check(p, 0.5, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
      EXPECT_TRUE(r.within_bound());
      sups.push_back(r.sup_ratio);
    }
    EXPECT_NEAR(sups[0], sups[1], 0.05 * sups[1]);
  }
}

TEST(Profile, CsvRoundTrip) {
  auto const p = bump_profile(make_grid(0.0, 4.0, 41), 1.0, 3.0, {complex(1.0, -2.0), complex(0.5)}, {1.0, -1.0}, 1.0);
  std::stringstream ss;
  write_profile_csv(p, ss);
  auto const q = read_profile_csv(ss);
  EXPECT_EQ(q.coeffs, p.coeffs);
  EXPECT_EQ(q.eigs, p.eigs);
  EXPECT_EQ(q.alpha, 1.0);
  std::stringstream bad("eigs,-3\nalpha,1\nt_range,0,1\nt_points,2\nre,im\n0,0\n0,0\n");
  EXPECT_THROW(read_profile_csv(bad), error);
}
