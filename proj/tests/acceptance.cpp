// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "hsdecay/cli.hpp"
#include "oracles.hpp"

using namespace hsdecay;

namespace {

struct verdict {
  bool pass = true;
  std::string detail;
};

class notes {
 public:
  void check(bool ok, std::string const& what) {
    if (!ok) {
      pass_ = false;
      failures_ += (failures_.empty() ? "" : "; ") + what;
    }
  }
  void note(std::string const& s) { info_ += (info_.empty() ? "" : ", ") + s; }
  verdict done() const { return {pass_, pass_ ? info_ : failures_ + " [" + info_ + "]"}; }

 private:
  bool pass_ = true;
  std::string failures_, info_;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hsdecay");
  std::vector<char const*> argv;
  for (auto const& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
}

// 1. enumerate_spectrum against a brute-force box on random rational lattices.
verdict spectrum_oracle() {
  notes n;
  auto const t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::size_t values = 0, mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    int const d = 1 + trial % 3;
    // rational dual Gram G = (A^T A + I) / den with small integer A
    Eigen::MatrixXi a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = static_cast<int>(uniform_int(rng, -1, 1));
    Eigen::MatrixXi const gi = a.transpose() * a + Eigen::MatrixXi::Identity(d, d);
    long const den = uniform_int(rng, 1, 3);
    rational_matrix g(static_cast<std::size_t>(d));
    Eigen::MatrixXd gd(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        g(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = rational(gi(i, j), den);
        gd(i, j) = static_cast<double>(gi(i, j)) / static_cast<double>(den);
      }
    Eigen::MatrixXd const f = Eigen::LLT<Eigen::MatrixXd>(gd).matrixU();
    lattice const parent(two_pi * f.transpose().inverse());
    dual_lattice const dual(f, parent, exact_gram{g, 1.0});
    std::vector<rational> th;
    for (int i = 0; i < d; ++i) th.push_back(rational(uniform_int(rng, 0, 5), 6));
    auto const theta = quasimomentum::from_rationals(th);
    double const energy = uniform(rng, -5.0, 5.0);
    double const cutoff = uniform(rng, 10.0, 200.0);
    auto const s = enumerate_spectrum(dual, theta, energy, cutoff);
    auto const ref = oracle::brute_spectrum(dual.basis(), theta.coeffs(), energy, cutoff);
    values += ref.size();
    bool same = s.values.size() == ref.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i)
      same = std::abs(s.values[i] - ref[i].first) <= 1e-9 && s.mults[i] == ref[i].second;
    if (!same) ++mismatches;
  }
  double const secs = seconds_since(t0);
  n.check(mismatches == 0, std::to_string(mismatches) + " of 50 lattices differ from brute force");
  n.check(secs < 60.0, "runtime " + num(secs) + " s >= 60 s");
  n.note("50 lattices, " + std::to_string(values) + " distinct values, " + num(secs) + " s");
  return n.done();
}

// 2. Largest gaps of m^2+n^2 grow; m^2+n^2+p^2 keeps gaps <= 2 with exact
// progression containment.
verdict gap_dichotomy() {
  notes n;
  auto const t0 = std::chrono::steady_clock::now();
  auto const two = max_gap_growth(quadratic_form::sum_of_squares(2), quasimomentum::zero(2), {1e2, 1e4, 1e6});
  n.check(two[0].max_gap == 7.0, "two squares: gap at N=100 is " + num(two[0].max_gap) + ", not 7");
  n.check(two[0].max_gap < two[1].max_gap && two[1].max_gap < two[2].max_gap, "two squares: gaps not strictly increasing");
  double const brute = oracle::brute_max_gap(oracle::brute_diagonal_values({1, 1}, 10000));
  n.check(two[1].max_gap == brute, "two squares: N=1e4 gap " + num(two[1].max_gap) + " vs brute force " + num(brute));
  n.note("two squares gaps " + num(two[0].max_gap) + ", " + num(two[1].max_gap) + ", " + num(two[2].max_gap));

  auto const three = max_gap_growth(quadratic_form::sum_of_squares(3), quasimomentum::zero(3), {1e2, 1e4, 1e6});
  for (auto const& r : three)
    n.check(r.max_gap <= 2.0, "three squares: gap " + num(r.max_gap) + " on (" + num(r.lo) + ", " + num(r.hi) +
                                  ") for N=" + num(r.n_max));
  double const brute3 = oracle::brute_max_gap(oracle::brute_diagonal_values({1, 1, 1}, 10000));
  n.check(three[1].max_gap == brute3, "three squares: N=1e4 gap disagrees with brute force");
  n.note("three squares gaps " + num(three[0].max_gap) + ", " + num(three[1].max_gap) + ", " + num(three[2].max_gap));

  rational_matrix id(3);
  for (std::size_t i = 0; i < 3; ++i) id(i, i) = 1;
  lattice const cubic(two_pi * Eigen::MatrixXd::Identity(3, 3), exact_gram{id, two_pi * two_pi});
  auto const c = progression_containment(dual_basis(cubic), quasimomentum::zero(3), 1e4);
  n.check(c.exact_zero && c.max_distance == 0.0, "three squares: progression containment distance " + num(c.max_distance));
  n.note("containment distance " + num(c.max_distance) + " over " + std::to_string(c.values_checked) + " values");
  double const secs = seconds_since(t0);
  n.check(secs < 120.0, "runtime " + num(secs) + " s >= 120 s");
  n.note(num(secs) + " s");
  return n.done();
}

// 3. Parseval, band-limited inversion and cell placement of a bump.
verdict gelfand_unitarity() {
  notes n;
  Eigen::MatrixXd b(2, 2);
  b << 1.0, 0.4, 0.0, 1.3;
  lattice const lat(b);
  double const vol = 1.3;
  std::mt19937_64 rng(303);
  double parseval = 0.0, roundtrip = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto u = make_field(field_kind::sample, {-1, -1}, {3, 3}, 4, make_grid(0.0, 1.0, 3));
    for (auto& v : u.values) v = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    auto const set = gelfand_forward_grid(u, lat, 6);
    for (std::size_t it = 0; it < u.t.points; ++it) {
      // both sides by direct quadrature over the samples
      double direct = 0.0;
      for (std::size_t ix = 0; ix < u.nx(); ++ix) direct += std::norm(u.at(ix, it));
      direct *= vol / 16.0;
      double fibers = 0.0;
      for (auto const& f : set.fibers)
        for (std::size_t k = 0; k < f.cell_points(); ++k) fibers += std::norm(f.data[it * f.cell_points() + k]);
      fibers *= vol / 16.0 / static_cast<double>(set.fibers.size());
      parseval = std::max(parseval, std::abs(fibers - direct) / direct);
    }
    auto const back = gelfand_inverse(set, u.cell_lo, u.cells);
    for (std::size_t i = 0; i < u.values.size(); ++i) roundtrip = std::max(roundtrip, std::abs(back.values[i] - u.values[i]));
  }
  n.check(parseval < 1e-6, "Parseval relative error " + num(parseval));
  n.check(roundtrip < 1e-8, "round trip error " + num(roundtrip));

  auto u = make_field(field_kind::sample, {1, 0}, {1, 1}, 8, make_grid(0.0, 1.0, 2));
  for (std::size_t ix = 0; ix < u.nx(); ++ix) {
    auto const s = u.fractional(ix);
    double const x = s[0] - 1.5, y = s[1] - 0.5;
    u.at(ix, 0) = u.at(ix, 1) = std::exp(-20.0 * (x * x + y * y));
  }
  auto const back = gelfand_inverse(gelfand_forward_grid(u, lat, 4), {-1, -1}, {4, 3});
  double leak = 0.0, err = 0.0;
  for (std::size_t ix = 0; ix < back.nx(); ++ix) {
    auto const s = back.fractional(ix);
    if (s[0] >= 1.0 && s[0] < 2.0 && s[1] >= 0.0 && s[1] < 1.0) {
      auto const idx = back.unflatten(ix);
      err = std::max(err, std::abs(back.at(ix, 0) - u.at((idx[0] - 16) * 8 + (idx[1] - 8), 0)));
    } else {
      leak = std::max(leak, std::abs(back.at(ix, 0)));
    }
  }
  n.check(leak < 1e-8, "bump leakage " + num(leak));
  n.check(err < 1e-8, "bump reconstruction error " + num(err));
  n.note("Parseval " + num(parseval) + ", round trip " + num(roundtrip) + ", leakage " + num(leak));
  return n.done();
}

// 4. Conjugation identity by finite differences; weight-derivative identity
// by automatic differentiation against the closed form.
verdict conjugation_and_weight() {
  notes n;
  std::vector<double> res;
  for (double step : {2e-3, 1e-3}) {
    auto const grid = grid_with_step(0.0, 4.0, step);
    auto const p = bump_profile(grid, 1.0, 3.0, {complex(1.0, 0.3), complex(-0.5, 0.8)}, {1.0, 6.0});
    res.push_back(conjugation_identity_check(p, 1.0).max_residual);
  }
  double const order = std::log2(res[0] / res[1]);
  n.check(res[1] < 1e-4, "conjugation residual " + num(res[1]) + " at h=1e-3");
  n.check(std::abs(order - 2.0) < 0.2, "observed order " + num(order));
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    double const lam = uniform(rng, 0.05, 10.0), t = uniform(rng, 0.05, 20.0);
    double const s = std::pow(t, -4.0 / 3.0);
    double const closed = 8.0 / 81.0 * lam * s * (6.0 * lam - 5.0 * s);
    double const got = weight_sign_check(lam, {t})[0].value;
    worst = std::max(worst, std::abs(got - closed) / std::abs(closed));
  }
  n.check(worst < 1e-10, "weight identity relative error " + num(worst));
  n.note("residual " + num(res[1]) + ", order " + num(order) + ", weight identity " + num(worst));
  return n.done();
}

// 5. 300 admissible t^{4/3}-weight cases pass; lambda below eps^{-4/3} is refused.
verdict carleman_43_suite() {
  notes n;
  auto const t0 = std::chrono::steady_clock::now();
  ensemble43_options opt;
  opt.seed = 505;
  opt.cases = 300;
  opt.eps_values = {0.5, 1.0, 2.0};
  opt.lambda_factors = {1.0, 2.0, 4.0};
  opt.max_modes = 16;
  opt.threads = 0;
  auto const reps = run_ensemble_43(opt);
  std::size_t passed = 0, unresolved = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (auto const& r : reps) {
    passed += r.passed ? 1 : 0;
    unresolved += r.verdict == "unresolved" ? 1 : 0;
    if (r.rhs > 0.0) worst = std::min(worst, r.margin / r.rhs);
  }
  n.check(passed == 300, std::to_string(passed) + " of 300 pass, " + std::to_string(unresolved) + " unresolved");
  int const code = run_cli({"carleman", "verify43", "--eps", "1", "--lambda", "0.9"});
  n.check(code == exit_code::refusal, "lambda below eps^{-4/3} gave exit " + std::to_string(code));
  double const secs = seconds_since(t0);
  n.check(secs < 120.0, "runtime " + num(secs) + " s >= 120 s");
  n.note(std::to_string(passed) + "/300 pass, smallest margin/rhs " + num(worst) + ", refusal exit " + std::to_string(code) +
         ", " + num(secs) + " s");
  return n.done();
}

// 6. 300 gap cases pass; system certificates hold; identity residual order 2.
verdict carleman_gap_suite() {
  notes n;
  ensemble_gap_options opt;
  opt.seed = 606;
  opt.cases = 300;
  opt.threads = 0;
  auto const reps = run_ensemble_gap(opt);
  std::size_t passed = 0;
  for (auto const& r : reps) passed += r.passed ? 1 : 0;
  n.check(passed == 300, std::to_string(passed) + " of 300 pass");

  std::size_t certified = 0;
  double worst_eig = 0.0;
  auto const checks = parallel_map<system_check_result>(opt.cases, [&](std::size_t i) {
    auto const c = make_case_gap(opt, i);
    return first_order_system_check(c.phi, c.a, c.b);
  }, 0);
  for (auto const& r : checks) {
    certified += r.certificates_hold() && r.tolerance == 1e-10 ? 1 : 0;
    if (r.min_eig_b0) worst_eig = std::min(worst_eig, *r.min_eig_b0);
    if (r.min_eig_b1) worst_eig = std::min(worst_eig, *r.min_eig_b1);
    if (r.max_eig_b2) worst_eig = std::min(worst_eig, -*r.max_eig_b2);
  }
  n.check(certified == 300, std::to_string(certified) + " of 300 certificate sets hold at 1e-10");

  std::vector<double> res;
  for (double step : {2e-3, 1e-3}) {
    auto const grid = grid_with_step(0.0, 4.0, step);
    auto const p = bump_profile(grid, 1.0, 3.0, {complex(1.0, 0.5), complex(-0.3, 1.0), complex(0.7)}, {1.0, 9.0, -2.0}, 2.0);
    res.push_back(first_order_system_check(p, 2.0, 3.0).identity_residual_max());
  }
  double const order = std::log2(res[0] / res[1]);
  n.check(std::abs(order - 2.0) < 0.2, "identity residual order " + num(order));
  n.note(std::to_string(passed) + "/300 pass, certificates " + std::to_string(certified) + "/300 (most negative " +
         num(worst_eig) + "), identity order " + num(order));
  return n.done();
}

// 7. B = 0 rates quantized at sqrt(mu); superexponential flag.
verdict rate_quantization() {
  notes n;
  struct quantized {
    std::vector<double> eigs;
    double rate;
  };
  for (auto const& s : {quantized{{1.0, 9.0}, 1.0}, quantized{{4.0}, 2.0}, quantized{{9.0}, 3.0}}) {
    std::vector<complex> g(s.eigs.size(), complex(1.0));
    auto const sol = solve_decaying(s.eigs, zero_perturbation(s.eigs.size()), g);
    auto const est = decay_rate_estimate(sol.profile);
    n.check(std::abs(est.rate - s.rate) <= 0.01 * s.rate, "rate " + num(est.rate) + " vs " + num(s.rate));
    n.check(!est.superexp, "superexp flag set for a B=0 run");
    n.note("rate " + num(est.rate));
  }
  auto p = make_profile({1.0}, 0.0, make_grid(0.0, 20.0, 4001));
  for (std::size_t k = 0; k < p.t.points; ++k) p.at(0, k) = std::exp(-std::pow(p.t[k], 4.0 / 3.0));
  bool const flag = decay_rate_estimate(p).superexp;
  n.check(flag, "superexp flag not set for exp(-t^{4/3})");
  n.note(std::string("t^{4/3} flag ") + (flag ? "true" : "false"));
  return n.done();
}

// 8. Counterexample: inner integral, convergence below lambda = 1, log growth at 1.
verdict counterexample_threshold() {
  notes n;
  double worst = 0.0;
  for (double x2 : {0.0, 0.5, 3.0, 40.0}) {
    double const exact = std::numbers::pi / (1.0 + x2);
    worst = std::max(worst, std::abs(counterexample_inner(x2, 1e3).value - exact) / exact);
  }
  n.check(worst < 1e-6, "inner integral relative error " + num(worst));
  auto const below = harmonic_counterexample(0.9, 200.0);
  n.check(below.status == "converged", "lambda=0.9 status " + below.status);
  n.check(below.tail_bound < 1e-3 * below.value, "lambda=0.9 tail " + num(below.tail_bound) + " vs total " + num(below.value));
  n.note("inner " + num(worst) + ", I(0.9) " + num(below.value) + " tail " + num(below.tail_bound));
  for (double T : {1e2, 1e3}) {
    auto const at = harmonic_counterexample(1.0, T);
    double const rel = at.value / (std::numbers::pi * std::log1p(T)) - 1.0;
    n.check(std::abs(rel) < 5e-3, "lambda=1, T=" + num(T) + ": relative deviation " + num(rel));
    n.check(at.divergent, "lambda=1, T=" + num(T) + " not flagged divergent");
    n.note("T=" + num(T) + " deviation " + num(rel));
  }
  return n.done();
}

// 9. Windowed derivative/norm ratio on 50 solution-like profiles.
verdict elliptic_regularity() {
  notes n;
  solution_family_options fo;
  fo.seed = 909;
  double const eps = 0.5;
  std::vector<double> const s_list{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  struct row {
    ellreg_result coarse, fine;
  };
  auto const rows = parallel_map<row>(50, [&](std::size_t i) {
    return row{ellreg_bound_check(solution_like_profile(fo, i, 1e-2), eps, s_list),
               ellreg_bound_check(solution_like_profile(fo, i, 5e-3), eps, s_list)};
  }, 0);
  double const hp = 1.875 / eps;
  double const family_bound = 2.0 * (fo.alpha_max + fo.beta_max) + 4.0 * hp * hp;
  double sup = 0.0, change = 0.0;
  std::size_t ok = 0;
  for (auto const& r : rows) {
    bool const finite = std::isfinite(r.fine.sup_ratio) && std::isfinite(r.coarse.sup_ratio);
    double const c = std::abs(r.fine.sup_ratio - r.coarse.sup_ratio) / r.fine.sup_ratio;
    sup = std::max(sup, r.fine.sup_ratio);
    change = std::max(change, c);
    ok += finite && c <= 0.05 && r.fine.within_bound() ? 1 : 0;
  }
  n.check(ok == 50, std::to_string(ok) + " of 50 profiles finite, refinement-stable and within their bound");
  n.check(sup <= family_bound, "family sup " + num(sup) + " above " + num(family_bound));
  n.note("family sup " + num(sup) + " <= " + num(family_bound) + ", worst refinement change " + num(change));
  return n.done();
}

// 10. Pipeline manifest hash across repeated runs and thread counts.
verdict determinism() {
  notes n;
  run_config cfg;
  cfg.command = "pipeline";
  cfg.seed = 1010;
  cfg.params = {{"theta_points", 4}, {"synthetic_modes", 3}, {"synthetic_dim", 2}, {"synthetic_points", 8},
                {"synthetic_t_points", 1001}};
  std::vector<std::string> hashes;
  for (std::size_t threads : {1u, 1u, 0u, 16u}) hashes.push_back(cli::execute(cfg, threads).manifest.hash());
  bool same = true;
  for (auto const& h : hashes) same = same && h == hashes[0];
  n.check(same, "manifest hashes differ across runs");
  n.note("hash " + hashes[0].substr(0, 16) + " over threads 1, 1, hardware, 16");
  return n.done();
}

}  // namespace

int main() {
  struct criterion {
    char const* name;
    std::function<verdict()> run;
  };
  std::vector<criterion> const all{
      {"spectrum oracle", spectrum_oracle},
      {"gap dichotomy", gap_dichotomy},
      {"Gelfand unitarity and inversion", gelfand_unitarity},
      {"conjugation and weight identities", conjugation_and_weight},
      {"Carleman t^{4/3} suite", carleman_43_suite},
      {"Carleman gap suite", carleman_gap_suite},
      {"rate quantization", rate_quantization},
      {"counterexample threshold", counterexample_threshold},
      {"elliptic-regularity ratio", elliptic_regularity},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    verdict v;
    try {
      v = all[i].run();
    } catch (std::exception const& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, all[i].name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass\n", all.size() - failed, all.size());
  return failed == 0 ? 0 : 1;
}
