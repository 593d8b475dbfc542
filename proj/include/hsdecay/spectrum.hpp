#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hsdecay/lattice.hpp"
#include "hsdecay/parallel.hpp"

namespace hsdecay {

inline constexpr double merge_tolerance = 1e-9;
inline constexpr std::uint64_t default_element_budget = 10'000'000;

// Sorted distinct eigenvalues of A_theta = (-i grad + theta)^2 - E up to a cutoff.
struct spectrum_slice {
  std::vector<double> values;
  std::vector<std::uint64_t> mults;
  double cutoff = 0.0;
  double energy = 0.0;
  std::vector<double> theta;
  std::string lattice_id;

  bool empty() const { return values.empty(); }
  std::size_t size() const { return values.size(); }
  std::uint64_t total_multiplicity() const {
    std::uint64_t s = 0;
    for (auto m : mults) s += m;
    return s;
  }
};

struct gap {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

struct enumeration_options {
  std::uint64_t budget = default_element_budget;
  std::size_t threads = 1;
};

namespace detail {

// Decomposition G = U^T D U, U unit upper triangular, so that
// x^T G x = sum_i D_i (x_i + sum_{j>i} U_ij x_j)^2.
struct ldl_upper {
  std::size_t n = 0;
  std::vector<double> d;
  std::vector<double> u;  // row-major, u[i*n+j] for j > i
};

inline ldl_upper decompose(Eigen::MatrixXd const& g) {
  auto const n = static_cast<std::size_t>(g.rows());
  ldl_upper out{n, std::vector<double>(n), std::vector<double>(n * n, 0.0)};
  Eigen::MatrixXd a = g;
  auto const ni = static_cast<Eigen::Index>(n);
  for (Eigen::Index i = 0; i < ni; ++i) {
    double const piv = a(i, i);
    if (!(piv > 0.0)) fail(error_kind::degenerate_lattice, "Gram matrix is not positive definite");
    auto const is = static_cast<std::size_t>(i);
    out.d[is] = piv;
    for (Eigen::Index j = i + 1; j < ni; ++j) out.u[is * n + static_cast<std::size_t>(j)] = a(i, j) / piv;
    for (Eigen::Index j = i + 1; j < ni; ++j)
      for (Eigen::Index k = i + 1; k < ni; ++k) a(j, k) -= a(j, i) * a(i, k) / piv;
  }
  return out;
}

// Visits every integer m with (m + shift)^T G (m + shift) <= radius2 (with a
// relative pad of 1e-12 so boundary points survive rounding). The callback
// receives m and the form value. Enumeration of the outermost coordinate is
// split over `threads` workers, so the callback must be safe to call
// concurrently.
class ellipsoid_enumerator {
 public:
  ellipsoid_enumerator(Eigen::MatrixXd const& gram, std::vector<double> shift, double radius2, std::uint64_t budget)
      : ldl_(decompose(gram)), shift_(std::move(shift)), radius2_(radius2), budget_(budget) {
    std::size_t const n = ldl_.n;
    if (shift_.size() != n) fail(error_kind::schema, "shift dimension mismatch");
    if (radius2_ < 0.0) return;
    // Lattice-point estimate from the ellipsoid volume.
    double const r = std::sqrt(radius2_) + 1.0;
    double const vol_unit_ball = std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
    double const det = gram.determinant();
    double const estimate = vol_unit_ball * std::pow(r, static_cast<double>(n)) / std::sqrt(det);
    if (estimate > 4.0 * static_cast<double>(budget_))
      fail(error_kind::budget_exceeded,
           "ellipsoid holds about " + std::to_string(static_cast<long long>(estimate)) + " lattice points, budget " +
               std::to_string(budget_));
  }

  template <typename Callback>
  void run(Callback&& cb, std::size_t threads = 1) {
    std::size_t const n = ldl_.n;
    if (radius2_ < 0.0 || n == 0) return;
    double const pad = radius2_ * (1.0 + 1e-12) + 1e-12;
    std::size_t const top = n - 1;
    double const half = std::sqrt(pad / ldl_.d[top]);
    auto const lo = static_cast<std::int64_t>(std::ceil(-shift_[top] - half));
    auto const hi = static_cast<std::int64_t>(std::floor(-shift_[top] + half));
    if (hi < lo) return;
    auto const count = static_cast<std::size_t>(hi - lo + 1);
    parallel_map<char>(
        count,
        [&](std::size_t idx) {
          std::vector<std::int64_t> m(n, 0);
          std::vector<double> x(n, 0.0);
          m[top] = lo + static_cast<std::int64_t>(idx);
          x[top] = static_cast<double>(m[top]) + shift_[top];
          double const part = ldl_.d[top] * x[top] * x[top];
          if (part <= pad) descend(top, part, pad, m, x, cb);
          return char{0};
        },
        threads);
  }

  std::uint64_t visited() const { return visited_.load(); }

 private:
  template <typename Callback>
  void descend(std::size_t level, double partial, double pad, std::vector<std::int64_t>& m, std::vector<double>& x,
               Callback& cb) {
    if (visited_.fetch_add(1) >= budget_)
      fail(error_kind::budget_exceeded, "enumeration exceeded the element budget of " + std::to_string(budget_));
    if (level == 0) {
      cb(std::as_const(m), partial);
      return;
    }
    std::size_t const i = level - 1;
    std::size_t const n = ldl_.n;
    double c = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) c -= ldl_.u[i * n + j] * x[j];
    double const rem = pad - partial;
    if (rem < 0.0) return;
    double const half = std::sqrt(rem / ldl_.d[i]);
    auto const lo = static_cast<std::int64_t>(std::ceil(c - shift_[i] - half));
    auto const hi = static_cast<std::int64_t>(std::floor(c - shift_[i] + half));
    for (std::int64_t v = lo; v <= hi; ++v) {
      m[i] = v;
      x[i] = static_cast<double>(v) + shift_[i];
      double const y = x[i] - c;
      double const p = partial + ldl_.d[i] * y * y;
      if (p <= pad) descend(i, p, pad, m, x, cb);
    }
  }

  ldl_upper ldl_;
  std::vector<double> shift_;
  double radius2_;
  std::uint64_t budget_;
  std::atomic<std::uint64_t> visited_{0};
};

inline void merge_values(std::vector<double>& raw, double energy, spectrum_slice& out) {
  std::sort(raw.begin(), raw.end());
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i + 1;
    while (j < raw.size() && raw[j] - raw[i] <= merge_tolerance) ++j;
    out.values.push_back(raw[i] - energy);
    out.mults.push_back(j - i);
    i = j;
  }
}

}  // namespace detail

// Every |k + theta|^2 - E <= cutoff, k in the dual lattice, with
// multiplicities; values closer than 1e-9 are one spectral point.
inline spectrum_slice enumerate_spectrum(dual_lattice const& dual, quasimomentum const& theta, double energy,
                                         double cutoff, enumeration_options const& opt = {}) {
  if (theta.dim() != dual.dim()) fail(error_kind::schema, "quasimomentum dimension mismatch");
  spectrum_slice out;
  out.cutoff = cutoff;
  out.energy = energy;
  out.theta = theta.coeffs();
  out.lattice_id = dual.parent().id();
  double const radius2 = cutoff + energy;
  if (radius2 < 0.0) return out;
  detail::ellipsoid_enumerator en(dual.gram(), theta.coeffs(), radius2, opt.budget);
  double const keep = radius2 + merge_tolerance;
  std::mutex mu;
  std::vector<double> raw;
  en.run(
      [&](std::vector<std::int64_t> const&, double r) {
        if (r > keep) return;
        std::lock_guard lock(mu);
        raw.push_back(r);
      },
      opt.threads);
  detail::merge_values(raw, energy, out);
  return out;
}

inline spectrum_slice enumerate_spectrum(lattice const& lat, quasimomentum const& theta, double energy, double cutoff,
                                         enumeration_options const& opt = {}) {
  return enumerate_spectrum(dual_basis(lat), theta, energy, cutoff, opt);
}

// Maximal gaps between consecutive spectral values. By default only gaps
// (a^2, b^2) with a > 0, i.e. both ends strictly positive, are reported.
inline std::vector<gap> find_gaps(spectrum_slice const& slice, double min_len, bool full_axis = false) {
  if (slice.empty()) fail(error_kind::precondition, "gap search needs a nonempty spectrum slice");
  std::vector<gap> out;
  for (std::size_t i = 0; i + 1 < slice.values.size(); ++i) {
    gap g{slice.values[i], slice.values[i + 1]};
    if (!full_axis && !(g.lo > 0.0)) continue;
    if (g.length() >= min_len) out.push_back(g);
  }
  return out;
}

// Set of integers n <= limit, stored as a bitset.
class value_set {
 public:
  explicit value_set(std::uint64_t limit) : limit_(limit), words_(limit / 64 + 1, 0) {}

  std::uint64_t limit() const { return limit_; }
  void insert(std::uint64_t v) {
    if (v <= limit_) words_[v >> 6] |= (1ULL << (v & 63));
  }
  bool contains(std::uint64_t v) const { return v <= limit_ && ((words_[v >> 6] >> (v & 63)) & 1ULL); }

  // this |= other << shift, truncated at limit.
  void or_shifted(value_set const& other, std::uint64_t shift) {
    if (shift > limit_) return;
    std::size_t const ws = shift >> 6;
    unsigned const bs = shift & 63;
    std::size_t const nw = words_.size();
    for (std::size_t w = nw; w-- > ws;) {
      std::uint64_t v = other.words_[w - ws] << bs;
      if (bs != 0 && w - ws >= 1) v |= other.words_[w - ws - 1] >> (64 - bs);
      words_[w] |= v;
    }
    trim();
  }

  std::uint64_t count() const {
    std::uint64_t c = 0;
    for (auto w : words_) c += static_cast<std::uint64_t>(__builtin_popcountll(w));
    return c;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        unsigned const b = static_cast<unsigned>(__builtin_ctzll(bits));
        fn(static_cast<std::uint64_t>(w) * 64 + b);
        bits &= bits - 1;
      }
    }
  }

 private:
  void trim() {
    unsigned const tail = (limit_ & 63) + 1;
    if (tail < 64) words_.back() &= (1ULL << tail) - 1;
  }

  std::uint64_t limit_;
  std::vector<std::uint64_t> words_;
};

// Integer values q(l m + r) <= limit over all integer m. Diagonal forms use a
// sumset of per-coordinate square sets; other forms enumerate the ellipsoid.
inline value_set form_values(quadratic_form const& q, std::int64_t l, std::vector<std::int64_t> const& r,
                             std::uint64_t limit, std::uint64_t budget = default_element_budget) {
  std::size_t const n = q.dim();
  if (r.size() != n || l < 1) fail(error_kind::schema, "residue vector does not match the form");
  if (limit > (1ULL << 35)) fail(error_kind::budget_exceeded, "value limit too large for the sieve");
  if (q.diagonal()) {
    value_set acc(limit);
    acc.insert(0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint64_t> squares;
      auto const gi = static_cast<double>(q(i, i));
      auto const reach = static_cast<std::int64_t>(std::sqrt(static_cast<double>(limit) / gi)) + 2;
      for (std::int64_t x = -reach; x <= reach; ++x) {
        if (((x - r[i]) % l + l) % l != 0) continue;
        auto const v = static_cast<std::uint64_t>(q(i, i) * x * x);
        if (v <= limit) squares.push_back(v);
      }
      std::sort(squares.begin(), squares.end());
      squares.erase(std::unique(squares.begin(), squares.end()), squares.end());
      value_set next(limit);
      for (auto s : squares) next.or_shifted(acc, s);
      acc = std::move(next);
    }
    return acc;
  }
  Eigen::MatrixXd g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(q(i, j) * l * l);
  std::vector<double> shift(n);
  for (std::size_t i = 0; i < n; ++i) shift[i] = static_cast<double>(r[i]) / static_cast<double>(l);
  value_set out(limit);
  std::mutex mu;
  detail::ellipsoid_enumerator en(g, shift, static_cast<double>(limit), budget);
  en.run([&](std::vector<std::int64_t> const& m, double) {
    std::vector<std::int64_t> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = l * m[i] + r[i];
    std::int64_t const v = q.evaluate(x);
    if (v >= 0 && static_cast<std::uint64_t>(v) <= limit) {
      std::lock_guard lock(mu);
      out.insert(static_cast<std::uint64_t>(v));
    }
  });
  return out;
}

struct gap_growth_row {
  double n_max = 0.0;
  double max_gap = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// For each N, the longest gap (lo > 0) in (sigma / l^2) {q(l m + r)} cut at N.
inline std::vector<gap_growth_row> max_gap_growth(quadratic_form const& q, quasimomentum const& theta,
                                                  std::vector<double> const& n_list,
                                                  std::uint64_t budget = default_element_budget) {
  if (!theta.exact()) fail(error_kind::rationality_required, "gap growth needs an exact rational quasimomentum");
  if (theta.dim() != q.dim()) fail(error_kind::schema, "quasimomentum dimension mismatch");
  if (n_list.empty()) return {};
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (!(n_list[i] > n_list[i - 1])) fail(error_kind::precondition, "N list must be strictly increasing");
  std::int64_t const l = theta.exact()->denominator;
  double const step = q.sigma() / static_cast<double>(l * l);
  auto limit_for = [&](double big_n) {
    double const x = std::floor(big_n / step + 1e-9);
    return x < 0.0 ? std::uint64_t{0} : static_cast<std::uint64_t>(x);
  };
  value_set const vals = form_values(q, l, theta.exact()->residues, limit_for(n_list.back()), budget);
  std::vector<gap_growth_row> out;
  std::size_t next = 0;
  double best = 0.0, best_lo = 0.0, best_hi = 0.0;
  std::uint64_t prev = 0;
  bool have_prev = false;
  auto flush_until = [&](std::uint64_t v) {
    while (next < n_list.size() && limit_for(n_list[next]) < v) {
      out.push_back({n_list[next], best, best_lo, best_hi});
      ++next;
    }
  };
  vals.for_each([&](std::uint64_t v) {
    flush_until(v);
    if (have_prev && prev > 0) {
      double const len = static_cast<double>(v - prev) * step;
      if (len > best) {
        best = len;
        best_lo = static_cast<double>(prev) * step;
        best_hi = static_cast<double>(v) * step;
      }
    }
    prev = v;
    have_prev = true;
  });
  flush_until(std::numeric_limits<std::uint64_t>::max());
  return out;
}

struct density_result {
  std::uint64_t count = 0;  // distinct values <= N, including 0
  double ratio = 0.0;       // count * sqrt(ln N) / N
};

inline density_result density_scan(quadratic_form const& q, std::uint64_t big_n,
                                   std::uint64_t budget = default_element_budget) {
  if (q.dim() != 2) fail(error_kind::arity, "density scan needs a binary form");
  if (big_n < 10) fail(error_kind::precondition, "density scan needs N >= 10");
  value_set const vals = form_values(q, 1, {0, 0}, big_n, budget);
  density_result out;
  out.count = vals.count();
  double const nn = static_cast<double>(big_n);
  out.ratio = static_cast<double>(out.count) * std::sqrt(std::log(nn)) / nn;
  return out;
}

enum class containment_mode { exact, floating };

struct containment_result {
  double grid_step = 0.0;      // sigma / l^2
  double max_distance = 0.0;   // to the nearest multiple of grid_step
  std::uint64_t values_checked = 0;
  bool exact_zero = false;     // exact mode: every distance is exactly 0
};

// Measures how far each |k + theta|^2 <= N lies from (sigma / l^2) Z. Values
// are computed from the lattice itself (exact rational Gram in exact mode,
// Cartesian geometry in floating mode), not from the reduced form.
inline containment_result progression_containment(dual_lattice const& dual, quasimomentum const& theta, double big_n,
                                                  containment_mode mode = containment_mode::exact,
                                                  std::uint64_t budget = default_element_budget) {
  rational_structure_result const rs = rational_structure(dual, theta);
  containment_result out;
  out.grid_step = rs.grid_step();
  out.exact_zero = mode == containment_mode::exact;
  std::size_t const n = dual.dim();
  std::vector<rational> const mu = theta.exact_coeffs();
  exact_gram const& g = *dual.gram_exact();
  rational const exact_step = rs.sigma_rational / rational(rs.l * rs.l);
  Eigen::MatrixXd const f = dual.basis();
  Eigen::VectorXd const th = theta.cartesian(dual);
  std::mutex mu_lock;
  detail::ellipsoid_enumerator en(dual.gram(), theta.coeffs(), big_n, budget);
  en.run([&](std::vector<std::int64_t> const& m, double r) {
    if (r > big_n + merge_tolerance) return;
    double dist = 0.0;
    bool zero = true;
    if (mode == containment_mode::exact) {
      rational v = 0;
      std::vector<rational> x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = rational(static_cast<long>(m[i])) + mu[i];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v += g.entries(i, j) * x[i] * x[j];
      rational const t = v / exact_step;
      mpz_class fl;
      mpz_fdiv_q(fl.get_mpz_t(), t.get_num_mpz_t(), t.get_den_mpz_t());
      rational frac = t - fl;
      if (frac > rational(1, 2)) frac = 1 - frac;
      zero = frac == 0;
      dist = frac.get_d() * out.grid_step;
    } else {
      Eigen::VectorXd k = th;
      for (std::size_t i = 0; i < n; ++i) k += static_cast<double>(m[i]) * f.col(static_cast<Eigen::Index>(i));
      double const t = k.squaredNorm() / out.grid_step;
      dist = std::abs(t - std::round(t)) * out.grid_step;
    }
    std::lock_guard lock(mu_lock);
    ++out.values_checked;
    out.max_distance = std::max(out.max_distance, dist);
    if (!zero) out.exact_zero = false;
  });
  return out;
}

}  // namespace hsdecay
