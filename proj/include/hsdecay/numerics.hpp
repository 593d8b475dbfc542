#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "hsdecay/error.hpp"

namespace hsdecay {

using complex = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Uniform grid t_k = lo + k*h, k = 0..points-1, endpoints included.
struct uniform_grid {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t points = 2;

  std::size_t size() const { return points; }
  double step() const { return (hi - lo) / static_cast<double>(points - 1); }
  double operator[](std::size_t k) const {
    // Last point exactly hi, so grids compare cleanly.
    return k + 1 == points ? hi : lo + static_cast<double>(k) * step();
  }
  std::vector<double> values() const {
    std::vector<double> out(points);
    for (std::size_t k = 0; k < points; ++k) out[k] = (*this)[k];
    return out;
  }
  // Every other point; requires an odd point count.
  uniform_grid coarsened() const { return {lo, hi, (points - 1) / 2 + 1}; }

  bool operator==(uniform_grid const&) const = default;
};

inline uniform_grid make_grid(double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) fail(error_kind::grid, "grid needs hi > lo and at least 2 points");
  return {lo, hi, points};
}

// Uniform grid with spacing at most step and an odd point count.
inline uniform_grid grid_with_step(double lo, double hi, double step) {
  auto intervals = static_cast<std::size_t>(std::ceil((hi - lo) / step));
  intervals += intervals % 2;  // odd point count for coarsening
  return make_grid(lo, hi, intervals + 1);
}

// Composite Simpson on uniformly spaced samples. For an even sample count the
// last three intervals use the 3/8 rule.
inline double simpson(std::span<double const> f, double h) {
  std::size_t const n = f.size();
  if (n < 2) return 0.0;
  if (n == 2) return 0.5 * h * (f[0] + f[1]);
  if (n == 4) return 3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3]);
  std::size_t const simpson_end = (n % 2 == 1) ? n - 1 : n - 4;
  double s = 0.0;
  for (std::size_t k = 0; k + 2 <= simpson_end; k += 2) s += f[k] + 4.0 * f[k + 1] + f[k + 2];
  s *= h / 3.0;
  if (n % 2 == 0) {
    std::size_t const k = n - 4;
    s += 3.0 * h / 8.0 * (f[k] + 3.0 * f[k + 1] + 3.0 * f[k + 2] + f[k + 3]);
  }
  return s;
}

// Trapezoid integral of samples over [a, b] with linear interpolation at the
// window ends. Window must lie inside the grid.
inline double integrate_window(std::span<double const> f, uniform_grid const& g, double a, double b) {
  if (a < g.lo - 1e-12 || b > g.hi + 1e-12 || !(b > a))
    fail(error_kind::grid, "integration window outside the t-grid");
  double const h = g.step();
  auto value_at = [&](double t) {
    double const x = std::clamp((t - g.lo) / h, 0.0, static_cast<double>(g.points - 1));
    auto k = static_cast<std::size_t>(std::floor(x));
    if (k + 1 >= g.points) return f[g.points - 1];
    double const w = x - static_cast<double>(k);
    return (1.0 - w) * f[k] + w * f[k + 1];
  };
  auto first = static_cast<std::size_t>(std::ceil((a - g.lo) / h - 1e-9));
  auto last = static_cast<std::size_t>(std::floor((b - g.lo) / h + 1e-9));
  last = std::min(last, g.points - 1);
  if (first > last) return 0.5 * (b - a) * (value_at(a) + value_at(b));
  double s = 0.5 * (g[first] - a) * (value_at(a) + f[first]);
  for (std::size_t k = first; k < last; ++k) s += 0.5 * h * (f[k] + f[k + 1]);
  s += 0.5 * (b - g[last]) * (f[last] + value_at(b));
  return s;
}

// Centered second difference, order h^2; endpoints set to zero.
template <typename T>
std::vector<T> second_difference(std::span<T const> f, double h) {
  std::vector<T> out(f.size(), T{});
  double const inv = 1.0 / (h * h);
  for (std::size_t k = 1; k + 1 < f.size(); ++k) out[k] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) * inv;
  return out;
}

// Five-point second difference, order h^4; the two points at each end fall
// back to the three-point stencil (or zero at the endpoints).
template <typename T>
std::vector<T> second_difference4(std::span<T const> f, double h) {
  std::size_t const n = f.size();
  std::vector<T> out = second_difference(f, h);
  double const inv = 1.0 / (12.0 * h * h);
  for (std::size_t k = 2; k + 2 < n; ++k)
    out[k] = (-f[k + 2] + 16.0 * f[k + 1] - 30.0 * f[k] + 16.0 * f[k - 1] - f[k - 2]) * inv;
  return out;
}

// Centered first difference in the interior, second-order one-sided at ends.
template <typename T>
std::vector<T> first_difference(std::span<T const> f, double h) {
  std::size_t const n = f.size();
  std::vector<T> out(n, T{});
  if (n < 3) return out;
  for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
  out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
  out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
  return out;
}

struct line_fit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
  std::size_t samples = 0;
};

inline line_fit least_squares_line(std::span<double const> x, std::span<double const> y) {
  std::size_t const n = x.size();
  if (n < 2 || y.size() != n) fail(error_kind::precondition, "line fit needs at least two samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) fail(error_kind::precondition, "line fit with degenerate abscissae");
  line_fit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double r2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double const r = y[i] - (fit.intercept + fit.slope * x[i]);
    r2 += r * r;
  }
  fit.rms_residual = std::sqrt(r2 / static_cast<double>(n));
  fit.samples = n;
  return fit;
}

// SplitMix64 finalizer; used to derive per-item seeds from a root seed and a
// counter so results do not depend on execution order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t counter) {
  return splitmix64(root ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

// Platform-independent uniform double in [a, b) from a 64-bit engine.
template <typename Engine>
double uniform(Engine& rng, double a, double b) {
  double const u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return a + (b - a) * u;
}

template <typename Engine>
std::int64_t uniform_int(Engine& rng, std::int64_t lo, std::int64_t hi) {
  auto const span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<std::int64_t>(rng() % span);
}

}  // namespace hsdecay
