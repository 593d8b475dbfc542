#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's algorithms beyond plain data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

// |k + theta|^2 - E over a naive box |m_i| <= bound, merged at tol.
inline std::vector<std::pair<double, std::uint64_t>> brute_spectrum(Eigen::MatrixXd const& dual_basis,
                                                                    std::vector<double> const& mu, double energy,
                                                                    double cutoff, double tol = 1e-9) {
  auto const n = static_cast<int>(dual_basis.cols());
  double const r = std::sqrt(std::max(cutoff + energy, 0.0));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dual_basis);
  double const smin = svd.singularValues().minCoeff();
  auto const bound = static_cast<int>(std::ceil(r / smin)) + 1;
  std::vector<double> raw;
  std::vector<int> m(static_cast<std::size_t>(n), -bound);
  for (;;) {
    Eigen::VectorXd k = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) k += (m[static_cast<std::size_t>(i)] + mu[static_cast<std::size_t>(i)]) * dual_basis.col(i);
    double const v = k.squaredNorm();
    if (cutoff + energy >= 0.0 && v <= cutoff + energy + tol) raw.push_back(v);
    int i = 0;
    while (i < n && ++m[static_cast<std::size_t>(i)] > bound) m[static_cast<std::size_t>(i++)] = -bound;
    if (i == n) break;
  }
  std::sort(raw.begin(), raw.end());
  std::vector<std::pair<double, std::uint64_t>> out;
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i + 1;
    while (j < raw.size() && raw[j] - raw[i] <= tol) ++j;
    out.emplace_back(raw[i] - energy, j - i);
    i = j;
  }
  return out;
}

// Distinct values of a diagonal form sum c_i x_i^2 <= limit by nested loops.
inline std::vector<std::int64_t> brute_diagonal_values(std::vector<std::int64_t> const& coeffs, std::int64_t limit) {
  std::set<std::int64_t> s;
  std::size_t const n = coeffs.size();
  std::vector<std::int64_t> x(n, 0);
  std::vector<std::int64_t> bound(n);
  for (std::size_t i = 0; i < n; ++i)
    bound[i] = static_cast<std::int64_t>(std::sqrt(static_cast<double>(limit) / static_cast<double>(coeffs[i]))) + 1;
  for (std::size_t i = 0; i < n; ++i) x[i] = -bound[i];
  for (;;) {
    std::int64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v += coeffs[i] * x[i] * x[i];
    if (v <= limit) s.insert(v);
    std::size_t i = 0;
    while (i < n && ++x[i] > bound[i]) {
      x[i] = -bound[i];
      ++i;
    }
    if (i == n) break;
  }
  return {s.begin(), s.end()};
}

// Longest gap between consecutive values with a strictly positive lower end.
inline double brute_max_gap(std::vector<std::int64_t> const& sorted_values) {
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < sorted_values.size(); ++i)
    if (sorted_values[i] > 0) best = std::max(best, static_cast<double>(sorted_values[i + 1] - sorted_values[i]));
  return best;
}

}  // namespace oracle
