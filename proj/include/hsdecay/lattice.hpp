#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsdecay/error.hpp"
#include "hsdecay/numerics.hpp"
#include "hsdecay/rational.hpp"

namespace hsdecay {

// Gram matrix known exactly up to one real scale: gram = scale * entries.
// A positive real scale lets lattices such as (2 pi Z)^2 count as rational.
struct exact_gram {
  rational_matrix entries;
  double scale = 1.0;

  double value(std::size_t i, std::size_t j) const { return scale * entries(i, j).get_d(); }
};

namespace detail {
inline void check_gram(Eigen::MatrixXd const& basis, exact_gram const& g, char const* what) {
  auto const n = static_cast<std::size_t>(basis.cols());
  if (g.entries.n != n) fail(error_kind::schema, std::string(what) + " has the wrong dimension");
  if (!g.entries.symmetric()) fail(error_kind::schema, std::string(what) + " is not symmetric");
  if (!(g.scale > 0.0)) fail(error_kind::schema, std::string(what) + " scale must be positive");
  Eigen::MatrixXd const gram = basis.transpose() * basis;
  double const ref = gram.cwiseAbs().maxCoeff();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double const diff = std::abs(g.value(i, j) - gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      if (diff > 1e-12 * ref)
        fail(error_kind::schema, std::string(what) + " disagrees with the basis Gram matrix");
    }
}

inline void check_nonsingular(Eigen::MatrixXd const& basis) {
  if (basis.rows() != basis.cols() || basis.rows() == 0)
    fail(error_kind::degenerate_lattice, "basis must be a nonempty square matrix");
  double scale = 1.0;
  for (Eigen::Index c = 0; c < basis.cols(); ++c) scale *= basis.col(c).norm();
  double const det = basis.determinant();
  if (!(scale > 0.0) || !std::isfinite(det) || std::abs(det) <= 1e-12 * scale)
    fail(error_kind::degenerate_lattice, "basis is singular");
}
}  // namespace detail

// Lattice Gamma in R^n with basis vectors as the columns of `basis`.
class lattice {
 public:
  lattice() = default;
  explicit lattice(Eigen::MatrixXd basis, std::optional<exact_gram> gram = std::nullopt, std::string id = {})
      : basis_(std::move(basis)), gram_(std::move(gram)), id_(std::move(id)) {
    detail::check_nonsingular(basis_);
    if (gram_) detail::check_gram(basis_, *gram_, "exact Gram");
  }

  std::size_t dim() const { return static_cast<std::size_t>(basis_.cols()); }
  Eigen::MatrixXd const& basis() const { return basis_; }
  std::optional<exact_gram> const& gram_exact() const { return gram_; }
  std::string const& id() const { return id_; }
  Eigen::MatrixXd gram() const { return basis_.transpose() * basis_; }

 private:
  Eigen::MatrixXd basis_;
  std::optional<exact_gram> gram_;
  std::string id_;
};

// Dual lattice with f_i . e_j = 2 pi delta_ij.
class dual_lattice {
 public:
  dual_lattice() = default;
  dual_lattice(Eigen::MatrixXd basis, lattice parent, std::optional<exact_gram> gram)
      : basis_(std::move(basis)), parent_(std::move(parent)), gram_(std::move(gram)) {}

  std::size_t dim() const { return static_cast<std::size_t>(basis_.cols()); }
  Eigen::MatrixXd const& basis() const { return basis_; }
  lattice const& parent() const { return parent_; }
  std::optional<exact_gram> const& gram_exact() const { return gram_; }
  Eigen::MatrixXd gram() const { return basis_.transpose() * basis_; }

  lattice as_lattice() const { return lattice(basis_, gram_, parent_.id() + "^dual"); }

 private:
  Eigen::MatrixXd basis_;
  lattice parent_;
  std::optional<exact_gram> gram_;
};

inline dual_lattice dual_basis(lattice const& lat) {
  Eigen::MatrixXd const& e = lat.basis();
  Eigen::MatrixXd f = two_pi * e.transpose().fullPivLu().inverse();
  std::optional<exact_gram> g;
  if (lat.gram_exact()) {
    // F^T F = 4 pi^2 (E^T E)^{-1}
    g = exact_gram{inverse(lat.gram_exact()->entries), two_pi * two_pi / lat.gram_exact()->scale};
    detail::check_gram(f, *g, "dual exact Gram");
  }
  return dual_lattice(std::move(f), lat, std::move(g));
}

inline double unit_cell_volume(lattice const& lat) { return std::abs(lat.basis().determinant()); }
inline double unit_cell_volume(dual_lattice const& dual) { return std::abs(dual.basis().determinant()); }

// Quasimomentum theta = sum mu_i f_i with mu_i in [0, 1).
class quasimomentum {
 public:
  struct exact_form {
    std::int64_t denominator = 1;        // l
    std::vector<std::int64_t> residues;  // r_i, mu_i = r_i / l
  };

  quasimomentum() = default;

  static quasimomentum zero(std::size_t dim) {
    quasimomentum q;
    q.coeffs_.assign(dim, 0.0);
    q.exact_ = exact_form{1, std::vector<std::int64_t>(dim, 0)};
    return q;
  }

  // Floating-point coordinates, reduced into [0, 1). No exact form.
  static quasimomentum from_coefficients(std::vector<double> mu) {
    quasimomentum q;
    for (double& m : mu) {
      if (!std::isfinite(m)) fail(error_kind::schema, "quasimomentum coordinate is not finite");
      m -= std::floor(m);
      if (m >= 1.0) m = 0.0;
    }
    q.coeffs_ = std::move(mu);
    return q;
  }

  // Exact rational coordinates, reduced into [0, 1).
  static quasimomentum from_rationals(std::vector<rational> mu) {
    quasimomentum q;
    mpz_class l = 1;
    for (rational& m : mu) {
      m.canonicalize();
      mpz_class fl;
      mpz_fdiv_q(fl.get_mpz_t(), m.get_num_mpz_t(), m.get_den_mpz_t());
      m -= fl;
      l = lcm(l, m.get_den());
    }
    exact_form ex;
    ex.denominator = to_int64(l);
    for (rational const& m : mu) {
      rational const r = m * l;
      ex.residues.push_back(to_int64(r.get_num()));
      q.coeffs_.push_back(m.get_d());
    }
    q.exact_ = std::move(ex);
    return q;
  }

  std::size_t dim() const { return coeffs_.size(); }
  std::vector<double> const& coeffs() const { return coeffs_; }
  std::optional<exact_form> const& exact() const { return exact_; }

  std::vector<rational> exact_coeffs() const {
    if (!exact_) fail(error_kind::rationality_required, "quasimomentum has no exact rational form");
    std::vector<rational> out;
    for (auto r : exact_->residues) {
      rational q(r, exact_->denominator);
      q.canonicalize();
      out.push_back(q);
    }
    return out;
  }

  Eigen::VectorXd cartesian(dual_lattice const& dual) const {
    return dual.basis() * Eigen::Map<Eigen::VectorXd const>(coeffs_.data(), static_cast<Eigen::Index>(coeffs_.size()));
  }

 private:
  std::vector<double> coeffs_;
  std::optional<exact_form> exact_;
};

// q(m) = m^T G m with G a symmetric positive definite integer matrix.
class quadratic_form {
 public:
  quadratic_form() = default;
  quadratic_form(std::size_t dim, std::vector<std::int64_t> g, double sigma = 1.0)
      : n_(dim), g_(std::move(g)), sigma_(sigma) {
    if (g_.size() != n_ * n_ || n_ == 0) fail(error_kind::schema, "quadratic form matrix has wrong size");
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (g_[i * n_ + j] != g_[j * n_ + i]) fail(error_kind::schema, "quadratic form must be symmetric");
    if (!(sigma_ > 0.0)) fail(error_kind::schema, "quadratic form scale must be positive");
    // Leading principal minors via fraction-free elimination.
    std::vector<mpz_class> a(g_.begin(), g_.end());
    mpz_class prev = 1;
    for (std::size_t k = 0; k < n_; ++k) {
      if (a[k * n_ + k] <= 0) fail(error_kind::schema, "quadratic form is not positive definite");
      for (std::size_t i = k + 1; i < n_; ++i)
        for (std::size_t j = k + 1; j < n_; ++j)
          a[i * n_ + j] = (a[k * n_ + k] * a[i * n_ + j] - a[i * n_ + k] * a[k * n_ + j]) / prev;
      prev = a[k * n_ + k];
    }
  }

  static quadratic_form sum_of_squares(std::size_t dim) {
    std::vector<std::int64_t> g(dim * dim, 0);
    for (std::size_t i = 0; i < dim; ++i) g[i * dim + i] = 1;
    return quadratic_form(dim, std::move(g));
  }

  std::size_t dim() const { return n_; }
  double sigma() const { return sigma_; }
  std::int64_t operator()(std::size_t i, std::size_t j) const { return g_[i * n_ + j]; }
  std::vector<std::int64_t> const& matrix() const { return g_; }

  bool diagonal() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (i != j && g_[i * n_ + j] != 0) return false;
    return true;
  }

  std::int64_t content() const {
    mpz_class c = 0;
    for (auto v : g_) c = gcd(c, mpz_class(static_cast<long>(v)));
    return to_int64(c);
  }

  std::int64_t evaluate(std::span<std::int64_t const> m) const {
    __int128 s = 0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) s += static_cast<__int128>(g_[i * n_ + j]) * m[i] * m[j];
    return static_cast<std::int64_t>(s);
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::int64_t> g_;
  double sigma_ = 1.0;
};

// |k + theta|^2 = (sigma / l^2) q(l m + r) for k = sum m_i f_i.
struct rational_structure_result {
  double sigma = 1.0;
  rational sigma_rational;  // sigma / gram scale, exact
  quadratic_form q;
  std::int64_t l = 1;
  std::vector<std::int64_t> r;

  double grid_step() const { return sigma / static_cast<double>(l * l); }
};

inline rational_structure_result rational_structure(dual_lattice const& dual, quasimomentum const& theta) {
  if (!dual.gram_exact()) fail(error_kind::rationality_required, "dual lattice has no exact rational Gram matrix");
  if (!theta.exact()) fail(error_kind::rationality_required, "quasimomentum has no exact rational form");
  if (theta.dim() != dual.dim()) fail(error_kind::schema, "quasimomentum dimension mismatch");
  exact_gram const& g = *dual.gram_exact();
  std::size_t const n = g.entries.n;
  mpz_class den = 1;
  for (auto const& v : g.entries.data) den = lcm(den, v.get_den());
  std::vector<mpz_class> z(n * n);
  mpz_class content = 0;
  for (std::size_t i = 0; i < n * n; ++i) {
    rational const scaled = g.entries.data[i] * den;
    z[i] = scaled.get_num();
    content = gcd(content, z[i]);
  }
  std::vector<std::int64_t> gi(n * n);
  for (std::size_t i = 0; i < n * n; ++i) gi[i] = to_int64(z[i] / content);
  rational_structure_result out;
  out.sigma_rational = rational(content, den);
  out.sigma_rational.canonicalize();
  out.sigma = g.scale * out.sigma_rational.get_d();
  out.q = quadratic_form(n, std::move(gi), out.sigma);
  out.l = theta.exact()->denominator;
  out.r = theta.exact()->residues;
  return out;
}

}  // namespace hsdecay
