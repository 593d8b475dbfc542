#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "hsdecay/error.hpp"
#include "hsdecay/numerics.hpp"

namespace hsdecay {

namespace detail {
// FFTW planning is not thread safe; execution with new-array execute is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Unnormalized n-dimensional complex DFT on a P x ... x P cell grid (row-major,
// last axis fastest). forward: X_m = sum_s x_s e^{-2 pi i m.s/P}; backward uses
// the opposite sign. FFTW_ESTIMATE keeps plans deterministic.
class cell_dft {
 public:
  cell_dft(std::size_t dim, std::size_t points) : dim_(dim), points_(points) {
    if (dim == 0 || points == 0) fail(error_kind::grid, "DFT needs a nonempty grid");
    size_ = 1;
    for (std::size_t a = 0; a < dim; ++a) size_ *= points;
    std::vector<int> dims(dim, static_cast<int>(points));
    auto* in = fftw_alloc_complex(size_);
    auto* out = fftw_alloc_complex(size_);
    if (!in || !out) fail(error_kind::solver, "FFTW allocation failed");
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fwd_ = fftw_plan_dft(static_cast<int>(dim), dims.data(), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft(static_cast<int>(dim), dims.data(), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_free(in);
    fftw_free(out);
    if (!fwd_ || !bwd_) fail(error_kind::solver, "FFTW planning failed");
  }

  cell_dft(cell_dft const&) = delete;
  cell_dft& operator=(cell_dft const&) = delete;

  ~cell_dft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }

  std::size_t size() const { return size_; }
  std::size_t dim() const { return dim_; }
  std::size_t points() const { return points_; }

  std::vector<complex> forward(std::span<complex const> x) const { return run(fwd_, x); }
  std::vector<complex> backward(std::span<complex const> x) const { return run(bwd_, x); }

  // Signed frequency of FFT index k along one axis, in (-P/2, P/2].
  std::int64_t frequency(std::size_t k) const {
    auto const p = static_cast<std::int64_t>(points_);
    auto const kk = static_cast<std::int64_t>(k);
    return 2 * kk <= p ? kk : kk - p;
  }

 private:
  std::vector<complex> run(fftw_plan plan, std::span<complex const> x) const {
    if (x.size() != size_) fail(error_kind::grid, "DFT input has the wrong size");
    // Fresh aligned buffers per call so concurrent callers never share memory.
    auto* in = fftw_alloc_complex(size_);
    auto* out = fftw_alloc_complex(size_);
    std::unique_ptr<fftw_complex, decltype(&fftw_free)> hold_in(in, fftw_free), hold_out(out, fftw_free);
    for (std::size_t i = 0; i < size_; ++i) {
      in[i][0] = x[i].real();
      in[i][1] = x[i].imag();
    }
    fftw_execute_dft(plan, in, out);
    std::vector<complex> y(size_);
    for (std::size_t i = 0; i < size_; ++i) y[i] = {out[i][0], out[i][1]};
    return y;
  }

  std::size_t dim_ = 0;
  std::size_t points_ = 0;
  std::size_t size_ = 0;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

}  // namespace hsdecay
