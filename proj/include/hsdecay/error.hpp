#pragma once

#include <stdexcept>
#include <string>

namespace hsdecay {

enum class error_kind {
  degenerate_lattice,
  rationality_required,
  budget_exceeded,
  arity,
  grid,
  precondition,
  solver,
  schema,
  io,
};

inline char const* to_string(error_kind k) {
  switch (k) {
    case error_kind::degenerate_lattice: return "degenerate-lattice";
    case error_kind::rationality_required: return "rationality-required";
    case error_kind::budget_exceeded: return "budget-exceeded";
    case error_kind::arity: return "arity";
    case error_kind::grid: return "grid";
    case error_kind::precondition: return "precondition-violation";
    case error_kind::solver: return "solver";
    case error_kind::schema: return "schema";
    case error_kind::io: return "io";
  }
  return "unknown";
}

// Process exit codes. Larger is stricter; a run reports the maximum it saw.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int refusal = 2;
inline constexpr int violation = 3;
inline constexpr int schema = 4;
inline constexpr int io = 5;
inline constexpr int grid = 6;
inline constexpr int numerical = 7;
}  // namespace exit_code

inline int exit_code_for(error_kind k) {
  switch (k) {
    case error_kind::precondition:
    case error_kind::rationality_required:
    case error_kind::arity: return exit_code::refusal;
    case error_kind::schema:
    case error_kind::degenerate_lattice: return exit_code::schema;
    case error_kind::io: return exit_code::io;
    case error_kind::grid: return exit_code::grid;
    case error_kind::budget_exceeded:
    case error_kind::solver: return exit_code::numerical;
  }
  return exit_code::numerical;
}

class error : public std::runtime_error {
 public:
  error(error_kind kind, std::string const& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  error_kind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return exit_code_for(kind_); }

 private:
  error_kind kind_;
};

[[noreturn]] inline void fail(error_kind kind, std::string const& what) {
  throw error(kind, what);
}

}  // namespace hsdecay
