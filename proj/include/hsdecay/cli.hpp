#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hsdecay/bloch.hpp"
#include "hsdecay/carleman.hpp"
#include "hsdecay/config.hpp"
#include "hsdecay/counterexample.hpp"
#include "hsdecay/evolution.hpp"
#include "hsdecay/lattice_io.hpp"
#include "hsdecay/pipeline.hpp"
#include "hsdecay/spectrum.hpp"
#include "hsdecay/svg.hpp"

namespace hsdecay::cli {

enum class param_kind { real, integer, text, flag, real_list, integer_list };

struct param_def {
  std::string name;
  param_kind kind;
  json fallback;
  std::string help;
};

struct outcome {
  json summary = json::object();
  run_manifest manifest;
  std::vector<std::pair<std::string, std::string>> files;  // written in this order
  int exit_code = 0;
};

class context {
 public:
  context(run_config cfg, std::size_t threads) : cfg_(std::move(cfg)), threads_(threads) {}

  run_config const& config() const { return cfg_; }
  std::uint64_t seed() const { return cfg_.seed; }
  std::size_t threads() const { return threads_; }

  double real(std::string const& k) const { return cfg_.params.at(k).get<double>(); }
  std::int64_t integer(std::string const& k) const { return cfg_.params.at(k).get<std::int64_t>(); }
  std::size_t count(std::string const& k) const {
    auto const v = integer(k);
    if (v < 0) fail(error_kind::schema, "parameter '" + k + "' must be nonnegative");
    return static_cast<std::size_t>(v);
  }
  std::string text(std::string const& k) const { return cfg_.params.at(k).get<std::string>(); }
  bool flag(std::string const& k) const { return cfg_.params.at(k).get<bool>(); }
  std::vector<double> reals(std::string const& k) const { return cfg_.params.at(k).get<std::vector<double>>(); }
  std::vector<std::int64_t> integers(std::string const& k) const { return cfg_.params.at(k).get<std::vector<std::int64_t>>(); }
  std::string required_path(std::string const& k) const {
    auto p = text(k);
    if (p.empty()) fail(error_kind::schema, "parameter '" + k + "' is required");
    return p;
  }

  double tolerance(std::string const& k, double fallback) const {
    return cfg_.tolerances.contains(k) ? cfg_.tolerances.at(k).get<double>() : fallback;
  }
  verify_options verify() const {
    verify_options v;
    v.resolution_tol = tolerance("resolution", v.resolution_tol);
    return v;
  }

  json& summary() { return out_.summary; }
  void add_file(std::string name, std::string content) { out_.files.emplace_back(std::move(name), std::move(content)); }
  void add_case(json c) { out_.manifest.cases.push_back(std::move(c)); }
  void raise(int code) { out_.exit_code = std::max(out_.exit_code, code); }

  // Carleman verdicts: "fail" and "unresolved" leave the inequality unestablished.
  void record_verdict(std::string const& verdict) {
    if (verdict == "fail" || verdict == "unresolved") raise(exit_code::violation);
  }

  outcome take() { return std::move(out_); }

 private:
  run_config cfg_;
  std::size_t threads_;
  outcome out_;
};

struct command {
  std::string name;  // "carleman verify43"
  std::string help;
  std::vector<param_def> params;
  std::function<void(context&)> run;
};

namespace detail {

inline std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  bool first = true;
  for (auto const& c : cells) {
    if (!first) s += ",";
    s += c;
    first = false;
  }
  return s + "\n";
}

inline std::string r17(double v) { return format_real(v); }

inline std::string join_reals(std::vector<double> const& v, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += r17(v[i]);
  }
  return s;
}

inline double parse_real_token(std::string const& tok) {
  std::string const s = hsdecay::detail::trim(tok);
  if (s.empty()) fail(error_kind::schema, "empty number");
  char* end = nullptr;
  double const v = std::strtod(s.c_str(), &end);
  if (end && *end == '\0') return v;
  return parse_real(s);
}

inline std::int64_t parse_integer_token(std::string const& tok) {
  std::string const s = hsdecay::detail::trim(tok);
  char* end = nullptr;
  long long const v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || !end || *end != '\0') fail(error_kind::schema, "expected an integer, got '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_list(std::string const& s) {
  std::vector<std::string> out;
  if (hsdecay::detail::trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

// Converts a flag string or a config value into the parameter's JSON type.
inline json coerce(param_def const& p, json const& v) {
  auto where = [&] { return "parameter '" + p.name + "'"; };
  switch (p.kind) {
    case param_kind::real:
      if (v.is_number()) return v.get<double>();
      if (v.is_string()) return parse_real_token(v.get<std::string>());
      break;
    case param_kind::integer:
      if (v.is_number_integer()) return v.get<std::int64_t>();
      if (v.is_string()) return parse_integer_token(v.get<std::string>());
      break;
    case param_kind::text:
      if (v.is_string()) return v;
      break;
    case param_kind::flag:
      if (v.is_boolean()) return v;
      if (v.is_string()) {
        auto const s = v.get<std::string>();
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
      }
      break;
    case param_kind::real_list:
    case param_kind::integer_list: {
      bool const ints = p.kind == param_kind::integer_list;
      json out = json::array();
      if (v.is_string()) {
        for (auto const& tok : split_list(v.get<std::string>()))
          out.push_back(ints ? json(parse_integer_token(tok)) : json(parse_real_token(tok)));
        return out;
      }
      if (v.is_array()) {
        for (auto const& e : v) {
          if (ints && e.is_number_integer()) out.push_back(e.get<std::int64_t>());
          else if (!ints && e.is_number()) out.push_back(e.get<double>());
          else if (e.is_string()) out.push_back(ints ? json(parse_integer_token(e.get<std::string>())) : json(parse_real_token(e.get<std::string>())));
          else fail(error_kind::schema, where() + " has a malformed list entry " + e.dump());
        }
        return out;
      }
      break;
    }
  }
  fail(error_kind::schema, where() + " has the wrong type: " + v.dump());
}

// Defaults, then config values (unknown keys rejected), then explicit flags.
inline json resolve_params(command const& cmd, json const& given, std::map<std::string, std::string> const& flags) {
  if (!given.is_object()) fail(error_kind::schema, "'params' must be an object");
  json out = json::object();
  for (auto const& p : cmd.params) out[p.name] = coerce(p, p.fallback);
  for (auto const& [key, v] : given.items()) {
    auto it = std::find_if(cmd.params.begin(), cmd.params.end(), [&](param_def const& p) { return p.name == key; });
    if (it == cmd.params.end()) fail(error_kind::schema, "unknown parameter '" + key + "' for command '" + cmd.name + "'");
    out[key] = coerce(*it, v);
  }
  for (auto const& [key, v] : flags) {
    auto it = std::find_if(cmd.params.begin(), cmd.params.end(), [&](param_def const& p) { return p.name == key; });
    out[key] = coerce(*it, json(v));
  }
  return out;
}

inline lattice default_lattice(std::size_t dim) {
  // (2 pi Z)^n, dual Z^n with exact Gram 4 pi^2 I
  Eigen::MatrixXd b = two_pi * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  rational_matrix g(dim);
  for (std::size_t i = 0; i < dim; ++i) g(i, i) = 1;
  return lattice(b, exact_gram{g, two_pi * two_pi}, "2piZ^" + std::to_string(dim));
}

inline json matrix_json(Eigen::MatrixXd const& m) {
  json out = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    json col = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) col.push_back(m(r, c));
    out.push_back(col);
  }
  return out;
}

inline json rational_matrix_json(rational_matrix const& m) {
  json out = json::array();
  for (std::size_t i = 0; i < m.n; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.n; ++j) row.push_back(m(i, j).get_str());
    out.push_back(row);
  }
  return out;
}

inline json report_json(carleman_report const& r) {
  json j{{"weight", r.weight},  {"lhs", r.lhs},           {"rhs", r.rhs},
         {"margin", r.margin},  {"quad_err", r.quad_err}, {"resolved", r.resolved},
         {"passed", r.passed},  {"verdict", r.verdict},   {"alpha", r.alpha},
         {"modes", r.modes},    {"t_points", r.t_points}};
  if (r.weight == "gap") {
    j["a"] = r.a;
    j["b"] = r.b;
    j["w"] = r.w;
    j["m"] = r.m;
  } else {
    j["weight_lambda"] = r.weight_lambda;
    j["eps"] = r.eps;
  }
  return j;
}

inline std::string reports_csv(std::vector<carleman_report> const& reps) {
  std::string s = "case,weight,eps,weight_lambda,a,b,alpha,modes,lhs,rhs,margin,quad_err,verdict\n";
  for (std::size_t i = 0; i < reps.size(); ++i) {
    auto const& r = reps[i];
    s += csv_row({std::to_string(i), r.weight, r17(r.eps), r17(r.weight_lambda), r17(r.a), r17(r.b), r17(r.alpha),
                  std::to_string(r.modes), r17(r.lhs), r17(r.rhs), r17(r.margin), r17(r.quad_err), r.verdict});
  }
  return s;
}

inline std::vector<complex> complex_from_reals(std::vector<double> const& v) {
  std::vector<complex> out;
  for (double x : v) out.emplace_back(x);
  return out;
}

inline std::string field_csv(sampled_field const& f) {
  std::ostringstream s;
  write_field_csv(f, s);
  return s.str();
}

inline std::string profile_csv(spectral_profile const& p) {
  std::ostringstream s;
  write_profile_csv(p, s);
  return s.str();
}

// One fiber as a single-cell field in physical representation.
inline sampled_field fiber_as_field(bloch_fiber const& f) {
  sampled_field out = make_field(field_kind::sample, std::vector<std::int64_t>(f.dim(), 0),
                                 std::vector<std::size_t>(f.dim(), 1), f.points_per_cell, f.t);
  out.values = f.data;
  return out;
}

inline forward_options forward_from(context const& ctx) {
  forward_options fo;
  auto const l = ctx.integer("l_max");
  if (l >= 0) fo.l_max = l;
  if (ctx.real("envelope_amplitude") > 0.0) fo.envelope = decay_envelope{ctx.real("envelope_amplitude"), ctx.real("envelope_rate")};
  return fo;
}

inline std::string log_norm_svg(std::vector<std::pair<std::string, spectral_profile const*>> const& curves, std::string title) {
  std::vector<plot_series> series;
  for (auto const& [name, p] : curves) {
    plot_series s;
    s.name = name;
    auto const n2 = p->norm2_series();
    for (std::size_t k = 0; k < p->t.points; ++k) {
      if (!(n2[k] > 0.0)) continue;
      s.x.push_back(p->t[k]);
      s.y.push_back(0.5 * std::log10(n2[k]));
    }
    series.push_back(std::move(s));
  }
  return render_svg(series, {std::move(title), "t", "log10 |phi(t)|"});
}

// ---- commands --------------------------------------------------------------

inline void cmd_lattice_dual(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const dual = dual_basis(lat);
  Eigen::MatrixXd const d = dual.basis().transpose() * lat.basis() -
                            two_pi * Eigen::MatrixXd::Identity(lat.basis().rows(), lat.basis().cols());
  auto& s = ctx.summary();
  s["dual_basis"] = matrix_json(dual.basis());
  s["duality_defect"] = d.cwiseAbs().maxCoeff();
  if (dual.gram_exact()) {
    s["dual_gram_exact"] = rational_matrix_json(dual.gram_exact()->entries);
    s["dual_gram_scale"] = dual.gram_exact()->scale;
  }
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"duality_defect", s["duality_defect"]}});
}

inline void cmd_lattice_volume(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto& s = ctx.summary();
  s["volume"] = unit_cell_volume(lat);
  s["dual_volume"] = unit_cell_volume(dual_basis(lat));
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"volume", s["volume"]}, {"dual_volume", s["dual_volume"]}});
}

inline void cmd_lattice_rational(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const theta = parse_quasimomentum(ctx.text("theta"), lat.dim());
  auto const rs = rational_structure(dual_basis(lat), theta);
  auto& s = ctx.summary();
  json g = json::array();
  for (std::size_t i = 0; i < rs.q.dim(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < rs.q.dim(); ++j) row.push_back(rs.q(i, j));
    g.push_back(row);
  }
  s["sigma"] = rs.sigma;
  s["sigma_over_gram_scale"] = rs.sigma_rational.get_str();
  s["form"] = g;
  s["l"] = rs.l;
  s["r"] = rs.r;
  s["grid_step"] = rs.grid_step();
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"sigma", rs.sigma}, {"l", rs.l}});
}

inline spectrum_slice slice_from(context const& ctx, lattice const& lat, quasimomentum const& theta) {
  enumeration_options eo;
  eo.budget = static_cast<std::uint64_t>(ctx.count("budget"));
  eo.threads = ctx.threads();
  return enumerate_spectrum(lat, theta, ctx.real("energy"), ctx.real("cutoff"), eo);
}

inline void cmd_spectrum(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const theta = parse_quasimomentum(ctx.text("theta"), lat.dim());
  auto const slice = slice_from(ctx, lat, theta);
  std::string csv = "value,multiplicity\n";
  for (std::size_t i = 0; i < slice.size(); ++i) csv += csv_row({r17(slice.values[i]), std::to_string(slice.mults[i])});
  ctx.add_file("spectrum.csv", csv);
  auto& s = ctx.summary();
  s["values"] = slice.values;
  s["multiplicities"] = slice.mults;
  s["total_multiplicity"] = slice.total_multiplicity();
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"distinct_values", slice.size()}});
}

inline void cmd_gaps(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const theta = parse_quasimomentum(ctx.text("theta"), lat.dim());
  auto const slice = slice_from(ctx, lat, theta);
  auto const gaps = find_gaps(slice, ctx.real("min_gap"), ctx.flag("full_axis"));
  std::string csv = "lo,hi,length\n";
  json gj = json::array();
  for (auto const& g : gaps) {
    csv += csv_row({r17(g.lo), r17(g.hi), r17(g.length())});
    gj.push_back({g.lo, g.hi});
  }
  ctx.add_file("gaps.csv", csv);
  auto& s = ctx.summary();
  s["gaps"] = gj;
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"gaps", gaps.size()}});

  auto const growth = ctx.reals("growth");
  auto const contain = ctx.real("containment");
  if (growth.empty() && contain <= 0.0) return;
  auto const dual = dual_basis(lat);
  auto const rs = rational_structure(dual, theta);
  if (!growth.empty()) {
    quadratic_form const q(rs.q.dim(), rs.q.matrix(), rs.sigma);
    auto const rows = max_gap_growth(q, theta, growth, static_cast<std::uint64_t>(ctx.count("budget")));
    std::string g = "N,max_gap,lo,hi\n";
    plot_series st;
    st.name = "max gap";
    st.staircase = true;
    json rj = json::array();
    for (auto const& r : rows) {
      g += csv_row({r17(r.n_max), r17(r.max_gap), r17(r.lo), r17(r.hi)});
      rj.push_back({{"N", r.n_max}, {"max_gap", r.max_gap}, {"lo", r.lo}, {"hi", r.hi}});
      st.x.push_back(std::log10(r.n_max));
      st.y.push_back(r.max_gap);
    }
    ctx.add_file("gap_growth.csv", g);
    ctx.add_file("gap_growth.svg", render_svg({st}, {"largest gap among values <= N", "log10 N", "max gap"}));
    s["gap_growth"] = rj;
  }
  if (contain > 0.0) {
    auto const c = progression_containment(dual, theta, contain);
    s["containment"] = {{"N", contain}, {"grid_step", c.grid_step}, {"max_distance", c.max_distance},
                        {"values_checked", c.values_checked}, {"exact_zero", c.exact_zero}};
  }
}

inline void cmd_density(context& ctx) {
  auto const form = ctx.integers("form");
  if (form.size() != 4) fail(error_kind::arity, "density needs a binary form given as 4 entries");
  quadratic_form const q(2, {form[0], form[1], form[2], form[3]});
  std::string csv = "N,count,ratio\n";
  json rows = json::array();
  for (double nn : ctx.reals("n")) {
    if (!(nn >= 0.0) || nn != std::floor(nn)) fail(error_kind::schema, "density N values must be nonnegative integers");
    auto const r = density_scan(q, static_cast<std::uint64_t>(nn));
    csv += csv_row({r17(nn), std::to_string(r.count), r17(r.ratio)});
    rows.push_back({{"N", nn}, {"count", r.count}, {"ratio", r.ratio}});
  }
  ctx.add_file("density.csv", csv);
  ctx.summary()["density"] = rows;
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"rows", rows.size()}});
}

inline void cmd_gelfand_forward(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const u = load_field(ctx.required_path("field"));
  auto const set = gelfand_forward_grid(u, lat, ctx.count("theta_points"), forward_from(ctx), ctx.threads());
  json index{{"per_axis", set.per_axis}, {"dim", u.dim()}, {"cell_lo", u.cell_lo}, {"cells", u.cells},
             {"cell_volume", unit_cell_volume(lat)}, {"tail_bound", set.tail_bound}, {"fibers", json::array()}};
  json norms = json::array();
  for (std::size_t i = 0; i < set.fibers.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "fibers/fiber_%04zu.csv", i);
    index["fibers"].push_back({{"mu", set.fibers[i].mu}, {"file", std::string(name).substr(7)}});
    ctx.add_file(name, field_csv(fiber_as_field(set.fibers[i])));
    double m = 0.0;
    for (std::size_t k = 0; k < set.fibers[i].t.points; ++k) m = std::max(m, set.fibers[i].norm2(k));
    norms.push_back(std::sqrt(m));
  }
  ctx.add_file("fibers/index.json", index.dump(2) + "\n");
  auto& s = ctx.summary();
  s["fibers"] = set.fibers.size();
  s["tail_bound"] = set.tail_bound;
  s["fiber_max_norms"] = norms;
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"fibers", set.fibers.size()}, {"tail_bound", set.tail_bound}});
}

inline fiber_set load_fiber_set(std::string const& index_path, json& index) {
  std::ifstream in(index_path);
  if (!in) fail(error_kind::io, "cannot open fiber index '" + index_path + "'");
  try {
    in >> index;
  } catch (json::exception const& e) {
    fail(error_kind::schema, "fiber index: " + std::string(e.what()));
  }
  hsdecay::detail::reject_unknown_keys(index, {"per_axis", "dim", "cell_lo", "cells", "cell_volume", "tail_bound", "fibers"},
                                       "fiber index");
  auto const dir = std::filesystem::path(index_path).parent_path();
  fiber_set set;
  try {
    set.per_axis = index.at("per_axis").get<std::size_t>();
    set.tail_bound = index.value("tail_bound", 0.0);
    double const vol = index.at("cell_volume").get<double>();
    for (auto const& e : index.at("fibers")) {
      auto const f = load_field((dir / e.at("file").get<std::string>()).string());
      bloch_fiber b;
      b.mu = e.at("mu").get<std::vector<double>>();
      b.t = f.t;
      b.points_per_cell = f.points_per_cell;
      b.cell_volume = vol;
      b.data = f.values;
      if (b.data.size() != b.cell_points() * b.t.points) fail(error_kind::grid, "fiber file is not a single cell");
      set.fibers.push_back(std::move(b));
    }
  } catch (json::exception const& e) {
    fail(error_kind::schema, "fiber index: " + std::string(e.what()));
  }
  return set;
}

inline void cmd_gelfand_inverse(context& ctx) {
  json index;
  auto const set = load_fiber_set(ctx.required_path("fibers"), index);
  auto lo = ctx.integers("cell_lo");
  auto cells_in = ctx.integers("cells");
  if (lo.empty()) lo = index.at("cell_lo").get<std::vector<std::int64_t>>();
  std::vector<std::size_t> cells;
  if (cells_in.empty()) cells = index.at("cells").get<std::vector<std::size_t>>();
  for (auto c : cells_in) {
    if (c <= 0) fail(error_kind::schema, "cells must be positive");
    cells.push_back(static_cast<std::size_t>(c));
  }
  auto const u = gelfand_inverse(set, lo, cells);
  ctx.add_file("field.csv", field_csv(u));
  double m = 0.0;
  for (auto v : u.values) m = std::max(m, std::abs(v));
  ctx.summary()["max_abs"] = m;
  ctx.summary()["points"] = u.values.size();
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"max_abs", m}});
}

inline void cmd_gelfand_roundtrip(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const u = load_field(ctx.required_path("field"));
  auto const set = gelfand_forward_grid(u, lat, ctx.count("theta_points"), forward_from(ctx), ctx.threads());
  auto const back = gelfand_inverse(set, u.cell_lo, u.cells);
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    err = std::max(err, std::abs(u.values[i] - back.values[i]));
    scale = std::max(scale, std::abs(u.values[i]));
  }
  auto const a = field_norm2(u, lat);
  auto const b = fiber_set_norm2(set);
  double parseval = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] > 0.0) parseval = std::max(parseval, std::abs(a[k] - b[k]) / a[k]);
  auto& s = ctx.summary();
  s["roundtrip_max_error"] = err;
  s["max_abs"] = scale;
  s["parseval_relative_error"] = parseval;
  s["tail_bound"] = set.tail_bound;
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"roundtrip_max_error", err}, {"parseval_relative_error", parseval}});
}

inline void cmd_gelfand_residual(context& ctx) {
  auto const lat = load_lattice(ctx.required_path("lattice"));
  auto const u = load_field(ctx.required_path("field"));
  auto const v = load_field(ctx.required_path("potential"));
  auto const dual = dual_basis(lat);
  auto const set = gelfand_forward_grid(u, lat, ctx.count("theta_points"), forward_from(ctx), ctx.threads());
  double const energy = ctx.real("energy");
  auto const res = parallel_map<residual_profile>(set.fibers.size(), [&](std::size_t i) {
    return fiber_residual(set.fibers[i], v, dual, energy);
  }, ctx.threads());
  std::string csv = "fiber,mu,t,r\n";
  json maxima = json::array();
  for (std::size_t i = 0; i < res.size(); ++i) {
    for (std::size_t k = 0; k < res[i].t.size(); ++k)
      csv += csv_row({std::to_string(i), join_reals(set.fibers[i].mu), r17(res[i].t[k]), r17(res[i].r[k])});
    maxima.push_back(res[i].max());
    ctx.add_case({{"id", i}, {"verdict", "ok"}, {"mu", set.fibers[i].mu}, {"residual_max", res[i].max()}});
  }
  ctx.add_file("residuals.csv", csv);
  ctx.summary()["residual_max"] = maxima;
}

inline void finish_reports(context& ctx, std::vector<carleman_report> const& reps, bool plot_lambda) {
  json arr = json::array();
  std::size_t passed = 0;
  std::map<std::string, std::size_t> verdicts;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    arr.push_back(report_json(reps[i]));
    passed += reps[i].passed ? 1 : 0;
    ++verdicts[reps[i].verdict];
    ctx.add_case({{"id", i}, {"verdict", reps[i].verdict}, {"margin", reps[i].margin}});
    ctx.record_verdict(reps[i].verdict);
  }
  ctx.add_file("reports.json", arr.dump(2) + "\n");
  ctx.add_file("summary.csv", reports_csv(reps));
  if (plot_lambda && !reps.empty()) {
    std::map<double, plot_series> by_eps;
    for (auto const& r : reps) {
      auto& s = by_eps[r.eps];
      s.name = "eps = " + r17(r.eps);
      s.x.push_back(r.weight_lambda);
      s.y.push_back(r.rhs > 0.0 ? r.margin / r.rhs : 0.0);
    }
    std::vector<plot_series> series;
    for (auto& [_, s] : by_eps) {
      // order points by lambda for a readable polyline
      std::vector<std::size_t> idx(s.x.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
      plot_series o;
      o.name = s.name;
      for (auto i : idx) {
        o.x.push_back(s.x[i]);
        o.y.push_back(s.y[i]);
      }
      series.push_back(std::move(o));
    }
    ctx.add_file("margins.svg", render_svg(series, {"relative margin (rhs - lhs) / rhs", "weight lambda", "margin / rhs"}));
  }
  auto& s = ctx.summary();
  s["cases"] = reps.size();
  s["passed"] = passed;
  s["verdicts"] = verdicts;
  if (reps.size() == 1) s["report"] = arr[0];
}

inline void cmd_carleman_43(context& ctx) {
  auto const n = ctx.count("ensemble");
  std::vector<carleman_report> reps;
  if (n > 0) {
    ensemble43_options opt;
    opt.seed = ctx.seed();
    opt.cases = n;
    opt.eps_values = ctx.reals("eps_values");
    opt.lambda_factors = ctx.reals("lambda_factors");
    if (opt.eps_values.empty() || opt.lambda_factors.empty()) fail(error_kind::schema, "eps_values and lambda_factors must be nonempty");
    opt.max_modes = ctx.count("modes");
    opt.mu_max = ctx.real("mu_max");
    opt.step = ctx.real("step");
    opt.threads = ctx.threads();
    opt.verify = ctx.verify();
    reps = run_ensemble_43(opt);
  } else {
    double const eps = ctx.real("eps");
    double const lam = ctx.real("lambda") > 0.0 ? ctx.real("lambda") : std::pow(eps, -4.0 / 3.0);
    std::mt19937_64 rng(derive_seed(ctx.seed(), 0));
    auto const modes = std::max<std::size_t>(ctx.count("modes"), 1);
    std::vector<double> eigs(modes);
    for (auto& mu : eigs) mu = uniform(rng, 0.0, ctx.real("mu_max"));
    double const t_lo = std::max(eps, min_support_start) + uniform(rng, 0.0, 1.0);
    double const t_hi = t_lo + uniform(rng, 1.0, 3.0);
    auto const grid = grid_with_step(0.0, t_hi + 0.5, ctx.real("step"));
    auto const phi = bump_profile(grid, t_lo, t_hi, hsdecay::detail::random_amplitudes(rng, modes), std::move(eigs));
    reps.push_back(verify_carleman_43(phi, lam, eps, ctx.verify()));
  }
  finish_reports(ctx, reps, true);
}

inline void cmd_carleman_gap(context& ctx) {
  auto const n = ctx.count("ensemble");
  std::vector<carleman_report> reps;
  auto vopt = ctx.verify();
  vopt.force = ctx.flag("force");
  if (n > 0) {
    ensemble_gap_options opt;
    opt.seed = ctx.seed();
    opt.cases = n;
    opt.max_modes = ctx.count("modes");
    opt.max_n = ctx.integer("max_n");
    opt.step = ctx.real("step");
    opt.threads = ctx.threads();
    opt.verify = vopt;
    reps = run_ensemble_gap(opt);
  } else {
    auto eigs = ctx.reals("eigs");
    if (eigs.empty()) fail(error_kind::schema, "eigs must be nonempty");
    std::mt19937_64 rng(derive_seed(ctx.seed(), 0));
    auto const amps = hsdecay::detail::random_amplitudes(rng, eigs.size());
    double const t_hi = ctx.real("t_hi");
    auto const grid = grid_with_step(0.0, t_hi + 0.5, ctx.real("step"));
    double const alpha = ctx.real("alpha");
    auto const phi = bump_profile(grid, ctx.real("t_lo"), t_hi, amps, std::move(eigs), alpha);
    reps.push_back(verify_carleman_gap(phi, ctx.real("a"), ctx.real("b"), alpha, vopt));
  }
  finish_reports(ctx, reps, false);
}

inline void cmd_carleman_system(context& ctx) {
  auto eigs = ctx.reals("eigs");
  if (eigs.empty()) fail(error_kind::schema, "eigs must be nonempty");
  std::mt19937_64 rng(derive_seed(ctx.seed(), 0));
  auto const amps = hsdecay::detail::random_amplitudes(rng, eigs.size());
  double const t_hi = ctx.real("t_hi");
  auto const grid = grid_with_step(0.0, t_hi + 0.5, ctx.real("step"));
  auto const phi = bump_profile(grid, ctx.real("t_lo"), t_hi, amps, std::move(eigs), ctx.real("alpha"));
  auto r = first_order_system_check(phi, ctx.real("a"), ctx.real("b"));
  r.tolerance = ctx.tolerance("certificate", r.tolerance);
  auto opt_json = [](std::optional<double> const& v) { return v ? json(*v) : json(nullptr); };
  auto& s = ctx.summary();
  s["min_eig_b0"] = opt_json(r.min_eig_b0);
  s["min_eig_b1"] = opt_json(r.min_eig_b1);
  s["max_eig_b2"] = opt_json(r.max_eig_b2);
  s["identity_residual"] = {r.identity_residual[0], r.identity_residual[1], r.identity_residual[2]};
  s["identity_scale"] = r.identity_scale;
  s["certificates_hold"] = r.certificates_hold();
  s["below"] = r.below;
  std::string const verdict = r.certificates_hold() ? "pass" : "fail";
  ctx.add_case({{"id", 0}, {"verdict", verdict}, {"identity_residual_max", r.identity_residual_max()}});
  ctx.record_verdict(verdict);
}

inline void cmd_carleman_ellreg(context& ctx) {
  solution_family_options fo;
  fo.seed = ctx.seed();
  fo.alpha_max = ctx.real("alpha_max");
  fo.beta_max = ctx.real("beta_max");
  fo.mu_max = ctx.real("mu_max");
  fo.T = ctx.real("T");
  double const eps = ctx.real("eps"), step = ctx.real("step");
  std::vector<double> s_list;
  for (double s = 1.0; s + 1.0 + eps <= fo.T - 1.0 + 1e-12; s += 1.0) s_list.push_back(s);
  if (s_list.empty()) fail(error_kind::grid, "T too short for any ratio window");
  struct row {
    ellreg_result fine, coarse;
    double alpha = 0.0;
  };
  auto const rows = parallel_map<row>(std::max<std::size_t>(ctx.count("family"), 1), [&](std::size_t i) {
    row r;
    auto const p1 = solution_like_profile(fo, i, step);
    auto const p2 = solution_like_profile(fo, i, step / 2.0);
    r.alpha = p1.alpha;
    r.coarse = ellreg_bound_check(p1, eps, s_list);
    r.fine = ellreg_bound_check(p2, eps, s_list);
    return r;
  }, ctx.threads());
  std::string csv = "case,alpha,beta_observed,sup_ratio,sup_ratio_refined,relative_change,explicit_bound,within\n";
  double family_sup = 0.0, worst_change = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto const& r = rows[i];
    double const change = std::abs(r.fine.sup_ratio - r.coarse.sup_ratio) / std::max(r.fine.sup_ratio, 1e-300);
    family_sup = std::max(family_sup, r.fine.sup_ratio);
    worst_change = std::max(worst_change, change);
    bool const ok = r.fine.within_bound() && change <= 0.05;
    csv += csv_row({std::to_string(i), r17(r.alpha), r17(r.fine.beta_observed), r17(r.coarse.sup_ratio), r17(r.fine.sup_ratio),
                    r17(change), r17(r.fine.explicit_bound), ok ? "true" : "false"});
    std::string const verdict = ok ? "pass" : "fail";
    ctx.add_case({{"id", i}, {"verdict", verdict}, {"sup_ratio", r.fine.sup_ratio}});
    ctx.record_verdict(verdict);
  }
  ctx.add_file("ellreg.csv", csv);
  double const hp = 1.875 / eps;
  auto& s = ctx.summary();
  s["family_sup_ratio"] = family_sup;
  s["family_bound"] = 2.0 * (fo.alpha_max + fo.beta_max) + 4.0 * hp * hp;
  s["worst_refinement_change"] = worst_change;
}

inline perturbation_family perturbation_from(context const& ctx, std::size_t modes) {
  bound_profile b;
  auto const shape = ctx.text("bound");
  if (shape == "constant") b.kind = bound_profile::shape::constant;
  else if (shape == "exponential") b.kind = bound_profile::shape::exponential;
  else if (shape == "algebraic") b.kind = bound_profile::shape::algebraic;
  else fail(error_kind::schema, "bound must be constant, exponential or algebraic");
  b.b0 = ctx.real("b0");
  b.rate = ctx.real("b_rate");
  auto const kind = ctx.text("perturbation");
  std::uint64_t const s = derive_seed(ctx.seed(), 0xb0);
  if (kind == "zero") return zero_perturbation(modes);
  if (kind == "diagonal") return random_diagonal_perturbation(modes, b, s);
  if (kind == "full") return random_full_perturbation(modes, b, s);
  fail(error_kind::schema, "perturbation must be zero, diagonal or full");
}

inline void cmd_evolve(context& ctx) {
  auto const eigs = ctx.reals("eigs");
  if (eigs.empty()) fail(error_kind::schema, "eigs must be nonempty");
  auto const B = perturbation_from(ctx, eigs.size());
  evolve_options eo;
  eo.T = ctx.real("T");
  eo.step = ctx.real("step");
  auto& s = ctx.summary();
  s["beta"] = B.beta();
  s["perturbation_decays"] = B.decays();
  auto const n = ctx.count("ensemble");
  if (n == 0) {
    auto g = complex_from_reals(ctx.reals("boundary"));
    if (g.empty()) g.assign(eigs.size(), complex(1.0));
    auto const sol = solve_decaying(eigs, B, g, eo);
    auto const est = decay_rate_estimate(sol.profile);
    ctx.add_file("profile.csv", profile_csv(sol.profile));
    ctx.add_file("lognorm.svg", log_norm_svg({{"solution", &sol.profile}}, "log-norm decay"));
    s["T"] = sol.T;
    s["residual"] = sol.residual;
    s["rcond"] = sol.rcond;
    s["rate"] = est.rate;
    s["window"] = {est.t_a, est.t_b};
    s["fit_residual"] = est.residual;
    s["window_rates"] = est.window_rates;
    s["superexp"] = est.superexp;
    s["predicted_rate"] = predicted_rate(eigs, g);
    ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"rate", est.rate}, {"superexp", est.superexp}});
    return;
  }
  std::mt19937_64 rng(derive_seed(ctx.seed(), 1));
  std::vector<std::vector<complex>> gs(n);
  for (auto& g : gs) {
    g.resize(eigs.size());
    for (auto& z : g) z = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
  }
  auto const rows = rate_spectrum_scan(eigs, B, gs, eo, ctx.threads());
  std::string csv = "boundary,rate,expected,nearest_sqrt_mu,distance,residual,superexp\n";
  for (auto const& r : rows) {
    csv += csv_row({std::to_string(r.id), r17(r.rate), r17(r.expected), r17(r.nearest), r17(r.distance), r17(r.residual),
                    r.superexp ? "true" : "false"});
    ctx.add_case({{"id", r.id}, {"verdict", "ok"}, {"rate", r.rate}, {"distance", r.distance}});
  }
  ctx.add_file("scan.csv", csv);
  s["boundaries"] = rows.size();
}

inline void cmd_decay(context& ctx) {
  auto const p = load_profile(ctx.required_path("input"));
  decay_options opt;
  auto const w = ctx.reals("window");
  if (w.size() == 2) {
    opt.t_a = w[0];
    opt.t_b = w[1];
  } else if (!w.empty()) {
    fail(error_kind::schema, "window must be two numbers a,b");
  }
  auto const est = decay_rate_estimate(p, opt);
  auto& s = ctx.summary();
  s["rate"] = est.rate;
  s["window"] = {est.t_a, est.t_b};
  s["fit_residual"] = est.residual;
  s["window_rates"] = est.window_rates;
  s["superexp"] = est.superexp;
  ctx.add_file("lognorm.svg", log_norm_svg({{"profile", &p}}, "log-norm decay"));
  ctx.add_case({{"id", 0}, {"verdict", "ok"}, {"rate", est.rate}, {"superexp", est.superexp}});
}

inline void cmd_counterexample(context& ctx) {
  auto const rows = counterexample_table(ctx.reals("lambdas"), ctx.real("T"), ctx.real("X"), ctx.threads());
  std::string csv = "lambda,T,value,log_value,tail_bound,growth_slope,status\n";
  json arr = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto const& r = rows[i];
    csv += csv_row({r17(r.lambda), r17(r.T), r17(r.value), r17(r.log_value), r17(r.tail_bound), r17(r.growth_slope), r.status});
    json j{{"lambda", r.lambda}, {"log_value", r.log_value}, {"status", r.status}, {"divergent", r.divergent}};
    if (std::isfinite(r.value)) j["value"] = r.value;
    if (std::isfinite(r.tail_bound)) j["tail_bound"] = r.tail_bound;
    if (r.divergent) j["growth_slope"] = r.growth_slope;
    arr.push_back(j);
    ctx.add_case({{"id", i}, {"verdict", r.status}, {"lambda", r.lambda}});
  }
  ctx.add_file("counterexample.csv", csv);
  auto& s = ctx.summary();
  s["rows"] = arr;
  s["inner_integral_at_0"] = counterexample_inner(0.0, ctx.real("X")).value;
  double const h = ctx.real("harmonicity_h");
  if (h > 0.0) {
    auto const hr = harmonicity_check({}, h);
    s["harmonicity"] = {{"h", h}, {"max_abs_laplacian", hr.max_abs}, {"nodes", hr.nodes}};
  }
}

inline void cmd_pipeline(context& ctx) {
  pipeline_options po;
  po.theta_points = ctx.count("theta_points");
  if (ctx.integer("l_max") >= 0) po.l_max = ctx.integer("l_max");
  po.energy = ctx.real("energy");
  po.cutoff = ctx.real("cutoff");
  po.min_gap = ctx.real("min_gap");
  po.taper = ctx.real("taper");
  po.verify = ctx.verify();
  po.threads = ctx.threads();

  if (po.theta_points == 0) fail(error_kind::schema, "theta grid is empty");
  auto const field_path = ctx.text("field");
  lattice lat;
  sampled_field u, v;
  auto& s = ctx.summary();
  if (field_path.empty()) {
    synthetic_options so;
    so.dim = ctx.count("synthetic_dim");
    lat = ctx.text("lattice").empty() ? default_lattice(so.dim) : load_lattice(ctx.text("lattice"));
    so.cells = ctx.count("synthetic_cells");
    so.points_per_cell = ctx.count("synthetic_points");
    so.t_max = ctx.real("synthetic_t_max");
    so.t_points = ctx.count("synthetic_t_points");
    so.modes = ctx.count("synthetic_modes");
    so.theta_points = po.theta_points;
    so.energy = po.energy;
    auto syn = make_synthetic(lat, so, ctx.seed());
    u = std::move(syn.u);
    v = std::move(syn.v);
    s["synthetic"] = {{"mu", syn.mu}, {"rates", syn.rates}};
  } else {
    lat = load_lattice(ctx.required_path("lattice"));
    u = load_field(field_path);
    v = load_field(ctx.required_path("potential"));
  }
  auto const res = run_pipeline(lat, u, v, po);

  std::string fibers = "fiber,mu,norm_max,residual_max,spectrum_values,gaps,carleman,margin,decay_rate,superexp\n";
  std::string residuals = "fiber,t,r\n";
  std::string gaps = "fiber,lo,hi,length\n";
  std::vector<spectral_profile> shown;
  json rows = json::array();
  for (std::size_t i = 0; i < res.fibers.size(); ++i) {
    auto const& f = res.fibers[i];
    std::string const verdict = f.carleman ? f.carleman->verdict : "skipped";
    fibers += csv_row({std::to_string(i), join_reals(f.mu), r17(f.norm_max), r17(f.residual.max()), std::to_string(f.spectrum_values),
                       std::to_string(f.gaps.size()), verdict, f.carleman ? r17(f.carleman->margin) : "",
                       f.decay ? r17(f.decay->rate) : "", f.decay ? (f.decay->superexp ? "true" : "false") : ""});
    for (std::size_t k = 0; k < f.residual.t.size(); ++k)
      residuals += csv_row({std::to_string(i), r17(f.residual.t[k]), r17(f.residual.r[k])});
    for (auto const& g : f.gaps) gaps += csv_row({std::to_string(i), r17(g.lo), r17(g.hi), r17(g.length())});
    json row{{"fiber", i},
             {"mu", f.mu},
             {"norm_max", f.norm_max},
             {"residual_max", f.residual.max()},
             {"spectrum_values", f.spectrum_values},
             {"gaps", f.gaps.size()},
             {"carleman", verdict}};
    if (f.carleman) row["carleman_report"] = report_json(*f.carleman);
    else row["carleman_note"] = f.carleman_note;
    if (f.decay) {
      row["decay_rate"] = f.decay->rate;
      row["superexp"] = f.decay->superexp;
    } else {
      row["decay_note"] = f.decay_note;
    }
    rows.push_back(row);
    json c{{"id", i}, {"verdict", verdict}, {"residual_max", f.residual.max()}};
    if (f.decay) c["decay_rate"] = f.decay->rate;
    ctx.add_case(c);
    if (f.carleman) ctx.record_verdict(f.carleman->verdict);
  }
  ctx.add_file("fibers.csv", fibers);
  ctx.add_file("residuals.csv", residuals);
  ctx.add_file("gaps.csv", gaps);
  std::vector<plot_series> curves;
  for (auto const& f : res.fibers) {
    if (f.residual.t.empty()) continue;
    plot_series p;
    p.name = "mu = " + join_reals(f.mu);
    p.x = f.residual.t;
    for (double r : f.residual.r) p.y.push_back(r);
    curves.push_back(std::move(p));
  }
  if (!curves.empty()) ctx.add_file("residuals.svg", render_svg(curves, {"fiber residual", "t", "r(t)"}));
  std::vector<plot_series> decay;
  for (std::size_t i = 0; i < res.fibers.size(); ++i) {
    auto const& f = res.fibers[i];
    if (!f.decay) continue;
    plot_series p;
    p.name = "mu = " + join_reals(f.mu);
    for (std::size_t k = 0; k < f.norm2.size(); ++k) {
      if (!(f.norm2[k] > 0.0)) continue;
      p.x.push_back(u.t[k]);
      p.y.push_back(0.5 * std::log10(f.norm2[k]));
    }
    decay.push_back(std::move(p));
  }
  if (!decay.empty()) ctx.add_file("decay.svg", render_svg(decay, {"fiber log-norm decay", "t", "log10 |phi_theta(t)|"}));
  s["fibers"] = rows;
  s["tail_bound"] = res.tail_bound;
}

// ---- registry --------------------------------------------------------------

inline std::vector<param_def> lattice_params() { return {{"lattice", param_kind::text, "", "lattice JSON file"}}; }

inline std::vector<param_def> spectrum_params() {
  return {{"lattice", param_kind::text, "", "lattice JSON file"},
          {"theta", param_kind::text, "", "quasimomentum in dual coordinates, e.g. 1/3,0 (default 0)"},
          {"energy", param_kind::real, 0.0, "energy E"},
          {"cutoff", param_kind::real, 50.0, "largest eigenvalue |k+theta|^2 - E kept"},
          {"budget", param_kind::integer, static_cast<std::int64_t>(default_element_budget), "enumeration budget"}};
}

inline std::vector<param_def> gelfand_params(bool potential, bool energy) {
  std::vector<param_def> p{{"lattice", param_kind::text, "", "lattice JSON file"},
                            {"field", param_kind::text, "", "sampled field file (CSV or binary)"},
                            {"theta_points", param_kind::integer, 3, "theta grid points per axis"},
                            {"l_max", param_kind::integer, -1, "lattice sum truncation |j|_inf <= l_max (-1: all cells)"},
                            {"envelope_amplitude", param_kind::real, 0.0, "declared decay envelope amplitude (0: none)"},
                            {"envelope_rate", param_kind::real, 0.0, "declared decay envelope rate"}};
  if (potential) p.push_back({"potential", param_kind::text, "", "sampled potential file"});
  if (energy) p.push_back({"energy", param_kind::real, 0.0, "energy E"});
  return p;
}

inline std::vector<command> const& commands() {
  static std::vector<command> const table = [] {
    std::vector<command> c;
    c.push_back({"lattice dual", "dual basis 2 pi (B^T)^{-1}", lattice_params(), cmd_lattice_dual});
    c.push_back({"lattice volume", "unit cell volumes of the lattice and its dual", lattice_params(), cmd_lattice_volume});
    c.push_back({"lattice rational", "reduction |k+theta|^2 = (sigma/l^2) q(l m + r)",
                 {{"lattice", param_kind::text, "", "lattice JSON file"},
                  {"theta", param_kind::text, "", "rational quasimomentum, e.g. 1/2,0"}},
                 cmd_lattice_rational});
    c.push_back({"spectrum", "eigenvalues of the torus operator up to a cutoff", spectrum_params(), cmd_spectrum});
    auto gp = spectrum_params();
    gp.push_back({"min_gap", param_kind::real, 0.0, "shortest gap reported"});
    gp.push_back({"full_axis", param_kind::flag, false, "also report gaps with lower end <= 0"});
    gp.push_back({"growth", param_kind::real_list, json::array(), "N values for the largest-gap table (rational lattices)"});
    gp.push_back({"containment", param_kind::real, 0.0, "N for the exact progression containment check (0: off)"});
    c.push_back({"gaps", "spectral gaps, largest-gap growth and containment", gp, cmd_gaps});
    c.push_back({"density", "distinct values of a binary form up to N",
                 {{"form", param_kind::integer_list, json::array({1, 0, 0, 1}), "form matrix a,b,b,c"},
                  {"n", param_kind::real_list, json::array({100.0, 10000.0, 1000000.0}), "N values"}},
                 cmd_density});
    c.push_back({"gelfand forward", "fibers on the midpoint theta grid", gelfand_params(false, false), cmd_gelfand_forward});
    c.push_back({"gelfand inverse", "reconstruct a field from fibers",
                 {{"fibers", param_kind::text, "", "fiber index JSON written by 'gelfand forward'"},
                  {"cell_lo", param_kind::integer_list, json::array(), "output box lower cell (default: source box)"},
                  {"cells", param_kind::integer_list, json::array(), "output box cells per axis (default: source box)"}},
                 cmd_gelfand_inverse});
    c.push_back({"gelfand roundtrip", "Parseval and inversion errors", gelfand_params(false, false), cmd_gelfand_roundtrip});
    c.push_back({"gelfand residual", "per-fiber residual of the fiber equation", gelfand_params(true, true), cmd_gelfand_residual});
    c.push_back({"carleman verify43", "t^{4/3}-weight inequality on random bump profiles",
                 {{"eps", param_kind::real, 1.0, "support starts after eps"},
                  {"lambda", param_kind::real, 0.0, "weight lambda (0: eps^{-4/3})"},
                  {"modes", param_kind::integer, 4, "number of modes (ensemble: maximum)"},
                  {"mu_max", param_kind::real, 50.0, "eigenvalues drawn from [0, mu_max]"},
                  {"step", param_kind::real, 5e-4, "t-grid step"},
                  {"ensemble", param_kind::integer, 0, "number of random admissible cases (0: single case)"},
                  {"eps_values", param_kind::real_list, json::array({0.5, 1.0, 2.0}), "ensemble eps values"},
                  {"lambda_factors", param_kind::real_list, json::array({1.0, 2.0, 4.0}), "ensemble lambda / eps^{-4/3}"}},
                 cmd_carleman_43});
    c.push_back({"carleman verify-gap", "spectral-gap inequality with constant a^2 m^2 / 4",
                 {{"a", param_kind::real, 2.0, "gap lower root a"},
                  {"b", param_kind::real, 3.0, "gap upper root b"},
                  {"alpha", param_kind::real, 0.0, "alpha with A + alpha >= 0"},
                  {"eigs", param_kind::real_list, json::array({1.0, 9.0}), "eigenvalues"},
                  {"t_lo", param_kind::real, 1.0, "bump support start"},
                  {"t_hi", param_kind::real, 3.0, "bump support end"},
                  {"step", param_kind::real, 5e-4, "t-grid step"},
                  {"force", param_kind::flag, false, "run even when 3a^2 <= alpha (exploratory, no verdict)"},
                  {"ensemble", param_kind::integer, 0, "number of random admissible cases (0: single case)"},
                  {"modes", param_kind::integer, 16, "ensemble: maximum number of modes"},
                  {"max_n", param_kind::integer, 6, "ensemble: gaps inside (n^2, (n+1)^2), n <= max_n"}},
                 cmd_carleman_gap});
    c.push_back({"carleman system-check", "first-order system blocks and matrix certificates",
                 {{"a", param_kind::real, 2.0, "gap lower root a"},
                  {"b", param_kind::real, 3.0, "gap upper root b"},
                  {"alpha", param_kind::real, 0.0, "alpha with A + alpha >= 0"},
                  {"eigs", param_kind::real_list, json::array({1.0, 9.0}), "eigenvalues"},
                  {"t_lo", param_kind::real, 1.0, "bump support start"},
                  {"t_hi", param_kind::real, 3.0, "bump support end"},
                  {"step", param_kind::real, 1e-3, "t-grid step"}},
                 cmd_carleman_system});
    c.push_back({"carleman ellreg", "windowed derivative/norm ratio on solution-like profiles",
                 {{"eps", param_kind::real, 0.5, "window margin eps"},
                  {"family", param_kind::integer, 1, "number of profiles"},
                  {"alpha_max", param_kind::real, 4.0, "alpha drawn from [0, alpha_max]"},
                  {"beta_max", param_kind::real, 1.0, "perturbation size drawn from [0, beta_max]"},
                  {"mu_max", param_kind::real, 20.0, "largest eigenvalue"},
                  {"T", param_kind::real, 8.0, "t-range"},
                  {"step", param_kind::real, 1e-2, "t-grid step (checked against step/2)"}},
                 cmd_carleman_ellreg});
    c.push_back({"evolve", "decaying solutions of (d_t^2 - A - B) phi = 0 and their rates",
                 {{"eigs", param_kind::real_list, json::array({1.0, 9.0}), "eigenvalues"},
                  {"perturbation", param_kind::text, "zero", "zero, diagonal or full"},
                  {"bound", param_kind::text, "exponential", "b(t) shape: constant, exponential, algebraic"},
                  {"b0", param_kind::real, 0.1, "b(0)"},
                  {"b_rate", param_kind::real, 1.0, "rate in b(t)"},
                  {"T", param_kind::real, 0.0, "horizon (0: 30 / sqrt(min positive eigenvalue))"},
                  {"step", param_kind::real, 1e-2, "t-grid step"},
                  {"boundary", param_kind::real_list, json::array(), "phi(0) per mode (default: all ones)"},
                  {"ensemble", param_kind::integer, 0, "number of random boundary vectors (0: single solve)"}},
                 cmd_evolve});
    c.push_back({"decay", "decay rate of a profile",
                 {{"input", param_kind::text, "", "profile CSV"},
                  {"window", param_kind::real_list, json::array(), "fit window a,b (default: last third minus 10%)"}},
                 cmd_decay});
    c.push_back({"counterexample", "weighted mass of the harmonic counterexample",
                 {{"lambdas", param_kind::real_list, json::array({0.5, 0.9, 1.0, 1.1}), "weights lambda"},
                  {"T", param_kind::real, 1000.0, "x2 truncation"},
                  {"X", param_kind::real, 1000.0, "x1 truncation"},
                  {"harmonicity_h", param_kind::real, 1e-2, "stencil step for the harmonicity check (0: off)"}},
                 cmd_counterexample});
    c.push_back({"pipeline", "fields -> fibers -> residuals, gaps, Carleman checks and decay fits",
                 {{"lattice", param_kind::text, "", "lattice JSON file (synthetic default: (2 pi Z)^dim)"},
                  {"field", param_kind::text, "", "sampled u (empty: synthetic field from the seed)"},
                  {"potential", param_kind::text, "", "sampled V"},
                  {"theta_points", param_kind::integer, 3, "theta grid points per axis"},
                  {"l_max", param_kind::integer, -1, "lattice sum truncation (-1: all cells)"},
                  {"energy", param_kind::real, 0.0, "energy E"},
                  {"cutoff", param_kind::real, 60.0, "spectrum cutoff"},
                  {"min_gap", param_kind::real, 0.0, "shortest gap considered"},
                  {"taper", param_kind::real, 0.25, "cut-off ramp as a fraction of the t-range"},
                  {"synthetic_dim", param_kind::integer, 1, "synthetic: transverse dimension"},
                  {"synthetic_cells", param_kind::integer, 3, "synthetic: cells per axis"},
                  {"synthetic_points", param_kind::integer, 16, "synthetic: points per cell edge"},
                  {"synthetic_t_max", param_kind::real, 4.0, "synthetic: t-range end"},
                  {"synthetic_t_points", param_kind::integer, 4001, "synthetic: t points"},
                  {"synthetic_modes", param_kind::integer, 1, "synthetic: decaying modes"}},
                 cmd_pipeline});
    return c;
  }();
  return table;
}

inline command const& find_command(std::string const& name) {
  for (auto const& c : commands())
    if (c.name == name) return c;
  fail(error_kind::schema, "unknown command '" + name + "'");
}

// ---- execution ---------------------------------------------------------------

// Runs one command on a resolved config and collects outputs; nothing is
// written to disk here.
inline outcome execute(run_config cfg, std::size_t threads = 1) {
  auto const& cmd = find_command(cfg.command);
  cfg.params = resolve_params(cmd, cfg.params, {});
  auto const t0 = std::chrono::steady_clock::now();
  context ctx(cfg, worker_count(threads));
  cmd.run(ctx);
  outcome out = ctx.take();
  out.manifest.command = cfg.command;
  out.manifest.config_hash = cfg.hash();
  out.manifest.seed = cfg.seed;
  for (auto const& [name, content] : out.files) out.manifest.files[name] = sha256_hex(content);
  out.manifest.exit_code = out.exit_code;
  out.manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.summary["manifest_hash"] = out.manifest.hash();
  out.summary["exit_code"] = out.exit_code;
  return out;
}

inline void write_outputs(run_config const& cfg, outcome const& out) {
  if (!cfg.output) return;
  namespace fs = std::filesystem;
  fs::path const dir(*cfg.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(error_kind::io, "cannot create output directory '" + dir.string() + "': " + ec.message());
  auto write = [&](std::string const& name, std::string const& content) {
    fs::path const p = dir / name;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream f(p, std::ios::binary);
    if (!f) fail(error_kind::io, "cannot write '" + p.string() + "'");
    f << content;
    if (!f) fail(error_kind::io, "error while writing '" + p.string() + "'");
  };
  json resolved = cfg.resolved();
  resolved["output"] = *cfg.output;
  write("resolved_config.json", resolved.dump(2) + "\n");
  for (auto const& [name, content] : out.files) write(name, content);
  write("summary.json", out.summary.dump(2) + "\n");
  write("manifest.json", out.manifest.to_json().dump(2) + "\n");
}

inline void add_globals(CLI::App* app, std::string& output, std::uint64_t& seed, std::size_t& threads) {
  app->add_option("-o,--output", output, "directory for tables, plots, resolved config and manifest");
  app->add_option("--seed", seed, "root seed");
  app->add_option("--threads", threads, "worker threads (0: hardware; capped by HALFSPACE_DECAY_THREADS)");
}

}  // namespace detail

using detail::commands;
using detail::execute;
using detail::find_command;
using detail::write_outputs;

// Entry point shared by the executable and the in-process tests.
inline int main(int argc, char const* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"hsdecay: decay of solutions with transverse-periodic potentials"};
  app.require_subcommand(1);
  std::string output;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::string config_path;

  struct leaf {
    command const* cmd;
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
  };
  std::vector<leaf> leaves;
  leaves.reserve(commands().size());
  std::map<std::string, CLI::App*> groups;
  for (auto const& cmd : commands()) {
    auto const sp = cmd.name.find(' ');
    CLI::App* parent = &app;
    std::string leaf_name = cmd.name;
    if (sp != std::string::npos) {
      std::string const group = cmd.name.substr(0, sp);
      leaf_name = cmd.name.substr(sp + 1);
      if (!groups.contains(group)) {
        groups[group] = app.add_subcommand(group, group + " commands");
        groups[group]->require_subcommand(1);
      }
      parent = groups[group];
    }
    leaves.push_back({&cmd, parent->add_subcommand(leaf_name, cmd.help), {}, {}});
  }
  for (auto& l : leaves) {
    for (auto const& p : l.cmd->params) {
      std::string const flag = "--" + p.name;
      if (p.kind == param_kind::flag) {
        l.app->add_flag(flag, l.flags[p.name], p.help);
      } else {
        std::string help = p.help + " [default: " + (p.fallback.is_string() ? p.fallback.get<std::string>() : p.fallback.dump()) + "]";
        l.app->add_option(flag, l.values[p.name], help);
      }
    }
    detail::add_globals(l.app, output, seed, threads);
  }
  auto* run = app.add_subcommand("run", "run a command from a JSON config file");
  run->add_option("--config", config_path, "config: {command, params, seed, output, tolerances}")->required();
  run->add_option("--threads", threads, "worker threads (0: hardware; capped by HALFSPACE_DECAY_THREADS)");

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const& e) {
    out << app.help();
    return exit_code::ok;
  } catch (CLI::ParseError const& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return exit_code::ok;
    }
    err << "hsdecay: usage: " << e.what() << "\n";
    return exit_code::schema;
  }

  try {
    run_config cfg;
    if (run->parsed()) {
      cfg = load_run_config(config_path);
    } else {
      leaf const* chosen = nullptr;
      for (auto const& l : leaves)
        if (l.app->parsed()) chosen = &l;
      if (!chosen) fail(error_kind::schema, "no command given");
      cfg.command = chosen->cmd->name;
      cfg.seed = seed;
      if (!output.empty()) cfg.output = output;
      std::map<std::string, std::string> given;
      for (auto const& p : chosen->cmd->params) {
        auto* opt = chosen->app->get_option("--" + p.name);
        if (opt->count() == 0) continue;
        given[p.name] = p.kind == param_kind::flag ? "true" : chosen->values.at(p.name);
      }
      cfg.params = detail::resolve_params(*chosen->cmd, json::object(), given);
    }
    auto const result = execute(cfg, threads);
    detail::write_outputs(cfg, result);
    out << result.summary.dump(2) << "\n";
    return result.exit_code;
  } catch (error const& e) {
    err << "hsdecay: " << e.what() << "\n";
    return e.exit_code();
  } catch (std::exception const& e) {
    err << "hsdecay: internal error: " << e.what() << "\n";
    return exit_code::numerical;
  }
}

}  // namespace hsdecay::cli
