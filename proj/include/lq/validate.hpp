#pragma once

// Cross-engine validation and file emission behind the CLI.
//
// run_validate solves one model with every applicable engine, compares the
// results pairwise, runs the structural identities (atom, density jump,
// normalization, continuity), and returns a pass/fail table. Engine failures
// land in the report instead of escaping, each tagged with its error class.

#include <lq/config.hpp>
#include <lq/fixedpoint.hpp>
#include <lq/giph.hpp>
#include <lq/md.hpp>
#include <lq/simulate.hpp>
#include <lq/version.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lq {

// The deterministic-service exponential-arrival corner of ModelParams.
inline MdParams to_md_params(const ModelParams& m) {
  if (!md_applicable(m))
    throw InputError(
        "band solver needs exponential arrivals and deterministic service");
  return MdParams(m.arrival.rate(), std::get<DetService>(m.service).b, m.p);
}

// One entry point across the p = 0, 0 < p < 1, and p = 1 regimes.
inline MdSolution solve_md_any(const MdParams& m, const MdOptions& opt = {}) {
  if (m.p == 0.0) return solve_md_p0(m);
  if (m.p == 1.0) return solve_md_p1_erlang(m, opt);
  return solve_md(m, opt);
}

// A solved model reduced to what emission and comparison need.
struct EngineOutput {
  std::string name;
  std::function<double(double)> cdf;
  std::function<double(double)> pdf;
  double atom = 0;
  std::vector<std::string> warnings;
  nlohmann::json diagnostics = nlohmann::json::object();
};

inline EngineOutput make_output(const MdSolution& sol) {
  EngineOutput o;
  o.name = "md";
  o.cdf = [sol](double x) { return sol.cdf(x); };
  o.pdf = [sol](double x) { return sol.density(x); };
  o.atom = sol.atom();
  o.warnings = sol.warnings();
  const char* kind = sol.kind() == MdSolution::Kind::Bands     ? "bands"
                     : sol.kind() == MdSolution::Kind::Uniform ? "uniform"
                                                               : "md1";
  o.diagnostics = {{"kind", kind},
                   {"pi0", sol.atom()},
                   {"bands", sol.bands()},
                   {"certified_bands", sol.certified_bands()},
                   {"tail_bound", sol.tail_bound()},
                   {"tail_rate", sol.tail_rate()}};
  return o;
}

inline EngineOutput make_output(const GiphSolution& sol) {
  EngineOutput o;
  o.name = "giph";
  o.cdf = [sol](double x) { return sol.cdf(x); };
  o.pdf = [sol](double x) { return sol.density(x); };
  o.atom = sol.atom();
  auto pairs = [](const std::vector<cplx>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (cplx z : v) a.push_back({z.real(), z.imag()});
    return a;
  };
  o.diagnostics = {{"c0", sol.atom()},
                   {"exponents", pairs(sol.roots())},
                   {"coefficients", pairs(sol.coeffs())},
                   {"residual", sol.residual()},
                   {"condition", sol.cond()},
                   {"collocation_scale", sol.tau()},
                   {"mean", sol.mean()}};
  return o;
}

inline EngineOutput make_output(const FixedPointResult& res) {
  EngineOutput o;
  o.name = "fixedpoint";
  const GridFunction g = res.grid;
  o.cdf = [g](double x) { return g.value_at(x); };
  // slope of the interpolant; the first segment's slope is the density at 0+
  o.pdf = [g](double x) {
    if (x < 0 || x >= g.x_max) return 0.0;
    const int k = static_cast<int>(x / g.h());
    return (g.values[k + 1] - g.values[k]) / g.h();
  };
  o.atom = g.atom();
  o.diagnostics = {{"atom", g.atom()},
                   {"iterations", res.iterations},
                   {"residual", res.residual},
                   {"contraction", res.contraction},
                   {"last_step", res.last_step},
                   {"x_max", g.x_max},
                   {"n", g.n},
                   {"domain_doublings", res.domain_doublings}};
  return o;
}

inline EngineOutput make_output(std::shared_ptr<const SimResult> sim,
                                const GridSpec& grid) {
  EngineOutput o;
  o.name = "simulate";
  const auto* emp = &sim->merged;
  o.cdf = [sim, emp](double x) { return emp->ecdf(x); };
  const double h = grid.step;
  o.pdf = [sim, emp, h](double x) {
    const double lo = std::max(0.0, x - 0.5 * h);
    const double hi = x + 0.5 * h;
    return hi > lo ? (emp->ecdf(hi) - emp->ecdf(lo)) / (hi - lo) : 0.0;
  };
  o.atom = emp->zero_fraction();
  nlohmann::json q = nlohmann::json::object();
  for (int d = 1; d <= 9; ++d) {
    char key[8];
    std::snprintf(key, sizeof key, "q%d0", d);
    q[key] = emp->quantile(d / 10.0);
  }
  q["q95"] = emp->quantile(0.95);
  q["q99"] = emp->quantile(0.99);
  o.diagnostics = {{"n", sim->merged.size()},
                   {"atom", emp->zero_fraction()},
                   {"replications", static_cast<int>(sim->replications.size())},
                   {"quantiles", q}};
  return o;
}

struct CheckRow {
  std::string name;
  double value = 0;
  double limit = 0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<CheckRow> checks;
  std::vector<std::string> engines;   // engines that completed
  std::vector<std::string> warnings;  // "engine: text"
  std::vector<std::string> errors;    // "engine: Class: text"
  std::vector<std::string> flags;     // error/warning class names, deduped
  nlohmann::json details = nlohmann::json::object();

  bool passed() const {
    if (!errors.empty()) return false;
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  void add(const std::string& name, double value, double limit) {
    checks.push_back({name, value, limit, value <= limit});
  }

  void flag(const std::string& f) {
    if (std::find(flags.begin(), flags.end(), f) == flags.end())
      flags.push_back(f);
  }

  std::string table() const {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%-34s %12s %12s   %s\n", "check", "value",
                  "limit", "result");
    os << line;
    for (const auto& c : checks) {
      std::snprintf(line, sizeof line, "%-34s %12.4g %12.4g   %s\n",
                    c.name.c_str(), c.value, c.limit, c.pass ? "pass" : "FAIL");
      os << line;
    }
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    for (const auto& e : errors) os << "error: " << e << "\n";
    os << "result: " << (passed() ? "PASS" : "FAIL") << "\n";
    return os.str();
  }
};

inline nlohmann::json model_json(const ModelParams& m) {
  nlohmann::json a;
  switch (m.arrival.family()) {
    case ArrivalFamily::Exponential:
      a = {{"family", "exp"}, {"rate", m.arrival.rate()}};
      break;
    case ArrivalFamily::Erlang:
      a = {{"family", "erlang"},
           {"shape", m.arrival.shape()},
           {"rate", m.arrival.rate()}};
      break;
    case ArrivalFamily::Deterministic:
      a = {{"family", "det"}, {"value", m.arrival.det_value()}};
      break;
    case ArrivalFamily::HyperExp:
      a = {{"family", "hyperexp"},
           {"weights", m.arrival.weights()},
           {"rates", m.arrival.rates()}};
      break;
  }
  nlohmann::json s;
  if (const auto* d = std::get_if<DetService>(&m.service))
    s = {{"family", "det"}, {"b", d->b}};
  else {
    const auto& me = std::get<MixedErlang>(m.service);
    s = {{"family", "mixed_erlang"}, {"mu", me.mu()}, {"kappa", me.kappa()}};
  }
  return {{"p", m.p}, {"arrival", a}, {"service", s}, {"rho", m.rho()}};
}

inline nlohmann::json spec_json(const RunSpec& spec) {
  return {{"command", command_name(spec.command)},
          {"model", model_json(spec.model)},
          {"engine",
           {{"eps_tail", spec.engine.eps_tail},
            {"tol", spec.engine.tol},
            {"n", spec.engine.n},
            {"samples", spec.engine.samples},
            {"burn_in", spec.engine.burn_in},
            {"replications", spec.engine.replications},
            {"seed", spec.engine.seed}}},
          {"grid", {{"x_max", spec.output.grid.x_max}, {"step", spec.output.grid.step}}}};
}

namespace detail {

// Run one engine, translating a failure into a report entry named after the
// error class instead of letting it escape.
template <class Fn>
inline bool guarded(ValidationReport& rep, const std::string& eng, Fn&& fn) {
  auto rec = [&rep, &eng](const char* cls, const char* what) {
    rep.errors.push_back(eng + ": " + cls + ": " + what);
    rep.flag(cls);
  };
  try {
    fn();
    rep.engines.push_back(eng);
    return true;
  } catch (const UnstableP1& e) {
    rec("UnstableP1", e.what());
  } catch (const RootCountMismatch& e) {
    rec("RootCountMismatch", e.what());
  } catch (const NearMultipleRoots& e) {
    rec("NearMultipleRoots", e.what());
  } catch (const SeriesNotConverged& e) {
    rec("SeriesNotConverged", e.what());
  } catch (const SingularSystem& e) {
    rec("SingularSystem", e.what());
  } catch (const TailNotConverged& e) {
    rec("TailNotConverged", e.what());
  } catch (const IllConditioned& e) {
    rec("IllConditioned", e.what());
  } catch (const NoContraction& e) {
    rec("NoContraction", e.what());
  } catch (const MaxIterations& e) {
    rec("MaxIterations", e.what());
  } catch (const NumericalError& e) {
    rec("NumericalError", e.what());
  } catch (const InputError& e) {
    rec("InputError", e.what());
  }
  return false;
}

inline double sup_diff(const std::function<double(double)>& f,
                       const std::function<double(double)>& g, double x_max,
                       int points) {
  double worst = 0;
  for (int i = 0; i <= points; ++i) {
    const double x = x_max * i / points;
    worst = std::max(worst, std::abs(f(x) - g(x)));
  }
  return worst;
}

inline double monotone_defect(const std::function<double(double)>& f,
                              double x_max, int points) {
  double worst = 0;
  double prev = f(0.0);
  for (int i = 1; i <= points; ++i) {
    const double x = x_max * i / points;
    const double v = f(x);
    worst = std::max(worst, prev - v);
    prev = v;
  }
  return worst;
}

}  // namespace detail

inline ValidationReport run_validate(const RunSpec& spec) {
  ValidationReport rep;
  const ModelParams& m = spec.model;

  const auto stab = check_stability(m);
  rep.details["rho"] = stab.rho;
  if (stab.status == Stability::Unstable) {
    rep.errors.push_back(std::string("stability: UnstableP1: ") + stab.note);
    rep.flag("UnstableP1");
    return rep;
  }

  std::optional<MdSolution> md;
  std::optional<GiphSolution> gp, gp1;
  std::optional<FixedPointResult> fp;
  std::shared_ptr<const SimResult> sim;

  if (md_applicable(m))
    detail::guarded(rep, "md", [&] {
      MdOptions o;
      o.eps_tail = spec.engine.eps_tail;
      md.emplace(solve_md_any(to_md_params(m), o));
    });
  if (giph_applicable(m)) {
    detail::guarded(rep, "giph", [&] { gp.emplace(solve_giph(m)); });
    if (m.p == 1.0)
      detail::guarded(rep, "giph closed form",
                      [&] { gp1.emplace(solve_giph_p1(m)); });
  }
  if (fixedpoint_applicable(m))
    detail::guarded(rep, "fixedpoint", [&] {
      FixedPointOptions o;
      o.n = spec.engine.n;
      o.tol = spec.engine.tol;
      fp.emplace(solve_fixed_point_full(m, o));
    });
  detail::guarded(rep, "simulate", [&] {
    SimConfig cfg;
    cfg.samples = spec.engine.samples;
    cfg.burn_in = spec.engine.burn_in;
    cfg.seed = spec.engine.seed;
    cfg.replications = spec.engine.replications;
    sim = std::make_shared<const SimResult>(simulate(m, cfg));
  });

  const double X = fp ? fp->grid.x_max : spec.output.grid.x_max;
  const int pts = 4000;

  if (md) {
    for (const auto& w : md->warnings()) {
      rep.warnings.push_back("md: " + w);
      rep.flag("IllConditioned");
    }
    rep.details["md"] = make_output(*md).diagnostics;
    rep.add("md atom matches F(0)", std::abs(md->cdf(0.0) - md->atom()), 1e-12);
    if (md->kind() == MdSolution::Kind::Bands) {
      rep.add("md density jump at b", std::abs(density_jump_check(*md)), 1e-8);
      const double b = md->params().b;
      double worst = 0;
      for (int i = 1; i <= md->bands() && i * b <= X; ++i) {
        const double e = i * b;
        worst = std::max(
            worst, std::abs(md->cdf(std::nextafter(e, 0.0)) - md->cdf(e)));
      }
      rep.add("md band continuity", worst, 1e-10);
      rep.add("md tail bound", md->tail_bound(), spec.engine.eps_tail);
    }
    rep.add("md monotone",
            detail::monotone_defect([&](double x) { return md->cdf(x); }, X, pts),
            1e-12);
  }
  if (gp) {
    rep.details["giph"] = make_output(*gp).diagnostics;
    rep.add("giph atom matches F(0)", std::abs(gp->cdf(0.0) - gp->atom()), 1e-9);
    cplx mass = gp->atom();
    for (size_t i = 0; i < gp->roots().size(); ++i)
      mass -= gp->coeffs()[i] / gp->roots()[i];
    rep.add("giph normalization", std::abs(mass - 1.0), 1e-9);
    rep.add("giph collocation residual", gp->residual(), 1e-7);
    rep.add("giph monotone",
            detail::monotone_defect([&](double x) { return gp->cdf(x); }, X, pts),
            1e-12);
  }
  if (fp) {
    rep.details["fixedpoint"] = make_output(*fp).diagnostics;
    rep.add("fixedpoint residual", fp->residual, 10.0 * spec.engine.tol);
    rep.add("fixedpoint tail mass", 1.0 - fp->grid.values.back(),
            spec.engine.tol);
  }
  if (sim) rep.details["simulate"] = make_output(sim, spec.output.grid).diagnostics;

  if (gp && gp1) {
    double worst = std::abs(gp->atom() - gp1->atom());
    for (size_t i = 0; i < gp->roots().size(); ++i) {
      worst = std::max(worst, std::abs(gp->roots()[i] - gp1->roots()[i]));
      worst = std::max(worst, std::abs(gp->coeffs()[i] - gp1->coeffs()[i]));
    }
    rep.add("giph vs closed form coefficients", worst, 1e-8);
  }

  if (md && fp)
    rep.add("md vs fixedpoint KS",
            detail::sup_diff([&](double x) { return md->cdf(x); },
                             [&](double x) { return fp->grid.value_at(x); }, X,
                             pts),
            1e-4);
  if (gp && fp)
    rep.add("giph vs fixedpoint KS",
            detail::sup_diff([&](double x) { return gp->cdf(x); },
                             [&](double x) { return fp->grid.value_at(x); }, X,
                             pts),
            1e-3);

  if (sim) {
    const double total = static_cast<double>(sim->merged.size());
    const double gate = std::max(5e-3, 2.5 / std::sqrt(total));
    if (md)
      rep.add("md vs simulate KS",
              ks_statistic(sim->merged, [&](double x) { return md->cdf(x); }),
              gate);
    if (gp)
      rep.add("giph vs simulate KS",
              ks_statistic(sim->merged, [&](double x) { return gp->cdf(x); }),
              gate);
    if (!md && !gp && fp)
      rep.add("fixedpoint vs simulate KS",
              ks_statistic(sim->merged,
                           [&](double x) { return fp->grid.value_at(x); }),
              std::max(gate, 20.0 * spec.engine.tol));
  }

  return rep;
}

inline nlohmann::json report_json(const RunSpec& spec,
                                  const ValidationReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name},
                      {"value", c.value},
                      {"limit", c.limit},
                      {"pass", c.pass}});
  return {{"version", version_string},
          {"spec", spec_json(spec)},
          {"engines", rep.engines},
          {"checks", checks},
          {"warnings", rep.warnings},
          {"errors", rep.errors},
          {"flags", rep.flags},
          {"details", rep.details},
          {"passed", rep.passed()}};
}

// CSV: header x,cdf,pdf; floor(x_max/step)+1 rows; 17 significant digits; LF.
inline void emit_cdf_csv(std::ostream& os, const EngineOutput& eng,
                         const GridSpec& grid) {
  os << "x,cdf,pdf\n";
  const long rows =
      static_cast<long>(std::floor(grid.x_max / grid.step + 1e-9)) + 1;
  char buf[128];
  for (long i = 0; i < rows; ++i) {
    const double x = static_cast<double>(i) * grid.step;
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, eng.cdf(x),
                  eng.pdf(x));
    os << buf;
  }
}

// Companion summary for a single-engine run.
inline nlohmann::json engine_summary(const RunSpec& spec,
                                     const EngineOutput& eng) {
  nlohmann::json flags = nlohmann::json::array();
  if (!eng.warnings.empty()) flags.push_back("IllConditioned");
  return {{"version", version_string},
          {"engine", eng.name},
          {"spec", spec_json(spec)},
          {"atom", eng.atom},
          {"diagnostics", eng.diagnostics},
          {"warnings", eng.warnings},
          {"flags", flags}};
}

}  // namespace lq
