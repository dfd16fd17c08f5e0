// lqsolve: solve, simulate, and cross-validate the reflected sign-flip
// recursion W <- max(0, B - A + Y W) from a config file.
//
//   lqsolve <giph|md|fixedpoint|simulate|validate> --config FILE
//           [--out DIR] [--seed U64] [--samples N] [--grid MAX:STEP] [--json]
//
// Exit codes: 0 pass, 1 validation failure, 2 input error, 3 numerical failure.

#include <lq/validate.hpp>
#include <lq/version.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lq::InputError("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lq::InputError("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw lq::InputError("write failed for '" + path.string() + "'");
}

int run_validate_command(const lq::RunSpec& spec, bool json_mode) {
  const lq::ValidationReport rep = lq::run_validate(spec);
  const nlohmann::json j = lq::report_json(spec, rep);
  write_file(fs::path(spec.output.dir) / spec.output.json, j.dump(2) + "\n");
  if (json_mode)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << rep.table();
  return rep.passed() ? 0 : 1;
}

int run_engine_command(const lq::RunSpec& spec, bool json_mode) {
  lq::EngineOutput out;
  std::shared_ptr<const lq::SimResult> sim;
  switch (spec.command) {
    case lq::Command::Md: {
      lq::MdOptions o;
      o.eps_tail = spec.engine.eps_tail;
      out = lq::make_output(lq::solve_md_any(lq::to_md_params(spec.model), o));
      break;
    }
    case lq::Command::Giph:
      out = lq::make_output(lq::solve_giph(spec.model));
      break;
    case lq::Command::FixedPoint: {
      lq::FixedPointOptions o;
      o.n = spec.engine.n;
      o.tol = spec.engine.tol;
      out = lq::make_output(lq::solve_fixed_point_full(spec.model, o));
      break;
    }
    case lq::Command::Simulate: {
      lq::SimConfig cfg;
      cfg.samples = spec.engine.samples;
      cfg.burn_in = spec.engine.burn_in;
      cfg.seed = spec.engine.seed;
      cfg.replications = spec.engine.replications;
      sim = std::make_shared<const lq::SimResult>(lq::simulate(spec.model, cfg));
      out = lq::make_output(sim, spec.output.grid);
      break;
    }
    case lq::Command::Validate:
      throw lq::InputError("validate is handled separately");
  }

  std::ostringstream csv;
  lq::emit_cdf_csv(csv, out, spec.output.grid);
  write_file(fs::path(spec.output.dir) / spec.output.csv, csv.str());

  if (sim && !spec.output.samples_csv.empty()) {
    std::ostringstream col;
    col << "w\n";
    char buf[40];
    for (double w : sim->merged.sorted()) {
      std::snprintf(buf, sizeof buf, "%.17g\n", w);
      col << buf;
    }
    write_file(fs::path(spec.output.dir) / spec.output.samples_csv, col.str());
  }

  const nlohmann::json j = lq::engine_summary(spec, out);
  write_file(fs::path(spec.output.dir) / spec.output.json, j.dump(2) + "\n");
  if (json_mode) std::cout << j.dump(2) << "\n";
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exact steady-state waiting times for W <- max(0, B - A + Y W)"};
  app.set_version_flag("--version", std::string(lq::version_string));
  app.require_subcommand(1);

  std::string config, out_dir, grid;
  uint64_t seed = 0;
  long samples = 0;
  bool json_mode = false;

  const char* names[] = {"giph", "md", "fixedpoint", "simulate", "validate"};
  const char* descs[] = {
      "transform solver for phase-type service",
      "band solver for deterministic service, exponential arrivals",
      "contraction iteration of the distributional fixed point",
      "stochastic simulation of the recursion",
      "run every applicable engine and cross-check the results"};
  for (int i = 0; i < 5; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descs[i]);
    sub->add_option("--config", config, "model config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    sub->add_option("--seed", seed, "simulator seed (overrides [engine] seed)");
    sub->add_option("--samples", samples,
                    "simulator samples per replication (overrides [engine])");
    sub->add_option("--grid", grid, "emission grid as <max>:<step>");
    sub->add_flag("--json", json_mode, "print the machine-readable report");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    lq::RunSpec spec = lq::parse_config(read_file(config));
    CLI::App* sub = app.get_subcommands().front();
    lq::command_from_name(sub->get_name(), spec.command);
    if (sub->count("--out")) spec.output.dir = out_dir;
    if (sub->count("--seed")) spec.engine.seed = seed;
    if (sub->count("--samples")) {
      if (samples < 1) throw lq::InputError("samples must be at least 1");
      spec.engine.samples = samples;
    }
    if (sub->count("--grid")) spec.output.grid = lq::parse_grid(grid);
    fs::create_directories(spec.output.dir);

    if (spec.command == lq::Command::Validate)
      return run_validate_command(spec, json_mode);
    return run_engine_command(spec, json_mode);
  } catch (const lq::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lq::UnstableP1& e) {
    std::cerr << "error: UnstableP1: " << e.what() << "\n";
    return 3;
  } catch (const lq::IllConditioned& e) {
    std::cerr << "error: IllConditioned: " << e.what() << "\n";
    return 3;
  } catch (const lq::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
