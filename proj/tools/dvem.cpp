// dvem: convergence runs, property checks and mesh export for the DG-VEM
// friction solver.
//
// Exit codes: 0 success, 1 configuration error, 2 solver failure,
// 3 property check failure.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dvem/experiment.hpp"
#include "dvem/mesh_io.hpp"

namespace {

enum ExitCode { ok = 0, config_error = 1, solver_failure = 2, property_failure = 3 };

struct Overrides {
  std::string config;
  std::optional<int> levels;
  std::optional<int> delta;
  std::string gamma;
  std::optional<std::uint32_t> seed;
  std::string out;
  std::string trace;
  std::string export_prefix;
};

dvem::ExperimentConfig resolve(const Overrides& o) {
  dvem::ExperimentConfig cfg = o.config.empty() ? dvem::ExperimentConfig{} : dvem::load_config(o.config);
  if (o.levels) cfg.levels = *o.levels;
  if (o.delta) cfg.delta = *o.delta;
  if (!o.gamma.empty()) {
    if (o.gamma == "auto") {
      cfg.gamma.reset();
    } else {
      try {
        std::size_t used = 0;
        cfg.gamma = std::stod(o.gamma, &used);
        if (used != o.gamma.size()) throw std::invalid_argument(o.gamma);
      } catch (const std::exception&) {
        throw dvem::ConfigError("--gamma must be a number or 'auto', got '" + o.gamma + "'");
      }
    }
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output = o.out;
  if (!o.trace.empty()) cfg.trace = o.trace;
  cfg.validate();
  return cfg;
}

int run(const Overrides& o) {
  const dvem::ExperimentConfig cfg = resolve(o);
  const dvem::ConvergenceReport report = dvem::run_convergence(cfg, &std::cerr);
  if (cfg.output.empty()) {
    dvem::write_convergence_csv(std::cout, report);
  } else {
    std::ofstream out(cfg.output);
    if (!out) throw dvem::ConfigError("cannot open output file '" + cfg.output + "'");
    dvem::write_convergence_csv(out, report);
    std::cerr << "wrote " << cfg.output << '\n';
  }
  if (!o.export_prefix.empty()) {
    const dvem::ExactSolutionCase c = dvem::configured_case(cfg);
    const dvem::LevelProblem p = dvem::build_level(
        dvem::family_mesh(cfg.mesh_family, c.domain, c.partition, cfg.base_subdivisions, 0), c, cfg.delta,
        report.gamma);
    dvem::export_matrix_market(p.system, o.export_prefix);
  }
  return ok;
}

int check(const Overrides& o) {
  const dvem::ExperimentConfig cfg = resolve(o);
  const dvem::DiagnosticsReport rep = dvem::run_diagnostics(cfg);
  dvem::write_diagnostics(std::cout, rep);
  return rep.all_passed() ? ok : property_failure;
}

int mesh(const Overrides& o, const std::string& show, int level) {
  if (!show.empty()) {
    std::ifstream in(show);
    if (!in) throw dvem::ConfigError("cannot open mesh file '" + show + "'");
    const dvem::PolygonalMesh m = dvem::read_mesh(in);
    const auto reg = dvem::validate_regularity(m);
    std::cout << "elements " << m.num_elements() << "\nsegments " << m.num_segments() << " (internal "
              << m.count(dvem::SegmentKind::internal) << ", boundary " << m.count(dvem::SegmentKind::boundary)
              << ")\nh " << dvem::format_number(m.h()) << "\nregularity gamma1 " << dvem::format_number(reg.gamma1)
              << ", gamma2 " << dvem::format_number(reg.gamma2) << (reg.ok ? "" : " (below floor)") << '\n';
    return ok;
  }
  const dvem::ExperimentConfig cfg = resolve(o);
  if (level < 0) throw dvem::ConfigError("--level must be non-negative");
  const dvem::ExactSolutionCase c = dvem::configured_case(cfg);
  const dvem::PolygonalMesh m = dvem::family_mesh(cfg.mesh_family, c.domain, c.partition, cfg.base_subdivisions, level);
  if (cfg.output.empty()) {
    dvem::write_mesh(std::cout, m);
  } else {
    std::ofstream out(cfg.output);
    if (!out) throw dvem::ConfigError("cannot open output file '" + cfg.output + "'");
    dvem::write_mesh(out, m);
  }
  return ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discontinuous virtual elements for a scalar friction problem"};
  app.require_subcommand(1);
  Overrides o;
  std::string show;
  int level = 0;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--delta", o.delta, "symmetry parameter (-1, 0 or 1)");
    sub->add_option("--gamma", o.gamma, "penalty parameter or 'auto'");
    sub->add_option("--seed", o.seed, "seed for sampled properties");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "solve on a mesh family and print the convergence table");
  add_common(run_cmd);
  run_cmd->add_option("--levels", o.levels, "number of refinement levels (>= 2)");
  run_cmd->add_option("--out", o.out, "CSV output path (default: stdout)");
  run_cmd->add_option("--trace", o.trace, "CSV path for the Uzawa iteration trace");
  run_cmd->add_option("--export", o.export_prefix, "write level-0 B and F as MatrixMarket <prefix>_B.mtx, _F.mtx");

  CLI::App* check_cmd = app.add_subcommand("check", "run the property checks on the level-0 mesh");
  add_common(check_cmd);

  CLI::App* mesh_cmd = app.add_subcommand("mesh", "write a family mesh, or summarize a mesh file");
  add_common(mesh_cmd);
  mesh_cmd->add_option("--show", show, "mesh file to summarize")->check(CLI::ExistingFile);
  mesh_cmd->add_option("--level", level, "refinement level to write");
  mesh_cmd->add_option("--out", o.out, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*run_cmd) return run(o);
    if (*check_cmd) return check(o);
    return mesh(o, show, level);
  } catch (const dvem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const dvem::MeshError& e) {
    std::cerr << "mesh error: " << e.what() << '\n';
    return config_error;
  } catch (const dvem::Error& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return solver_failure;
  }
}
