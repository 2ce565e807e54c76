#ifndef DVEM_EXPERIMENT_HPP
#define DVEM_EXPERIMENT_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/SparseExtra>

#include "dvem/analysis.hpp"
#include "dvem/cases.hpp"
#include "dvem/dg_forms.hpp"
#include "dvem/mesh.hpp"
#include "dvem/properties.hpp"
#include "dvem/vem_local.hpp"
#include "dvem/vi_solver.hpp"

namespace dvem {

/// Experiment description, read from JSON. Keys (all optional):
///
///   case              "clamped-stick" | "cosine-stick" | "slip-reference"
///   mesh_family       "uniform" | "figure1-hanging" | "quadtree"
///   base_subdivisions squares per axis on level 0 (level l uses base * 2^l)
///   levels            >= 2
///   delta             -1 | 0 | 1
///   gamma             number > 0 or "auto"
///   g                 friction bound; defaults to the case's value
///   boundary          {"bottom": "gamma2", "left": "gamma1", ...}; unnamed sides are gamma1
///   solver            {"tol": 1e-10, "rho": number | "auto", "max_iter": 20000}
///   seed, samples     randomness for sampled properties and calibration
///   output            CSV path for run; trace: CSV path for the Uzawa trace
struct ExperimentConfig {
  std::string case_name = "clamped-stick";
  std::string mesh_family = "uniform";
  int base_subdivisions = 4;
  int levels = 4;
  int delta = 1;
  std::optional<double> gamma; ///< empty means auto
  std::optional<double> g;
  std::map<std::string, std::string> boundary{{"bottom", "gamma2"}};
  double tol = 1e-10;
  std::optional<double> rho;
  int max_iter = 20000;
  std::uint32_t seed = 42;
  int samples = 200;
  std::string output;
  std::string trace;

  void validate() const {
    if (levels < 2) throw ConfigError("levels must be >= 2");
    check_parameters(delta, gamma.value_or(1.0));
    if (base_subdivisions < 1) throw ConfigError("base_subdivisions must be >= 1");
    static const std::set<std::string> families{"uniform", "figure1-hanging", "quadtree"};
    if (!families.count(mesh_family)) throw ConfigError("unknown mesh_family '" + mesh_family + "'");
    if (g && !(*g > 0.0)) throw ConfigError("g must be positive");
    if (!(tol > 0.0)) throw ConfigError("solver.tol must be positive");
    if (rho && !(*rho > 0.0)) throw ConfigError("solver.rho must be positive");
    if (max_iter < 1) throw ConfigError("solver.max_iter must be >= 1");
    if (samples < 1) throw ConfigError("samples must be >= 1");
    (void)BoundaryPartition::from_names(boundary);
    (void)make_case(case_name, g);
  }
};

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const char* key, const char* what) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' must be " + what);
  }
}

inline std::optional<double> auto_or_number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
  if (v.is_number()) return v.get<double>();
  throw ConfigError(std::string("config key '") + key + "' must be a number or \"auto\"");
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"case", "mesh_family", "base_subdivisions", "levels", "delta", "gamma", "g",
                                           "boundary", "solver", "seed", "samples", "output", "trace"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  if (j.contains("case")) c.case_name = detail::json_get<std::string>(j, "case", "a string");
  if (j.contains("mesh_family")) c.mesh_family = detail::json_get<std::string>(j, "mesh_family", "a string");
  if (j.contains("base_subdivisions")) c.base_subdivisions = detail::json_get<int>(j, "base_subdivisions", "an integer");
  if (j.contains("levels")) c.levels = detail::json_get<int>(j, "levels", "an integer");
  if (j.contains("delta")) c.delta = detail::json_get<int>(j, "delta", "an integer");
  if (j.contains("gamma")) c.gamma = detail::auto_or_number(j, "gamma");
  if (j.contains("g")) c.g = detail::json_get<double>(j, "g", "a number");
  if (j.contains("boundary"))
    c.boundary = detail::json_get<std::map<std::string, std::string>>(j, "boundary", "an object of side names");
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    if (!s.is_object()) throw ConfigError("config key 'solver' must be an object");
    for (const auto& [key, value] : s.items()) {
      if (key != "tol" && key != "rho" && key != "max_iter") throw ConfigError("unknown solver key '" + key + "'");
    }
    if (s.contains("tol")) c.tol = detail::json_get<double>(s, "tol", "a number");
    if (s.contains("rho")) c.rho = detail::auto_or_number(s, "rho");
    if (s.contains("max_iter")) c.max_iter = detail::json_get<int>(s, "max_iter", "an integer");
  }
  if (j.contains("seed")) c.seed = detail::json_get<std::uint32_t>(j, "seed", "a non-negative integer");
  if (j.contains("samples")) c.samples = detail::json_get<int>(j, "samples", "an integer");
  if (j.contains("output")) c.output = detail::json_get<std::string>(j, "output", "a string");
  if (j.contains("trace")) c.trace = detail::json_get<std::string>(j, "trace", "a string");
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// The case with the config's g and boundary partition applied. For analytic
/// cases the partition must be compatible with the closed-form solution.
inline ExactSolutionCase configured_case(const ExperimentConfig& cfg) {
  ExactSolutionCase c = make_case(cfg.case_name, cfg.g);
  c.partition = BoundaryPartition::from_names(cfg.boundary);
  if (!c.analytic()) return c;
  const Rect& d = c.domain;
  const std::array<std::pair<Point, Point>, 4> sides{{{{d.x0, d.y0}, {d.x1, d.y0}},
                                                      {{d.x1, d.y0}, {d.x1, d.y1}},
                                                      {{d.x1, d.y1}, {d.x0, d.y1}},
                                                      {{d.x0, d.y1}, {d.x0, d.y0}}}};
  for (int s = 0; s < 4; ++s) {
    const auto [a, b] = sides[static_cast<std::size_t>(s)];
    const Point n{(b.y - a.y) / distance(a, b), -(b.x - a.x) / distance(a, b)};
    const BoundaryTag tag = c.partition.tags[static_cast<std::size_t>(s)];
    for (int i = 0; i <= 64; ++i) {
      const Point x = a + (i / 64.0) * (b - a);
      const double flux = c.gradient(x).dot(to_eigen(n));
      const bool ok = tag == BoundaryTag::gamma2
                          ? std::abs(flux) <= c.g * (1 + 1e-12) && std::abs(c.u(x)) <= 1e-12
                          : std::abs(flux) <= 1e-12;
      if (!ok)
        throw ConfigError("boundary partition incompatible with case '" + c.name + "' on side " +
                          to_string(static_cast<DomainSide>(s)));
    }
  }
  return c;
}

/// Level l mesh of a family: base * 2^l squares per axis, then the family's
/// local refinements.
inline PolygonalMesh family_mesh(const std::string& family, const Rect& domain, const BoundaryPartition& partition,
                                 int base, int level) {
  const int n = base << level;
  PolygonalMesh m = build_uniform(domain, n, partition);
  auto refine_where = [&](auto pred) {
    std::vector<Index> marked;
    for (const Element& el : m.elements())
      if (pred(el.barycenter)) marked.push_back(el.id);
    m = refine_local(m, marked);
  };
  const double xm = domain.x0 + 0.5 * domain.width();
  const double ym = domain.y0 + 0.5 * domain.height();
  const double xq = domain.x0 + 0.25 * domain.width();
  const double yq = domain.y0 + 0.25 * domain.height();
  if (family == "uniform") return m;
  if (family == "figure1-hanging") {
    refine_where([&](Point p) { return p.x < xm; });
    return m;
  }
  if (family == "quadtree") {
    refine_where([&](Point p) { return p.x < xm && p.y < ym; });
    refine_where([&](Point p) { return p.x < xq && p.y < yq; });
    return m;
  }
  throw ConfigError("unknown mesh_family '" + family + "'");
}

/// Mesh, local operators and assembled system for one level.
struct LevelProblem {
  PolygonalMesh mesh;
  LocalElementOps ops;
  GlobalSystem system;
};

inline LevelProblem build_level(PolygonalMesh mesh, const ExactSolutionCase& c, int delta, double gamma) {
  LocalElementOps ops = build_local_ops(mesh);
  GlobalSystem sys = make_system(mesh, ops, c.f, c.g, delta, gamma);
  return {std::move(mesh), std::move(ops), std::move(sys)};
}

inline SolverConfig solver_config(const ExperimentConfig& cfg) {
  SolverConfig s;
  s.tol = cfg.tol;
  s.rho = cfg.rho;
  s.max_iter = cfg.max_iter;
  return s;
}

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  Index dofs = 0;
  BrokenNorms error;
  std::optional<double> eoc;
  int iterations = 0;
};

struct ConvergenceReport {
  std::string case_name;
  std::string mesh_family;
  bool reference = false;
  double gamma = 0.0;
  std::optional<GammaCalibration> calibration;
  std::vector<ConvergenceRow> rows;
};

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

inline void write_convergence_csv(std::ostream& out, const ConvergenceReport& r) {
  out << "level,h,N,err_1dg,err_grad,err_l2,err_penalty,eoc,iters\n";
  for (const auto& row : r.rows) {
    out << row.level << ',' << format_number(row.h) << ',' << row.dofs << ',' << format_number(row.error.norm_1dg())
        << ',' << format_number(row.error.grad()) << ',' << format_number(row.error.l2()) << ','
        << format_number(row.error.penalty_norm()) << ',' << (row.eoc ? format_number(*row.eoc) : "") << ','
        << row.iterations << '\n';
  }
}

/// Penalty used for a run: the configured value, or the calibrated one on the
/// level-0 mesh (kept fixed across levels).
inline std::pair<double, std::optional<GammaCalibration>> resolve_gamma(const ExperimentConfig& cfg,
                                                                         const PolygonalMesh& level0) {
  if (cfg.gamma) return {*cfg.gamma, std::nullopt};
  const LocalElementOps ops = build_local_ops(level0);
  const DofMap dofs = DofMap::build(level0);
  const DgOperators parts = assemble_forms(level0, dofs, ops);
  GammaCalibration cal = calibrate_gamma(parts, cfg.delta, cfg.seed, cfg.samples);
  return {cal.gamma, cal};
}

/// Error context for failures inside a level.
class LevelError : public SolverError {
public:
  LevelError(int level, const std::string& what) : SolverError("level " + std::to_string(level) + ": " + what) {}
};

inline ConvergenceReport run_convergence(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const ExactSolutionCase c = configured_case(cfg);
  ConvergenceReport report;
  report.case_name = c.name;
  report.mesh_family = cfg.mesh_family;
  report.reference = !c.analytic();

  const PolygonalMesh level0 = family_mesh(cfg.mesh_family, c.domain, c.partition, cfg.base_subdivisions, 0);
  const auto [gamma, calibration] = resolve_gamma(cfg, level0);
  report.gamma = gamma;
  report.calibration = calibration;
  if (log) {
    *log << "case " << c.name << ", family " << cfg.mesh_family << ", delta " << cfg.delta << ", gamma "
         << format_number(gamma);
    if (calibration) *log << " (auto, M_s = " << format_number(calibration->coercivity.constant()) << ")";
    *log << '\n';
  }

  std::ofstream trace_file;
  if (!cfg.trace.empty()) {
    trace_file.open(cfg.trace);
    if (!trace_file) throw ConfigError("cannot open trace file '" + cfg.trace + "'");
    trace_file.precision(15);
  }

  std::vector<double> hs, errs;
  for (int level = 0; level < cfg.levels; ++level) {
    const auto start = std::chrono::steady_clock::now();
    ConvergenceRow row;
    row.level = level;
    try {
      LevelProblem p =
          build_level(family_mesh(cfg.mesh_family, c.domain, c.partition, cfg.base_subdivisions, level), c, cfg.delta,
                      gamma);
      SolverConfig sc = solver_config(cfg);
      if (trace_file.is_open()) {
        trace_file << "# level " << level << '\n';
        sc.trace = &trace_file;
      }
      const VISolution sol = solve_uzawa(p.system, sc);
      row.h = p.mesh.h();
      row.dofs = p.system.size();
      row.iterations = sol.iterations;
      if (c.analytic()) {
        row.error = error_against_exact(p.mesh, p.ops, c, sol.u);
      } else {
        PolygonalMesh fine = refine_all(refine_all(p.mesh));
        std::vector<Index> ancestor(static_cast<std::size_t>(fine.num_elements()));
        // Two generations of parents: fine -> middle -> coarse.
        const PolygonalMesh middle = refine_all(p.mesh);
        for (Index k = 0; k < fine.num_elements(); ++k)
          ancestor[static_cast<std::size_t>(k)] = middle.parent(fine.parent(k));
        LevelProblem f = build_level(std::move(fine), c, cfg.delta, gamma);
        SolverConfig fsc = solver_config(cfg);
        const VISolution ref = solve_uzawa(f.system, fsc);
        row.error = error_against_reference(p.mesh, p.ops, sol.u, f.mesh, f.ops, ref.u, ancestor);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw LevelError(level, e.what());
    }
    hs.push_back(row.h);
    errs.push_back(row.error.norm_1dg());
    report.rows.push_back(row);
    if (log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      *log << "level " << level << ": h " << format_number(row.h) << ", N " << row.dofs << ", err_1dg "
           << format_number(row.error.norm_1dg()) << ", iters " << row.iterations << ", " << format_number(secs)
           << " s\n";
    }
  }
  const auto rates = eoc(hs, errs);
  for (std::size_t i = 0; i < rates.size(); ++i) report.rows[i].eoc = rates[i];
  return report;
}

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct DiagnosticsReport {
  double gamma = 0.0;
  std::vector<PropertyResult> properties;
  [[nodiscard]] bool all_passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed; });
  }
};

namespace detail {

inline std::string kv(const std::string& key, double value) { return key + " = " + format_number(value); }

/// a^K(p, q) for linear p, q through the element quadrature (exact for
/// quadratics on parallelograms).
inline double linear_energy(const Element& el, const std::function<double(Point)>& p, const Eigen::Vector2d& gp,
                            const std::function<double(Point)>& q, const Eigen::Vector2d& gq) {
  const ElementQuadrature quad = element_quadrature(el, 3);
  double s = 0.0;
  for (std::size_t i = 0; i < quad.points.size(); ++i)
    s += quad.weights[i] * (gp.dot(gq) + p(quad.points[i]) * q(quad.points[i]));
  return s;
}

} // namespace detail

/// Runs the property battery on the level-0 mesh of the configured family.
inline DiagnosticsReport run_diagnostics(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExactSolutionCase c = configured_case(cfg);
  const PolygonalMesh mesh = family_mesh(cfg.mesh_family, c.domain, c.partition, cfg.base_subdivisions, 0);
  const LocalElementOps ops = build_local_ops(mesh);
  const DofMap dofs = DofMap::build(mesh);
  const DgOperators parts = assemble_forms(mesh, dofs, ops);
  DiagnosticsReport rep;
  rep.gamma = resolve_gamma(cfg, mesh).first;
  std::mt19937 rng(cfg.seed);
  auto add = [&rep](std::string name, bool ok, std::string detail) {
    rep.properties.push_back({std::move(name), ok, std::move(detail)});
  };

  {
    const auto r = validate_regularity(mesh);
    add("regularity", r.ok, detail::kv("gamma1", r.gamma1) + ", " + detail::kv("gamma2", r.gamma2));
  }
  {
    double repro = 0.0;
    double mean = 0.0;
    for (Index k = 0; k < mesh.num_elements(); ++k) {
      const LocalProjector& p = ops.projector(k);
      repro = std::max(repro, (p.P * p.D - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
      // Boundary mean of v - Pi v, trapezoid-exact per edge.
      for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd v = gaussian_vector(p.num_dofs(), rng);
        double gap = 0.0;
        for (int i = 0; i < p.num_dofs(); ++i) {
          const auto [a, b] = mesh.edge_of(k, i);
          const int j = (i + 1) % p.num_dofs();
          gap += 0.5 * distance(a, b) * (v(i) + v(j) - p.value(v, a) - p.value(v, b));
        }
        mean = std::max(mean, std::abs(gap));
      }
    }
    add("projector", repro <= 1e-12 && mean <= 1e-12,
        detail::kv("max|PD-I|", repro) + ", " + detail::kv("max boundary-mean gap", mean));
  }
  {
    double worst = 0.0;
    for (Index k = 0; k < mesh.num_elements(); ++k) {
      const LocalProjector& p = ops.projector(k);
      const Eigen::VectorXd v = gaussian_vector(p.num_dofs(), rng);
      const Eigen::Vector3d pc = gaussian_vector(3, rng);
      Eigen::VectorXd pd(p.num_dofs());
      for (int i = 0; i < p.num_dofs(); ++i) {
        const Point x = mesh.vertex_of(k, i);
        pd(i) = pc(0) + pc(1) * x.x + pc(2) * x.y;
      }
      const double lhs = pd.dot(ops.form(k).A_h * v);
      const double rhs = detail::linear_energy(
          mesh.element(k), [&](Point x) { return pc(0) + pc(1) * x.x + pc(2) * x.y; }, pc.tail<2>(),
          [&](Point x) { return p.value(v, x); }, p.gradient(v));
      worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(rhs)));
    }
    add("k-consistency", worst <= 1e-12, detail::kv("max residual", worst));
  }
  {
    const SparseMatrix B1 = assemble_Bh(parts, 1, rep.gamma);
    double asym = Eigen::MatrixXd(B1 - SparseMatrix(B1.transpose())).cwiseAbs().maxCoeff();
    double ident = 0.0;
    for (int d : {-1, 0}) {
      const SparseMatrix Bd = assemble_Bh(parts, d, rep.gamma);
      const SparseMatrix diff = Bd - B1 - (1.0 - d) * SparseMatrix(parts.E.transpose());
      ident = std::max(ident, diff.nonZeros() ? Eigen::MatrixXd(diff).cwiseAbs().maxCoeff() : 0.0);
    }
    add("symmetry", asym <= 1e-12 && ident <= 1e-12,
        detail::kv("max|B1-B1^T|", asym) + ", " + detail::kv("delta identity residual", ident));
  }
  const SparseMatrix N = norm_matrix(parts);
  {
    const SparseMatrix B = assemble_Bh(parts, cfg.delta, rep.gamma);
    const CoercivityReport cr = coercivity_sample(B, N, cfg.samples, rng);
    std::string d = detail::kv("M_s", cr.constant()) + ", " + detail::kv("sampled", cr.sampled);
    if (cr.exact) d += ", " + detail::kv("min eigenvalue", *cr.exact);
    add("coercivity", cr.constant() >= 1e-3, d);

    const PolygonalMesh finer = refine_all(mesh);
    const LocalElementOps fops = build_local_ops(finer);
    const DgOperators fparts = assemble_forms(finer, DofMap::build(finer), fops);
    const CoercivityReport fr =
        coercivity_sample(assemble_Bh(fparts, cfg.delta, rep.gamma), norm_matrix(fparts), cfg.samples, rng);
    // The penalty is calibrated once and kept on finer levels.
    add("coercivity under refinement", fr.constant() >= 1e-3,
        detail::kv("M_s refined", fr.constant()) + ", " + detail::kv("M_s", cr.constant()));
  }
  {
    const ContinuityReport cr = continuity_sample(parts, cfg.samples, rng);
    add("continuity", std::isfinite(cr.bulk) && cr.penalty <= 1.0 + 1e-12,
        detail::kv("C bulk", cr.bulk) + ", " + detail::kv("penalty ratio", cr.penalty));
  }
  {
    const SparseMatrix Npi = projected_norm_matrix(mesh, dofs, ops, parts);
    const double bound = projection_bound_sample(Npi, N, cfg.samples, rng);
    add("projection bound", bound <= 10.0, detail::kv("max ||Pi w||/||w||", bound));
  }
  {
    double worst = 0.0;
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 50; ++trial) {
      PiecewiseLinear v, w;
      for (Index k = 0; k < mesh.num_elements(); ++k) {
        v.coeffs.emplace_back(normal(rng), normal(rng), normal(rng));
        w.coeffs.emplace_back(normal(rng), normal(rng), normal(rng));
      }
      const double lhs = element_boundary_flux(mesh, v, w);
      const double rhs = skeleton_flux_split(mesh, v, w);
      worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
    }
    add("jump identity", worst <= 1e-12, detail::kv("max residual", worst));
  }
  return rep;
}

/// Writes B and F of a level to `<prefix>_B.mtx` and `<prefix>_F.mtx`.
inline void export_matrix_market(const GlobalSystem& sys, const std::string& prefix) {
  if (!Eigen::saveMarket(sys.B, prefix + "_B.mtx")) throw ConfigError("cannot write " + prefix + "_B.mtx");
  if (!Eigen::saveMarketVector(sys.F, prefix + "_F.mtx")) throw ConfigError("cannot write " + prefix + "_F.mtx");
}

inline void write_diagnostics(std::ostream& out, const DiagnosticsReport& rep) {
  out << "gamma = " << format_number(rep.gamma) << '\n';
  for (const auto& p : rep.properties) out << (p.passed ? "PASS " : "FAIL ") << p.name << ": " << p.detail << '\n';
}

} // namespace dvem

#endif // DVEM_EXPERIMENT_HPP
