#include "cli.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "qhmm/fixtures.hpp"
#include "qhmm/io.hpp"
#include "qhmm/qhmm.hpp"

namespace qhmm::cli {
namespace {

using io::format_double;
using io::Json;

struct Common {
  std::string instrument_path;
  std::string fixture;
  std::string out_path;
  Tolerances tol;
};

Instrument load(const Common& c) {
  if (!c.instrument_path.empty() && !c.fixture.empty())
    fail(ErrorKind::invalid_input, "give either --instrument or --fixture, not both");
  Instrument raw = [&] {
    if (!c.fixture.empty()) return fixtures::by_name(c.fixture);
    if (c.instrument_path.empty()) fail(ErrorKind::invalid_input, "no instrument: pass --instrument FILE or --fixture NAME");
    return io::load_instrument(c.instrument_path);
  }();
  return Instrument(raw.dim(), raw.outcomes(), raw.declared_initial_state(), c.tol);
}

Instrument load_valid(const Common& c) {
  Instrument instr = load(c);
  if (!instr.valid()) fail(ErrorKind::invalid_input, "invalid instrument: " + instr.report().first_failure());
  return instr;
}

void emit(const Common& c, std::ostream& out, const std::string& text) {
  if (c.out_path.empty())
    out << text;
  else
    io::write_file_atomic(c.out_path, text);
}

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json margin_json(const PositivityMargin& m) {
  return {{"min_eigenvalue", m.min_eigenvalue},
          {"max_eigenvalue", m.max_eigenvalue},
          {"relative", m.relative},
          {"positive", to_string(m.positive)}};
}

Json diagnostics_json(const SpectralDiagnostics& d) {
  Json spec = Json::array();
  for (const Complex& z : d.peripheral_spectrum) spec.push_back({z.real(), z.imag()});
  return {{"spectral_radius", d.spectral_radius},
          {"peripheral_spectrum", spec},
          {"cluster_size", d.cluster_size},
          {"geometric_multiplicity", d.geometric_multiplicity},
          {"right_eigenvector", margin_json(d.right)},
          {"left_eigenvector", margin_json(d.left)},
          {"verdict", to_string(d.verdict)}};
}

TailDirection parse_direction(const std::string& s) {
  if (s == "upper") return TailDirection::upper;
  if (s == "lower") return TailDirection::lower;
  fail(ErrorKind::invalid_input, "direction must be 'upper' or 'lower', got '" + s + "'");
}

/// "a:b:steps" -> steps evenly spaced points from a to b.
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) fail(ErrorKind::invalid_input, "grid must look like a:b:steps, got '" + spec + "'");
  double a = 0.0, b = 0.0;
  long steps = 0;
  try {
    a = std::stod(parts[0]);
    b = std::stod(parts[1]);
    steps = std::stol(parts[2]);
  } catch (const std::exception&) {
    fail(ErrorKind::invalid_input, "grid must look like a:b:steps, got '" + spec + "'");
  }
  if (steps < 1) fail(ErrorKind::invalid_input, "grid needs at least one step");
  std::vector<double> grid;
  for (long i = 0; i < steps; ++i) grid.push_back(steps == 1 ? a : a + (b - a) * double(i) / double(steps - 1));
  return grid;
}

int cmd_validate(const Common& c, std::ostream& out) {
  const Instrument instr = load(c);
  Json checks = Json::array();
  for (const auto& ch : instr.report().checks)
    checks.push_back(
        {{"name", ch.name}, {"passed", ch.passed}, {"residual", number(ch.residual)}, {"message", ch.message}});
  const Json j = {{"valid", instr.valid()}, {"dim", instr.dim()}, {"outcomes", instr.size()}, {"checks", checks}};
  emit(c, out, j.dump(2) + "\n");
  return instr.valid() ? ok : invalid_input;
}

int cmd_classify(const Common& c, std::ostream& out) {
  const Instrument instr = load_valid(c);
  const Classification cls = classify(total_map(instr), c.tol);
  const Json j = {{"irreducible", cls.irreducible},
                  {"primitive", cls.primitive},
                  {"irreducible_verdict", to_string(cls.irreducible_verdict)},
                  {"primitive_verdict", to_string(cls.primitive_verdict)},
                  {"total_map", diagnostics_json(cls.map)},
                  {"tensor_square", diagnostics_json(cls.squared)}};
  emit(c, out, j.dump(2) + "\n");
  return ok;
}

int cmd_cgf(const Common& c, std::ostream& out, const std::string& grid) {
  const std::vector<double> thetas = parse_grid(grid);
  const CgfProfile profile(load_valid(c), c.tol);
  std::string csv = "theta,phi,phi_prime,delta_upper,delta_lower\n";
  for (double t : thetas) {
    const Deltas d = profile.deltas(t);
    csv += format_double(t) + "," + format_double(profile.phi(t)) + "," + format_double(profile.phi_prime(t)) + "," +
           format_double(d.upper) + "," + format_double(d.lower) + "\n";
  }
  emit(c, out, csv);
  return ok;
}

int cmd_bounds(const Common& c, std::ostream& out, double a, const std::vector<std::size_t>& ns,
               const std::string& direction, double oracle_cap) {
  if (ns.empty()) fail(ErrorKind::invalid_input, "--n needs at least one value");
  for (std::size_t n : ns)
    if (n == 0) fail(ErrorKind::invalid_input, "every n must be at least 1");
  const TailDirection dir = parse_direction(direction);
  const CgfProfile profile(load_valid(c), c.tol);
  OracleLimits limits;
  limits.max_storage = oracle_cap;
  bool any_infeasible = false;
  std::string csv = "n,lower_bound,upper_bound,oracle,feasible,first_feasible_n\n";
  for (std::size_t n : ns) {
    const TailBoundReport rep = tail_bounds(profile, a, n, dir);
    std::string oracle;
    try {
      const double p = exact_tail(profile.instrument(), profile.initial_state(), n, a, dir, limits);
      oracle = p > 0.0 ? format_double(-std::log(p)) : "inf";
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::precondition_violated) throw;
    }
    any_infeasible = any_infeasible || !rep.upper.feasible;
    csv += std::to_string(n) + "," + format_double(rep.exponent_lower_bound) + "," +
           (rep.upper.feasible ? format_double(rep.upper.value) : std::string("")) + "," + oracle + "," +
           (rep.upper.feasible ? "true" : "false") + "," +
           (rep.upper.first_feasible_n ? std::to_string(*rep.upper.first_feasible_n) : std::string("")) + "\n";
  }
  emit(c, out, csv);
  return any_infeasible ? infeasible : ok;
}

int cmd_rates(const Common& c, std::ostream& out, double delta, std::optional<double> t) {
  if (!(delta > 0.0)) fail(ErrorKind::invalid_input, "--delta must be positive");
  if (t && !(*t > 0.0 && *t < 0.5)) fail(ErrorKind::invalid_input, "--t must lie in (0, 1/2)");
  const CgfProfile profile(load_valid(c), c.tol);
  Json j = {{"delta", delta},
            {"mean", profile.phi_prime(0.0)},
            {"ldp_upper", ldp_rate(profile, delta, TailDirection::upper)},
            {"ldp_lower", ldp_rate(profile, delta, TailDirection::lower)},
            {"asymptotic_variance", profile.phi_second(0.0)},
            {"mdp", mdp_rate(profile, delta)}};
  if (t) {
    // Moderate deviations at threshold n^{-t} delta decay like exp(-n^{1-2t} * mdp).
    j["t"] = *t;
    j["mdp_speed_exponent"] = 1.0 - 2.0 * *t;
  }
  emit(c, out, j.dump(2) + "\n");
  return ok;
}

int cmd_variance(const Common& c, std::ostream& out, std::size_t n) {
  const Instrument instr = load_valid(c);
  const FundamentalData fd = fundamental_data(instr, c.tol);
  const VarianceBreakdown b = asymptotic_variance_breakdown(instr, c.tol);
  const CgfProfile profile(instr, c.tol);
  const double per_step = finite_n_variance(instr, fd.rho0, n) / static_cast<double>(n);
  const Json j = {{"stationary_mean", single_step_moments(instr, fd.rho0).mean},
                  {"single_step_variance", b.single_step_variance},
                  {"correction", b.correction},
                  {"asymptotic_variance", b.total},
                  {"finite_difference", profile.phi_second_finite_difference(0.0)},
                  {"finite_n", {{"n", n}, {"per_step_variance", per_step}}},
                  {"second_eigenvalue_modulus", fd.second_modulus},
                  {"ill_conditioned", fd.ill_conditioned}};
  emit(c, out, j.dump(2) + "\n");
  return ok;
}

int cmd_simulate(const Common& c, std::ostream& out, std::ostream& err, std::size_t n, std::size_t trials,
                 std::uint64_t seed) {
  if (n == 0 || trials == 0) fail(ErrorKind::invalid_input, "--n and --trials must be at least 1");
  const Instrument instr = load_valid(c);
  const Matrix rho = instr.initial_state().matrix();
  std::string csv = "trial,step,outcome_label,value\n";
  std::vector<double> means;
  std::string diagnostic;
  sample_trajectories(instr, rho, n, trials, seed, [&](std::size_t i, const Trajectory& t) {
    if (t.diagnostic && diagnostic.empty()) diagnostic = "trial " + std::to_string(i) + ": " + *t.diagnostic;
    double sum = 0.0;
    for (std::size_t k = 0; k < t.outcomes.size(); ++k) {
      csv += std::to_string(i) + "," + std::to_string(k + 1) + "," + instr.outcome(t.outcomes[k]).label + "," +
             format_double(t.values[k]) + "\n";
      sum += t.values[k];
    }
    means.push_back(sum / static_cast<double>(n));
  });
  if (!diagnostic.empty()) fail(ErrorKind::numerical, diagnostic);

  double avg = 0.0;
  for (double m : means) avg += m;
  avg /= static_cast<double>(means.size());
  Json summary = {{"n", n}, {"trials", trials}, {"seed", seed}, {"mean_of_sample_means", avg}};
  try {
    const CgfProfile profile(instr, c.tol);
    const double mean = profile.phi_prime(0.0);
    const double var = profile.phi_second(0.0);
    summary["phi_prime_0"] = mean;
    summary["phi_second_0"] = var;
    if (var > profile.variance_floor()) {
      std::vector<double> z;
      for (double m : means) z.push_back(std::sqrt(static_cast<double>(n)) * (m - mean));
      summary["ks"] = ks_distance_to_gaussian(std::move(z), var);
    } else {
      summary["ks"] = nullptr;
      summary["ks_note"] = "zero-variance instrument";
    }
  } catch (const Error& e) {
    summary["ks"] = nullptr;
    summary["ks_note"] = e.what();
  }

  if (c.out_path.empty()) {
    out << csv;
    err << summary.dump() << "\n";
  } else {
    io::write_file_atomic(c.out_path, csv);
    out << summary.dump(2) << "\n";
  }
  return ok;
}

int cmd_oracle(const Common& c, std::ostream& out, std::size_t n, double cap) {
  if (n == 0) fail(ErrorKind::invalid_input, "--n must be at least 1");
  const Instrument instr = load_valid(c);
  OracleLimits limits;
  limits.max_storage = cap;
  const SumDistribution dist = exact_sum_distribution(instr, instr.initial_state().matrix(), n, limits);
  std::string csv = "sum,probability\n";
  for (std::size_t k = 0; k < dist.size(); ++k)
    csv += format_double(dist.sum_value(k)) + "," + format_double(dist.probability(k)) + "\n";
  emit(c, out, csv);
  return ok;
}

int cmd_fcs_export(const Common& c, std::ostream& out) {
  emit(c, out, io::fcs_to_json(to_fcs(load_valid(c))).dump(2) + "\n");
  return ok;
}

int cmd_fcs_import(const Common& c, std::ostream& out, const std::string& path) {
  const Instrument instr = from_fcs(io::load_fcs(path), c.tol);
  emit(c, out, io::instrument_to_json(instr).dump(2) + "\n");
  return ok;
}

int cmd_fixture(const Common& c, std::ostream& out, const std::string& name, bool list) {
  if (list) {
    std::string text;
    for (const auto& f : fixtures::all()) text += f.name + "\n";
    emit(c, out, text);
    return ok;
  }
  if (name.empty()) fail(ErrorKind::invalid_input, "fixture name required (or --list)");
  emit(c, out, io::instrument_to_json(fixtures::by_name(name)).dump(2) + "\n");
  return ok;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_input: return invalid_input;
    case ErrorKind::precondition_violated: return precondition;
    case ErrorKind::infeasible: return infeasible;
    case ErrorKind::numerical: return failure;
  }
  return failure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite-length tail bounds and limit theorems for measurement processes on a quantum hidden system",
               "qhmm"};
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("-i,--instrument", c.instrument_path, "Instrument JSON file");
  app.add_option("--fixture", c.fixture, "Bundled instrument instead of a file");
  app.add_option("-o,--out", c.out_path, "Write the report here (atomically) instead of stdout");
  app.add_option("--tol-hermiticity", c.tol.hermiticity, "Relative Hermiticity tolerance");
  app.add_option("--tol-psd", c.tol.psd, "Positive semi-definiteness tolerance");
  app.add_option("--tol-trace", c.tol.trace_preservation, "Trace-preservation residual tolerance");
  app.add_option("--tol-eigenvalue", c.tol.eigenvalue, "Relative eigenvalue clustering radius");
  app.add_option("--tol-positivity", c.tol.positivity, "Relative positivity band for eigenvectors");

  auto* validate = app.add_subcommand("validate", "Validation report (JSON)");
  auto* classify_cmd = app.add_subcommand("classify", "Irreducibility and primitivity with diagnostics (JSON)");

  auto* cgf = app.add_subcommand("cgf", "CGF curve (CSV: theta, phi, phi', delta_upper, delta_lower)");
  std::string grid;
  cgf->add_option("--theta", grid, "Grid a:b:steps")->required();

  auto* bounds = app.add_subcommand("bounds", "Finite-n tail exponent bounds (CSV)");
  double level = 0.0;
  std::vector<std::size_t> ns;
  std::string direction = "upper";
  double bounds_cap = OracleLimits{}.max_storage;
  bounds->add_option("--a", level, "Level a")->required();
  bounds->add_option("--n", ns, "Comma-separated lengths")->required()->delimiter(',');
  bounds->add_option("--direction", direction, "upper or lower");
  bounds->add_option("--oracle-cap", bounds_cap, "Max atoms x d^2 for the exact oracle column");

  auto* rates = app.add_subcommand("rates", "Large and moderate deviation rates (JSON)");
  double delta = 0.0;
  std::optional<double> t_exp;
  rates->add_option("--delta", delta, "Deviation from the mean")->required();
  rates->add_option("--t", t_exp, "Moderate-deviation exponent in (0, 1/2)");

  auto* variance = app.add_subcommand("variance", "Asymptotic variance report (JSON)");
  std::size_t var_n = 10000;
  variance->add_option("--n", var_n, "Length of the finite-n cross-check");

  auto* simulate = app.add_subcommand("simulate", "Trajectories (CSV) and a CLT summary (JSON)");
  std::size_t sim_n = 0, trials = 0;
  std::uint64_t seed = 0;
  simulate->add_option("--n", sim_n, "Steps per trajectory")->required();
  simulate->add_option("--trials", trials, "Number of trajectories")->required();
  simulate->add_option("--seed", seed, "Base seed")->required();

  auto* oracle = app.add_subcommand("oracle", "Exact law of the sum (CSV: sum, probability)");
  std::size_t oracle_n = 0;
  double oracle_cap = OracleLimits{}.max_storage;
  oracle->add_option("--n", oracle_n, "Number of steps")->required();
  oracle->add_option("--cap", oracle_cap, "Max atoms x d^2");

  auto* fcs = app.add_subcommand("fcs", "Convert between instrument and FCS JSON");
  fcs->require_subcommand(1);
  auto* fcs_export = fcs->add_subcommand("export", "Instrument -> FCS JSON");
  auto* fcs_import = fcs->add_subcommand("import", "FCS JSON -> instrument JSON");
  std::string fcs_path;
  fcs_import->add_option("model", fcs_path, "FCS JSON file")->required();

  auto* fixture = app.add_subcommand("fixture", "Print a bundled instrument (JSON)");
  std::string fixture_name;
  bool fixture_list = false;
  fixture->add_option("name", fixture_name, "Fixture name");
  fixture->add_flag("--list", fixture_list, "List fixture names");

  std::vector<const char*> argv{"qhmm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return invalid_input;
  }

  try {
    if (*validate) return cmd_validate(c, out);
    if (*classify_cmd) return cmd_classify(c, out);
    if (*cgf) return cmd_cgf(c, out, grid);
    if (*bounds) return cmd_bounds(c, out, level, ns, direction, bounds_cap);
    if (*rates) return cmd_rates(c, out, delta, t_exp);
    if (*variance) return cmd_variance(c, out, var_n);
    if (*simulate) return cmd_simulate(c, out, err, sim_n, trials, seed);
    if (*oracle) return cmd_oracle(c, out, oracle_n, oracle_cap);
    if (*fcs_export) return cmd_fcs_export(c, out);
    if (*fcs_import) return cmd_fcs_import(c, out, fcs_path);
    if (*fixture) return cmd_fixture(c, out, fixture_name, fixture_list);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
  return failure;
}

}  // namespace qhmm::cli
