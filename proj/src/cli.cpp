#include "cli.hpp"

#include "magchain/magchain.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <sstream>

namespace magchain::cli {
namespace {

namespace fs = std::filesystem;

struct Grid {
  double lo, hi, step;
};

struct Options {
  std::string config;
  std::string out_dir = ".";
  std::string design_table;
  unsigned threads = 0;

  // solve
  double theta_deg = 0.0;
  int t = 0;
  bool trace = false;

  // sweep / efficiency
  std::string vary = "gamma";
  std::string profile = "both";
  Grid gamma{0.0, 180.0, 10.0};
  Grid field{35.0, 45.0, 1.0};
  Grid lumen{40.0, 140.0, 10.0};

  // match-springs
  std::string catalog;
  std::string policy = "nearest";
};

std::string resolve_config(const std::string& arg) {
  const char* dir = std::getenv(kConfigDirEnv);
  if (arg.empty()) {
    if (!dir || !*dir) throw ConfigError("--config", std::string("no config given and ") + kConfigDirEnv + " is unset");
    return (fs::path(dir) / "default.json").string();
  }
  const fs::path p(arg);
  if (p.is_relative() && !fs::exists(p) && dir && *dir && fs::exists(fs::path(dir) / p))
    return (fs::path(dir) / p).string();
  return arg;
}

void write_output(const fs::path& dir, const std::string& name, const std::string& content, RunManifest& m) {
  csv::write_atomic(dir / name, content);
  m.outputs.push_back(name);
}

// Stiffness priority: --design-table, then the config, then the designer.
CatheterSpec with_resolved_stiffness(const Specs& specs, const Options& o, RunManifest& m) {
  std::vector<double> k;
  std::string source;
  if (!o.design_table.empty()) {
    k = read_design_stiffness(o.design_table);
    if (static_cast<int>(k.size()) != specs.catheter.segments())
      throw ConfigError(o.design_table, "design table has " + std::to_string(k.size()) + " rows, config has " +
                                            std::to_string(specs.catheter.segments()) + " segments");
    source = "design-table";
  } else if (specs.catheter.has_stiffnesses()) {
    k = specs.catheter.stiffnesses();
    source = "config";
  } else {
    k = design_all(specs.catheter, specs.environment).stiffness;
    source = "designer";
  }
  m.parameters["stiffness_source"] = source;
  m.parameters["bending_stiffness_Nm_per_rad"] = k;
  return specs.catheter.with_stiffnesses(k);
}

nlohmann::json grid_json(const Grid& g, const char* unit) {
  return {{"min", g.lo}, {"max", g.hi}, {"step", g.step}, {"unit", unit}};
}

int cmd_design(const Specs& specs, const Options& o, RunManifest& m, std::ostream& out) {
  const auto table = design_all(specs.catheter, specs.environment);
  m.warnings = table.warnings;
  write_output(o.out_dir, "design_table.csv", design_table_csv(table), m);
  write_output(o.out_dir, "design_trace.csv", design_trace_csv(table), m);
  for (const auto& s : table.steps)
    out << "k_b," << s.n << " = " << csv::fmt("%.4f", s.stiffness * 1e5) << "e-5 N*m/rad\n";
  return kOk;
}

int cmd_solve(const Specs& specs, const Options& o, RunManifest& m, std::ostream& out) {
  const int N = specs.catheter.segments();
  const int t = o.t == 0 ? N : o.t;
  if (t < 1 || t > N) throw ConfigError("--t", "must be in 1.." + std::to_string(N));
  const auto spec = with_resolved_stiffness(specs, o, m);
  m.parameters["theta_deg"] = o.theta_deg;
  m.parameters["t"] = t;

  std::vector<IterationRecord> trace;
  SolveOptions opts;
  if (o.trace) opts.trace = &trace;
  const auto c = solve_shape_continuation(units::from_deg(o.theta_deg), t, spec, specs.environment, opts);
  const auto r = scaled_residual(c.angles, c.theta, spec, specs.environment);
  m.parameters["residual_norm"] = r.values.lpNorm<Eigen::Infinity>();

  std::ostringstream os;
  os << "# magchain-csv v1 shape theta_deg=" << csv::fmt("%.6f", o.theta_deg) << " t=" << t << '\n';
  os << "magnet,x_mm,y_mm,z_mm,alpha_deg\n";
  for (int n = 1; n <= t + 1; ++n) {
    const Vec3 p = c.position(n);
    os << n << ',' << csv::fmt("%.6f", units::to_mm(p.x()) + 0.0) << ',' << csv::fmt("%.6f", units::to_mm(p.y()) + 0.0)
       << ',' << csv::fmt("%.6f", units::to_mm(p.z()) + 0.0) << ','
       << (n <= t ? csv::fmt("%.6f", units::to_deg(c.angles[n - 1])) : std::string{}) << '\n';
  }
  write_output(o.out_dir, "shape.csv", os.str(), m);
  if (o.trace) {
    std::ostringstream ts;
    write_iteration_trace(ts, trace);
    write_output(o.out_dir, "solve_trace.csv", ts.str(), m);
  }
  out << "sum alpha = " << csv::fmt("%.6f", units::to_deg(c.angles.sum())) << " deg, residual "
      << csv::fmt("%.3e", m.parameters["residual_norm"].get<double>()) << '\n';
  return kOk;
}

std::vector<double> gamma_grid(const Options& o) { return SweepGrid::range_deg(o.gamma.lo, o.gamma.hi, o.gamma.step); }

int finish_sweep(const std::vector<SweepRecord>& records, RunManifest& m, std::ostream& out) {
  for (const auto& r : records)
    if (!r.ok)
      m.failures.push_back("gamma=" + csv::fmt("%.3f", units::to_deg(r.gamma)) + " B=" +
                           csv::fmt("%.3f", units::to_mT(r.field)) + " dp=" +
                           csv::fmt("%.3f", units::to_mm(r.lumen_distance)) + ": " + r.error);
  const double fraction = success_fraction(records);
  m.parameters["success_fraction"] = fraction;
  out << records.size() - m.failures.size() << "/" << records.size() << " grid points solved\n";
  return fraction >= 0.95 ? kOk : kPartialSweep;
}

int cmd_sweep(const Specs& specs, const Options& o, RunManifest& m, std::ostream& out) {
  const auto spec = with_resolved_stiffness(specs, o, m);
  const auto& env = specs.environment;
  SweepGrid grid{gamma_grid(o), {env.field}, {env.lumen_distance}};
  m.parameters["vary"] = o.vary;
  m.parameters["gamma_grid"] = grid_json(o.gamma, "deg");
  std::string name;
  if (o.vary == "B") {
    grid.fields = SweepGrid::range(units::from_mT(o.field.lo), units::from_mT(o.field.hi), units::from_mT(o.field.step));
    m.parameters["field_grid"] = grid_json(o.field, "mT");
    name = "sweep_B";
  } else if (o.vary == "dp") {
    grid.lumen_distances =
        SweepGrid::range(units::from_mm(o.lumen.lo), units::from_mm(o.lumen.hi), units::from_mm(o.lumen.step));
    m.parameters["lumen_distance_grid"] = grid_json(o.lumen, "mm");
    name = "sweep_dp";
  } else {
    name = "pivot_vs_gamma";
  }
  const auto records = sweep(grid, spec, env, {}, o.threads);
  const std::string content = name == "pivot_vs_gamma" ? pivot_vs_gamma_csv(records) : sweep_csv(records, name);
  write_output(o.out_dir, name + ".csv", content, m);
  return finish_sweep(records, m, out);
}

int cmd_efficiency(const Specs& specs, const Options& o, RunManifest& m, std::ostream& out) {
  const auto optimized = with_resolved_stiffness(specs, o, m);
  const auto& env = specs.environment;
  const SweepGrid grid{gamma_grid(o), {env.field}, {env.lumen_distance}};
  m.parameters["profile"] = o.profile;
  m.parameters["gamma_grid"] = grid_json(o.gamma, "deg");

  std::vector<ProfileRecords> profiles;
  std::vector<SweepRecord> all;
  if (o.profile == "optimized" || o.profile == "both")
    profiles.push_back({"optimized", sweep(grid, optimized, env, {}, o.threads)});
  if (o.profile == "nonoptimized" || o.profile == "both") {
    const auto k = nonoptimized_profile(optimized.stiffnesses());
    if (static_cast<int>(k.size()) != optimized.segments())
      throw ConfigError("segments", "the non-optimized profile is defined for six segments");
    m.parameters["nonoptimized_stiffness_Nm_per_rad"] = k;
    profiles.push_back({"nonoptimized", sweep(grid, optimized.with_stiffnesses(k), env, {}, o.threads)});
  }
  for (const auto& p : profiles) all.insert(all.end(), p.records.begin(), p.records.end());
  write_output(o.out_dir, "efficiency.csv", efficiency_csv(profiles), m);
  return finish_sweep(all, m, out);
}

int cmd_match(const Options& o, RunManifest& m, std::ostream& out) {
  if (o.design_table.empty()) throw ConfigError("--design-table", "required for match-springs");
  const auto design = read_design_stiffness(o.design_table);
  const auto catalog = o.catalog.empty() ? generate_catalog() : read_catalog_csv(o.catalog);
  const auto policy = o.policy == "one-to-one" ? MatchPolicy::one_to_one : MatchPolicy::nearest;
  m.parameters["design_table"] = o.design_table;
  m.parameters["catalog"] = o.catalog.empty() ? "synthetic-grid" : o.catalog;
  m.parameters["catalog_entries"] = catalog.size();
  m.parameters["policy"] = o.policy;
  const auto matches = match_catalog(design, catalog, policy);
  write_output(o.out_dir, "spring_match.csv", match_csv(matches), m);
  for (const auto& s : matches) out << "spring " << s.n << ": e_kb = " << csv::fmt("%.2f", 100.0 * s.relative_error) << "%\n";
  return kOk;
}

void add_gamma_grid(CLI::App* app, Options& o) {
  app->add_option("--gamma-min", o.gamma.lo, "Smallest steering angle [deg]")->capture_default_str();
  app->add_option("--gamma-max", o.gamma.hi, "Largest steering angle [deg]")->capture_default_str();
  app->add_option("--gamma-step", o.gamma.step, "Steering-angle step [deg]")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_common(CLI::App* app, Options& o, bool design_table) {
  app->add_option("-o,--out-dir", o.out_dir, "Directory for CSV outputs and manifest.json (created if missing)")
      ->capture_default_str();
  if (design_table)
    app->add_option("--design-table", o.design_table,
                    "Design-table CSV supplying k_b [N*m/rad]; overrides config stiffnesses")
        ->check(CLI::ExistingFile);
}

struct Failure {
  std::string type;
  int code;
};

Failure classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return {"config_error", kInputError};
  if (dynamic_cast<const ValidationError*>(&e)) return {"validation_error", kInputError};
  if (dynamic_cast<const DesignFailure*>(&e)) return {"design_failure", kSolverFailure};
  if (dynamic_cast<const SolverFailure*>(&e)) return {"solver_failure", kSolverFailure};
  if (dynamic_cast<const SingularityError*>(&e)) return {"singularity", kSolverFailure};
  if (dynamic_cast<const DegenerateGeometryError*>(&e)) return {"degenerate_geometry", kSolverFailure};
  if (dynamic_cast<const DomainError*>(&e)) return {"domain_error", kInputError};
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return {"io_error", kInputError};
  return {"internal_error", 1};
}

void report(std::ostream& err, const std::string& type, const std::string& message, int code,
            const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j{{"type", type}, {"message", message}, {"exit_code", code}};
  j.update(extra);
  err << nlohmann::json{{"error", j}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Design and analysis of magnet-spring chain catheters.\n"
               "Config files use mm, mT and degrees (or SI with \"units\": \"SI\"); "
               "bending stiffness is always N*m/rad. CSV outputs use mm, mT and degrees.",
               "magchain"};
  app.require_subcommand(1);
  app.add_option("-c,--config", o.config,
                 std::string("JSON config. Relative paths are also looked up in $") + kConfigDirEnv +
                     "; if omitted, $" + kConfigDirEnv + "/default.json is used");
  app.add_option("--threads", o.threads, "Worker threads for sweeps (0 = hardware concurrency)")->capture_default_str();

  auto* design = app.add_subcommand("design", "Design k_b,1..N; writes design_table.csv and design_trace.csv");
  add_common(design, o, false);

  auto* solve = app.add_subcommand("solve", "Equilibrium shape for a field direction; writes shape.csv (positions mm, alpha deg)");
  add_common(solve, o, true);
  solve->add_option("--theta", o.theta_deg, "Field angle from +z toward -y [deg]")->required();
  solve->add_option("--t", o.t, "Movable segments (1..N, default N)");
  solve->add_flag("--trace", o.trace, "Also write solve_trace.csv (Newton iterations, angles in deg)");

  auto* sw = app.add_subcommand("sweep", "Pivot-stability sweeps; writes pivot_vs_gamma.csv, sweep_B.csv or sweep_dp.csv");
  add_common(sw, o, true);
  sw->add_option("--vary", o.vary, "Swept parameter besides gamma: gamma, B or dp")
      ->check(CLI::IsMember({"gamma", "B", "dp"}))
      ->capture_default_str();
  add_gamma_grid(sw, o);
  sw->add_option("--B-min", o.field.lo, "Smallest field magnitude [mT]")->capture_default_str();
  sw->add_option("--B-max", o.field.hi, "Largest field magnitude [mT]")->capture_default_str();
  sw->add_option("--B-step", o.field.step, "Field step [mT]")->capture_default_str()->check(CLI::PositiveNumber);
  sw->add_option("--dp-min", o.lumen.lo, "Smallest lumen distance d_p [mm]")->capture_default_str();
  sw->add_option("--dp-max", o.lumen.hi, "Largest lumen distance d_p [mm]")->capture_default_str();
  sw->add_option("--dp-step", o.lumen.step, "Lumen-distance step [mm]")->capture_default_str()->check(CLI::PositiveNumber);

  auto* eff = app.add_subcommand("efficiency", "Bending and propulsion efficiencies; writes efficiency.csv");
  add_common(eff, o, true);
  eff->add_option("--profile", o.profile, "Stiffness profile: optimized, nonoptimized or both")
      ->check(CLI::IsMember({"optimized", "nonoptimized", "both"}))
      ->capture_default_str();
  add_gamma_grid(eff, o);

  auto* match = app.add_subcommand("match-springs", "Match designed k_b to a spring catalog; writes spring_match.csv");
  add_common(match, o, false);
  match->add_option("--design-table", o.design_table, "Design-table CSV with k_b [N*m/rad]")->required();
  match->add_option("--catalog", o.catalog,
                    "Catalog CSV (d_mm,D_mm,c,kb_Nm_per_rad,kc_N_per_m); default is the synthetic d/D/c grid");
  match->add_option("--policy", o.policy, "nearest (entries may repeat) or one-to-one (each entry used once)")
      ->check(CLI::IsMember({"nearest", "one-to-one"}))
      ->capture_default_str();

  std::vector<std::string> argv_store{"magchain"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    report(err, "usage_error", e.what(), kInputError);
    return kInputError;
  }

  auto* cmd = app.get_subcommands().front();
  RunManifest m;
  m.command = cmd->get_name();
  const auto start = std::chrono::system_clock::now();
  m.started_at = utc_timestamp(start);
  const auto steady = std::chrono::steady_clock::now();

  int code = kOk;
  bool out_dir_ready = false;
  try {
    fs::create_directories(o.out_dir);
    out_dir_ready = true;
    if (cmd == match) {
      code = cmd_match(o, m, out);
    } else {
      m.config_path = resolve_config(o.config);
      const auto specs = load_spec_file(m.config_path);
      m.parameters["spec"] = to_json(specs);
      if (cmd == design) code = cmd_design(specs, o, m, out);
      else if (cmd == solve) code = cmd_solve(specs, o, m, out);
      else if (cmd == sw) code = cmd_sweep(specs, o, m, out);
      else code = cmd_efficiency(specs, o, m, out);
    }
    if (code == kPartialSweep)
      report(err, "partial_sweep_failure", "fewer than 95% of grid points solved", code,
             {{"success_fraction", m.parameters["success_fraction"]}});
  } catch (const std::exception& e) {
    const auto f = classify(e);
    code = f.code;
    nlohmann::json extra = nlohmann::json::object();
    if (const auto* c = dynamic_cast<const ConfigError*>(&e)) extra["key_path"] = c->key_path();
    if (const auto* s = dynamic_cast<const SolverFailure*>(&e)) extra["residual_norm"] = s->residual_norm();
    if (const auto* d = dynamic_cast<const DesignFailure*>(&e)) extra["segment"] = d->segment();
    report(err, f.type, e.what(), code, extra);
    m.failures.push_back(e.what());
  }

  m.exit_code = code;
  m.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - steady).count();
  if (out_dir_ready) {
    try {
      write_manifest(o.out_dir, m);
    } catch (const std::exception& e) {
      report(err, "io_error", e.what(), kInputError);
      if (code == kOk) code = kInputError;
    }
  }
  return code;
}

}  // namespace magchain::cli
