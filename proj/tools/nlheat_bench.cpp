// Benchmark driver: manufactured-solution solves, convergence and cost studies,
// Krylov decay sweeps and the invariant self-test.
//
//   nlheat-bench converge --config tools/configs/converge_d1.json
//   nlheat-bench cost --dimension 3 --N_list 16,24,32,40
//   nlheat-bench decay --output_dir out
//   nlheat-bench selftest

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlheat/bench.hpp"
#include "nlheat/invariants.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitConfig = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Command-line values; unset ones leave the file/default value alone.
struct Overrides {
  std::string config;
  std::optional<int> dimension;
  std::vector<int> N_list;
  std::optional<double> M_rule;
  std::optional<double> T;
  std::vector<std::string> method_list;
  std::optional<std::string> k_rule;
  std::optional<double> fp_tol;
  std::optional<std::size_t> fp_max_iter;
  std::optional<std::string> seed_mode;
  std::optional<std::size_t> quad_panels;
  std::optional<std::string> output_dir;
  std::optional<double> error_threshold;
  std::optional<double> cost_tol;
  std::vector<std::size_t> decay_k_list;
  std::optional<unsigned> jobs;
};

void add_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON config file");
  app->add_option("--dimension", o.dimension, "spatial dimension d");
  app->add_option("--N_list", o.N_list, "grid subdivisions, comma separated")->delimiter(',');
  app->add_option("--M_rule", o.M_rule, "c in M = round(T N / c)");
  app->add_option("--T", o.T, "final time");
  app->add_option("--method_list", o.method_list, "direct,shooting,hybrid,pure")
      ->delimiter(',');
  app->add_option("--k_rule", o.k_rule, "N, auto or a fixed rank");
  app->add_option("--fp_tol", o.fp_tol, "fixed-point tolerance");
  app->add_option("--fp_max_iter", o.fp_max_iter, "fixed-point iteration cap");
  app->add_option("--seed_mode", o.seed_mode, "per-operand or shared-basis");
  app->add_option("--quad_panels", o.quad_panels, "quadrature panels per time step");
  app->add_option("--output_dir", o.output_dir, "output directory");
  app->add_option("--error_threshold", o.error_threshold,
                  "exact values below this are left out of relative errors");
  app->add_option("--cost_tol", o.cost_tol, "matched tolerance for the cost study");
  app->add_option("--decay_k_list", o.decay_k_list, "ranks for the decay sweep")
      ->delimiter(',');
  app->add_option("--jobs", o.jobs, "worker threads for study rows");
}

std::vector<nlheat::Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<nlheat::Method> out;
  for (const auto& n : names) out.push_back(nlheat::parse_method(n));
  return out;
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void apply_file(nlheat::StudyConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  static const std::vector<std::string> known{
      "dimension", "N_list",   "M_rule",      "T",           "method_list",
      "k_rule",    "fp_tol",   "fp_max_iter", "seed_mode",   "quad_panels",
      "output_dir", "error_threshold", "cost_tol", "decay_k_list", "jobs"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");
  }
  if (j.contains("dimension")) c.dimension = get<int>(j, "dimension");
  if (j.contains("N_list")) c.N_list = get<std::vector<int>>(j, "N_list");
  if (j.contains("M_rule")) c.M_rule = get<double>(j, "M_rule");
  if (j.contains("T")) c.T = get<double>(j, "T");
  if (j.contains("method_list"))
    c.method_list = parse_methods(get<std::vector<std::string>>(j, "method_list"));
  if (j.contains("k_rule")) {
    const json& k = j.at("k_rule");
    c.k_rule = k.is_number_integer() ? std::to_string(k.get<long long>()) : get<std::string>(j, "k_rule");
  }
  if (j.contains("fp_tol")) c.fp_tol = get<double>(j, "fp_tol");
  if (j.contains("fp_max_iter")) c.fp_max_iter = get<std::size_t>(j, "fp_max_iter");
  if (j.contains("seed_mode")) c.seed_mode = nlheat::parse_seed_mode(get<std::string>(j, "seed_mode"));
  if (j.contains("quad_panels")) c.quad_panels = get<std::size_t>(j, "quad_panels");
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir");
  if (j.contains("error_threshold")) c.error_threshold = get<double>(j, "error_threshold");
  if (j.contains("cost_tol")) c.cost_tol = get<double>(j, "cost_tol");
  if (j.contains("decay_k_list")) c.decay_k_list = get<std::vector<std::size_t>>(j, "decay_k_list");
  if (j.contains("jobs")) c.jobs = get<unsigned>(j, "jobs");
}

nlheat::StudyConfig resolve(nlheat::StudyConfig c, const Overrides& o) {
  if (!o.config.empty()) apply_file(c, o.config);
  if (o.dimension) c.dimension = *o.dimension;
  if (!o.N_list.empty()) c.N_list = o.N_list;
  if (o.M_rule) c.M_rule = *o.M_rule;
  if (o.T) c.T = *o.T;
  if (!o.method_list.empty()) c.method_list = parse_methods(o.method_list);
  if (o.k_rule) c.k_rule = *o.k_rule;
  if (o.fp_tol) c.fp_tol = *o.fp_tol;
  if (o.fp_max_iter) c.fp_max_iter = *o.fp_max_iter;
  if (o.seed_mode) c.seed_mode = nlheat::parse_seed_mode(*o.seed_mode);
  if (o.quad_panels) c.quad_panels = *o.quad_panels;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.error_threshold) c.error_threshold = *o.error_threshold;
  if (o.cost_tol) c.cost_tol = *o.cost_tol;
  if (!o.decay_k_list.empty()) c.decay_k_list = o.decay_k_list;
  if (o.jobs) c.jobs = *o.jobs;
  c.validate();
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

fs::path prepare_output(const nlheat::StudyConfig& c) {
  fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output_dir '" + c.output_dir + "': " + ec.message());
  return dir;
}

void print_rows(const std::vector<nlheat::StudyRow>& rows) {
  std::printf("%-9s %2s %5s %5s %5s %12s %12s %8s %8s %6s %10s\n", "method", "d", "N", "M",
              "k", "E_u", "E_p", "ord_u", "ord_p", "iters", "time[s]");
  for (const auto& r : rows) {
    if (r.failed) {
      std::printf("%-9s %2d %5d  %s\n", r.method.c_str(), r.d, r.N, r.flags.c_str());
      continue;
    }
    std::printf("%-9s %2d %5d %5zu %5zu %12.4e %12.4e %8.3f %8.3f %6zu %10.4f\n",
                r.method.c_str(), r.d, r.N, r.M, r.k, r.e_u, r.e_p, r.order_u, r.order_p,
                r.iters, r.wall_time_s);
  }
}

bool any_unsolved(const std::vector<nlheat::StudyRow>& rows) {
  for (const auto& r : rows)
    if (r.failed || r.flags.find("not_converged") != std::string::npos) return true;
  return false;
}

int run_study(const std::string& study, const nlheat::StudyConfig& c) {
  const fs::path dir = prepare_output(c);
  std::vector<nlheat::StudyRow> rows =
      study == "cost" ? nlheat::cost_study(c) : nlheat::convergence_study(c);
  print_rows(rows);
  write_file(dir / (study + ".csv"), nlheat::to_csv(rows));
  write_file(dir / (study + ".svg"),
             study == "cost" ? nlheat::cost_svg(rows) : nlheat::convergence_svg(rows));
  std::string manifest = nlheat::manifest_text(c, study);
  if (study == "cost") {
    for (const auto& cp : nlheat::matched_tolerance(rows, c.cost_tol)) {
      std::ostringstream line;
      line << "matched." << cp.method << " = ";
      if (cp.reached)
        line << "N=" << cp.N << " wall_time_s=" << cp.wall_time_s
             << " achieved=" << cp.achieved;
      else
        line << "not reached";
      std::printf("%s\n", line.str().c_str());
      manifest += line.str() + '\n';
    }
  }
  write_file(dir / "run_manifest", manifest);
  return any_unsolved(rows) ? kExitSolver : kExitOk;
}

int run_decay(const nlheat::StudyConfig& c) {
  const fs::path dir = prepare_output(c);
  std::vector<nlheat::DecayRow> rows;
  try {
    rows = nlheat::arnoldi_decay_study(c);
  } catch (const nlheat::InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  std::printf("%6s %14s %14s %14s\n", "k", "expm_error", "geom_error", "expm_bound");
  for (const auto& r : rows)
    std::printf("%6zu %14.4e %14.4e %14.4e\n", r.k, r.expm_error, r.geom_error, r.bound);
  write_file(dir / "decay.csv", nlheat::decay_to_csv(rows));
  write_file(dir / "decay.svg", nlheat::decay_svg(rows));
  write_file(dir / "run_manifest", nlheat::manifest_text(c, "decay"));
  return kExitOk;
}

int run_solve(const nlheat::StudyConfig& c) {
  const fs::path dir = prepare_output(c);
  const nlheat::Method method = c.method_list.front();
  const int n = c.N_list.front();
  const nlheat::ManufacturedCase mc(c.dimension, c.T);
  const nlheat::InverseProblem prob = mc.problem(n);
  std::optional<nlheat::InverseSolution> result;
  try {
    result = nlheat::solve(prob, c.solver_config(method, n));
  } catch (const nlheat::InvalidArgument& e) {
    throw ConfigError(e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kExitSolver;
  }
  const nlheat::InverseSolution& sol = *result;
  const auto rep = nlheat::measure_errors(sol, mc, c.error_threshold);
  const auto& dg = sol.diagnostics;

  const nlheat::StudyRow row = nlheat::make_row(c, method, n, sol, rep);
  write_file(dir / "solve.csv", nlheat::to_csv({row}));

  std::ostringstream field;
  field << "j";
  for (int a = 0; a < c.dimension; ++a) field << ",x" << a + 1;
  field << ",v0,p,p_exact\n";
  const auto& grid = prob.grid();
  for (std::size_t j = 0; j < grid.n_dof(); ++j) {
    const auto x = grid.point(j);
    field << j;
    for (int a = 0; a < c.dimension; ++a) field << ',' << nlheat::detail::format_number(x[a], 17);
    field << ',' << nlheat::detail::format_number(sol.v0[j], 17) << ','
          << nlheat::detail::format_number(sol.p[j], 17) << ','
          << nlheat::detail::format_number(mc.exact_p(x), 17) << '\n';
  }
  write_file(dir / "solve_field.csv", field.str());

  json diag{{"method", nlheat::to_string(method)},
            {"N", n},
            {"M", row.M},
            {"iterations", dg.iterations},
            {"converged", dg.converged},
            {"fp_residual", dg.fp_residual},
            {"step_norms", dg.step_norms},
            {"self_consistency", dg.self_consistency},
            {"wall_time_s", dg.wall_time_s},
            {"rank", dg.rank},
            {"seed_mode", dg.seed_mode},
            {"warnings", dg.warnings},
            {"E_u", rep.e_u},
            {"E_p", rep.e_p},
            {"u_maxnorm", rep.e_u_scaled},
            {"p_maxnorm", rep.e_p_scaled}};
  if (std::isfinite(dg.contraction)) diag["contraction"] = dg.contraction;
  if (std::isfinite(dg.error_bound)) diag["error_bound"] = dg.error_bound;
  if (std::isfinite(dg.expm_bound)) diag["expm_bound"] = dg.expm_bound;
  write_file(dir / "solve_diagnostics.json", diag.dump(2) + "\n");

  nlheat::svg::Plot plot;
  if (c.dimension == 1) {
    plot.title = "Recovered source p";
    plot.xlabel = "x";
    plot.ylabel = "p";
    plot.log_x = plot.log_y = false;
    nlheat::svg::Series ph{"p_h", {}, {}, false}, pe{"p exact", {}, {}, true};
    for (std::size_t j = 0; j < grid.n_dof(); ++j) {
      const auto x = grid.point(j);
      ph.x.push_back(x[0]);
      ph.y.push_back(sol.p[j]);
      pe.x.push_back(x[0]);
      pe.y.push_back(mc.exact_p(x));
    }
    plot.series = {ph, pe};
  } else {
    plot.title = "Fixed-point step norms";
    plot.xlabel = "iteration";
    plot.ylabel = "||alpha_n - alpha_{n-1}||";
    plot.log_x = false;
    nlheat::svg::Series s{"step norm", {}, {}, false};
    for (std::size_t i = 0; i < dg.step_norms.size(); ++i) {
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(dg.step_norms[i]);
    }
    plot.series = {s};
  }
  write_file(dir / "solve.svg", nlheat::svg::render(plot));
  write_file(dir / "run_manifest", nlheat::manifest_text(c, "solve"));

  std::printf("%s d=%d N=%d M=%zu k=%zu iters=%zu E_u=%.6e E_p=%.6e time=%.4fs\n",
              nlheat::to_string(method).c_str(), c.dimension, n, row.M, dg.rank,
              dg.iterations, rep.e_u, rep.e_p, dg.wall_time_s);
  for (const auto& w : dg.warnings) std::printf("warning: %s\n", w.c_str());
  return dg.converged ? kExitOk : kExitSolver;
}

int run_selftest() {
  bool ok = true;
  for (const auto& c : nlheat::operator_invariants()) {
    std::printf("%s %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? kExitOk : kExitSolver;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlocal heat inverse-source benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("nlheat ") + nlheat::kVersion);

  Overrides o;
  auto* solve = app.add_subcommand("solve", "one problem, one method");
  auto* converge = app.add_subcommand("converge", "convergence study");
  auto* cost = app.add_subcommand("cost", "cost at matched tolerance");
  auto* decay = app.add_subcommand("decay", "Krylov error against rank");
  auto* selftest = app.add_subcommand("selftest", "operator and Krylov invariants");
  for (auto* s : {solve, converge, cost, decay}) add_options(s, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*selftest) return run_selftest();

    nlheat::StudyConfig defaults;
    if (*solve) {
      defaults.N_list = {32};
      defaults.method_list = {nlheat::Method::kHybrid};
    } else if (*cost) {
      defaults.dimension = 2;
      defaults.N_list = {16, 24, 32, 40};
    } else if (*decay) {
      defaults.dimension = 2;
      defaults.N_list = {40};
    }
    const nlheat::StudyConfig c = resolve(defaults, o);
    if (*solve) return run_solve(c);
    if (*decay) return run_decay(c);
    return run_study(*cost ? "cost" : "converge", c);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const nlheat::InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  }
}
