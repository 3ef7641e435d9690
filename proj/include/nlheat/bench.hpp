#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nlheat/dense.hpp"
#include "nlheat/error.hpp"
#include "nlheat/krylov.hpp"
#include "nlheat/manufactured.hpp"
#include "nlheat/solvers.hpp"
#include "nlheat/svg.hpp"

namespace nlheat {

inline constexpr const char* kVersion = "0.1.0";

/// Resolved settings for one study run.
struct StudyConfig {
  int dimension = 1;
  std::vector<int> N_list{8, 16, 32, 64};
  /// c in M = round(T N / c).
  double M_rule = 0.1;
  double T = 0.1;
  std::vector<Method> method_list{Method::kShooting, Method::kHybrid, Method::kPureArnoldi};
  /// "N" (k = N), "auto" (choose_rank) or a fixed integer.
  std::string k_rule = "N";
  double fp_tol = 1e-10;
  std::size_t fp_max_iter = 500;
  SeedMode seed_mode = SeedMode::kSharedBasis;
  /// Quadrature panels per time step; 0 uses kPanelsPerStep.
  std::size_t quad_panels = 0;
  std::string output_dir = "results";

  double error_threshold = kRelativeErrorFloor;
  double cost_tol = 1e-3;
  std::vector<std::size_t> decay_k_list;
  unsigned jobs = 1;

  void validate() const {
    if (dimension < 1 || dimension > 3) throw InvalidArgument("dimension must be 1, 2 or 3");
    if (N_list.empty()) throw InvalidArgument("N_list is empty");
    for (int n : N_list)
      if (n < 2) throw InvalidArgument("every N in N_list must be >= 2");
    if (!(M_rule > 0.0)) throw InvalidArgument("M_rule must be positive");
    if (!(T > 0.0)) throw InvalidArgument("T must be positive");
    if (method_list.empty()) throw InvalidArgument("method_list is empty");
    if (k_rule != "N" && k_rule != "auto") {
      std::size_t k = 0;
      auto r = std::from_chars(k_rule.data(), k_rule.data() + k_rule.size(), k);
      if (r.ec != std::errc() || r.ptr != k_rule.data() + k_rule.size() || k < 1)
        throw InvalidArgument("k_rule must be 'N', 'auto' or a positive integer");
    }
    if (!(fp_tol > 0.0)) throw InvalidArgument("fp_tol must be positive");
    if (fp_max_iter < 1) throw InvalidArgument("fp_max_iter must be >= 1");
    if (!(error_threshold >= 0.0)) throw InvalidArgument("error_threshold must be >= 0");
    if (!(cost_tol > 0.0)) throw InvalidArgument("cost_tol must be positive");
    if (output_dir.empty()) throw InvalidArgument("output_dir is empty");
  }

  std::size_t steps_for(int n) const {
    const auto m = std::llround(T * n / M_rule);
    return static_cast<std::size_t>(std::max<long long>(1, m));
  }

  /// 0 means automatic selection.
  std::size_t rank_for(int n) const {
    if (k_rule == "N") return static_cast<std::size_t>(n);
    if (k_rule == "auto") return 0;
    return static_cast<std::size_t>(std::stoul(k_rule));
  }

  SolverConfig solver_config(Method m, int n) const {
    SolverConfig c;
    c.method = m;
    c.steps = steps_for(n);
    c.rank = rank_for(n);
    c.fp_tol = fp_tol;
    c.fp_max_iter = fp_max_iter;
    c.seed_mode = seed_mode;
    c.quad_panels = (quad_panels ? quad_panels : kPanelsPerStep) * c.steps;
    return c;
  }
};

/// One CSV row.
struct StudyRow {
  std::string method;
  int d = 0;
  int N = 0;
  std::size_t M = 0;
  std::size_t k = 0;
  double e_u = std::numeric_limits<double>::quiet_NaN();
  double e_p = std::numeric_limits<double>::quiet_NaN();
  double order_u = std::numeric_limits<double>::quiet_NaN();
  double order_p = std::numeric_limits<double>::quiet_NaN();
  std::size_t iters = 0;
  double wall_time_s = 0.0;
  std::string flags;

  double u_maxnorm = std::numeric_limits<double>::quiet_NaN();
  double p_maxnorm = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
};

namespace detail {

inline std::string format_number(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = digits > 0
               ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits)
               : std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline void add_flag(std::string& flags, const std::string& f) {
  std::string clean = f;
  std::replace(clean.begin(), clean.end(), ',', ' ');
  std::replace(clean.begin(), clean.end(), '\n', ' ');
  std::replace(clean.begin(), clean.end(), '"', '\'');
  if (!flags.empty()) flags += ';';
  flags += clean;
}

template <class Fn>
void run_pool(std::size_t tasks, unsigned jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks;) fn(i);
  };
  if (jobs <= 1 || tasks <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < std::min<std::size_t>(jobs, tasks); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline int method_rank(const std::string& m) {
  static const std::map<std::string, int> order{
      {"direct", 0}, {"shooting", 1}, {"hybrid", 2}, {"pure", 3}};
  auto it = order.find(m);
  return it == order.end() ? 9 : it->second;
}

inline void sort_rows(std::vector<StudyRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const StudyRow& a, const StudyRow& b) {
    if (a.d != b.d) return a.d < b.d;
    if (method_rank(a.method) != method_rank(b.method))
      return method_rank(a.method) < method_rank(b.method);
    return a.N < b.N;
  });
}

}  // namespace detail

namespace detail {
inline StudyRow blank_row(const StudyConfig& cfg, Method method, int n) {
  const SolverConfig sc = cfg.solver_config(method, n);
  StudyRow row;
  row.method = to_string(method);
  row.d = cfg.dimension;
  row.N = n;
  row.M = sc.steps;
  row.k = method == Method::kHybrid || method == Method::kPureArnoldi ? sc.rank : 0;
  return row;
}
}  // namespace detail

/// Row for a finished solve.
inline StudyRow make_row(const StudyConfig& cfg, Method method, int n,
                         const InverseSolution& sol, const ErrorReport& rep) {
  StudyRow row = detail::blank_row(cfg, method, n);
  const Diagnostics& dg = sol.diagnostics;
  row.e_u = rep.e_u;
  row.e_p = rep.e_p;
  row.u_maxnorm = rep.e_u_scaled;
  row.p_maxnorm = rep.e_p_scaled;
  row.iters = dg.iterations;
  row.wall_time_s = dg.wall_time_s;
  if (row.k != 0) row.k = dg.rank;
  if (method == Method::kHybrid || method == Method::kPureArnoldi)
    detail::add_flag(row.flags, "seed=" + dg.seed_mode);
  if (!dg.converged) detail::add_flag(row.flags, "not_converged");
  if (!dg.warnings.empty())
    detail::add_flag(row.flags, "warnings=" + std::to_string(dg.warnings.size()));
  detail::add_flag(row.flags, "u_maxnorm=" + detail::format_number(rep.e_u_scaled, 17));
  detail::add_flag(row.flags, "p_maxnorm=" + detail::format_number(rep.e_p_scaled, 17));
  return row;
}

/// Solves the manufactured problem for one (method, N) and measures errors.
/// Solver failures are recorded in the row, never thrown.
inline StudyRow run_case(const StudyConfig& cfg, Method method, int n) {
  const ManufacturedCase mc(cfg.dimension, cfg.T);
  try {
    const InverseProblem prob = mc.problem(n);
    const InverseSolution sol = solve(prob, cfg.solver_config(method, n));
    return make_row(cfg, method, n, sol, measure_errors(sol, mc, cfg.error_threshold));
  } catch (const std::exception& e) {
    StudyRow row = detail::blank_row(cfg, method, n);
    row.failed = true;
    detail::add_flag(row.flags, std::string("failed: ") + e.what());
    return row;
  }
}

/// Observed orders log(E_prev / E) / log(N / N_prev) between consecutive rows
/// of the same method and dimension.
inline void compute_orders(std::vector<StudyRow>& rows) {
  detail::sort_rows(rows);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const StudyRow& a = rows[i - 1];
    StudyRow& b = rows[i];
    if (a.method != b.method || a.d != b.d || a.failed || b.failed) continue;
    const double r = std::log(static_cast<double>(b.N) / a.N);
    b.order_u = std::log(a.e_u / b.e_u) / r;
    b.order_p = std::log(a.e_p / b.e_p) / r;
  }
}

inline std::vector<StudyRow> run_grid(const StudyConfig& cfg) {
  cfg.validate();
  struct Task {
    Method m;
    int n;
  };
  std::vector<Task> tasks;
  for (Method m : cfg.method_list)
    for (int n : cfg.N_list) {
      if (m == Method::kDirect && cfg.dimension != 1) continue;
      tasks.push_back({m, n});
    }
  std::vector<StudyRow> rows(tasks.size());
  detail::run_pool(tasks.size(), cfg.jobs,
                   [&](std::size_t i) { rows[i] = run_case(cfg, tasks[i].m, tasks[i].n); });
  compute_orders(rows);
  return rows;
}

inline std::vector<StudyRow> convergence_study(const StudyConfig& cfg) { return run_grid(cfg); }

/// Time to reach cost_tol for one method: the smallest N whose max-norm
/// relative error of p meets the tolerance.
struct CostPoint {
  std::string method;
  int d = 0;
  bool reached = false;
  int N = 0;
  double wall_time_s = std::numeric_limits<double>::quiet_NaN();
  double achieved = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<CostPoint> matched_tolerance(const std::vector<StudyRow>& rows,
                                                double tol) {
  std::vector<CostPoint> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CostPoint& c) {
      return c.method == r.method && c.d == r.d;
    });
    if (it == out.end()) {
      out.push_back({r.method, r.d});
      it = out.end() - 1;
    }
    if (it->reached || r.failed || !(r.p_maxnorm <= tol)) continue;
    it->reached = true;
    it->N = r.N;
    it->wall_time_s = r.wall_time_s;
    it->achieved = r.p_maxnorm;
  }
  return out;
}

inline std::vector<StudyRow> cost_study(const StudyConfig& cfg) {
  auto rows = run_grid(cfg);
  for (const auto& c : matched_tolerance(rows, cfg.cost_tol)) {
    if (!c.reached) continue;
    for (auto& r : rows)
      if (r.method == c.method && r.d == c.d && r.N == c.N)
        detail::add_flag(r.flags, "at_tol=" + detail::format_number(cfg.cost_tol, 6));
  }
  return rows;
}

struct DecayRow {
  std::size_t k = 0;
  double expm_error = 0.0;
  double geom_error = 0.0;
  /// a priori bound on the expm error; NaN where it does not apply.
  double bound = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<std::size_t> default_decay_ranks(std::size_t n_dof) {
  std::vector<std::size_t> ks;
  for (std::size_t k = 5; k <= 100 && k < n_dof; k += 5) ks.push_back(k);
  ks.push_back(n_dof);
  return ks;
}

/// Krylov errors ||F(A) b - Q F(H) Q^T b|| / ||b|| for F(A) = e^{-TA} and
/// (I - e^{-TA})^{-1} against the dense oracle over a rank sweep, with b = phi_h
/// from the manufactured problem.
inline std::vector<DecayRow> arnoldi_decay_study(const StudyConfig& cfg) {
  cfg.validate();
  const ManufacturedCase mc(cfg.dimension, cfg.T);
  const InverseProblem prob = mc.problem(cfg.N_list.front());
  const EllipticOperator& op = *prob.op;
  if (op.size() > kDenseOracleCap)
    throw InvalidArgument("decay study needs n_dof <= " + std::to_string(kDenseOracleCap) +
                          " for the dense oracle");
  const DenseSpectrum ds(op);
  const Field& b = prob.phi;
  const Field ex = ds.expm(cfg.T, b);
  const Field gx = ds.geom(cfg.T, b);
  const double rho_t = cfg.T * ds.eigenvalues()[ds.eigenvalues().size() - 1];
  const double lam_t = cfg.T * ds.eigenvalues()[0];

  auto ks = cfg.decay_k_list.empty() ? default_decay_ranks(op.size()) : cfg.decay_k_list;
  std::vector<DecayRow> rows;
  for (std::size_t k : ks) {
    k = std::min(k, op.size());
    const KrylovBasis basis = lanczos(op, b, k, "phi");
    DecayRow r;
    r.k = k;
    r.expm_error = norm(apply_expm(basis, cfg.T) - ex) / norm(b);
    r.geom_error = norm(apply_geom(basis, cfg.T) - gx) / norm(b);
    if (k >= op.size()) {
      r.bound = 0.0;
    } else {
      try {
        r.bound = expm_bound({rho_t, k, lam_t, cfg.T});
      } catch (const BoundNotApplicable&) {
      }
    }
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------- output

inline const char* kCsvHeader =
    "method,d,N,M,k,E_u,E_p,order_u,order_p,iters,wall_time_s,flags";

inline std::string to_csv(const std::vector<StudyRow>& rows) {
  using detail::format_number;
  std::ostringstream o;
  o << kCsvHeader << '\n';
  auto order = [](double v) { return std::isnan(v) ? std::string() : format_number(v, 17); };
  for (const auto& r : rows) {
    o << r.method << ',' << r.d << ',' << r.N << ',' << r.M << ',' << r.k << ','
      << format_number(r.e_u, 17) << ',' << format_number(r.e_p, 17) << ','
      << order(r.order_u) << ',' << order(r.order_p) << ',' << r.iters << ','
      << format_number(r.wall_time_s, 0) << ',' << r.flags << '\n';
  }
  return o.str();
}

/// Parses what to_csv writes.
inline std::vector<StudyRow> from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw InvalidArgument("unexpected CSV header");
  auto num = [](const std::string& s) {
    if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc()) throw InvalidArgument("bad number '" + s + "' in CSV");
    return v;
  };
  std::vector<StudyRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (int i = 0; i < 11; ++i) {
      const auto c = line.find(',', pos);
      if (c == std::string::npos) throw InvalidArgument("short CSV row");
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    f.push_back(line.substr(pos));
    StudyRow r;
    r.method = f[0];
    r.d = std::stoi(f[1]);
    r.N = std::stoi(f[2]);
    r.M = std::stoul(f[3]);
    r.k = std::stoul(f[4]);
    r.e_u = num(f[5]);
    r.e_p = num(f[6]);
    r.order_u = num(f[7]);
    r.order_p = num(f[8]);
    r.iters = std::stoul(f[9]);
    r.wall_time_s = num(f[10]);
    r.flags = f[11];
    r.failed = r.flags.find("failed") != std::string::npos;
    std::istringstream fl(r.flags);
    for (std::string item; std::getline(fl, item, ';');) {
      if (item.rfind("p_maxnorm=", 0) == 0) r.p_maxnorm = num(item.substr(10));
      if (item.rfind("u_maxnorm=", 0) == 0) r.u_maxnorm = num(item.substr(10));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string decay_to_csv(const std::vector<DecayRow>& rows) {
  using detail::format_number;
  std::ostringstream o;
  o << "k,expm_error,geom_error,expm_bound\n";
  for (const auto& r : rows)
    o << r.k << ',' << format_number(r.expm_error, 17) << ','
      << format_number(r.geom_error, 17) << ',' << format_number(r.bound, 17) << '\n';
  return o.str();
}

namespace detail {
inline std::vector<std::string> methods_in(const std::vector<StudyRow>& rows) {
  std::vector<std::string> ms;
  for (const auto& r : rows)
    if (std::find(ms.begin(), ms.end(), r.method) == ms.end()) ms.push_back(r.method);
  return ms;
}
}  // namespace detail

/// Log-log E_u and E_p against N with the last observed order per method.
inline std::string convergence_svg(const std::vector<StudyRow>& rows) {
  svg::Plot p;
  p.title = "Convergence of u and p";
  p.xlabel = "N";
  p.ylabel = "max relative error";
  for (const auto& m : detail::methods_in(rows)) {
    svg::Series su{m + " E_u", {}, {}, false}, sp{m + " E_p", {}, {}, true};
    double ou = std::numeric_limits<double>::quiet_NaN(), op = ou;
    for (const auto& r : rows) {
      if (r.method != m || r.failed) continue;
      su.x.push_back(r.N);
      su.y.push_back(r.e_u);
      sp.x.push_back(r.N);
      sp.y.push_back(r.e_p);
      if (!std::isnan(r.order_u)) ou = r.order_u, op = r.order_p;
    }
    p.series.push_back(su);
    p.series.push_back(sp);
    if (!std::isnan(ou))
      p.notes.push_back(m + ": order u " + detail::format_number(ou, 3) + ", p " +
                        detail::format_number(op, 3));
  }
  return svg::render(p);
}

/// Wall time against achieved max-norm error of p.
inline std::string cost_svg(const std::vector<StudyRow>& rows) {
  svg::Plot p;
  p.title = "Computational time to reach an error tolerance";
  p.xlabel = "max-norm relative error of p";
  p.ylabel = "wall time [s]";
  for (const auto& m : detail::methods_in(rows)) {
    svg::Series s{m, {}, {}, false};
    for (const auto& r : rows) {
      if (r.method != m || r.failed) continue;
      s.x.push_back(r.p_maxnorm);
      s.y.push_back(r.wall_time_s);
    }
    p.series.push_back(s);
  }
  return svg::render(p);
}

inline std::string decay_svg(const std::vector<DecayRow>& rows) {
  svg::Plot p;
  p.title = "Krylov approximation error";
  p.xlabel = "k";
  p.ylabel = "relative error";
  p.log_x = false;
  svg::Series e{"exp(-TA) phi", {}, {}, false}, g{"(I - exp(-TA))^-1 phi", {}, {}, false},
      b{"a priori bound", {}, {}, true};
  for (const auto& r : rows) {
    e.x.push_back(static_cast<double>(r.k));
    e.y.push_back(std::max(r.expm_error, 1e-17));
    g.x.push_back(static_cast<double>(r.k));
    g.y.push_back(std::max(r.geom_error, 1e-17));
    if (std::isfinite(r.bound) && r.bound > 0.0 && r.bound < 1e3) {
      b.x.push_back(static_cast<double>(r.k));
      b.y.push_back(r.bound);
    }
  }
  p.series = {e, g, b};
  return svg::render(p);
}

/// key = value lines with the resolved configuration.
inline std::string manifest_text(const StudyConfig& cfg, const std::string& study) {
  std::ostringstream o;
  auto list = [](const auto& v, auto fn) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fn(v[i]);
    return s;
  };
  o << "study = " << study << '\n';
  o << "software = nlheat " << kVersion << '\n';
  o << "compiler = " << __VERSION__ << '\n';
  o << "eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
    << EIGEN_MINOR_VERSION << '\n';
  o << "dimension = " << cfg.dimension << '\n';
  o << "N_list = " << list(cfg.N_list, [](int n) { return std::to_string(n); }) << '\n';
  o << "M_rule = " << detail::format_number(cfg.M_rule, 17) << "  # M = round(T N / M_rule)\n";
  o << "T = " << detail::format_number(cfg.T, 17) << '\n';
  o << "method_list = "
    << list(cfg.method_list, [](Method m) { return to_string(m); }) << '\n';
  o << "k_rule = " << cfg.k_rule << '\n';
  o << "fp_tol = " << detail::format_number(cfg.fp_tol, 17) << '\n';
  o << "fp_max_iter = " << cfg.fp_max_iter << '\n';
  o << "seed_mode = " << to_string(cfg.seed_mode) << '\n';
  o << "quad_panels = " << (cfg.quad_panels ? cfg.quad_panels : kPanelsPerStep)
    << "  # per time step\n";
  o << "output_dir = " << cfg.output_dir << '\n';
  o << "error_threshold = " << detail::format_number(cfg.error_threshold, 17) << '\n';
  o << "cost_tol = " << detail::format_number(cfg.cost_tol, 17) << '\n';
  o << "cost_metric = max-norm relative error of p\n";
  o << "jobs = " << cfg.jobs << '\n';
  return o.str();
}

}  // namespace nlheat
