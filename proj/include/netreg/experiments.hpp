#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "netreg/error.hpp"
#include "netreg/interaction.hpp"
#include "netreg/linalg.hpp"
#include "netreg/linear_mle.hpp"
#include "netreg/logistic_mple.hpp"
#include "netreg/matrix_io.hpp"
#include "netreg/model_core.hpp"
#include "netreg/rng.hpp"
#include "netreg/sampling.hpp"

namespace netreg {

struct GraphSpec {
  std::string family = "regular";  // regular | sk | cw | zero
  Index degree = 4;                // regular only
};

inline InteractionMatrix build_graph(const GraphSpec& g, Index n, std::uint64_t seed) {
  if (g.family == "regular") return build_bounded_degree(n, g.degree, seed);
  if (g.family == "sk") return build_sk(n, seed);
  if (g.family == "cw") return build_curie_weiss(n);
  if (g.family == "zero") return InteractionMatrix::zero(n);
  throw Error("unknown graph family '" + g.family + "' (expected regular, sk, cw or zero)");
}

struct ExperimentSpec {
  ModelKind model = ModelKind::kLogistic;
  GraphSpec graph;
  Index d = 2;
  Vector theta0;
  double beta0 = 0.0;
  std::vector<Index> n_grid;
  int replicas = 20;
  std::uint64_t seed = 1;
  ParameterBox box;
  double feature_clamp = 3.0;  // logistic features are clipped to [-clamp, clamp]
  double d_diag = 1.0;         // linear: D = d_diag * I
  int gibbs_burn_in = 200;
  int gibbs_thinning = 5;
  std::optional<double> tolerance;  // default 1/sqrt(n)
  long max_iters = 100000;
  LogisticStepRule step_rule = LogisticStepRule::kSmoothness;
  bool validate_cells = true;
  bool record_runtime = false;

  void validate() const {
    box.validate();
    if (d < 1) throw Error("ExperimentSpec: d must be >= 1");
    if (graph.family != "regular" && graph.family != "sk" && graph.family != "cw" &&
        graph.family != "zero") {
      throw Error("ExperimentSpec: unknown graph family '" + graph.family + "'");
    }
    if (graph.family == "regular" && graph.degree < 1) {
      throw Error("ExperimentSpec: regular graphs need degree >= 1");
    }
    if (theta0.size() != d) {
      throw DimensionError("ExperimentSpec: theta0 has " + std::to_string(theta0.size()) +
                           " entries, expected d=" + std::to_string(d));
    }
    if (!(theta0.cwiseAbs().maxCoeff() < box.theta_bound) ||
        !(std::abs(beta0) < box.beta_bound)) {
      throw Error("ExperimentSpec: (theta0, beta0) must lie strictly inside the box");
    }
    if (n_grid.empty()) throw Error("ExperimentSpec: n_grid is empty");
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
      if (n_grid[k] <= d) throw Error("ExperimentSpec: every n must exceed d");
      if (k > 0 && n_grid[k] <= n_grid[k - 1]) {
        throw Error("ExperimentSpec: n_grid must be strictly increasing");
      }
    }
    if (replicas < 1) throw Error("ExperimentSpec: replicas must be >= 1");
    if (!(feature_clamp > 0.0)) throw Error("ExperimentSpec: feature clamp must be positive");
    if (!(d_diag > 0.0)) throw Error("ExperimentSpec: d_diag must be positive");
    if (gibbs_burn_in < 0 || gibbs_thinning < 1) throw Error("ExperimentSpec: bad Gibbs settings");
    if (max_iters < 1) throw Error("ExperimentSpec: max_iters must be >= 1");
  }
};

inline nlohmann::json to_json(const ExperimentSpec& s) {
  using nlohmann::json;
  json graph = {{"family", s.graph.family}};
  if (s.graph.family == "regular") graph["degree"] = s.graph.degree;
  return {
      {"model", std::string(to_string(s.model))},
      {"graph", graph},
      {"d", s.d},
      {"theta0", std::vector<double>(s.theta0.data(), s.theta0.data() + s.theta0.size())},
      {"beta0", s.beta0},
      {"n_grid", s.n_grid},
      {"replicas", s.replicas},
      {"seed", s.seed},
      {"box", {{"theta_bound", s.box.theta_bound}, {"beta_bound", s.box.beta_bound}}},
      {"feature_clamp", s.feature_clamp},
      {"d_diag", s.d_diag},
      {"gibbs", {{"burn_in", s.gibbs_burn_in}, {"thinning", s.gibbs_thinning}}},
      {"estimator",
       {{"tolerance", s.tolerance ? json(*s.tolerance) : json(nullptr)},
        {"max_iters", s.max_iters},
        {"step_rule", s.step_rule == LogisticStepRule::kSmoothness ? "smoothness"
                                                                   : "sqrt_smoothness"}}},
      {"validate", s.validate_cells},
      {"record_runtime", s.record_runtime},
  };
}

inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  try {
    s.model = parse_model_kind(j.at("model").get<std::string>());
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      s.graph.family = g.at("family").get<std::string>();
      if (g.contains("degree")) s.graph.degree = g.at("degree").get<Index>();
    }
    const auto theta = j.at("theta0").get<std::vector<double>>();
    s.theta0 = Eigen::Map<const Vector>(theta.data(), static_cast<Index>(theta.size()));
    s.d = j.value("d", static_cast<Index>(theta.size()));
    s.beta0 = j.at("beta0").get<double>();
    s.n_grid = j.at("n_grid").get<std::vector<Index>>();
    s.replicas = j.value("replicas", s.replicas);
    s.seed = j.value("seed", s.seed);
    if (j.contains("box")) {
      s.box.theta_bound = j.at("box").at("theta_bound").get<double>();
      s.box.beta_bound = j.at("box").at("beta_bound").get<double>();
    }
    s.feature_clamp = j.value("feature_clamp", s.feature_clamp);
    s.d_diag = j.value("d_diag", s.d_diag);
    if (j.contains("gibbs")) {
      s.gibbs_burn_in = j.at("gibbs").value("burn_in", s.gibbs_burn_in);
      s.gibbs_thinning = j.at("gibbs").value("thinning", s.gibbs_thinning);
    }
    if (j.contains("estimator")) {
      const auto& e = j.at("estimator");
      if (e.contains("tolerance") && !e.at("tolerance").is_null()) {
        s.tolerance = e.at("tolerance").get<double>();
      }
      s.max_iters = e.value("max_iters", s.max_iters);
      const std::string rule = e.value("step_rule", std::string("smoothness"));
      if (rule == "smoothness") s.step_rule = LogisticStepRule::kSmoothness;
      else if (rule == "sqrt_smoothness") s.step_rule = LogisticStepRule::kSqrtSmoothness;
      else throw Error("unknown step_rule '" + rule + "'");
    }
    s.validate_cells = j.value("validate", s.validate_cells);
    s.record_runtime = j.value("record_runtime", s.record_runtime);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  try {
    return experiment_spec_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

struct CellResult {
  Index n = 0;
  int replica = 0;
  std::uint64_t seed = 0;
  double error = std::numeric_limits<double>::quiet_NaN();
  long iters = 0;
  double runtime_ms = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  bool assumptions_ok = true;
  /// ||kappa_hat - beta_hat theta_hat||, linear model only.
  double kappa_gap = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

struct RateSummaryRow {
  Index n = 0;
  double median = std::numeric_limits<double>::quiet_NaN();
  double q25 = std::numeric_limits<double>::quiet_NaN();
  double q75 = std::numeric_limits<double>::quiet_NaN();
  int fits = 0;
  int failures = 0;
  int assumption_flags = 0;
};

struct RateReport {
  ExperimentSpec spec;
  std::vector<CellResult> cells;  // ordered by (n, replica)
  std::vector<RateSummaryRow> summary;
  std::optional<double> slope;
  int failures = 0;
};

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

/// Least-squares slope of ln(y) against ln(x); empty with fewer than two usable points.
inline std::optional<double> log_log_slope(const std::vector<double>& x,
                                           const std::vector<double>& y) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t k = 0; k < x.size() && k < y.size(); ++k) {
    if (x[k] > 0.0 && y[k] > 0.0 && std::isfinite(y[k])) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(ly.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

/// Everything a single (n, replica) cell needs, derived from the spec and the cell seed.
struct CellInstance {
  std::uint64_t seed = 0;
  InteractionMatrix a;
  RegressionDesign design;
  std::optional<Dataset> data;
};

inline std::uint64_t cell_seed(const ExperimentSpec& s, Index n, int replica) {
  return derive_seed(s.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replica));
}

/// Graph, features and ONE dependent response vector for a cell.
inline CellInstance make_cell_instance(const ExperimentSpec& s, Index n, int replica) {
  CellInstance c;
  c.seed = cell_seed(s, n, replica);
  c.a = build_graph(s.graph, n, derive_seed(c.seed, 1));
  CounterRng frng(c.seed, 2);
  Matrix x(n, s.d);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < s.d; ++k) x(i, k) = frng.normal();
  }
  if (s.model == ModelKind::kLogistic) {
    x = x.cwiseMax(-s.feature_clamp).cwiseMin(s.feature_clamp);
    c.design = RegressionDesign(std::move(x));
    GibbsConfig g;
    g.burn_in = s.gibbs_burn_in;
    g.thinning = s.gibbs_thinning;
    g.n_samples = 1;
    g.seed = derive_seed(c.seed, 3);
    const auto ys = ising_gibbs_sample({s.theta0, s.beta0}, c.design, c.a, g);
    c.data = Dataset::logistic(c.design, c.a, ys.front());
  } else {
    c.design = RegressionDesign(std::move(x), Vector::Constant(n, s.d_diag));
    const auto ys = gaussian_sample(s.theta0, s.beta0, c.design, c.a, 1, derive_seed(c.seed, 3));
    c.data = Dataset::linear(c.design, c.a, ys.front());
  }
  return c;
}

inline CellResult run_cell(const ExperimentSpec& s, Index n, int replica) {
  const auto start = std::chrono::steady_clock::now();
  CellResult r;
  r.n = n;
  r.replica = replica;
  r.seed = cell_seed(s, n, replica);
  try {
    const CellInstance c = make_cell_instance(s, n, replica);
    if (s.validate_cells) {
      r.assumptions_ok = validate_assumptions(c.a, c.design, s.box, s.model).overall;
    }
    if (s.model == ModelKind::kLogistic) {
      LogisticFitOptions opt;
      opt.tolerance = s.tolerance;
      opt.max_iters = s.max_iters;
      opt.step_rule = s.step_rule;
      const LogisticFit f = fit_logistic_mple(*c.data, s.box, opt);
      Vector diff(s.d + 1);
      diff.head(s.d) = f.params.theta - s.theta0;
      diff(s.d) = f.params.beta - s.beta0;
      r.error = diff.norm();
      r.iters = f.diagnostics.iterations;
    } else {
      LinearFitOptions opt;
      opt.tolerance = s.tolerance;
      opt.max_iters = s.max_iters;
      const LinearFit f = fit_linear_mle(*c.data, s.box, opt);
      Vector diff(s.d + 1);
      diff.head(s.d) = f.params.theta - s.theta0;
      diff(s.d) = f.params.beta - s.beta0;
      r.error = diff.norm();
      r.iters = f.diagnostics.iterations;
      r.kappa_gap = (f.params.kappa - f.params.beta * f.params.theta).norm();
    }
    r.ok = true;
  } catch (const PgdNotConverged& e) {
    r.message = e.what();
    r.iters = e.best().iterations;
  } catch (const Error& e) {
    r.message = e.what();
  }
  if (s.record_runtime) {
    r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             start)
                       .count();
  }
  return r;
}

/// Medians, quartiles and the log-log slope of median error against n.
inline void summarize(RateReport& rep) {
  rep.summary.clear();
  rep.failures = 0;
  std::vector<double> xs;
  std::vector<double> meds;
  for (Index n : rep.spec.n_grid) {
    RateSummaryRow row;
    row.n = n;
    std::vector<double> errs;
    for (const CellResult& c : rep.cells) {
      if (c.n != n) continue;
      if (c.ok) {
        errs.push_back(c.error);
        ++row.fits;
      } else {
        ++row.failures;
      }
      if (!c.assumptions_ok) ++row.assumption_flags;
    }
    row.median = quantile(errs, 0.5);
    row.q25 = quantile(errs, 0.25);
    row.q75 = quantile(errs, 0.75);
    rep.failures += row.failures;
    xs.push_back(static_cast<double>(n));
    meds.push_back(row.median);
    rep.summary.push_back(row);
  }
  rep.slope = log_log_slope(xs, meds);
}

/// Runs every (n, replica) cell, optionally on `jobs` threads. Each cell owns its
/// seed, and results are stored by position, so the report does not depend on
/// scheduling.
inline RateReport run_consistency(const ExperimentSpec& spec, int jobs = 1) {
  spec.validate();
  RateReport rep;
  rep.spec = spec;
  struct Task {
    Index n;
    int replica;
  };
  std::vector<Task> tasks;
  for (Index n : spec.n_grid) {
    for (int r = 0; r < spec.replicas; ++r) tasks.push_back({n, r});
  }
  rep.cells.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      rep.cells[k] = run_cell(spec, tasks[k].n, tasks[k].replica);
    }
  };
  const int nt = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  summarize(rep);
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

namespace detail {

inline std::string csv_number(double v) {
  return std::isnan(v) ? std::string() : io::format_double(v);
}

inline double csv_number_in(std::string_view s) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : io::parse_double(s);
}

inline std::string csv_text(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else if (ch == '\n' || ch == '\r') out += ' ';
    else out += ch;
  }
  return out + "\"";
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  os << content;
  os.close();
  if (!os) throw Error("write to '" + p.string() + "' failed");
}

}  // namespace detail

inline constexpr const char* kErrorsHeader =
    "n,replica,seed,error,iters,runtime_ms,status,assumptions_ok,kappa_gap,message";

inline std::string errors_csv(const RateReport& rep) {
  std::ostringstream os;
  os << kErrorsHeader << '\n';
  for (const CellResult& c : rep.cells) {
    os << c.n << ',' << c.replica << ',' << c.seed << ',' << detail::csv_number(c.error) << ','
       << c.iters << ',' << detail::csv_number(c.runtime_ms) << ','
       << (c.ok ? "ok" : "failed") << ',' << (c.assumptions_ok ? 1 : 0) << ','
       << detail::csv_number(c.kappa_gap) << ',' << detail::csv_text(c.message) << '\n';
  }
  return os.str();
}

inline std::string summary_csv(const RateReport& rep) {
  std::ostringstream os;
  os << "n,median,q25,q75,fits,failures,assumption_flags\n";
  for (const RateSummaryRow& r : rep.summary) {
    os << r.n << ',' << detail::csv_number(r.median) << ',' << detail::csv_number(r.q25) << ','
       << detail::csv_number(r.q75) << ',' << r.fits << ',' << r.failures << ','
       << r.assumption_flags << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const RateReport& rep) {
  using nlohmann::json;
  json medians = json::array();
  for (const RateSummaryRow& r : rep.summary) {
    medians.push_back({{"n", r.n},
                       {"median", std::isnan(r.median) ? json(nullptr) : json(r.median)},
                       {"fits", r.fits},
                       {"failures", r.failures}});
  }
  return {{"slope", rep.slope ? json(*rep.slope) : json(nullptr)},
          {"failures", rep.failures},
          {"medians", medians},
          {"config", to_json(rep.spec)}};
}

/// Writes errors.csv, summary.csv and summary.json into `dir` (created if needed).
inline void emit_report(const RateReport& rep, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
  detail::write_file(dir / "errors.csv", errors_csv(rep));
  detail::write_file(dir / "summary.csv", summary_csv(rep));
  detail::write_file(dir / "summary.json", summary_json(rep).dump(2) + "\n");
}

namespace detail {

/// Splits one CSV record, honouring double-quoted fields.
inline std::vector<std::string> split_quoted(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

inline std::vector<CellResult> read_errors_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string() + ": empty file");
  std::vector<CellResult> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_quoted(line);
    if (f.size() != 10) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 10 fields");
    }
    try {
      CellResult c;
      c.n = std::stoll(f[0]);
      c.replica = std::stoi(f[1]);
      c.seed = std::stoull(f[2]);
      c.error = detail::csv_number_in(f[3]);
      c.iters = std::stol(f[4]);
      c.runtime_ms = detail::csv_number_in(f[5]);
      c.ok = f[6] == "ok";
      c.assumptions_ok = f[7] == "1";
      c.kappa_gap = detail::csv_number_in(f[8]);
      c.message = f[9];
      out.push_back(std::move(c));
    } catch (const std::logic_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace netreg
