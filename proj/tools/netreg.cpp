// netreg: sample, fit and check network regression data, and run rate experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netreg/netreg.hpp"

using namespace netreg;
namespace fs = std::filesystem;

namespace {

struct BoxArgs {
  double theta_bound = 1.0;
  double beta_bound = 0.4;
  ParameterBox box() const { return ParameterBox{theta_bound, beta_bound}; }
};

void add_box(CLI::App* cmd, BoxArgs& b) {
  cmd->add_option("--theta-bound", b.theta_bound, "Box bound on each |theta_k|")
      ->capture_default_str();
  cmd->add_option("--beta-bound", b.beta_bound, "Box bound on |beta|")->capture_default_str();
}

struct DataArgs {
  std::string model = "logistic";
  std::string data;
  std::string graph;
  std::string d_diag;
};

void add_data(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--model", a.model, "logistic or linear")
      ->check(CLI::IsMember({"logistic", "linear"}))
      ->capture_default_str();
  cmd->add_option("--data", a.data, "CSV with columns y,x1,...,xd")->required()->check(CLI::ExistingFile);
  cmd->add_option("--graph", a.graph, "Interaction matrix (CSV or .json)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--d-diag", a.d_diag, "Linear model: diagonal of D as a vector file (default I)")
      ->check(CLI::ExistingFile);
}

Dataset load_dataset(const DataArgs& a) {
  std::ifstream is(a.data);
  if (!is) throw Error("cannot open '" + a.data + "'");
  io::DataTable t = io::read_data_csv(is);
  InteractionMatrix g = InteractionMatrix::from_symmetric(io::load_matrix(a.graph));
  if (parse_model_kind(a.model) == ModelKind::kLogistic) {
    return Dataset::logistic(RegressionDesign(std::move(t.x)), std::move(g), std::move(t.y));
  }
  Vector dd = a.d_diag.empty() ? Vector::Ones(t.x.rows()) : io::load_vector(a.d_diag);
  return Dataset::linear(RegressionDesign(std::move(t.x), std::move(dd)), std::move(g),
                         std::move(t.y));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void write_json(const nlohmann::json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(out);
  if (!os) throw Error("cannot open '" + out + "' for writing");
  os << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network regression: sampling, estimation and rate experiments"};
  app.require_subcommand(1);

  // sample
  auto* sample = app.add_subcommand("sample", "Draw one dependent dataset on a generated graph");
  std::string s_model = "logistic";
  GraphSpec s_graph;
  Index s_n = 500;
  std::vector<double> s_theta{0.5, -0.3};
  double s_beta = 0.2;
  std::uint64_t s_seed = 1;
  double s_clamp = 3.0;
  double s_dd = 1.0;
  int s_burn = 200;
  std::string s_data_out = "data.csv";
  std::string s_graph_out = "graph.csv";
  sample->add_option("--model", s_model, "logistic or linear")
      ->check(CLI::IsMember({"logistic", "linear"}))
      ->capture_default_str();
  sample->add_option("--family", s_graph.family, "regular, sk, cw or zero")
      ->check(CLI::IsMember({"regular", "sk", "cw", "zero"}))
      ->capture_default_str();
  sample->add_option("--degree", s_graph.degree, "Degree of the regular graph")->capture_default_str();
  sample->add_option("-n,--n", s_n, "Number of units")->capture_default_str();
  sample->add_option("--theta", s_theta, "True theta (comma separated)")->delimiter(',');
  sample->add_option("--beta", s_beta, "True beta")->capture_default_str();
  sample->add_option("--seed", s_seed, "Seed")->capture_default_str();
  sample->add_option("--feature-clamp", s_clamp, "Logistic: clip features to [-c, c]")
      ->capture_default_str();
  sample->add_option("--d-diag", s_dd, "Linear: D = value * I")->capture_default_str();
  sample->add_option("--burn-in", s_burn, "Logistic: Gibbs sweeps before the sample")
      ->capture_default_str();
  sample->add_option("--out-data", s_data_out, "Output CSV y,x1,...,xd")->capture_default_str();
  sample->add_option("--out-graph", s_graph_out, "Output interaction matrix (CSV or .json)")
      ->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Estimate (theta, beta) and print JSON");
  DataArgs f_data;
  BoxArgs f_box;
  double f_tol = 0.0;
  long f_iters = 100000;
  std::string f_rule = "smoothness";
  std::string f_out;
  add_data(fit, f_data);
  add_box(fit, f_box);
  fit->add_option("--tolerance", f_tol, "Stationarity tolerance (default 1/sqrt(n))");
  fit->add_option("--max-iters", f_iters, "Iteration cap")->capture_default_str();
  fit->add_option("--step-rule", f_rule, "Logistic step: smoothness or sqrt_smoothness")
      ->check(CLI::IsMember({"smoothness", "sqrt_smoothness"}))
      ->capture_default_str();
  fit->add_option("-o,--out", f_out, "Write JSON here instead of stdout");

  // check
  auto* check = app.add_subcommand("check", "Check the model assumptions; exit 1 if any fails");
  DataArgs c_data;
  BoxArgs c_box;
  double c_feature_bound = 0.0;
  std::string c_out;
  add_data(check, c_data);
  add_box(check, c_box);
  check->add_option("--feature-bound", c_feature_bound, "Support bound M on |x_ik|");
  check->add_option("-o,--out", c_out, "Write JSON here instead of stdout");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a consistency-rate experiment");
  std::string e_spec;
  std::string e_out = "out";
  int e_jobs = 1;
  exp->add_option("--spec", e_spec, "Experiment spec JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", e_out, "Output directory")->capture_default_str();
  exp->add_option("-j,--jobs", e_jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample) {
      ExperimentSpec spec;
      spec.model = parse_model_kind(s_model);
      spec.graph = s_graph;
      spec.d = static_cast<Index>(s_theta.size());
      spec.theta0 = Eigen::Map<const Vector>(s_theta.data(), spec.d);
      spec.beta0 = s_beta;
      spec.n_grid = {s_n};
      spec.replicas = 1;
      spec.seed = s_seed;
      spec.feature_clamp = s_clamp;
      spec.d_diag = s_dd;
      spec.gibbs_burn_in = s_burn;
      const CellInstance c = make_cell_instance(spec, s_n, 0);
      std::ofstream os(s_data_out);
      if (!os) throw Error("cannot open '" + s_data_out + "' for writing");
      io::write_data_csv(os, c.data->y(), c.design.x());
      io::save_matrix(s_graph_out, c.a.matrix());
      std::fprintf(stderr, "wrote %s and %s (n=%ld, d=%ld)\n", s_data_out.c_str(),
                   s_graph_out.c_str(), static_cast<long>(s_n), static_cast<long>(spec.d));
    } else if (*fit) {
      const Dataset data = load_dataset(f_data);
      nlohmann::json j;
      if (data.kind() == ModelKind::kLogistic) {
        LogisticFitOptions opt;
        if (fit->count("--tolerance")) opt.tolerance = f_tol;
        opt.max_iters = f_iters;
        opt.step_rule = f_rule == "smoothness" ? LogisticStepRule::kSmoothness
                                               : LogisticStepRule::kSqrtSmoothness;
        const LogisticFit r = fit_logistic_mple(data, f_box.box(), opt);
        j = {{"model", "logistic"},
             {"theta", to_std(r.params.theta)},
             {"beta", r.params.beta},
             {"lpl", r.diagnostics.lpl},
             {"iterations", r.diagnostics.iterations},
             {"stationarity", r.diagnostics.stationarity},
             {"step_size", r.diagnostics.step_size},
             {"tolerance", r.diagnostics.tolerance}};
      } else {
        LinearFitOptions opt;
        if (fit->count("--tolerance")) opt.tolerance = f_tol;
        opt.max_iters = f_iters;
        const LinearFit r = fit_linear_mle(data, f_box.box(), opt);
        j = {{"model", "linear"},
             {"theta", to_std(r.params.theta)},
             {"beta", r.params.beta},
             {"kappa", to_std(r.params.kappa)},
             {"nll", r.diagnostics.nll},
             {"iterations", r.diagnostics.iterations},
             {"stationarity", r.diagnostics.stationarity},
             {"step_size", r.diagnostics.step_size},
             {"smoothness", r.diagnostics.smoothness},
             {"tolerance", r.diagnostics.tolerance},
             {"flat_coordinates", r.diagnostics.flat_coordinates}};
      }
      write_json(j, f_out);
    } else if (*check) {
      const Dataset data = load_dataset(c_data);
      ValidatorOptions opt;
      if (check->count("--feature-bound")) opt.feature_bound = c_feature_bound;
      const AssumptionReport rep = validate_assumptions(data.interaction(), data.design(),
                                                        c_box.box(), data.kind(), opt);
      write_json(to_json(rep), c_out);
      return rep.overall ? 0 : 1;
    } else if (*exp) {
      const ExperimentSpec spec = load_experiment_spec(e_spec);
      const RateReport rep = run_consistency(spec, e_jobs);
      emit_report(rep, e_out);
      std::cout << summary_csv(rep);
      if (rep.slope) std::cout << "slope," << io::format_double(*rep.slope) << '\n';
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "netreg: %s\n", e.what());
    return 2;
  }
  return 0;
}
