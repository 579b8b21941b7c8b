#include "hdsa/app/commands.hpp"

#include "hdsa/error.hpp"
#include "hdsa/oracle.hpp"
#include "hdsa/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>

namespace hdsa::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json counters_json(const CounterSnapshot& c) {
  return json{{"mz_apply", c.mz_apply},
              {"mz_solve", c.mz_solve},
              {"gamma_inv_apply", c.gamma_inv_apply},
              {"gamma_solve", c.gamma_solve},
              {"l_apply", c.l_apply},
              {"l_solve", c.l_solve},
              {"state_hessian_apply", c.state_hessian_apply},
              {"solution_jacobian_apply", c.solution_jacobian_apply},
              {"solution_jacobian_t_apply", c.solution_jacobian_t_apply},
              {"hessvec", c.hessvec},
              {"hess_inv_apply", c.hess_inv_apply},
              {"state_jacobian_solve", c.state_jacobian_solve},
              {"state_jacobian_t_solve", c.state_jacobian_t_solve},
              {"cg_iterations", c.cg_iterations},
              {"mean_cg_iterations", c.mean_cg_iterations()},
              {"cg_per_call", c.cg_per_call}};
}

json cost_model_json(const GsvdResult& r) {
  const auto e = expected_counts(r.q, r.d, r.counters.cg_per_call);
  const auto& c = r.counters;
  const auto row = [](std::uint64_t measured, std::uint64_t expected) {
    return json{{"measured", measured}, {"expected", expected}, {"equal", measured == expected}};
  };
  return json{{"mz_solve", row(c.mz_solve, e.mz_solve)},
              {"l_solve", row(c.l_solve, e.l_solve)},
              {"state_jacobian_solve", row(c.state_jacobian_solve, e.state_jacobian_solve)},
              {"state_jacobian_t_solve", row(c.state_jacobian_t_solve, e.state_jacobian_t_solve)},
              {"mz_apply", row(c.mz_apply, e.mz_apply)},
              {"gamma_inv_apply", row(c.gamma_inv_apply, e.gamma_inv_apply)},
              {"state_hessian_apply", row(c.state_hessian_apply, e.state_hessian_apply)},
              {"solution_jacobian_apply", row(c.solution_jacobian_apply, e.solution_jacobian_apply)},
              {"solution_jacobian_t_apply", row(c.solution_jacobian_t_apply, e.solution_jacobian_t_apply)},
              {"hess_inv_apply", row(c.hess_inv_apply, e.hess_inv_apply)},
              {"cost_state_solves_at_mean_lcg", e.cost_state_solve},
              {"cost_model_total_large_solves_at_mean_lcg", e.cost_state_solve + e.cost_state_t_solve}};
}

json opt_json(const optctl::OptState& st) {
  json log = json::array();
  for (const auto& e : st.log)
    log.push_back({{"iteration", e.iteration},
                   {"objective", e.objective},
                   {"gradient_norm", e.gradient_norm},
                   {"step_length", e.step_length},
                   {"cg_iterations", e.cg_iterations}});
  return json{{"objective", st.objective},
              {"gradient_norm", st.gradient_norm},
              {"gradient_norm_mz", st.gradient_norm_mz},
              {"initial_gradient_norm", st.initial_gradient_norm},
              {"tolerance", st.tolerance},
              {"converged", st.gradient_norm <= st.tolerance},
              {"newton_iterations", st.iterations},
              {"refinement_steps", st.refinement_steps},
              {"min_rayleigh_quotient", st.min_rayleigh_quotient},
              {"log", log}};
}

std::vector<Index> all_nodes(Index count) {
  std::vector<Index> v(count);
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

std::string control_csv(const pde::PdeModel& model, const std::vector<std::string>& names, const Matrix& values) {
  return field_csv(model.control_nodes(), model.control_coordinates(), model.mesh().dimension, names, values);
}

std::string state_csv(const pde::PdeModel& model, const std::vector<std::string>& names, const Matrix& values) {
  return field_csv(all_nodes(model.state_dim()), model.mesh().nodes, model.mesh().dimension, names, values);
}

// Runs the optimizer; optimizer failures map to exit_optimizer.
struct Session {
  RunConfig config;
  CommandOptions options;
  OutputDir out;
  std::unique_ptr<Problem> problem;
  json summary;
  json timings = json::object();

  Session(const RunConfig& c, const CommandOptions& o, const std::string& command)
      : config(c), options(o), out(o.out ? *o.out : fs::path(c.output)) {
    if (o.seed) config.seed = *o.seed;
    summary["command"] = command;
    summary["config"] = to_json(config);
    summary["threads"] = o.threads;
  }

  const optctl::OptState& solve(std::ostream& log) {
    Stopwatch sw;
    problem = std::make_unique<Problem>(config.problem_spec(options.threads));
    const auto& st = problem->solve();
    timings["solve_seconds"] = sw.seconds();
    summary["optimality"] = opt_json(st);
    log << "solve: " << problem->model().name() << " n = " << problem->model().control_dim()
        << ", |grad| = " << st.gradient_norm << " (tol " << st.tolerance << "), " << st.iterations
        << " Newton steps\n";
    if (!(st.gradient_norm <= st.tolerance)) throw NonConvergence("optimizer did not reach the gradient tolerance", {});
    return st;
  }

  void finish() {
    summary["timings"] = timings;
    json manifest = out.manifest();
    manifest.push_back("summary.json");
    summary["manifest"] = manifest;
    out.write("summary.json", summary.dump(2) + "\n");
  }
};

template <typename F>
int guarded(std::ostream& log, int failure_code, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return failure_code;
  }
}

}  // namespace

int resolve_threads(std::optional<int> flag) {
  if (flag) return std::max(1, *flag);
  return default_threads();
}

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)) {}

void OutputDir::write(const std::string& name, const std::string& content) {
  fs::create_directories(dir_);
  const fs::path target = dir_ / name;
  const fs::path tmp = dir_ / (name + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + tmp.string() + "'");
    f << content;
    if (!f) throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
  if (name != "summary.json") manifest_.push_back(name);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string field_csv(const std::vector<Index>& nodes, const Eigen::MatrixX2d& coords, int dimension,
                      const std::vector<std::string>& names, const Matrix& values) {
  require_size(values.rows(), static_cast<Index>(nodes.size()), "field rows");
  require_size(values.cols(), static_cast<Index>(names.size()), "field columns");
  std::string s = dimension == 1 ? "node,x" : "node,x,y";
  for (const auto& n : names) s += "," + n;
  s += "\n";
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Index node = nodes[i];
    s += std::to_string(node) + "," + format_double(coords(node, 0));
    if (dimension == 2) s += "," + format_double(coords(node, 1));
    for (Index c = 0; c < values.cols(); ++c) s += "," + format_double(values(static_cast<Index>(i), c));
    s += "\n";
  }
  return s;
}

int cmd_solve(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  return guarded(log, exit_optimizer, [&] {
    Session s(config, options, "solve");
    const auto& st = s.solve(log);
    const auto& model = s.problem->model();
    s.out.write("zbar.csv", control_csv(model, {"zbar"}, st.z));
    s.out.write("ubar.csv", state_csv(model, {"ubar"}, st.u));
    s.finish();
    return int(exit_ok);
  });
}

int cmd_hdsa(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  std::unique_ptr<Session> s;
  const int solved = guarded(log, exit_optimizer, [&] {
    s = std::make_unique<Session>(config, options, "hdsa");
    s->solve(log);
    Stopwatch sw;
    s->problem->sensitivity();
    s->timings["sensitivity_setup_seconds"] = sw.seconds();
    return int(exit_ok);
  });
  if (solved != exit_ok) return solved;
  return guarded(log, exit_gsvd, [&] {
    auto& ctx = s->problem->sensitivity();
    const auto& model = s->problem->model();
    GsvdConfig cfg;
    cfg.k = s->config.k;
    cfg.oversampling = s->config.oversampling;
    cfg.q = s->config.q;
    cfg.seed = s->config.seed;
    cfg.threads = s->options.threads;
    Stopwatch sw;
    const auto res = randomized_gsvd(ctx, cfg);
    s->timings["gsvd_seconds"] = sw.seconds();
    const Index k = cfg.k;
    log << "hdsa: d = " << res.d << ", sigma_1 = " << res.sigma(0) << ", sigma_k = " << res.sigma(k - 1)
        << ", orthonormality " << res.left_orthonormality << " / " << res.right_orthonormality << "\n";

    std::string sv = "index,sigma\n";
    for (Index i = 0; i < k; ++i) sv += std::to_string(i + 1) + "," + format_double(res.sigma(i)) + "\n";
    s->out.write("singular_values.csv", sv);

    std::vector<std::string> names;
    for (Index i = 0; i < k; ++i) names.push_back("mode_" + std::to_string(i + 1));
    s->out.write("w_modes.csv", control_csv(model, names, res.w.leftCols(k)));
    const Vector mz_zbar = ctx.mtheta().mz_zbar();
    Matrix nominal(ctx.m(), k), shifted(ctx.m(), k);
    for (Index i = 0; i < k; ++i) {
      nominal.col(i) = delta_eval_column(mz_zbar, res.theta, i);
      const Vector zs = ctx.zbar() + res.sigma(i) * res.w.col(i);
      shifted.col(i) = delta_eval_column(ctx.mz_apply_uncounted(zs), res.theta, i);
    }
    s->out.write("delta_nominal.csv", state_csv(model, names, nominal));
    s->out.write("delta_shifted.csv", state_csv(model, names, shifted));

    std::vector<double> sig(res.sigma.data(), res.sigma.data() + res.sigma.size());
    s->summary["gsvd"] = json{{"k", cfg.k},
                              {"oversampling", cfg.oversampling},
                              {"q", cfg.q},
                              {"seed", cfg.seed},
                              {"d", res.d},
                              {"sigma", sig},
                              {"sigma_ratio_1_k", res.sigma(0) / res.sigma(k - 1)},
                              {"left_orthonormality", res.left_orthonormality},
                              {"right_orthonormality", res.right_orthonormality},
                              {"sign_convention", "-H^{-1} B theta_N = sigma_N w_N"}};
    s->summary["counters"] = counters_json(res.counters);
    s->summary["init_counters"] = counters_json(res.init_counters);
    s->summary["cost_model"] = cost_model_json(res);
    s->finish();
    return int(exit_ok);
  });
}

int cmd_predict(const RunConfig& config, const CommandOptions& options, std::ostream& log) {
  const auto low_kind = pde::parse_model(config.problem);
  const auto high_kind = pde::parse_model(config.high_fidelity);
  if (low_kind == pde::ModelKind::cdr2d || high_kind == pde::ModelKind::cdr2d) {
    log << "config error: predict needs a pair of linear 1D models (diffusion1d / advdiff1d)\n";
    return exit_config;
  }
  std::unique_ptr<Session> s;
  std::unique_ptr<pde::PdeModel> high;
  return guarded(log, exit_optimizer, [&] {
    s = std::make_unique<Session>(config, options, "predict");
    const auto& st = s->solve(log);
    auto& ctx = s->problem->sensitivity();
    const auto& low = s->problem->model();
    high = std::make_unique<pde::PdeModel>(pde::PdeModel::create(high_kind, config.resolution, config.nu));
    const optctl::ModelDifference diff(*high, low);
    Stopwatch sw;
    const Vector dz = apply_sensitivity_to_discrepancy(ctx, diff);
    s->timings["prediction_seconds"] = sw.seconds();

    // z*: optimum of the same objective with the high-fidelity model.
    const optctl::Objective hobj(*high, s->problem->objective().target(), config.beta1, config.beta2);
    const optctl::ReducedProblem hprob(*high, hobj);
    const auto hst = optctl::solve_optimum(hprob, st.z, s->problem->spec().optimizer);
    const auto& mz = low.control_mass().matrix();
    const auto norm = [&](const Vector& v) { return std::sqrt(std::max(0.0, v.dot(mz * v))); };
    const Vector zpred = st.z + dz;
    const double e_nom = norm(st.z - hst.z), e_pred = norm(zpred - hst.z);
    log << "predict: |zbar - z*|_Mz = " << e_nom << ", |zbar + dz - z*|_Mz = " << e_pred << "\n";

    Matrix fields(low.control_dim(), 4);
    fields << st.z, hst.z, zpred, dz;
    s->out.write("prediction.csv", control_csv(low, {"zbar", "zstar", "zpred", "dz"}, fields));
    s->summary["prediction"] = json{{"high_fidelity", config.high_fidelity},
                                    {"low_fidelity", config.problem},
                                    {"norm", "M_z"},
                                    {"nominal_error", e_nom},
                                    {"predicted_error", e_pred},
                                    {"error_ratio", e_nom > 0.0 ? e_pred / e_nom : 0.0},
                                    {"dz_norm", norm(dz)},
                                    {"high_fidelity_optimality", opt_json(hst)}};
    s->summary["counters"] = counters_json(ctx.counters().snapshot());
    s->finish();
    return int(exit_ok);
  });
}

int cmd_verify(const CommandOptions& options, std::ostream& log) {
  return guarded(log, exit_verify, [&] {
    OutputDir out(options.out ? *options.out : fs::path("out"));
    oracle::VerifyOptions vo;
    if (options.seed) vo.seed = *options.seed;
    Stopwatch sw;
    const auto checks = oracle::verify_suite(vo);
    json arr = json::array();
    std::vector<std::string> failed;
    for (const auto& c : checks) {
      log << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.value << " <= " << c.tolerance << "\n";
      arr.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}});
      if (!c.passed) failed.push_back(c.name);
    }
    json report{{"command", "verify"},
                {"seed", vo.seed},
                {"checks", arr},
                {"failed", failed},
                {"passed", failed.empty()},
                {"timings", {{"verify_seconds", sw.seconds()}}}};
    out.write("verify.json", report.dump(2) + "\n");
    report["manifest"] = {"verify.json", "summary.json"};
    out.write("summary.json", report.dump(2) + "\n");
    if (!failed.empty()) {
      log << "verify failed:";
      for (const auto& f : failed) log << " " << f;
      log << "\n";
      return int(exit_verify);
    }
    return int(exit_ok);
  });
}

}  // namespace hdsa::app
