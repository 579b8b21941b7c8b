#include "hdsa/app/config.hpp"

#include "hdsa/error.hpp"

#include <fstream>
#include <set>

namespace hdsa::app {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("wrong type for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  }
}

void read_seed(const json& j, std::uint64_t& out) {
  if (!j.contains("seed")) return;
  const auto& v = j.at("seed");
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError("'gsvd.seed' must be a nonnegative integer");
  out = v.get<std::uint64_t>();
}

}  // namespace

Index RunConfig::control_dim() const {
  const auto kind = pde::parse_model(problem);
  const Index r = resolution;
  return kind == pde::ModelKind::cdr2d ? (r + 1) * (r + 1) : r;
}

void RunConfig::validate() const {
  try {
    (void)pde::parse_model(problem);
    (void)pde::parse_model(high_fidelity);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (resolution < 1) throw ConfigError("resolution must be at least 1");
  if (!(nu > 0.0)) throw ConfigError("nu must be positive");
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) throw ConfigError("objective coefficients must be nonnegative");
  if (!(weight_epsilon > 0.0)) throw ConfigError("weighting.epsilon must be positive");
  if (!(weight_tau >= 0.0)) throw ConfigError("weighting.tau must be nonnegative");
  if (!(prior_alpha > 0.0)) throw ConfigError("prior.alpha must be positive");
  if (!(prior_beta >= 0.0)) throw ConfigError("prior.beta must be nonnegative");
  if (k < 1) throw ConfigError("gsvd.k must be at least 1");
  if (oversampling < 0) throw ConfigError("gsvd.oversampling must be nonnegative");
  if (q < 0) throw ConfigError("gsvd.q must be nonnegative");
  if (k > control_dim())
    throw ConfigError("gsvd.k = " + std::to_string(k) + " exceeds the control dimension " +
                      std::to_string(control_dim()));
  if (!(gradient_tolerance > 0.0) || !(refine_tolerance > 0.0) || !(newton_cg_tolerance > 0.0))
    throw ConfigError("tolerances must be positive");
  if (max_newton_iterations < 1) throw ConfigError("tolerances.max_newton_iterations must be at least 1");
  if (output.empty()) throw ConfigError("output directory must not be empty");
}

ProblemSpec RunConfig::problem_spec(int threads) const {
  ProblemSpec s;
  s.kind = pde::parse_model(problem);
  s.resolution = resolution;
  s.nu = nu;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.weight_epsilon = weight_epsilon;
  s.weight_tau = weight_tau;
  s.prior_alpha = prior_alpha;
  s.prior_beta = prior_beta;
  s.optimizer.gradient_tolerance = gradient_tolerance;
  s.optimizer.refine_tolerance = refine_tolerance;
  s.optimizer.newton_cg_tolerance = newton_cg_tolerance;
  s.optimizer.max_iterations = max_newton_iterations;
  s.threads = threads;
  return s;
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  reject_unknown(j, "", {"problem", "resolution", "nu", "objective", "weighting", "prior", "gsvd", "tolerances",
                         "predict", "output"});
  read(j, "problem", c.problem, "");
  read(j, "resolution", c.resolution, "");
  read(j, "nu", c.nu, "");
  read(j, "output", c.output, "");
  if (j.contains("objective")) {
    const auto& o = j["objective"];
    reject_unknown(o, "objective", {"beta1", "beta2"});
    read(o, "beta1", c.beta1, "objective");
    read(o, "beta2", c.beta2, "objective");
  }
  if (j.contains("weighting")) {
    const auto& o = j["weighting"];
    reject_unknown(o, "weighting", {"epsilon", "tau"});
    read(o, "epsilon", c.weight_epsilon, "weighting");
    read(o, "tau", c.weight_tau, "weighting");
  }
  if (j.contains("prior")) {
    const auto& o = j["prior"];
    reject_unknown(o, "prior", {"alpha", "beta"});
    read(o, "alpha", c.prior_alpha, "prior");
    read(o, "beta", c.prior_beta, "prior");
  }
  if (j.contains("gsvd")) {
    const auto& o = j["gsvd"];
    reject_unknown(o, "gsvd", {"k", "oversampling", "q", "seed"});
    read(o, "k", c.k, "gsvd");
    read(o, "oversampling", c.oversampling, "gsvd");
    read(o, "q", c.q, "gsvd");
    read_seed(o, c.seed);
  }
  if (j.contains("tolerances")) {
    const auto& o = j["tolerances"];
    reject_unknown(o, "tolerances", {"gradient", "refine", "newton_cg", "max_newton_iterations"});
    read(o, "gradient", c.gradient_tolerance, "tolerances");
    read(o, "refine", c.refine_tolerance, "tolerances");
    read(o, "newton_cg", c.newton_cg_tolerance, "tolerances");
    read(o, "max_newton_iterations", c.max_newton_iterations, "tolerances");
  }
  if (j.contains("predict")) {
    const auto& o = j["predict"];
    reject_unknown(o, "predict", {"high_fidelity"});
    read(o, "high_fidelity", c.high_fidelity, "predict");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  return json{{"problem", c.problem},
              {"resolution", c.resolution},
              {"nu", c.nu},
              {"objective", {{"beta1", c.beta1}, {"beta2", c.beta2}}},
              {"weighting", {{"epsilon", c.weight_epsilon}, {"tau", c.weight_tau}}},
              {"prior", {{"alpha", c.prior_alpha}, {"beta", c.prior_beta}}},
              {"gsvd", {{"k", c.k}, {"oversampling", c.oversampling}, {"q", c.q}, {"seed", c.seed}}},
              {"tolerances",
               {{"gradient", c.gradient_tolerance},
                {"refine", c.refine_tolerance},
                {"newton_cg", c.newton_cg_tolerance},
                {"max_newton_iterations", c.max_newton_iterations}}},
              {"predict", {{"high_fidelity", c.high_fidelity}}},
              {"output", c.output}};
}

}  // namespace hdsa::app
