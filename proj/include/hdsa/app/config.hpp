#pragma once

#include "hdsa/problem.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace hdsa::app {

// Defaults mirror the convection-diffusion-reaction example.
struct RunConfig {
  std::string problem = "cdr2d";  // cdr2d | diffusion1d | advdiff1d
  int resolution = 32;
  double nu = 1.0;

  double beta1 = 1e-6;
  double beta2 = 1e-6;

  double weight_epsilon = 1e-3;
  double weight_tau = 50.0;
  double prior_alpha = 1.0;
  double prior_beta = 1e-6;

  int k = 54;
  int oversampling = 8;
  int q = 1;
  std::uint64_t seed = 0;

  double gradient_tolerance = 1e-8;
  double refine_tolerance = 1e-14;
  double newton_cg_tolerance = 1e-14;
  int max_newton_iterations = 50;

  std::string high_fidelity = "advdiff1d";  // predict: the model the discrepancy is measured against
  std::string output = "out";

  Index control_dim() const;
  void validate() const;  // throws ConfigError
  ProblemSpec problem_spec(int threads) const;
};

// Unknown keys and wrong types are rejected with ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace hdsa::app
