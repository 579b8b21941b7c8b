#pragma once

#include "hdsa/discrepancy.hpp"
#include "hdsa/gsvd.hpp"
#include "hdsa/kron2.hpp"
#include "hdsa/optctl.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Dense brute-force references for tests and the verify command. Every
// function refuses to run beyond tiny sizes.
namespace hdsa::oracle {

inline constexpr Index max_state_dim = 6;
inline constexpr Index max_control_dim = 6;
inline constexpr Index max_theta_dim = 42;

void check_size(Index m, Index n);

struct DenseInstance {
  Matrix l, mz, precision, gamma;  // gamma = precision^{-1}
  Vector zbar;
  Index m() const { return l.rows(); }
  Index n() const { return mz.rows(); }
};

Matrix random_spd(Index n, std::uint64_t seed);
DenseInstance random_instance(Index m, Index n, std::uint64_t seed, bool zero_mean = false);
DenseInstance dense_instance(const Matrix& l, const Matrix& mz, const Matrix& precision, const Vector& zbar);
MthetaOperator structured_mtheta(const DenseInstance& inst, SolveCounters* counters = nullptr,
                                 MthetaOptions options = {});

Kron2 random_kron2(Index m, Index n, Index d, std::uint64_t seed);
// Single column whose densification is the i-th unit vector of R^p.
Kron2 unit_theta(Index m, Index n, Index i);
// Dense p x p matrix of a structured operator, by probing unit vectors.
Matrix probe(Index m, Index n, const std::function<Kron2(const Kron2&)>& op);

Matrix dense_delta_matrix(Index m, const Matrix& mz, const Vector& z);  // (I_m, I_m (x) z'M_z), m x p
Matrix dense_mtheta(const DenseInstance& inst);                // literal block assembly

// PDE quantities at the context's optimum (uncounted).
Matrix dense_solution_jacobian(const pde::Linearization& lin);  // m x n
Matrix dense_b(const SensitivityContext& ctx);                 // n x p
Matrix dense_hessian(const SensitivityContext& ctx);            // n x n
DenseInstance dense_instance(const SensitivityContext& ctx, const WeightingL& l, const GaussianPrior& prior);

Matrix spd_sqrt(const Matrix& a);
Matrix spd_inv_sqrt(const Matrix& a);

// Weighted SVD of A: A Theta_N = sigma_N W_N, W'M_zW = I, Theta'M_theta Theta = I.
struct DenseGsvd {
  Vector sigma;
  Matrix w, theta;
};
DenseGsvd dense_gsvd(const Matrix& a, const Matrix& mz, const Matrix& mtheta);

// Largest principal angle (degrees) between span(a) and span(b) in the weight inner product.
double max_subspace_angle_deg(const Matrix& a, const Matrix& b, const Matrix& weight);

// Residuals of the four identities behind the closed-form inverse, each scaled
// by max(1, |reference|):
//   1. zbar'M_z x = beta/(1+beta)
//   2. (Gamma^{-1} - G) zbar = Gamma^{-1} zbar/(1+beta)   (left side as M_z x)
//   3. E x = M_z zbar
//   4. zbar zbar'(Gamma^{-1} - G) = zbar zbar' Gamma^{-1}/(1+beta)
std::array<double, 4> identity_residuals(const DenseInstance& inst, MthetaOptions options = {});
// max |dense M_theta * structured M_theta^{-1} - I|
double inverse_residual(const DenseInstance& inst, MthetaOptions options = {});

// Entrywise comparison of an empirical covariance with a reference: the
// largest |estimate - reference| / standard error over all entries.
struct CovarianceCheck {
  double max_z_score = 0.0;
  Matrix estimate;
  Matrix reference;
};
CovarianceCheck covariance_check(const Matrix& samples, const Matrix& reference);  // samples: dim x count

// Re-optimization check of the post-optimality linearization along theta:
// remainder(eps) = |F(eps theta) - zbar - eps dz| with dz = -H^{-1}B theta.
struct ReoptRow {
  double epsilon = 0.0;
  double remainder = 0.0;  // M_z norm
  double scaled = 0.0;     // remainder / (eps |dz|)
  double cosine = 0.0;     // cos angle(F(eps theta) - zbar, dz) in M_z
};
struct ReoptReport {
  double dz_norm = 0.0;
  std::vector<ReoptRow> rows;
  std::vector<double> ratios;  // scaled_i / scaled_{i+1}
  double order = 0.0;          // mean log2 of remainder ratios
};
ReoptReport reopt_check(const SensitivityContext& ctx, const Kron2& theta, const std::vector<double>& epsilons,
                        const optctl::OptimizerOptions& options = {});

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int repetitions = 20;
  MthetaOptions mtheta;  // fault injection
  int sampler_draws = 100000;
};

std::vector<Check> verify_suite(const VerifyOptions& options = {});

}  // namespace hdsa::oracle
