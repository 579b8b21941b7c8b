#include "hdsa/app/commands.hpp"
#include "hdsa/error.hpp"
#include "hdsa/oracle.hpp"
#include "hdsa/problem.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace hdsa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double rel_diff(const Matrix& a, const Matrix& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(1e-300, ref.cwiseAbs().maxCoeff());
}

// Largest orthonormality residual seen by any run in this binary.
double worst_orthonormality = 0.0;
int orthonormality_runs = 0;

GsvdResult tracked_gsvd(const SensitivityContext& ctx, const GsvdConfig& cfg) {
  auto r = randomized_gsvd(ctx, cfg);
  worst_orthonormality = std::max({worst_orthonormality, r.left_orthonormality, r.right_orthonormality});
  ++orthonormality_runs;
  return r;
}

ProblemSpec small_spec(int resolution) {
  ProblemSpec spec;
  spec.kind = pde::ModelKind::diffusion1d;
  spec.resolution = resolution;
  spec.beta1 = 1e-2;
  spec.beta2 = 1e-3;
  return spec;
}

ProblemSpec cdr_spec(int resolution) {
  ProblemSpec spec;
  spec.resolution = resolution;
  return spec;
}

bool counters_match(const GsvdResult& r, std::string& why) {
  const auto e = expected_counts(r.q, r.d, r.counters.cg_per_call);
  const auto& c = r.counters;
  const std::pair<const char*, std::pair<std::uint64_t, std::uint64_t>> rows[] = {
      {"mz_solve", {c.mz_solve, e.mz_solve}},
      {"l_solve", {c.l_solve, e.l_solve}},
      {"state_jacobian_solve", {c.state_jacobian_solve, e.state_jacobian_solve}},
      {"state_jacobian_t_solve", {c.state_jacobian_t_solve, e.state_jacobian_t_solve}},
      {"mz_apply", {c.mz_apply, e.mz_apply}},
      {"gamma_inv_apply", {c.gamma_inv_apply, e.gamma_inv_apply}},
      {"hess_inv_apply", {c.hess_inv_apply, e.hess_inv_apply}}};
  for (const auto& [name, v] : rows) {
    if (v.first != v.second) {
      why = std::string(name) + " " + std::to_string(v.first) + " != " + std::to_string(v.second);
      return false;
    }
  }
  return true;
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<Index> dm(1, 6), dn(1, 5);
  double worst = 0.0;
  for (int r = 0; r < 20; ++r) {
    const Index m = dm(rng), n = dn(rng);
    worst = std::max(worst, oracle::inverse_residual(oracle::random_instance(m, n, rng())));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-10 && t < 1.0, "max |M_theta M_theta^-1 - I| = " + fmt(worst) + ", " + fmt(t) + " s"};
}

Outcome criterion2() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<Index> dn(1, 6);
  std::array<double, 4> worst{};
  for (int r = 0; r < 20; ++r) {
    const auto res = oracle::identity_residuals(oracle::random_instance(2, dn(rng), rng()));
    for (int i = 0; i < 4; ++i) worst[i] = std::max(worst[i], res[i]);
  }
  bool ok = true;
  std::string d;
  for (int i = 0; i < 4; ++i) {
    ok = ok && worst[i] <= 1e-12;
    d += "identity " + std::to_string(i + 1) + ": " + fmt(worst[i]) + (i < 3 ? ", " : "");
  }
  return {ok, d};
}

Outcome criterion3() {
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  const Index m = ctx.m(), n = ctx.n(), p = m * (n + 1);
  const Matrix b = oracle::dense_b(ctx);
  Matrix bp(n, p), btp(p, n);
  for (Index i = 0; i < p; ++i) bp.col(i) = ctx.b_apply(oracle::unit_theta(m, n, i));
  for (Index j = 0; j < n; ++j) btp.col(j) = ctx.bt_apply(Vector(Vector::Unit(n, j))).dense_column(0);
  const auto inst = oracle::dense_instance(ctx, prob.weighting(), prob.prior());
  const Matrix mp = oracle::probe(m, n, [&](const Kron2& t) { return ctx.mtheta().apply(t); });
  const double eb = rel_diff(bp, b), ebt = rel_diff(btp, b.transpose()), em = rel_diff(mp, oracle::dense_mtheta(inst));
  return {m == 4 && n == 3 && eb <= 1e-10 && ebt <= 1e-10 && em <= 1e-10,
          "m=" + std::to_string(m) + " n=" + std::to_string(n) + ": B " + fmt(eb) + ", B' " + fmt(ebt) +
              ", M_theta " + fmt(em)};
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  Problem prob(small_spec(2));
  auto& ctx = prob.sensitivity();
  const Index m = ctx.m(), n = ctx.n();
  const int draws = 100000;
  const std::uint64_t seed = 4;
  Matrix pairs(m + n, draws);
  for (int j = 0; j < draws; ++j) {
    const auto w = sample_omega_pair(ctx.mtheta().mz_zbar(), ctx.state_gradient(), seed, j);
    pairs.col(j) << w.u, w.z;
  }
  const Vector a = ctx.mtheta().mz_zbar(), bv = ctx.state_gradient();
  Matrix cov(m + n, m + n);
  cov << a.squaredNorm() * Matrix::Identity(m, m), bv * a.transpose(), a * bv.transpose(),
      bv.squaredNorm() * Matrix::Identity(n, n);
  const double z1 = oracle::covariance_check(pairs, cov).max_z_score;
  const Matrix b = oracle::dense_b(ctx);
  const double z2 = oracle::covariance_check(ctx.sample_b_omega(draws, seed), b * b.transpose()).max_z_score;
  const double t = seconds_since(t0);
  return {m == 3 && n == 2 && z1 <= 3.0 && z2 <= 3.0 && t < 30.0,
          "max z-score pair " + fmt(z1) + ", columns " + fmt(z2) + ", " + fmt(t) + " s"};
}

Outcome criterion5() {
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  const Matrix b = oracle::dense_b(ctx);
  const Matrix h = oracle::dense_hessian(ctx);
  const auto inst = oracle::dense_instance(ctx, prob.weighting(), prob.prior());
  const Matrix mt = oracle::dense_mtheta(inst);
  const auto ref = oracle::dense_gsvd(h.llt().solve(b), inst.mz, mt);
  double sig = 0.0, ang = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GsvdConfig cfg;
    cfg.k = 3;
    cfg.oversampling = 2;
    cfg.q = 2;
    cfg.seed = seed;
    const auto r = tracked_gsvd(ctx, cfg);
    for (int i = 0; i < 3; ++i) sig = std::max(sig, std::abs(r.sigma(i) - ref.sigma(i)) / ref.sigma(i));
    ang = std::max(ang, oracle::max_subspace_angle_deg(r.w.leftCols(3), ref.w.leftCols(3), inst.mz));
    ang = std::max(ang, oracle::max_subspace_angle_deg(r.theta.dense().leftCols(3), ref.theta.leftCols(3), mt));
  }
  return {sig <= 0.01 && ang <= 5.0, "max relative sigma error " + fmt(sig) + ", max angle " + fmt(ang) + " deg"};
}

struct CdrRun {
  std::unique_ptr<Problem> problem;
  GsvdResult result;
  double seconds = 0.0;
};

CdrRun& cdr_k20() {
  static CdrRun run = [] {
    CdrRun r;
    const auto t0 = std::chrono::steady_clock::now();
    r.problem = std::make_unique<Problem>(cdr_spec(32));
    GsvdConfig cfg;
    cfg.k = 20;
    cfg.oversampling = 8;
    cfg.q = 1;
    cfg.seed = 6;
    r.result = tracked_gsvd(r.problem->sensitivity(), cfg);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome criterion6() {
  const auto& r = cdr_k20();
  return {r.result.left_orthonormality <= 1e-8 && r.result.right_orthonormality <= 1e-8,
          "CDR 32x32 k=20: W'MW " + fmt(r.result.left_orthonormality) + ", Theta'M Theta " +
              fmt(r.result.right_orthonormality) + " (" + fmt(r.seconds) + " s)"};
}

Outcome criterion7() {
  std::string why;
  const auto& r = cdr_k20();
  if (!counters_match(r.result, why)) return {false, "CDR k=20: " + why};
  Problem prob(small_spec(3));
  GsvdConfig cfg;
  cfg.k = 2;
  cfg.oversampling = 1;
  cfg.q = 3;
  const auto r2 = tracked_gsvd(prob.sensitivity(), cfg);
  if (!counters_match(r2, why)) return {false, "diffusion1d q=3: " + why};
  const auto& c = r.result.counters;
  const auto e = expected_counts(r.result.q, r.result.d, c.cg_per_call);
  return {true, "d=28 q=1: M_z solves " + std::to_string(c.mz_solve) + ", L solves " + std::to_string(c.l_solve) +
                    ", J_u solves " + std::to_string(c.state_jacobian_solve) + ", J_u' solves " +
                    std::to_string(c.state_jacobian_t_solve) + " (mean L_CG " + fmt(c.mean_cg_iterations()) +
                    ", cost-model estimate " + fmt(e.cost_state_solve) + " each); also q=3"};
}

Outcome criterion8() {
  double gerr = 0.0, herr = 0.0, serr = 0.0;
  for (auto kind : {pde::ModelKind::diffusion1d, pde::ModelKind::advdiff1d, pde::ModelKind::cdr2d}) {
    ProblemSpec spec;
    spec.kind = kind;
    spec.resolution = 8;
    spec.beta1 = 1e-3;
    spec.beta2 = 1e-4;
    Problem prob(spec);
    const auto& rp = prob.reduced();
    const Index n = prob.model().control_dim();
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    const auto rnd = [&] {
      Vector v(n);
      for (Index i = 0; i < n; ++i) v(i) = nd(rng);
      return v;
    };
    const Vector z = 0.5 * rnd();
    const auto pt = rp.at(z);
    for (int t = 0; t < 3; ++t) {
      const Vector v = rnd(), w = rnd();
      const double e = 1e-5;
      const double fd = (rp.value(z + e * v) - rp.value(z - e * v)) / (2 * e);
      gerr = std::max(gerr, std::abs(fd - pt->gradient().dot(v)) / std::abs(pt->gradient().dot(v)));
      const double eh = 1e-4;
      const Vector hfd = (rp.gradient(z + eh * v) - rp.gradient(z - eh * v)) / (2 * eh);
      const Vector hv = pt->hessvec(v);
      herr = std::max(herr, (hfd - hv).norm() / hv.norm());
      const double a = w.dot(hv), b = v.dot(pt->hessvec(w));
      serr = std::max(serr, std::abs(a - b) / std::abs(a));
    }
  }
  return {gerr < 1e-5 && herr < 1e-4 && serr <= 1e-10,
          "gradient " + fmt(gerr) + ", hessvec " + fmt(herr) + ", symmetry " + fmt(serr) + " (all three models)"};
}

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  Problem prob(cdr_spec(8));
  auto& ctx = prob.sensitivity();
  GsvdConfig cfg;
  cfg.k = 5;
  cfg.seed = 9;
  const auto r = tracked_gsvd(ctx, cfg);
  const auto rep = oracle::reopt_check(ctx, r.theta.column(0), {1e-2, 5e-3, 2.5e-3});
  bool ok = true;
  std::string d = "remainders";
  for (const auto& row : rep.rows) d += " " + fmt(row.remainder);
  d += "; ratios";
  for (double x : rep.ratios) {
    ok = ok && x >= 1.6 && x <= 2.4;
    d += " " + fmt(x);
  }
  const double t = seconds_since(t0);
  d += "; order " + fmt(rep.order) + ", " + fmt(t) + " s";
  return {ok && t < 120.0, d};
}

int run_cli(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void write_config(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2);
}

Outcome criterion10(const std::string& cli, const fs::path& work) {
  const fs::path cfg = work / "illustrative.json";
  write_config(cfg, {{"problem", "diffusion1d"},
                     {"resolution", 200},
                     {"objective", {{"beta1", 0.0}, {"beta2", 0.0}}},
                     {"gsvd", {{"k", 5}}},
                     {"predict", {{"high_fidelity", "advdiff1d"}}}});
  const fs::path out = work / "illustrative";
  const int rc = run_cli(cli + " predict --config " + cfg.string() + " --out " + out.string() + " > " +
                         (work / "illustrative.log").string() + " 2>&1");
  if (rc != 0) return {false, "predict exited with " + std::to_string(rc)};
  const auto s = read_json(out / "summary.json")["prediction"];
  const double nom = s["nominal_error"], pred = s["predicted_error"];
  return {pred <= 0.5 * nom, "|zbar - z*|_Mz = " + fmt(nom) + ", |zbar + dz - z*|_Mz = " + fmt(pred) +
                                 " (ratio " + fmt(pred / nom) + ")"};
}

Outcome criterion11() {
  const auto t0 = std::chrono::steady_clock::now();
  Problem prob(cdr_spec(32));
  GsvdConfig cfg;
  cfg.k = 54;
  cfg.oversampling = 8;
  cfg.q = 1;
  cfg.seed = 0;
  const auto r = tracked_gsvd(prob.sensitivity(), cfg);
  const double ratio = r.sigma(0) / r.sigma(53);
  return {ratio >= 5.0, "sigma_1 = " + fmt(r.sigma(0)) + ", sigma_54 = " + fmt(r.sigma(53)) + ", ratio " + fmt(ratio) +
                            " (" + fmt(seconds_since(t0)) + " s)"};
}

Outcome criterion12(const std::string& cli, const fs::path& work) {
  const fs::path cfg = work / "determinism.json";
  write_config(cfg, {{"problem", "cdr2d"}, {"resolution", 16}, {"gsvd", {{"k", 10}, {"oversampling", 4}, {"seed", 77}}}});
  const fs::path a = work / "det_a", b = work / "det_b";
  const int ra = run_cli(cli + " hdsa --config " + cfg.string() + " --out " + a.string() + " --threads 1 > " +
                         (work / "det_a.log").string() + " 2>&1");
  const int rb = run_cli("HDSA_THREADS=3 " + cli + " hdsa --config " + cfg.string() + " --out " + b.string() + " > " +
                         (work / "det_b.log").string() + " 2>&1");
  if (ra != 0 || rb != 0) return {false, "hdsa exit codes " + std::to_string(ra) + ", " + std::to_string(rb)};
  for (const auto& dir : {a, b}) {
    const auto s = read_json(dir / "summary.json")["gsvd"];
    worst_orthonormality =
        std::max({worst_orthonormality, s["left_orthonormality"].get<double>(), s["right_orthonormality"].get<double>()});
    ++orthonormality_runs;
  }
  const std::string sa = slurp(a / "singular_values.csv"), sb = slurp(b / "singular_values.csv");
  const std::string wa = slurp(a / "w_modes.csv"), wb = slurp(b / "w_modes.csv");
  const int ta = read_json(a / "summary.json")["threads"], tb = read_json(b / "summary.json")["threads"];
  return {!sa.empty() && sa == sb && wa == wb && ta != tb,
          "threads " + std::to_string(ta) + " vs " + std::to_string(tb) + ": singular_values.csv " +
              (sa == sb ? "identical" : "differs") + ", w_modes.csv " + (wa == wb ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli = "hdsa";
  std::string work = "acceptance_work";
  app.add_option("--cli", cli, "path to the hdsa executable");
  app.add_option("--work", work, "scratch directory for CLI runs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"M_theta inverse", criterion1},
      {"closed-form identities 1-4", criterion2},
      {"structured B, B', M_theta vs dense", criterion3},
      {"sampler covariance", criterion4},
      {"randomized vs dense GSVD", criterion5},
      {"orthonormality", criterion6},
      {"solve counters vs cost model", criterion7},
      {"adjoint / Hessian correctness", criterion8},
      {"post-optimality linearization", criterion9},
      {"illustrative prediction", [&] { return criterion10(cli, work); }},
      {"CDR spectrum shape", criterion11},
      {"determinism across thread counts", [&] { return criterion12(cli, work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2zu  %-36s %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.passed) ++failures;
  }
  const bool all_orth = worst_orthonormality <= 1e-8;
  std::printf("%s  6b  %-36s worst residual %s over %d runs\n", all_orth ? "PASS" : "FAIL",
              "orthonormality (all runs)", fmt(worst_orthonormality).c_str(), orthonormality_runs);
  if (!all_orth) ++failures;
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
