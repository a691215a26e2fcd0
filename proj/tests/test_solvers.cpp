#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "lesita/rng.hpp"
#include "lesita/solvers.hpp"

using namespace lesita;

namespace {

// Noiseless sparse instance: F with N(0, 1/m) entries, alpha* s-sparse with
// +-1-ish magnitudes, y = F alpha*.
struct Instance {
  SparseProblem problem;
  Vector alpha_star;
};

Instance make_instance(Index m, Index k, Index s, std::uint64_t seed, double lambda) {
  Rng rng(seed);
  Instance inst;
  inst.problem.F = rng.normal_matrix(m, k) / std::sqrt(static_cast<double>(m));
  inst.alpha_star = Vector::Zero(k);
  for (Index i : rng.sample_without_replacement(k, s)) {
    double v = rng.normal();
    inst.alpha_star[i] = (v >= 0.0 ? 1.0 : -1.0) * (0.5 + std::abs(v));
  }
  inst.problem.y = inst.problem.F * inst.alpha_star;
  inst.problem.lambda = lambda;
  return inst;
}

}  // namespace

TEST_CASE("operator norm bound on simple matrices", "[solvers]") {
  // Identity: largest eigenvalue of F^T F is 1, inflated bound is 1.01.
  Matrix eye = Matrix::Identity(4, 4);
  double b = lipschitz_upper_bound(eye);
  CHECK(b >= 1.0);
  CHECK(b <= 1.02);

  // diag(3, 1): largest eigenvalue of F^T F is 9.
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  double bd = lipschitz_upper_bound(d);
  CHECK(bd >= 9.0);
  CHECK(bd <= 9.0 * 1.011);

  // Zero matrix: conventional bound of 1.
  CHECK(lipschitz_upper_bound(Matrix::Zero(3, 2)) == 1.0);

  // Empty matrix is rejected.
  CHECK_THROWS_AS(lipschitz_upper_bound(Matrix(0, 0)), DimensionError);
}

TEST_CASE("operator norm bound dominates the eigendecomposition value", "[solvers]") {
  Rng rng(314);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix F = rng.normal_matrix(24, 40);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(F.transpose() * F));
    double lam_max = es.eigenvalues().maxCoeff();
    double b = lipschitz_upper_bound(F);
    CHECK(b >= lam_max * (1.0 - 1e-9));  // a genuine upper bound
    CHECK(b <= lam_max * 1.011);         // and a tight one
  }
}

TEST_CASE("operator norm bound is deterministic", "[solvers]") {
  Matrix F = Rng(5).normal_matrix(16, 24);
  CHECK(lipschitz_upper_bound(F) == lipschitz_upper_bound(F));
}

TEST_CASE("iterative shrinkage records the starting objective", "[solvers]") {
  Instance inst = make_instance(16, 32, 4, 11, 0.05);
  SolverConfig cfg;
  cfg.t_max = 10;
  cfg.rel_tol = 0.0;
  SolverResult res = ista_solve(inst.problem, cfg);
  REQUIRE(res.objective_trace.size() == static_cast<std::size_t>(res.iterations) + 1);
  CHECK(res.objective_trace.front() ==
        Catch::Approx(0.5 * inst.problem.y.squaredNorm()).epsilon(1e-12));
  CHECK(res.iterations == 10);
}

TEST_CASE("iterative shrinkage objective never increases", "[solvers]") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    Instance inst = make_instance(32, 64, 6, seed, 0.1);
    SolverConfig cfg;
    cfg.t_max = 500;
    cfg.rel_tol = 0.0;
    SolverResult res = ista_solve(inst.problem, cfg);
    for (std::size_t t = 1; t < res.objective_trace.size(); ++t) {
      REQUIRE(res.objective_trace[t] <= res.objective_trace[t - 1] + 1e-10);
    }
  }
}

TEST_CASE("side-information iterations also descend their objective", "[solvers]") {
  Instance inst = make_instance(32, 64, 6, 21, 0.1);
  Rng rng(31);
  Vector w = inst.alpha_star;
  for (Index i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) w[i] += 0.1 * rng.normal();
  }
  inst.problem.w = w;
  SolverConfig cfg;
  cfg.t_max = 500;
  cfg.rel_tol = 0.0;
  SolverResult res = sita_solve(inst.problem, cfg);
  for (std::size_t t = 1; t < res.objective_trace.size(); ++t) {
    REQUIRE(res.objective_trace[t] <= res.objective_trace[t - 1] + 1e-10);
  }
}

TEST_CASE("iterative shrinkage satisfies the optimality conditions at convergence", "[solvers]") {
  // Independent certificate: at a minimizer of 0.5 |F a - y|^2 + lambda |a|_1,
  // the gradient g = F^T (F a - y) obeys g_i = -lambda sign(a_i) on the
  // support and |g_i| <= lambda elsewhere.
  Instance inst = make_instance(16, 32, 4, 77, 0.05);
  SolverConfig cfg;
  cfg.t_max = 200000;
  cfg.rel_tol = 1e-15;
  SolverResult res = ista_solve(inst.problem, cfg);
  Vector g = inst.problem.F.transpose() * (inst.problem.F * res.alpha - inst.problem.y);
  const double lambda = inst.problem.lambda;
  const double tol = 1e-5;
  for (Index i = 0; i < res.alpha.size(); ++i) {
    if (res.alpha[i] != 0.0) {
      REQUIRE(std::abs(g[i] + lambda * (res.alpha[i] > 0 ? 1.0 : -1.0)) <= tol);
    } else {
      REQUIRE(std::abs(g[i]) <= lambda + tol);
    }
  }
}

TEST_CASE("side-information iterations satisfy their optimality conditions", "[solvers]") {
  // Certificate for 0.5 |F a - y|^2 + lambda (|a|_1 + |a - w|_1): the negative
  // gradient must lie in lambda (sgn(a_i) + sgn(a_i - w_i)) with the sign sets
  // widened to [-1, 1] at zeros of each term.
  Instance inst = make_instance(16, 32, 4, 99, 0.05);
  Rng rng(100);
  Vector w = inst.alpha_star;
  for (Index i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0 && rng.uniform() < 0.5) w[i] += 0.2 * rng.normal();
  }
  inst.problem.w = w;
  SolverConfig cfg;
  cfg.t_max = 200000;
  cfg.rel_tol = 1e-15;
  SolverResult res = sita_solve(inst.problem, cfg);
  Vector g = inst.problem.F.transpose() * (inst.problem.F * res.alpha - inst.problem.y);
  const double lambda = inst.problem.lambda;
  const double tol = 1e-5;
  for (Index i = 0; i < res.alpha.size(); ++i) {
    const double a = res.alpha[i];
    const double d = a - w[i];
    double fixed = 0.0;   // contributions with a definite sign
    double slack = 0.0;   // width of the subdifferential interval
    if (a != 0.0) fixed += (a > 0 ? 1.0 : -1.0); else slack += 1.0;
    if (d != 0.0) fixed += (d > 0 ? 1.0 : -1.0); else slack += 1.0;
    REQUIRE(std::abs(g[i] + lambda * fixed) <= lambda * slack + tol);
  }
}

TEST_CASE("zero measurements stop immediately at zero", "[solvers]") {
  SparseProblem p;
  p.F = Rng(8).normal_matrix(8, 16);
  p.y = Vector::Zero(8);
  p.lambda = 0.1;
  SolverResult res = ista_solve(p);
  CHECK(res.iterations == 1);
  CHECK(res.alpha.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("target error stopping rule halts early", "[solvers]") {
  Instance inst = make_instance(64, 128, 8, 5, 0.01);
  SolverConfig full;
  full.t_max = 5000;
  full.rel_tol = 1e-14;
  SolverResult base = ista_solve(inst.problem, full);
  REQUIRE(nmse_db(base.alpha, inst.alpha_star) < -30.0);

  SolverConfig targeted = full;
  targeted.target_nmse_db = -30.0;
  SolverResult early = ista_solve(inst.problem, targeted, &inst.alpha_star);
  CHECK(early.iterations < base.iterations);
  CHECK(nmse_db(early.alpha, inst.alpha_star) <= -30.0);

  // Without a reference the target is ignored and the run matches the base.
  SolverResult no_ref = ista_solve(inst.problem, targeted);
  CHECK(no_ref.iterations == base.iterations);
}

TEST_CASE("tighter relative-change tolerances run longer", "[solvers]") {
  Instance inst = make_instance(16, 32, 4, 13, 0.05);
  SolverConfig loose;
  loose.t_max = 100000;
  loose.rel_tol = 1e-2;
  SolverConfig tight = loose;
  tight.rel_tol = 1e-10;
  SolverResult a = ista_solve(inst.problem, loose);
  SolverResult b = ista_solve(inst.problem, tight);
  CHECK(a.iterations < b.iterations);
  CHECK(b.iterations < tight.t_max);  // still converges well before the cap
}

TEST_CASE("zero side information equals plain shrinkage at doubled weight", "[solvers]") {
  Instance inst = make_instance(24, 48, 5, 42, 0.05);
  SparseProblem si = inst.problem;
  si.w = Vector::Zero(48);
  SparseProblem plain = inst.problem;
  plain.lambda = 2.0 * inst.problem.lambda;
  SolverConfig cfg;
  cfg.t_max = 300;
  cfg.rel_tol = 0.0;
  SolverResult a = sita_solve(si, cfg);
  SolverResult b = ista_solve(plain, cfg);
  REQUIRE(a.iterations == b.iterations);
  CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("accurate side information speeds up recovery", "[solvers]") {
  Instance inst = make_instance(32, 64, 6, 123, 0.05);
  SparseProblem si = inst.problem;
  si.w = inst.alpha_star;
  SolverConfig cfg;
  cfg.t_max = 200;
  cfg.rel_tol = 0.0;
  SolverResult with_si = sita_solve(si, cfg);
  SolverResult without = ista_solve(inst.problem, cfg);
  CHECK(nmse_db(with_si.alpha, inst.alpha_star) < nmse_db(without.alpha, inst.alpha_star));
}

TEST_CASE("manual operator-norm override reproduces the computed bound", "[solvers]") {
  Instance inst = make_instance(16, 32, 4, 7, 0.05);
  SolverConfig cfg;
  cfg.t_max = 50;
  cfg.rel_tol = 0.0;
  SolverResult auto_bound = ista_solve(inst.problem, cfg);
  cfg.lipschitz = lipschitz_upper_bound(inst.problem.F);
  SolverResult manual = ista_solve(inst.problem, cfg);
  CHECK((auto_bound.alpha - manual.alpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solver input validation", "[solvers]") {
  SparseProblem p;
  p.F = Matrix::Identity(4, 4);
  p.y = Vector::Ones(4);
  p.lambda = 0.1;

  SECTION("plain solver rejects side information") {
    p.w = Vector::Zero(4);
    CHECK_THROWS_AS(ista_solve(p), InvalidParameterError);
  }
  SECTION("side-information solver requires it") {
    CHECK_THROWS_AS(sita_solve(p), InvalidParameterError);
  }
  SECTION("side information length must match") {
    p.w = Vector::Zero(3);
    CHECK_THROWS_AS(sita_solve(p), DimensionError);
  }
  SECTION("measurement length must match the operator") {
    p.y = Vector::Ones(3);
    CHECK_THROWS_AS(ista_solve(p), DimensionError);
  }
  SECTION("regularization weight must be positive") {
    p.lambda = 0.0;
    CHECK_THROWS_AS(ista_solve(p), InvalidParameterError);
  }
  SECTION("iteration budget must be positive") {
    SolverConfig cfg;
    cfg.t_max = 0;
    CHECK_THROWS_AS(ista_solve(p, cfg), InvalidParameterError);
  }
}
