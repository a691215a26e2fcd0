#ifndef LESITA_SOLVERS_HPP
#define LESITA_SOLVERS_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "lesita/common.hpp"
#include "lesita/metrics.hpp"
#include "lesita/prox.hpp"
#include "lesita/rng.hpp"

namespace lesita {

// min_alpha 1/2 |F alpha - y|^2 + lambda |alpha|_1            (w absent)
// min_alpha 1/2 |F alpha - y|^2 + lambda (|alpha|_1 + |alpha - w|_1)   (w present)
struct SparseProblem {
  Matrix F;                 // m x k
  Vector y;                 // m
  double lambda = 0.1;      // regularization weight
  std::optional<Vector> w;  // side information in code space, length k
};

struct SolverConfig {
  int t_max = 1000;
  double rel_tol = 1e-8;                      // on relative iterate change
  std::optional<double> target_nmse_db = {};  // early stop, needs a reference
  std::optional<double> lipschitz = {};       // reuse a precomputed bound for F
};

struct SolverResult {
  Vector alpha;
  int iterations = 0;
  std::vector<double> objective_trace;  // value at alpha^0 then after each iteration
};

inline double l1_objective(const Matrix& F, const Vector& y, double lambda, const Vector& alpha) {
  return 0.5 * (F * alpha - y).squaredNorm() + lambda * alpha.lpNorm<1>();
}

inline double l1l1_objective(const Matrix& F, const Vector& y, double lambda, const Vector& alpha,
                             const Vector& w) {
  return 0.5 * (F * alpha - y).squaredNorm() + lambda * (alpha.lpNorm<1>() + (alpha - w).lpNorm<1>());
}

// Upper bound on lambda_max(F^T F): power iteration to 1e-6 relative
// tolerance, inflated by 1.01.  Deterministic (fixed internal start vector).
// A zero matrix yields 1, a valid bound for the zero operator.
inline double lipschitz_upper_bound(const Matrix& F) {
  if (F.rows() == 0 || F.cols() == 0) throw DimensionError("lipschitz_upper_bound: empty matrix");
  Rng rng(0x9f34c1d2b5a76e81ULL);
  Vector v = rng.normal_vector(F.cols());
  const double vn = v.norm();
  if (vn == 0.0)
    v.setUnit(0);
  else
    v /= vn;
  double lam = 0.0;
  double prev = -1.0;
  for (int it = 0; it < 20000; ++it) {
    Vector g = F.transpose() * (F * v);
    const double gn = g.norm();
    if (gn == 0.0) {
      lam = 0.0;
      break;
    }
    lam = v.dot(g);
    v = g / gn;
    if (prev >= 0.0 && std::abs(lam - prev) <= 1e-6 * lam) break;
    prev = lam;
  }
  if (!(lam > 0.0)) return 1.0;
  return 1.01 * lam;
}

namespace detail {

// One gradient step in unfolded form: W y + S alpha, with samples as columns.
// Shared by the solvers and the unfolded networks so that their iterates
// agree bit-for-bit when the operators coincide.
inline Matrix layer_preactivation(const Matrix& S, const Matrix& W, const Matrix& alpha,
                                  const Matrix& y) {
  Matrix pre = W * y;
  pre.noalias() += S * alpha;
  return pre;
}

struct IterationOperator {
  Matrix S;  // I - F^T F / L
  Matrix W;  // F^T / L
  Matrix y;  // measurements as a single column
  double L = 1.0;

  IterationOperator(const Matrix& F, const Vector& rhs, std::optional<double> lipschitz) : y(rhs) {
    L = lipschitz ? *lipschitz : lipschitz_upper_bound(F);
    if (!(L > 0.0)) throw InvalidParameterError("solver: Lipschitz bound must be positive");
    S = Matrix::Identity(F.cols(), F.cols()) - (F.transpose() * F) / L;
    W = F.transpose() / L;
  }

  Matrix step(const Matrix& alpha) const { return layer_preactivation(S, W, alpha, y); }
};

inline void check_problem(const SparseProblem& p, bool want_si) {
  if (p.F.rows() != p.y.size())
    throw DimensionError("solver: F rows do not match y length");
  if (p.lambda <= 0.0) throw InvalidParameterError("solver: lambda must be positive");
  if (want_si) {
    if (!p.w) throw InvalidParameterError("sita_solve: problem has no side information");
    if (p.w->size() != p.F.cols())
      throw DimensionError("sita_solve: w length does not match F columns");
  } else if (p.w) {
    throw InvalidParameterError("ista_solve: problem carries side information, use sita_solve");
  }
  // t_max >= 1 checked at use
}

template <class ProxFn, class ObjFn>
SolverResult proximal_loop(const SparseProblem& p, const SolverConfig& cfg, const Vector* reference,
                           ProxFn&& prox, ObjFn&& objective) {
  if (cfg.t_max < 1) throw InvalidParameterError("solver: t_max must be >= 1");
  IterationOperator op(p.F, p.y, cfg.lipschitz);
  Matrix alpha = Matrix::Zero(p.F.cols(), 1);
  SolverResult res;
  res.objective_trace.reserve(static_cast<std::size_t>(cfg.t_max) + 1);
  res.objective_trace.push_back(objective(Vector(alpha.col(0))));
  for (int t = 1; t <= cfg.t_max; ++t) {
    Matrix next = prox(op.step(alpha), p.lambda / op.L);
    const double change = (next - alpha).norm();
    const double base = alpha.norm();
    alpha.swap(next);
    res.iterations = t;
    res.objective_trace.push_back(objective(Vector(alpha.col(0))));
    if (reference && cfg.target_nmse_db && nmse_db(alpha.col(0), *reference) <= *cfg.target_nmse_db)
      break;
    if (change <= cfg.rel_tol * (base > 0.0 ? base : 1.0)) break;
  }
  res.alpha = alpha.col(0);
  return res;
}

}  // namespace detail

// ISTA: alpha^t = soft_threshold(alpha^{t-1} - (1/L) F^T (F alpha^{t-1} - y), lambda/L).
// `reference` (ground-truth code) enables the target-NMSE stopping rule.
inline SolverResult ista_solve(const SparseProblem& p, const SolverConfig& cfg = {},
                               const Vector* reference = nullptr) {
  detail::check_problem(p, /*want_si=*/false);
  return detail::proximal_loop(
      p, cfg, reference,
      [](const Matrix& pre, double theta) { return soft_threshold(pre, SoftThresholdParam{theta}); },
      [&](const Vector& a) { return l1_objective(p.F, p.y, p.lambda, a); });
}

// SITA: same gradient step, but the activation is the l1-l1 proximal map
// guided by the side information w.
inline SolverResult sita_solve(const SparseProblem& p, const SolverConfig& cfg = {},
                               const Vector* reference = nullptr) {
  detail::check_problem(p, /*want_si=*/true);
  return detail::proximal_loop(
      p, cfg, reference,
      [&](const Matrix& pre, double mu) { return si_prox(pre, *p.w, SIProxParam{mu}); },
      [&](const Vector& a) { return l1l1_objective(p.F, p.y, p.lambda, a, *p.w); });
}

}  // namespace lesita

#endif  // LESITA_SOLVERS_HPP
