#ifndef LESITA_PROX_HPP
#define LESITA_PROX_HPP

#include <cmath>
#include <cstdint>

#include "lesita/common.hpp"

namespace lesita {

// Shrinkage threshold for the l1 proximal map.
struct SoftThresholdParam {
  double theta = 0.0;
};

// Threshold of the side-information proximal map (lambda / L in the solvers).
struct SIProxParam {
  double mu = 0.0;
};

namespace detail {

inline void check_nonnegative(double t, const char* name) {
  if (t < 0.0) throw InvalidParameterError(std::string(name) + " must be nonnegative");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// l1 shrinkage
// ---------------------------------------------------------------------------

inline double soft_threshold_scalar(double u, double theta) {
  if (u > theta) return u - theta;
  if (u < -theta) return u + theta;
  return 0.0;
}

// sign(u) * max(|u| - theta, 0), element-wise.
template <class Derived>
typename Derived::PlainObject soft_threshold(const Eigen::MatrixBase<Derived>& u, SoftThresholdParam p) {
  detail::check_nonnegative(p.theta, "theta");
  return u.derived().unaryExpr([t = p.theta](double x) { return soft_threshold_scalar(x, t); });
}

struct SoftThresholdGrad {
  Matrix du;      // 1 on the active set |u| > theta, else 0
  Matrix dtheta;  // -sign(u) on the active set, else 0
};

template <class Derived>
SoftThresholdGrad soft_threshold_grad(const Eigen::MatrixBase<Derived>& u, SoftThresholdParam p) {
  detail::check_nonnegative(p.theta, "theta");
  SoftThresholdGrad g;
  g.du.resize(u.rows(), u.cols());
  g.dtheta.resize(u.rows(), u.cols());
  for (Index c = 0; c < u.cols(); ++c) {
    for (Index r = 0; r < u.rows(); ++r) {
      const double x = u.derived()(r, c);
      if (x > p.theta) {
        g.du(r, c) = 1.0;
        g.dtheta(r, c) = -1.0;
      } else if (x < -p.theta) {
        g.du(r, c) = 1.0;
        g.dtheta(r, c) = 1.0;
      } else {
        g.du(r, c) = 0.0;
        g.dtheta(r, c) = 0.0;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// l1-l1 proximal map: argmin_v 1/2 (v-u)^2 + mu (|v| + |v-w|), per coordinate
// ---------------------------------------------------------------------------

// Branch labels of the five-piece map.  The flat pieces own their closed
// boundary intervals, so at a kink the flat branch wins; that is also the
// subgradient convention used by si_prox_grad.
enum class SIProxBranch : std::uint8_t {
  kShiftUp = 0,   // v = u + 2 mu
  kZero = 1,      // v = 0
  kIdentity = 2,  // v = u
  kPinned = 3,    // v = w
  kShiftDown = 4  // v = u - 2 mu
};

inline SIProxBranch si_prox_branch_scalar(double u, double w, double mu) {
  if (w >= 0.0) {
    if (u < -2.0 * mu) return SIProxBranch::kShiftUp;
    if (u <= 0.0) return SIProxBranch::kZero;
    if (u < w) return SIProxBranch::kIdentity;
    if (u <= w + 2.0 * mu) return SIProxBranch::kPinned;
    return SIProxBranch::kShiftDown;
  }
  if (u < w - 2.0 * mu) return SIProxBranch::kShiftUp;
  if (u <= w) return SIProxBranch::kPinned;
  if (u < 0.0) return SIProxBranch::kIdentity;
  if (u <= 2.0 * mu) return SIProxBranch::kZero;
  return SIProxBranch::kShiftDown;
}

inline double si_prox_scalar(double u, double w, double mu) {
  switch (si_prox_branch_scalar(u, w, mu)) {
    case SIProxBranch::kShiftUp: return u + 2.0 * mu;
    case SIProxBranch::kZero: return 0.0;
    case SIProxBranch::kIdentity: return u;
    case SIProxBranch::kPinned: return w;
    case SIProxBranch::kShiftDown: return u - 2.0 * mu;
  }
  return u;  // unreachable
}

template <class DU, class DW>
typename DU::PlainObject si_prox(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DW>& w, SIProxParam p) {
  detail::check_nonnegative(p.mu, "mu");
  require_same_length(u.derived(), w.derived(), "si_prox");
  typename DU::PlainObject out(u.rows(), u.cols());
  for (Index c = 0; c < u.cols(); ++c)
    for (Index r = 0; r < u.rows(); ++r)
      out(r, c) = si_prox_scalar(u.derived()(r, c), w.derived()(r, c), p.mu);
  return out;
}

struct SIProxGrad {
  Matrix du;   // 1 on sloped branches (shift/identity), 0 on flat ones
  Matrix dw;   // 1 exactly where the output is pinned to w
  Matrix dmu;  // +2 on the u+2mu branch, -2 on the u-2mu branch, 0 elsewhere
};

template <class DU, class DW>
SIProxGrad si_prox_grad(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DW>& w, SIProxParam p) {
  detail::check_nonnegative(p.mu, "mu");
  require_same_length(u.derived(), w.derived(), "si_prox_grad");
  SIProxGrad g;
  g.du = Matrix::Zero(u.rows(), u.cols());
  g.dw = Matrix::Zero(u.rows(), u.cols());
  g.dmu = Matrix::Zero(u.rows(), u.cols());
  for (Index c = 0; c < u.cols(); ++c) {
    for (Index r = 0; r < u.rows(); ++r) {
      switch (si_prox_branch_scalar(u.derived()(r, c), w.derived()(r, c), p.mu)) {
        case SIProxBranch::kShiftUp:
          g.du(r, c) = 1.0;
          g.dmu(r, c) = 2.0;
          break;
        case SIProxBranch::kZero: break;
        case SIProxBranch::kIdentity: g.du(r, c) = 1.0; break;
        case SIProxBranch::kPinned: g.dw(r, c) = 1.0; break;
        case SIProxBranch::kShiftDown:
          g.du(r, c) = 1.0;
          g.dmu(r, c) = -2.0;
          break;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Independent oracle
// ---------------------------------------------------------------------------

inline double si_prox_objective(double v, double u, double w, double mu) {
  return 0.5 * (v - u) * (v - u) + mu * (std::abs(v) + std::abs(v - w));
}

// The objective is piecewise quadratic with unit curvature and breakpoints
// only at 0 and w, so its minimizer is one of five candidates: the three
// stationary points of the sloped pieces and the two breakpoints.  Evaluating
// all five is exact; ties resolve to the candidate of smallest magnitude.
inline double si_prox_oracle(double u, double w, double mu) {
  const double candidates[5] = {u - 2.0 * mu, u, u + 2.0 * mu, 0.0, w};
  double best_v = candidates[0];
  double best_h = si_prox_objective(best_v, u, w, mu);
  for (int i = 1; i < 5; ++i) {
    const double v = candidates[i];
    const double h = si_prox_objective(v, u, w, mu);
    if (h < best_h || (h == best_h && std::abs(v) < std::abs(best_v))) {
      best_h = h;
      best_v = v;
    }
  }
  return best_v;
}

}  // namespace lesita

#endif  // LESITA_PROX_HPP
