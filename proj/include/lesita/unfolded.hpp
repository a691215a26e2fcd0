#ifndef LESITA_UNFOLDED_HPP
#define LESITA_UNFOLDED_HPP

#include <string>
#include <utility>
#include <vector>

#include "lesita/common.hpp"
#include "lesita/prox.hpp"
#include "lesita/solvers.hpp"

namespace lesita {

enum class NetKind {
  kLista,   // soft-threshold activation, no side information
  kLesita,  // side-information proximal activation
};

inline const char* net_kind_name(NetKind k) { return k == NetKind::kLista ? "lista" : "lesita"; }

inline NetKind net_kind_from_name(const std::string& s) {
  if (s == "lista") return NetKind::kLista;
  if (s == "lesita") return NetKind::kLesita;
  throw InvalidParameterError("unknown network kind: " + s);
}

// One unfolded iteration block.  For the side-information network the same
// slots hold what the checkpoint files call Q, R and mu.
struct LayerParams {
  Matrix S;            // k x k
  Matrix W;            // k x m
  double theta = 0.0;  // threshold, clamped to a small positive floor when applied
};

// Storage slot names per network kind, used by checkpoints and diagnostics.
struct SlotNames {
  const char* s;
  const char* w;
  const char* theta;
};

inline SlotNames slot_names(NetKind k) {
  return k == NetKind::kLista ? SlotNames{"S", "W", "theta"} : SlotNames{"Q", "R", "mu"};
}

// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTape {
  Matrix input;             // y, m x B
  Matrix si;                // w, k x B (empty for the plain network)
  std::vector<Matrix> pre;  // per layer: W y + S alpha, before the activation
  std::vector<Matrix> act;  // per layer: alpha after the activation
};

// Iterative soft-thresholding unrolled into a feed-forward network with T
// blocks.  Inputs are batched with samples as columns.  With tied weights all
// blocks share one parameter set.
class UnfoldedNetwork {
 public:
  UnfoldedNetwork(NetKind kind, int depth, Index code_dim, Index input_dim, bool tied = false)
      : kind_(kind), depth_(depth), tied_(tied) {
    if (depth < 1) throw InvalidParameterError("UnfoldedNetwork: depth must be >= 1");
    if (code_dim < 1 || input_dim < 1)
      throw InvalidParameterError("UnfoldedNetwork: dimensions must be positive");
    blocks_.resize(tied ? 1 : static_cast<std::size_t>(depth));
    for (auto& b : blocks_) {
      b.S = Matrix::Zero(code_dim, code_dim);
      b.W = Matrix::Zero(code_dim, input_dim);
      b.theta = 0.0;
    }
  }

  // Unfolds the proximal solver for dictionary F: every block starts at
  // S = I - F^T F / L, W = F^T / L, theta = lambda / L, so the untrained
  // network reproduces the solver truncated to `depth` iterations.
  static UnfoldedNetwork from_operator(NetKind kind, int depth, const Matrix& F, double lambda,
                                       bool tied = false) {
    if (F.rows() < 1 || F.cols() < 1)
      throw DimensionError("UnfoldedNetwork::from_operator: empty dictionary");
    if (lambda <= 0.0)
      throw InvalidParameterError("UnfoldedNetwork::from_operator: lambda must be positive");
    UnfoldedNetwork net(kind, depth, F.cols(), F.rows(), tied);
    const double L = lipschitz_upper_bound(F);
    const Matrix S = Matrix::Identity(F.cols(), F.cols()) - (F.transpose() * F) / L;
    const Matrix W = F.transpose() / L;
    for (auto& b : net.blocks_) {
      b.S = S;
      b.W = W;
      b.theta = lambda / L;
    }
    return net;
  }

  NetKind kind() const { return kind_; }
  int depth() const { return depth_; }
  bool tied() const { return tied_; }
  Index code_dim() const { return blocks_.front().S.rows(); }
  Index input_dim() const { return blocks_.front().W.cols(); }

  // Parameters of block t (all t map to block 0 when tied).
  LayerParams& layer(int t) { return blocks_[block_index(t)]; }
  const LayerParams& layer(int t) const { return blocks_[block_index(t)]; }

  // Distinct parameter blocks: one when tied, `depth` otherwise.
  std::vector<LayerParams>& blocks() { return blocks_; }
  const std::vector<LayerParams>& blocks() const { return blocks_; }

  // Plain forward pass; the network must have been built without side
  // information.  y is m x B, the result k x B.
  Matrix forward(const Matrix& y, ForwardTape* tape = nullptr) const {
    if (kind_ != NetKind::kLista)
      throw InvalidParameterError("forward: side information required for this network");
    return forward_impl(y, nullptr, tape);
  }

  // Forward pass with side information w (k x B, one column per sample).
  Matrix forward(const Matrix& y, const Matrix& w, ForwardTape* tape = nullptr) const {
    if (kind_ != NetKind::kLesita)
      throw InvalidParameterError("forward: this network takes no side information");
    return forward_impl(y, &w, tape);
  }

 private:
  std::size_t block_index(int t) const {
    if (t < 0 || t >= depth_) throw InvalidParameterError("layer index out of range");
    return tied_ ? 0 : static_cast<std::size_t>(t);
  }

  Matrix forward_impl(const Matrix& y, const Matrix* w, ForwardTape* tape) const {
    if (y.rows() != input_dim())
      throw DimensionError("forward: input rows do not match the network input dimension");
    const Index batch = y.cols();
    if (w && (w->rows() != code_dim() || w->cols() != batch))
      throw DimensionError("forward: side information must be code_dim x batch");
    if (tape) {
      tape->input = y;
      tape->si = w ? *w : Matrix();
      tape->pre.clear();
      tape->act.clear();
      tape->pre.reserve(static_cast<std::size_t>(depth_));
      tape->act.reserve(static_cast<std::size_t>(depth_));
    }
    Matrix alpha = Matrix::Zero(code_dim(), batch);
    for (int t = 0; t < depth_; ++t) {
      const LayerParams& p = layer(t);
      Matrix pre = detail::layer_preactivation(p.S, p.W, alpha, y);
      const double th = clamp_threshold(p.theta);
      Matrix next;
      if (kind_ == NetKind::kLista)
        next = soft_threshold(pre, SoftThresholdParam{th});
      else
        next = si_prox(pre, *w, SIProxParam{th});
      if (tape) {
        tape->pre.push_back(std::move(pre));
        tape->act.push_back(next);
      }
      alpha = std::move(next);
    }
    return alpha;
  }

  NetKind kind_;
  int depth_;
  bool tied_;
  std::vector<LayerParams> blocks_;
};

}  // namespace lesita

#endif  // LESITA_UNFOLDED_HPP
