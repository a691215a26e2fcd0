#ifndef LESITA_PIPELINES_HPP
#define LESITA_PIPELINES_HPP

#include <cmath>
#include <utility>
#include <vector>

#include "lesita/common.hpp"
#include "lesita/rng.hpp"
#include "lesita/training.hpp"
#include "lesita/unfolded.hpp"

namespace lesita {

// The SI encoder branch: a plain unfolded network mapping the SI signal z to
// the transformed side information w that guides the main branch.
using SINet = UnfoldedNetwork;

struct PipelineOutput {
  Matrix x_hat;  // n x B reconstruction
  Matrix alpha;  // k x B latent code of the main branch
  Matrix w;      // k x B transformed side information
};

namespace detail {

inline void check_branches(const UnfoldedNetwork& main, const UnfoldedNetwork& sinet,
                           const Matrix& D, const char* what) {
  if (main.kind() != NetKind::kLesita)
    throw InvalidParameterError(std::string(what) + ": main branch must use side information");
  if (sinet.kind() != NetKind::kLista)
    throw InvalidParameterError(std::string(what) + ": SI branch must be a plain network");
  if (main.code_dim() != sinet.code_dim())
    throw DimensionError(std::string(what) + ": branch code lengths differ");
  if (D.cols() != main.code_dim())
    throw DimensionError(std::string(what) + ": decoder width does not match the code length");
}

inline std::vector<ParamRef> net_param_refs(UnfoldedNetwork& net, NetGrads& grads) {
  std::vector<ParamRef> refs;
  auto& blocks = net.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    refs.push_back(
        {blocks[b].S.data(), grads.dS[b].data(), static_cast<std::size_t>(blocks[b].S.size())});
    refs.push_back(
        {blocks[b].W.data(), grads.dW[b].data(), static_cast<std::size_t>(blocks[b].W.size())});
    refs.push_back({&blocks[b].theta, &grads.dtheta[b], 1});
  }
  return refs;
}

inline void zero_net_grads(const UnfoldedNetwork& net, NetGrads& grads) {
  const std::size_t nblocks = net.blocks().size();
  grads.dS.assign(nblocks, Matrix::Zero(net.code_dim(), net.code_dim()));
  grads.dW.assign(nblocks, Matrix::Zero(net.code_dim(), net.input_dim()));
  grads.dtheta.assign(nblocks, 0.0);
}

}  // namespace detail

// Autoencoder with a guided encoder: a SINET branch transforms z into w, the
// main branch encodes x under the guidance of w, and a free linear decoder D
// maps the code back to signal space.  Trainable on pairs (x, z) with loss
// lambda1 * |x - x_hat|^2 + lambda2 * couple(alpha, w).
class LeSITAAutoencoder {
 public:
  LeSITAAutoencoder(UnfoldedNetwork main, SINet sinet, Matrix D, L2Variant variant, double lambda)
      : main_(std::move(main)),
        sinet_(std::move(sinet)),
        D_(std::move(D)),
        variant_(variant),
        lambda_(lambda) {
    detail::check_branches(main_, sinet_, D_, "LeSITAAutoencoder");
    if (D_.rows() != main_.input_dim())
      throw DimensionError("LeSITAAutoencoder: decoder height does not match the signal length");
    if (lambda_ <= 0.0) throw InvalidParameterError("LeSITAAutoencoder: lambda must be positive");
    zero_grads();
  }

  // Random initialization: decoder and SI dictionary are Gaussian with 1/sqrt(k)
  // columns scaling; both branches unfold the proximal solver for their
  // dictionary.
  static LeSITAAutoencoder init_random(Index n, Index d, Index k, int t_main, int t_si,
                                       double lambda, L2Variant variant, Rng& rng,
                                       bool tied = false) {
    if (n < 1 || d < 1 || k < 1)
      throw InvalidParameterError("LeSITAAutoencoder: dimensions must be positive");
    const Matrix D = rng.normal_matrix(n, k) / std::sqrt(static_cast<double>(k));
    const Matrix Dz = rng.normal_matrix(d, k) / std::sqrt(static_cast<double>(k));
    UnfoldedNetwork main = UnfoldedNetwork::from_operator(NetKind::kLesita, t_main, D, lambda, tied);
    SINet sinet = UnfoldedNetwork::from_operator(NetKind::kLista, t_si, Dz, lambda, tied);
    return LeSITAAutoencoder(std::move(main), std::move(sinet), D, variant, lambda);
  }

  UnfoldedNetwork& main() { return main_; }
  const UnfoldedNetwork& main() const { return main_; }
  SINet& sinet() { return sinet_; }
  const SINet& sinet() const { return sinet_; }
  Matrix& decoder() { return D_; }
  const Matrix& decoder() const { return D_; }
  L2Variant variant() const { return variant_; }
  double lambda() const { return lambda_; }

  double lambda1() const { return lambda1_; }
  double lambda2() const { return lambda2_; }
  void set_loss_weights(double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw InvalidParameterError("LeSITAAutoencoder: loss weights must be nonnegative");
    lambda1_ = lambda1;
    lambda2_ = lambda2;
  }

  Index signal_dim() const { return D_.rows(); }
  Index si_dim() const { return sinet_.input_dim(); }
  Index code_dim() const { return main_.code_dim(); }

  // x is n x B, z is d x B.
  PipelineOutput forward(const Matrix& x, const Matrix& z) const {
    PipelineOutput out;
    out.w = sinet_.forward(z);
    out.alpha = main_.forward(x, out.w);
    out.x_hat = D_ * out.alpha;
    return out;
  }

  LossReport loss(const Matrix& x, const Matrix& z) const {
    const PipelineOutput out = forward(x, z);
    return loss_from(out, x);
  }

  LossReport eval_batch(const PairDataset& data, const std::vector<Index>& idx, std::size_t begin,
                        std::size_t end) {
    return run(data, idx, begin, end, /*with_grads=*/false);
  }

  LossReport train_batch(const PairDataset& data, const std::vector<Index>& idx, std::size_t begin,
                         std::size_t end) {
    return run(data, idx, begin, end, /*with_grads=*/true);
  }

  // Order: main blocks (S, W, theta per block), SINET blocks, decoder.
  std::vector<ParamRef> param_refs() {
    std::vector<ParamRef> refs = detail::net_param_refs(main_, main_grads_);
    std::vector<ParamRef> si = detail::net_param_refs(sinet_, sinet_grads_);
    refs.insert(refs.end(), si.begin(), si.end());
    refs.push_back({D_.data(), dD_.data(), static_cast<std::size_t>(D_.size())});
    return refs;
  }

 private:
  LossReport loss_from(const PipelineOutput& out, const Matrix& x) const {
    const double bsize = static_cast<double>(x.cols());
    LossReport report;
    report.components["recon_l2"] = loss_recon_l2(out.x_hat, x) / bsize;
    report.components["couple_l1"] = loss_couple_l1(out.alpha, out.w, variant_) / bsize;
    report.total =
        lambda1_ * report.components["recon_l2"] + lambda2_ * report.components["couple_l1"];
    return report;
  }

  // Forward with tapes, loss, and (optionally) gradients for every learnable
  // block.  The gradient reaching w combines the path through the activation
  // of every main-branch layer with the direct coupling-loss term.
  LossReport run(const PairDataset& data, const std::vector<Index>& idx, std::size_t begin,
                 std::size_t end, bool with_grads) {
    if (end <= begin) throw InvalidParameterError("LeSITAAutoencoder: empty batch");
    const Matrix x = gather_columns(data.X, idx, begin, end);
    const Matrix z = gather_columns(data.Z, idx, begin, end);
    if (!with_grads) return loss(x, z);

    const double bsize = static_cast<double>(end - begin);
    ForwardTape tape_si;
    ForwardTape tape_main;
    PipelineOutput out;
    out.w = sinet_.forward(z, &tape_si);
    out.alpha = main_.forward(x, out.w, &tape_main);
    out.x_hat = D_ * out.alpha;
    const LossReport report = loss_from(out, x);

    const Matrix d_xhat = (2.0 * lambda1_ / bsize) * (out.x_hat - x);
    dD_.noalias() = d_xhat * out.alpha.transpose();
    Matrix d_alpha = D_.transpose() * d_xhat;
    const CoupleL1Grad cg = loss_couple_l1_grad(out.alpha, out.w, variant_);
    d_alpha += (lambda2_ / bsize) * cg.d_alpha;
    main_grads_ = backward(main_, tape_main, d_alpha);
    const Matrix d_w = main_grads_.d_si + (lambda2_ / bsize) * cg.d_w;
    sinet_grads_ = backward(sinet_, tape_si, d_w);
    return report;
  }

  void zero_grads() {
    detail::zero_net_grads(main_, main_grads_);
    detail::zero_net_grads(sinet_, sinet_grads_);
    dD_ = Matrix::Zero(D_.rows(), D_.cols());
  }

  UnfoldedNetwork main_;
  SINet sinet_;
  Matrix D_;
  L2Variant variant_;
  double lambda_;
  double lambda1_ = 0.5;
  double lambda2_ = 0.5;

  NetGrads main_grads_;
  NetGrads sinet_grads_;
  Matrix dD_;
};

// Reconstruction operator: recovers x from compressive measurements y = Phi x
// with the aid of z.  Phi can be learned jointly (gradients flow through the
// in-graph measurement y = Phi x during training) or held fixed.
class LeSITAReconstructor {
 public:
  LeSITAReconstructor(Matrix Phi, UnfoldedNetwork main, SINet sinet, Matrix D, L2Variant variant,
                      double lambda, bool phi_learnable = true)
      : Phi_(std::move(Phi)),
        main_(std::move(main)),
        sinet_(std::move(sinet)),
        D_(std::move(D)),
        variant_(variant),
        lambda_(lambda),
        phi_learnable_(phi_learnable) {
    detail::check_branches(main_, sinet_, D_, "LeSITAReconstructor");
    if (Phi_.rows() > Phi_.cols())
      throw DimensionError("LeSITAReconstructor: Phi must not have more rows than columns");
    if (Phi_.cols() != D_.rows())
      throw DimensionError("LeSITAReconstructor: Phi columns must match the signal length");
    if (main_.input_dim() != Phi_.rows())
      throw DimensionError("LeSITAReconstructor: main branch input must match Phi rows");
    if (lambda_ <= 0.0) throw InvalidParameterError("LeSITAReconstructor: lambda must be positive");
    zero_grads();
  }

  // Fresh random reconstructor (no transfer): Gaussian Phi with 1/sqrt(m)
  // scaling, then the same random initialization as the autoencoder.
  static LeSITAReconstructor init_random(Index n, Index d, Index k, Index m, int t_main, int t_si,
                                         double lambda, L2Variant variant, Rng& rng,
                                         bool phi_learnable = true, bool tied = false) {
    if (m < 1 || m > n) throw InvalidParameterError("LeSITAReconstructor: need 1 <= m <= n");
    const Matrix Phi = rng.normal_matrix(m, n) / std::sqrt(static_cast<double>(m));
    const Matrix D = rng.normal_matrix(n, k) / std::sqrt(static_cast<double>(k));
    const Matrix Dz = rng.normal_matrix(d, k) / std::sqrt(static_cast<double>(k));
    UnfoldedNetwork main =
        UnfoldedNetwork::from_operator(NetKind::kLesita, t_main, Phi * D, lambda, tied);
    SINet sinet = UnfoldedNetwork::from_operator(NetKind::kLista, t_si, Dz, lambda, tied);
    return LeSITAReconstructor(Phi, std::move(main), std::move(sinet), D, variant, lambda,
                               phi_learnable);
  }

  Matrix& phi() { return Phi_; }
  const Matrix& phi() const { return Phi_; }
  UnfoldedNetwork& main() { return main_; }
  const UnfoldedNetwork& main() const { return main_; }
  SINet& sinet() { return sinet_; }
  const SINet& sinet() const { return sinet_; }
  Matrix& decoder() { return D_; }
  const Matrix& decoder() const { return D_; }
  L2Variant variant() const { return variant_; }
  double lambda() const { return lambda_; }
  bool phi_learnable() const { return phi_learnable_; }

  double lambda1() const { return lambda1_; }
  double lambda2() const { return lambda2_; }
  void set_loss_weights(double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw InvalidParameterError("LeSITAReconstructor: loss weights must be nonnegative");
    lambda1_ = lambda1;
    lambda2_ = lambda2;
  }

  Index signal_dim() const { return Phi_.cols(); }
  Index measure_dim() const { return Phi_.rows(); }
  Index si_dim() const { return sinet_.input_dim(); }
  Index code_dim() const { return main_.code_dim(); }

  // Inference from measurements y (m x B) and SI z (d x B).
  PipelineOutput forward_measured(const Matrix& y, const Matrix& z) const {
    PipelineOutput out;
    out.w = sinet_.forward(z);
    out.alpha = main_.forward(y, out.w);
    out.x_hat = D_ * out.alpha;
    return out;
  }

  // Convenience: measure x with the current Phi, then reconstruct.
  PipelineOutput forward_signal(const Matrix& x, const Matrix& z) const {
    return forward_measured(Phi_ * x, z);
  }

  LossReport eval_batch(const PairDataset& data, const std::vector<Index>& idx, std::size_t begin,
                        std::size_t end) {
    return run(data, idx, begin, end, /*with_grads=*/false);
  }

  LossReport train_batch(const PairDataset& data, const std::vector<Index>& idx, std::size_t begin,
                         std::size_t end) {
    return run(data, idx, begin, end, /*with_grads=*/true);
  }

  // Order: main blocks, SINET blocks, decoder, then Phi when learnable.
  std::vector<ParamRef> param_refs() {
    std::vector<ParamRef> refs = detail::net_param_refs(main_, main_grads_);
    std::vector<ParamRef> si = detail::net_param_refs(sinet_, sinet_grads_);
    refs.insert(refs.end(), si.begin(), si.end());
    refs.push_back({D_.data(), dD_.data(), static_cast<std::size_t>(D_.size())});
    if (phi_learnable_)
      refs.push_back({Phi_.data(), dPhi_.data(), static_cast<std::size_t>(Phi_.size())});
    return refs;
  }

 private:
  LossReport loss_from(const PipelineOutput& out, const Matrix& x) const {
    const double bsize = static_cast<double>(x.cols());
    LossReport report;
    report.components["recon_l2"] = loss_recon_l2(out.x_hat, x) / bsize;
    report.components["couple_l1"] = loss_couple_l1(out.alpha, out.w, variant_) / bsize;
    report.total =
        lambda1_ * report.components["recon_l2"] + lambda2_ * report.components["couple_l1"];
    return report;
  }

  LossReport run(const PairDataset& data, const std::vector<Index>& idx, std::size_t begin,
                 std::size_t end, bool with_grads) {
    if (end <= begin) throw InvalidParameterError("LeSITAReconstructor: empty batch");
    const Matrix x = gather_columns(data.X, idx, begin, end);
    const Matrix z = gather_columns(data.Z, idx, begin, end);
    const Matrix y = Phi_ * x;
    if (!with_grads) {
      PipelineOutput out = forward_measured(y, z);
      return loss_from(out, x);
    }

    const double bsize = static_cast<double>(end - begin);
    ForwardTape tape_si;
    ForwardTape tape_main;
    PipelineOutput out;
    out.w = sinet_.forward(z, &tape_si);
    out.alpha = main_.forward(y, out.w, &tape_main);
    out.x_hat = D_ * out.alpha;
    const LossReport report = loss_from(out, x);

    const Matrix d_xhat = (2.0 * lambda1_ / bsize) * (out.x_hat - x);
    dD_.noalias() = d_xhat * out.alpha.transpose();
    Matrix d_alpha = D_.transpose() * d_xhat;
    const CoupleL1Grad cg = loss_couple_l1_grad(out.alpha, out.w, variant_);
    d_alpha += (lambda2_ / bsize) * cg.d_alpha;
    main_grads_ = backward(main_, tape_main, d_alpha);
    const Matrix d_w = main_grads_.d_si + (lambda2_ / bsize) * cg.d_w;
    sinet_grads_ = backward(sinet_, tape_si, d_w);
    if (phi_learnable_) dPhi_.noalias() = main_grads_.d_input * x.transpose();
    return report;
  }

  void zero_grads() {
    detail::zero_net_grads(main_, main_grads_);
    detail::zero_net_grads(sinet_, sinet_grads_);
    dD_ = Matrix::Zero(D_.rows(), D_.cols());
    dPhi_ = Matrix::Zero(Phi_.rows(), Phi_.cols());
  }

  Matrix Phi_;
  UnfoldedNetwork main_;
  SINet sinet_;
  Matrix D_;
  L2Variant variant_;
  double lambda_;
  bool phi_learnable_;
  double lambda1_ = 0.5;
  double lambda2_ = 0.5;

  NetGrads main_grads_;
  NetGrads sinet_grads_;
  Matrix dD_;
  Matrix dPhi_;
};

// Builds a reconstructor from a trained autoencoder: SINET and decoder are
// copied, the main branch is re-initialized from the effective dictionary
// Phi_init * D so its untrained forward pass matches the proximal solver for
// the measured problem.
inline LeSITAReconstructor reconstructor_from_autoencoder(const LeSITAAutoencoder& ae,
                                                          const Matrix& Phi_init, int t_main,
                                                          bool phi_learnable = true,
                                                          bool tied = false) {
  if (Phi_init.cols() != ae.signal_dim())
    throw DimensionError("reconstructor_from_autoencoder: Phi columns must match the signal length");
  const Matrix F = Phi_init * ae.decoder();
  UnfoldedNetwork main =
      UnfoldedNetwork::from_operator(NetKind::kLesita, t_main, F, ae.lambda(), tied);
  LeSITAReconstructor rec(Phi_init, std::move(main), ae.sinet(), ae.decoder(), ae.variant(),
                          ae.lambda(), phi_learnable);
  rec.set_loss_weights(ae.lambda1(), ae.lambda2());
  return rec;
}

}  // namespace lesita

#endif  // LESITA_PIPELINES_HPP
