#ifndef LESITA_TRAINING_HPP
#define LESITA_TRAINING_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lesita/common.hpp"
#include "lesita/prox.hpp"
#include "lesita/rng.hpp"
#include "lesita/unfolded.hpp"

namespace lesita {

// ---------------------------------------------------------------------------
// Losses.  All loss values are sums over every entry of the batch; callers
// divide by the batch size (batch loss = sum / batch_size).
// ---------------------------------------------------------------------------

enum class L2Variant {
  kA,  // sum |alpha - w|_1: pull latent codes toward the transformed SI
  kB,  // sum |alpha|_1 + |w|_1: sparsify both latent codes independently
};

inline const char* l2_variant_name(L2Variant v) { return v == L2Variant::kA ? "A" : "B"; }

inline L2Variant l2_variant_from_name(const std::string& s) {
  if (s == "A" || s == "a") return L2Variant::kA;
  if (s == "B" || s == "b") return L2Variant::kB;
  throw InvalidParameterError("unknown latent-loss variant: " + s + " (expected A or B)");
}

inline double loss_code_l2(const Matrix& est, const Matrix& ref) {
  require_same_length(est, ref, "loss_code_l2");
  return (est - ref).squaredNorm();
}

inline Matrix loss_code_l2_grad(const Matrix& est, const Matrix& ref) {
  require_same_length(est, ref, "loss_code_l2_grad");
  return 2.0 * (est - ref);
}

inline double loss_recon_l2(const Matrix& est, const Matrix& ref) {
  require_same_length(est, ref, "loss_recon_l2");
  return (est - ref).squaredNorm();
}

inline Matrix loss_recon_l2_grad(const Matrix& est, const Matrix& ref) {
  require_same_length(est, ref, "loss_recon_l2_grad");
  return 2.0 * (est - ref);
}

inline double sign_or_zero(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline double loss_couple_l1(const Matrix& alpha, const Matrix& w, L2Variant variant) {
  require_same_length(alpha, w, "loss_couple_l1");
  if (variant == L2Variant::kA) return (alpha - w).lpNorm<1>();
  return alpha.lpNorm<1>() + w.lpNorm<1>();
}

struct CoupleL1Grad {
  Matrix d_alpha;
  Matrix d_w;
};

// Subgradient with sign(0) = 0.
inline CoupleL1Grad loss_couple_l1_grad(const Matrix& alpha, const Matrix& w, L2Variant variant) {
  require_same_length(alpha, w, "loss_couple_l1_grad");
  CoupleL1Grad g;
  if (variant == L2Variant::kA) {
    g.d_alpha = (alpha - w).unaryExpr(&sign_or_zero);
    g.d_w = -g.d_alpha;
  } else {
    g.d_alpha = alpha.unaryExpr(&sign_or_zero);
    g.d_w = w.unaryExpr(&sign_or_zero);
  }
  return g;
}

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;  // raw (unweighted) term values
};

// ---------------------------------------------------------------------------
// Reverse-mode pass through an unfolded network.
// ---------------------------------------------------------------------------

// Gradients per parameter block (one entry when tied), plus the gradients
// reaching the network inputs: d_input feeds a learnable measurement matrix,
// d_si feeds the SI branch.
struct NetGrads {
  std::vector<Matrix> dS;
  std::vector<Matrix> dW;
  std::vector<double> dtheta;
  Matrix d_input;
  Matrix d_si;  // empty for networks without side information
};

inline NetGrads backward(const UnfoldedNetwork& net, const ForwardTape& tape,
                         const Matrix& grad_alpha) {
  const int depth = net.depth();
  const Index batch = tape.input.cols();
  if (tape.pre.size() != static_cast<std::size_t>(depth) ||
      tape.act.size() != static_cast<std::size_t>(depth))
    throw InvalidParameterError("backward: tape does not match the network depth");
  if (tape.input.rows() != net.input_dim())
    throw DimensionError("backward: tape input does not match the network input dimension");
  if (grad_alpha.rows() != net.code_dim() || grad_alpha.cols() != batch)
    throw DimensionError("backward: grad_alpha must be code_dim x batch");
  const bool with_si = net.kind() == NetKind::kLesita;
  if (with_si && (tape.si.rows() != net.code_dim() || tape.si.cols() != batch))
    throw DimensionError("backward: tape side information must be code_dim x batch");

  NetGrads g;
  const std::size_t nblocks = net.blocks().size();
  g.dS.assign(nblocks, Matrix::Zero(net.code_dim(), net.code_dim()));
  g.dW.assign(nblocks, Matrix::Zero(net.code_dim(), net.input_dim()));
  g.dtheta.assign(nblocks, 0.0);
  g.d_input = Matrix::Zero(net.input_dim(), batch);
  if (with_si) g.d_si = Matrix::Zero(net.code_dim(), batch);

  Matrix d_act = grad_alpha;
  for (int t = depth - 1; t >= 0; --t) {
    const LayerParams& p = net.layer(t);
    const std::size_t b = net.tied() ? 0 : static_cast<std::size_t>(t);
    const double th = clamp_threshold(p.theta);
    // Threshold sits at the clamp floor: the applied value is constant there.
    const bool theta_live = p.theta >= kMinThreshold;
    Matrix d_pre;
    if (net.kind() == NetKind::kLista) {
      const SoftThresholdGrad gr = soft_threshold_grad(tape.pre[t], SoftThresholdParam{th});
      d_pre = d_act.cwiseProduct(gr.du);
      if (theta_live) g.dtheta[b] += d_act.cwiseProduct(gr.dtheta).sum();
    } else {
      const SIProxGrad gr = si_prox_grad(tape.pre[t], tape.si, SIProxParam{th});
      d_pre = d_act.cwiseProduct(gr.du);
      if (theta_live) g.dtheta[b] += d_act.cwiseProduct(gr.dmu).sum();
      g.d_si += d_act.cwiseProduct(gr.dw);
    }
    // pre_t = W y + S alpha_{t-1}, with alpha_{-1} = 0.
    if (t > 0) g.dS[b].noalias() += d_pre * tape.act[static_cast<std::size_t>(t) - 1].transpose();
    g.dW[b].noalias() += d_pre * tape.input.transpose();
    g.d_input.noalias() += p.W.transpose() * d_pre;
    d_act.noalias() = p.S.transpose() * d_pre;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer.
// ---------------------------------------------------------------------------

enum class OptimizerKind { kSgd, kAdam };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw InvalidParameterError("unknown optimizer: " + s);
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplier on the learning rate; 1 = constant
  int batch_size = 128;
  int epochs = 0;
  double lambda1 = 0.5;  // weight of the reconstruction term
  double lambda2 = 0.5;  // weight of the latent coupling term
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw InvalidParameterError("TrainConfig: learning_rate must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0)
      throw InvalidParameterError("TrainConfig: lr_decay must be in (0, 1]");
    if (batch_size < 1) throw InvalidParameterError("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw InvalidParameterError("TrainConfig: epochs must be nonnegative");
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw InvalidParameterError("TrainConfig: loss weights must be nonnegative");
  }
};

// A view of one contiguous parameter block with its gradient.  Models return
// these fresh each step in a fixed order; pointers stay valid until the model
// is reshaped.
struct ParamRef {
  double* value = nullptr;
  const double* grad = nullptr;
  std::size_t count = 0;
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
    if (!(lr_ > 0.0)) throw InvalidParameterError("Optimizer: learning rate must be positive");
  }

  double learning_rate() const { return lr_; }

  // Adjusting the rate mid-run (e.g. on a decay schedule) keeps moment state.
  void set_learning_rate(double learning_rate) {
    if (!(learning_rate > 0.0))
      throw InvalidParameterError("Optimizer: learning rate must be positive");
    lr_ = learning_rate;
  }

  void step(const std::vector<ParamRef>& params) {
    std::size_t total = 0;
    for (const ParamRef& p : params) total += p.count;
    if (kind_ == OptimizerKind::kSgd) {
      for (const ParamRef& p : params)
        for (std::size_t i = 0; i < p.count; ++i) p.value[i] -= lr_ * p.grad[i];
      return;
    }
    if (m_.empty()) {
      m_.assign(total, 0.0);
      v_.assign(total, 0.0);
    } else if (m_.size() != total) {
      throw InvalidParameterError("Optimizer: parameter layout changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    std::size_t at = 0;
    for (const ParamRef& p : params) {
      for (std::size_t i = 0; i < p.count; ++i, ++at) {
        const double grad = p.grad[i];
        m_[at] = kBeta1 * m_[at] + (1.0 - kBeta1) * grad;
        v_[at] = kBeta2 * v_[at] + (1.0 - kBeta2) * grad * grad;
        p.value[i] -= lr_ * (m_[at] / c1) / (std::sqrt(v_[at] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Datasets (samples as columns) and the generic training loop.
// ---------------------------------------------------------------------------

// Measurements with their ground-truth codes; W empty when there is no SI.
struct CodeDataset {
  Matrix Y;      // m x N
  Matrix W;      // k x N or empty
  Matrix Alpha;  // k x N
  Index count() const { return Y.cols(); }
};

// Correlated signal pairs for the composite models.
struct PairDataset {
  Matrix X;  // n x N, reconstruction target
  Matrix Z;  // d x N, side-information signal
  Index count() const { return X.cols(); }
};

// Columns idx[begin..end) of M, packed in order.
inline Matrix gather_columns(const Matrix& M, const std::vector<Index>& idx, std::size_t begin,
                             std::size_t end) {
  Matrix out(M.rows(), static_cast<Index>(end - begin));
  for (std::size_t j = begin; j < end; ++j) out.col(static_cast<Index>(j - begin)) = M.col(idx[j]);
  return out;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::map<std::string, double> train_components;
  std::map<std::string, double> val_components;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // -1 when no epoch ran
  double best_val_loss = std::numeric_limits<double>::infinity();

  // Header: epoch,train_loss,val_loss,train_<c>...,val_<c>... with component
  // names in sorted order.
  void write_csv(std::ostream& os) const {
    os << "epoch,train_loss,val_loss";
    if (!epochs.empty()) {
      for (const auto& [name, unused] : epochs.front().train_components) os << ",train_" << name;
      for (const auto& [name, unused] : epochs.front().val_components) os << ",val_" << name;
    }
    os << "\n";
    for (const EpochStats& e : epochs) {
      os << e.epoch << "," << e.train_loss << "," << e.val_loss;
      for (const auto& [unused, value] : e.train_components) os << "," << value;
      for (const auto& [unused, value] : e.val_components) os << "," << value;
      os << "\n";
    }
  }
};

namespace detail {

struct RunningLoss {
  double total = 0.0;
  std::map<std::string, double> components;
  double weight = 0.0;

  void add(const LossReport& r, double batch_size) {
    total += r.total * batch_size;
    for (const auto& [name, value] : r.components) components[name] += value * batch_size;
    weight += batch_size;
  }

  double mean_total() const { return weight > 0.0 ? total / weight : 0.0; }

  std::map<std::string, double> mean_components() const {
    std::map<std::string, double> out = components;
    for (auto& [name, value] : out) value /= (weight > 0.0 ? weight : 1.0);
    return out;
  }
};

template <class Model, class Dataset>
RunningLoss evaluate_in_batches(Model& model, const Dataset& data, int batch_size) {
  RunningLoss acc;
  const Index n = data.count();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(idx.size(), at + static_cast<std::size_t>(batch_size));
    acc.add(model.eval_batch(data, idx, at, stop), static_cast<double>(stop - at));
  }
  return acc;
}

}  // namespace detail

// Minibatch training with a per-epoch reshuffle, an epoch-level validation
// pass, and restoration of the best-validation parameters at the end.  A NaN
// or infinite batch loss aborts.  Model requirements:
//   LossReport train_batch(data, idx, begin, end)  - forward+backward, grads filled
//   LossReport eval_batch(data, idx, begin, end)   - forward only
//   std::vector<ParamRef> param_refs()
// With an empty validation set the training loss stands in for selection.
template <class Model, class Dataset>
TrainHistory train(Model& model, const Dataset& train_data, const Dataset& val_data,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.count() < 1) throw DataError("train: empty training set");

  const auto values_of = [&model]() {
    std::vector<double> out;
    for (const ParamRef& p : model.param_refs())
      out.insert(out.end(), p.value, p.value + p.count);
    return out;
  };
  const auto restore = [&model](const std::vector<double>& vals) {
    std::size_t at = 0;
    for (const ParamRef& p : model.param_refs()) {
      std::copy(vals.begin() + static_cast<std::ptrdiff_t>(at),
                vals.begin() + static_cast<std::ptrdiff_t>(at + p.count), p.value);
      at += p.count;
    }
  };

  TrainHistory history;
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  Rng root(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(train_data.count()));
  for (Index i = 0; i < train_data.count(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<double> best_values;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_learning_rate(cfg.learning_rate * std::pow(cfg.lr_decay, epoch));
    Rng shuffler = root.split(static_cast<std::uint64_t>(epoch));
    shuffler.shuffle(order);
    detail::RunningLoss train_acc;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      const LossReport report = model.train_batch(train_data, order, at, stop);
      if (!std::isfinite(report.total))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", sample offset " + std::to_string(at) +
                             " (learning rate too high?)");
      opt.step(model.param_refs());
      train_acc.add(report, static_cast<double>(stop - at));
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_acc.mean_total();
    stats.train_components = train_acc.mean_components();
    if (val_data.count() > 0) {
      detail::RunningLoss val_acc = detail::evaluate_in_batches(model, val_data, cfg.batch_size);
      stats.val_loss = val_acc.mean_total();
      stats.val_components = val_acc.mean_components();
    } else {
      stats.val_loss = stats.train_loss;
      stats.val_components = stats.train_components;
    }
    history.epochs.push_back(stats);

    if (stats.val_loss < history.best_val_loss) {
      history.best_val_loss = stats.val_loss;
      history.best_epoch = epoch;
      best_values = values_of();
    }
  }

  if (!best_values.empty()) restore(best_values);
  return history;
}

// ---------------------------------------------------------------------------
// Code-supervised wrapper: fit network outputs to ground-truth sparse codes.
// ---------------------------------------------------------------------------

class UnfoldedModel {
 public:
  explicit UnfoldedModel(UnfoldedNetwork net) : net_(std::move(net)) { zero_grads(); }

  UnfoldedNetwork& net() { return net_; }
  const UnfoldedNetwork& net() const { return net_; }
  const NetGrads& grads() const { return grads_; }

  LossReport eval_batch(const CodeDataset& data, const std::vector<Index>& idx, std::size_t begin,
                        std::size_t end) {
    return run(data, idx, begin, end, nullptr);
  }

  LossReport train_batch(const CodeDataset& data, const std::vector<Index>& idx, std::size_t begin,
                         std::size_t end) {
    return run(data, idx, begin, end, &grads_);
  }

  std::vector<ParamRef> param_refs() {
    std::vector<ParamRef> refs;
    auto& blocks = net_.blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      refs.push_back({blocks[b].S.data(), grads_.dS[b].data(),
                      static_cast<std::size_t>(blocks[b].S.size())});
      refs.push_back({blocks[b].W.data(), grads_.dW[b].data(),
                      static_cast<std::size_t>(blocks[b].W.size())});
      refs.push_back({&blocks[b].theta, &grads_.dtheta[b], 1});
    }
    return refs;
  }

 private:
  void zero_grads() {
    const std::size_t nblocks = net_.blocks().size();
    grads_.dS.assign(nblocks, Matrix::Zero(net_.code_dim(), net_.code_dim()));
    grads_.dW.assign(nblocks, Matrix::Zero(net_.code_dim(), net_.input_dim()));
    grads_.dtheta.assign(nblocks, 0.0);
  }

  LossReport run(const CodeDataset& data, const std::vector<Index>& idx, std::size_t begin,
                 std::size_t end, NetGrads* out_grads) {
    if (end <= begin) throw InvalidParameterError("UnfoldedModel: empty batch");
    const double bsize = static_cast<double>(end - begin);
    const Matrix y = gather_columns(data.Y, idx, begin, end);
    const Matrix target = gather_columns(data.Alpha, idx, begin, end);
    const bool with_si = net_.kind() == NetKind::kLesita;
    if (with_si && data.W.size() == 0)
      throw DataError("UnfoldedModel: network needs side information but the dataset has none");
    ForwardTape tape;
    Matrix alpha;
    Matrix w;
    if (with_si) {
      w = gather_columns(data.W, idx, begin, end);
      alpha = net_.forward(y, w, out_grads ? &tape : nullptr);
    } else {
      alpha = net_.forward(y, out_grads ? &tape : nullptr);
    }
    LossReport report;
    report.components["code_l2"] = loss_code_l2(alpha, target) / bsize;
    report.total = report.components["code_l2"];
    if (out_grads) {
      const Matrix grad_alpha = loss_code_l2_grad(alpha, target) / bsize;
      *out_grads = backward(net_, tape, grad_alpha);
    }
    return report;
  }

  UnfoldedNetwork net_;
  NetGrads grads_;
};

}  // namespace lesita

#endif  // LESITA_TRAINING_HPP
