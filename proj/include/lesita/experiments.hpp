#ifndef LESITA_EXPERIMENTS_HPP
#define LESITA_EXPERIMENTS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lesita/checkpoint.hpp"
#include "lesita/common.hpp"
#include "lesita/datagen.hpp"
#include "lesita/dataset_io.hpp"
#include "lesita/metrics.hpp"
#include "lesita/pipelines.hpp"
#include "lesita/rng.hpp"
#include "lesita/solvers.hpp"
#include "lesita/training.hpp"
#include "lesita/unfolded.hpp"

namespace lesita {

// ---------------------------------------------------------------------------
// Experiment configuration with JSON round-trip.  Unknown model/experiment
// names are rejected at validation, unknown JSON keys are ignored.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment = "synthetic_sparse";  // or "image_cs"
  std::string model = "lesita";  // ista | sita | lista | lesita | lesita_ae | lesita_rec
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  // Synthetic sparse-recovery study.
  SyntheticSpec synth{256, 25, 25, 50000, 0};
  Index signal_dim = 128;         // rows of the sparsifying dictionary
  double lambda = 0.1;            // regularization weight shared by solvers and inits
  int depth = 7;                  // unfolded main-branch layers, or T of the solver grid
  int t_si = 7;                   // SINET layers
  bool tied = false;
  SolverConfig solver{};          // for ista / sita runs
  Index solver_eval_count = 500;  // test samples run through the solvers; 0 = all

  // Training.
  TrainConfig train{};
  double val_fraction = 0.05;
  double test_fraction = 0.10;

  // Image compressed-sensing study.
  std::string dataset_dir;      // aligned image pairs
  double cs_ratio = 0.5;        // m / n
  std::string l2_variant = "A";
  PatchSpec patch{16, 4};
  Index image_code_dim = 512;
  Index train_patches = 20000;
  double measurement_noise = 0.0;
  bool rec_transfer = true;  // initialize the reconstructor from the trained autoencoder

  void validate() const {
    if (experiment != "synthetic_sparse" && experiment != "image_cs")
      throw InvalidParameterError("config: unknown experiment '" + experiment + "'");
    const bool synthetic_model =
        model == "ista" || model == "sita" || model == "lista" || model == "lesita";
    const bool image_model = model == "lesita_ae" || model == "lesita_rec";
    if (!synthetic_model && !image_model)
      throw InvalidParameterError("config: unknown model '" + model + "'");
    if (experiment == "synthetic_sparse" && !synthetic_model)
      throw InvalidParameterError("config: model '" + model +
                                  "' does not apply to the synthetic study");
    if (experiment == "image_cs" && !image_model)
      throw InvalidParameterError("config: model '" + model +
                                  "' does not apply to the image study");
    synth.validate();
    patch.validate();
    if (signal_dim < 1 || signal_dim > synth.k)
      throw InvalidParameterError("config: need 1 <= signal_dim <= k");
    if (lambda <= 0.0) throw InvalidParameterError("config: lambda must be positive");
    if (depth < 1 || t_si < 1) throw InvalidParameterError("config: depths must be >= 1");
    if (solver_eval_count < 0)
      throw InvalidParameterError("config: solver_eval_count must be nonnegative");
    if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
      throw InvalidParameterError("config: need val_fraction + test_fraction < 1");
    if (cs_ratio <= 0.0 || cs_ratio > 1.0)
      throw InvalidParameterError("config: cs_ratio must be in (0, 1]");
    l2_variant_from_name(l2_variant);  // validates
    if (image_code_dim < patch.patch_size * patch.patch_size)
      throw InvalidParameterError("config: image_code_dim must be >= patch_size^2");
    if (train_patches < 1) throw InvalidParameterError("config: train_patches must be positive");
    if (measurement_noise < 0.0)
      throw InvalidParameterError("config: measurement_noise must be nonnegative");
    train.validate();
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"k", s.k}, {"s", s.s}, {"rho", s.rho}, {"count", s.count}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  SyntheticSpec def;
  s.k = j.value("k", def.k);
  s.s = j.value("s", def.s);
  s.rho = j.value("rho", def.rho);
  s.count = j.value("count", def.count);
}

inline void to_json(nlohmann::json& j, const PatchSpec& p) {
  j = {{"patch_size", p.patch_size}, {"stride", p.stride}};
}

inline void from_json(const nlohmann::json& j, PatchSpec& p) {
  PatchSpec def;
  p.patch_size = j.value("patch_size", def.patch_size);
  p.stride = j.value("stride", def.stride);
}

inline void to_json(nlohmann::json& j, const SolverConfig& c) {
  j = {{"t_max", c.t_max}, {"rel_tol", c.rel_tol}};
  if (c.target_nmse_db) j["target_nmse_db"] = *c.target_nmse_db;
}

inline void from_json(const nlohmann::json& j, SolverConfig& c) {
  SolverConfig def;
  c.t_max = j.value("t_max", def.t_max);
  c.rel_tol = j.value("rel_tol", def.rel_tol);
  if (j.contains("target_nmse_db") && !j.at("target_nmse_db").is_null())
    c.target_nmse_db = j.at("target_nmse_db").get<double>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"lr_decay", c.lr_decay},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"lambda1", c.lambda1},
       {"lambda2", c.lambda2},
       {"optimizer", optimizer_name(c.optimizer)}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig def;
  c.learning_rate = j.value("learning_rate", def.learning_rate);
  c.lr_decay = j.value("lr_decay", def.lr_decay);
  c.batch_size = j.value("batch_size", def.batch_size);
  c.epochs = j.value("epochs", def.epochs);
  c.lambda1 = j.value("lambda1", def.lambda1);
  c.lambda2 = j.value("lambda2", def.lambda2);
  c.optimizer = optimizer_from_name(j.value("optimizer", std::string(optimizer_name(def.optimizer))));
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"experiment", c.experiment},
       {"model", c.model},
       {"seed", c.seed},
       {"output_dir", c.output_dir},
       {"synth", c.synth},
       {"signal_dim", c.signal_dim},
       {"lambda", c.lambda},
       {"depth", c.depth},
       {"t_si", c.t_si},
       {"tied", c.tied},
       {"solver", c.solver},
       {"solver_eval_count", c.solver_eval_count},
       {"train", c.train},
       {"val_fraction", c.val_fraction},
       {"test_fraction", c.test_fraction},
       {"dataset_dir", c.dataset_dir},
       {"cs_ratio", c.cs_ratio},
       {"l2_variant", c.l2_variant},
       {"patch", c.patch},
       {"image_code_dim", c.image_code_dim},
       {"train_patches", c.train_patches},
       {"measurement_noise", c.measurement_noise},
       {"rec_transfer", c.rec_transfer}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig def;
  c.experiment = j.value("experiment", def.experiment);
  c.model = j.value("model", def.model);
  c.seed = j.value("seed", def.seed);
  c.output_dir = j.value("output_dir", def.output_dir);
  c.synth = j.value("synth", def.synth);
  c.signal_dim = j.value("signal_dim", def.signal_dim);
  c.lambda = j.value("lambda", def.lambda);
  c.depth = j.value("depth", def.depth);
  c.t_si = j.value("t_si", def.t_si);
  c.tied = j.value("tied", def.tied);
  c.solver = j.value("solver", def.solver);
  c.solver_eval_count = j.value("solver_eval_count", def.solver_eval_count);
  c.train = j.value("train", def.train);
  c.val_fraction = j.value("val_fraction", def.val_fraction);
  c.test_fraction = j.value("test_fraction", def.test_fraction);
  c.dataset_dir = j.value("dataset_dir", def.dataset_dir);
  c.cs_ratio = j.value("cs_ratio", def.cs_ratio);
  c.l2_variant = j.value("l2_variant", def.l2_variant);
  c.patch = j.value("patch", def.patch);
  c.image_code_dim = j.value("image_code_dim", def.image_code_dim);
  c.train_patches = j.value("train_patches", def.train_patches);
  c.measurement_noise = j.value("measurement_noise", def.measurement_noise);
  c.rec_transfer = j.value("rec_transfer", def.rec_transfer);
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string experiment;
  std::string model;
  std::string T;           // layers or mean solver iterations context; "" if n/a
  std::string rho;         // "" if n/a
  std::string cs_ratio;    // "" if n/a
  std::string l2_variant;  // "" if n/a
  std::uint64_t seed = 0;
  std::string unit;    // "test", "image_3", "average", ...
  std::string metric;  // "nmse_db", "psnr_db", ...
  double value = std::numeric_limits<double>::quiet_NaN();
  double value_alt = std::numeric_limits<double>::quiet_NaN();
  double iters_mean = std::numeric_limits<double>::quiet_NaN();
  double runtime_sec = std::numeric_limits<double>::quiet_NaN();
  std::string config;  // compact JSON echo
};

struct ExperimentReport {
  std::vector<ReportRow> rows;

  void append(const ExperimentReport& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  }
};

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += "\"";
  return out;
}

inline const char* report_csv_header() {
  return "experiment,model,T,rho,cs_ratio,l2_variant,seed,unit,metric,value,value_alt,"
         "iters_mean,runtime_sec,config";
}

inline void write_report_csv(std::ostream& os, const ExperimentReport& report) {
  os << report_csv_header() << "\n";
  os << std::setprecision(12);
  const auto num = [&os](double v) {
    os << ",";
    if (std::isfinite(v)) os << v;
  };
  for (const ReportRow& r : report.rows) {
    os << csv_escape(r.experiment) << "," << csv_escape(r.model) << "," << r.T << "," << r.rho
       << "," << r.cs_ratio << "," << r.l2_variant << "," << r.seed << "," << csv_escape(r.unit)
       << "," << csv_escape(r.metric);
    num(r.value);
    num(r.value_alt);
    num(r.iters_mean);
    num(r.runtime_sec);
    os << "," << csv_escape(r.config) << "\n";
  }
}

inline void write_report_csv(const std::string& path, const ExperimentReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("write_report_csv: cannot open " + path + " for writing");
  write_report_csv(out, report);
  if (!out) throw DataError("write_report_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

// Random partition: test_fraction and val_fraction of the n samples (rounded)
// go to the held-out sets, the rest trains.
inline SplitIndices split_indices(Index n, double val_fraction, double test_fraction, Rng& rng) {
  if (n < 1) throw InvalidParameterError("split_indices: need at least one sample");
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
    throw InvalidParameterError("split_indices: need val_fraction + test_fraction < 1");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n)));
  SplitIndices out;
  out.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  out.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), perm.end());
  if (out.train.empty()) throw InvalidParameterError("split_indices: empty training split");
  return out;
}

inline CodeDataset subset(const CodeDataset& d, const std::vector<Index>& idx) {
  CodeDataset out;
  out.Y = gather_columns(d.Y, idx, 0, idx.size());
  out.Alpha = gather_columns(d.Alpha, idx, 0, idx.size());
  if (d.W.size() > 0) out.W = gather_columns(d.W, idx, 0, idx.size());
  return out;
}

inline PairDataset subset(const PairDataset& d, const std::vector<Index>& idx) {
  return PairDataset{gather_columns(d.X, idx, 0, idx.size()),
                     gather_columns(d.Z, idx, 0, idx.size())};
}

namespace detail {

inline void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw DataError("experiment: cannot open " + path + " for writing");
  out << std::setprecision(12);
  history.write_csv(out);
}

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic sparse-recovery study.
// ---------------------------------------------------------------------------

// Dictionary, coupled codes and measurements (identity sensing: y = D alpha)
// derived from the root seed.
struct SyntheticData {
  Matrix D;  // signal_dim x k
  CodeDataset all;
  SplitIndices split;
};

inline SyntheticData make_synthetic_data(const ExperimentConfig& cfg) {
  Rng root(cfg.seed);
  SyntheticData data;
  data.D = gen_dictionary(cfg.signal_dim, cfg.synth.k, root.split("dictionary").next());
  SyntheticSpec spec = cfg.synth;
  spec.seed = root.split("codes").next();
  CoupledCodes codes = gen_coupled_codes(spec);
  data.all.Y = data.D * codes.Alpha;
  data.all.W = std::move(codes.W);
  data.all.Alpha = std::move(codes.Alpha);
  Rng split_rng = root.split("split");
  data.split = split_indices(spec.count, cfg.val_fraction, cfg.test_fraction, split_rng);
  return data;
}

inline ExperimentReport run_synthetic(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != "synthetic_sparse")
    throw InvalidParameterError("run_synthetic: config is for a different experiment");
  std::filesystem::create_directories(cfg.output_dir);
  const std::string echo = nlohmann::json(cfg).dump();
  Stopwatch watch;

  const SyntheticData data = make_synthetic_data(cfg);
  const CodeDataset test = subset(data.all, data.split.test);

  ExperimentReport report;
  ReportRow row;
  row.experiment = cfg.experiment;
  row.model = cfg.model;
  row.rho = std::to_string(cfg.synth.rho);
  row.seed = cfg.seed;
  row.unit = "test";
  row.metric = "nmse_db";
  row.config = echo;

  if (cfg.model == "ista" || cfg.model == "sita") {
    const bool with_si = cfg.model == "sita";
    const Index n_eval = (cfg.solver_eval_count > 0 && cfg.solver_eval_count < test.count())
                             ? cfg.solver_eval_count
                             : test.count();
    Matrix est(cfg.synth.k, n_eval);
    Matrix ref(cfg.synth.k, n_eval);
    double iter_sum = 0.0;
    SolverConfig sc = cfg.solver;
    sc.lipschitz = lipschitz_upper_bound(data.D);
    for (Index j = 0; j < n_eval; ++j) {
      SparseProblem problem;
      problem.F = data.D;
      problem.y = test.Y.col(j);
      problem.lambda = cfg.lambda;
      if (with_si) problem.w = Vector(test.W.col(j));
      const Vector reference = test.Alpha.col(j);
      const SolverResult res = with_si ? sita_solve(problem, sc, &reference)
                                       : ista_solve(problem, sc, &reference);
      est.col(j) = res.alpha;
      ref.col(j) = reference;
      iter_sum += static_cast<double>(res.iterations);
    }
    const NmseAggregate agg = nmse_db_aggregate(est, ref);
    row.T = "";
    row.value = agg.mean_db;
    row.value_alt = agg.db_of_mean_ratio;
    row.iters_mean = iter_sum / static_cast<double>(n_eval);
  } else {
    const NetKind kind = cfg.model == "lista" ? NetKind::kLista : NetKind::kLesita;
    UnfoldedModel model(
        UnfoldedNetwork::from_operator(kind, cfg.depth, data.D, cfg.lambda, cfg.tied));
    TrainConfig tc = cfg.train;
    tc.seed = Rng(cfg.seed).split("train").next();
    const CodeDataset train_set = subset(data.all, data.split.train);
    const CodeDataset val_set = subset(data.all, data.split.val);
    const TrainHistory history = train(model, train_set, val_set, tc);
    const std::string tag = cfg.model + "_T" + std::to_string(cfg.depth) + "_rho" +
                            std::to_string(cfg.synth.rho);
    detail::write_history_csv(detail::join_path(cfg.output_dir, tag + "_history.csv"), history);
    Checkpoint cp = pack_network(model.net());
    cp.metadata["seed"] = cfg.seed;
    cp.metadata["config"] = nlohmann::json(cfg);
    save_checkpoint(detail::join_path(cfg.output_dir, tag + ".ckpt"), cp);

    const Matrix est = (kind == NetKind::kLesita) ? model.net().forward(test.Y, test.W)
                                                  : model.net().forward(test.Y);
    const NmseAggregate agg = nmse_db_aggregate(est, test.Alpha);
    row.T = std::to_string(cfg.depth);
    row.value = agg.mean_db;
    row.value_alt = agg.db_of_mean_ratio;
    row.iters_mean = static_cast<double>(cfg.depth);
  }
  row.runtime_sec = watch.seconds();
  report.rows.push_back(row);
  write_report_csv(detail::join_path(cfg.output_dir, "report.csv"), report);
  return report;
}

// ---------------------------------------------------------------------------
// Image compressed-sensing study.
// ---------------------------------------------------------------------------

namespace detail {

// Aligned random patch pairs pooled round-robin over the training images.
inline PairDataset pool_training_patches(const ImagePairSet& pairs,
                                         const std::vector<Index>& image_idx, Index patch_size,
                                         Index total, Rng& rng) {
  if (image_idx.empty()) throw DataError("image experiment: no training images");
  const Index per_image =
      (total + static_cast<Index>(image_idx.size()) - 1) / static_cast<Index>(image_idx.size());
  std::vector<Matrix> xs;
  std::vector<Matrix> zs;
  Index made = 0;
  for (Index idx : image_idx) {
    const Index want = std::min(per_image, total - made);
    if (want < 1) break;
    auto [px, pz] = sample_patch_pairs(pairs.x[static_cast<std::size_t>(idx)],
                                       pairs.z[static_cast<std::size_t>(idx)], patch_size, want,
                                       rng);
    xs.push_back(std::move(px));
    zs.push_back(std::move(pz));
    made += want;
  }
  PairDataset out;
  out.X.resize(patch_size * patch_size, made);
  out.Z.resize(patch_size * patch_size, made);
  Index at = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.X.middleCols(at, xs[i].cols()) = xs[i];
    out.Z.middleCols(at, zs[i].cols()) = zs[i];
    at += xs[i].cols();
  }
  return out;
}

inline Matrix clamp_unit(const Matrix& image) {
  return image.array().max(0.0).min(1.0).matrix();
}

}  // namespace detail

// Two-stage pipeline on aligned image pairs: train the autoencoder on random
// patch pairs, transfer into the reconstructor (unless rec_transfer is off),
// train it with the measurement matrix in the loop, then reconstruct the
// held-out images patch-wise on the stride grid and report PSNR.
inline ExperimentReport run_image_cs(const ExperimentConfig& cfg, const ImagePairSet& pairs) {
  cfg.validate();
  if (cfg.experiment != "image_cs")
    throw InvalidParameterError("run_image_cs: config is for a different experiment");
  if (pairs.count() < 2)
    throw DataError("run_image_cs: need at least two image pairs (train + test)");
  std::filesystem::create_directories(cfg.output_dir);
  const std::string echo = nlohmann::json(cfg).dump();
  Stopwatch watch;
  Rng root(cfg.seed);

  // Image-level split: at least one test image, at least one training image.
  std::vector<Index> image_perm(pairs.count());
  for (std::size_t i = 0; i < pairs.count(); ++i) image_perm[i] = static_cast<Index>(i);
  {
    Rng r = root.split("image_split");
    r.shuffle(image_perm);
  }
  std::size_t n_test = static_cast<std::size_t>(
      std::lround(cfg.test_fraction * static_cast<double>(pairs.count())));
  n_test = std::min(std::max<std::size_t>(n_test, 1), pairs.count() - 1);
  const std::vector<Index> test_images(image_perm.begin(),
                                       image_perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<Index> train_images(image_perm.begin() + static_cast<std::ptrdiff_t>(n_test),
                                        image_perm.end());

  Rng patch_rng = root.split("patches");
  const PairDataset pool = detail::pool_training_patches(pairs, train_images,
                                                         cfg.patch.patch_size, cfg.train_patches,
                                                         patch_rng);
  Rng split_rng = root.split("patch_split");
  const SplitIndices psplit = split_indices(pool.count(), cfg.val_fraction, 0.0, split_rng);
  const PairDataset train_set = subset(pool, psplit.train);
  const PairDataset val_set = subset(pool, psplit.val);

  const Index n = cfg.patch.patch_size * cfg.patch.patch_size;
  const L2Variant variant = l2_variant_from_name(cfg.l2_variant);

  // Stage 1: autoencoder.
  Rng ae_init = root.split("ae_init");
  LeSITAAutoencoder ae = LeSITAAutoencoder::init_random(n, n, cfg.image_code_dim, cfg.depth,
                                                        cfg.t_si, cfg.lambda, variant, ae_init,
                                                        cfg.tied);
  ae.set_loss_weights(cfg.train.lambda1, cfg.train.lambda2);
  TrainConfig ae_tc = cfg.train;
  ae_tc.seed = root.split("ae_train").next();
  const std::string ae_tag = "lesita_ae_" + cfg.l2_variant;
  const TrainHistory ae_history = train(ae, train_set, val_set, ae_tc);
  detail::write_history_csv(detail::join_path(cfg.output_dir, ae_tag + "_history.csv"),
                            ae_history);
  {
    Checkpoint cp = pack_autoencoder(ae);
    cp.metadata["seed"] = cfg.seed;
    cp.metadata["config"] = nlohmann::json(cfg);
    save_checkpoint(detail::join_path(cfg.output_dir, ae_tag + ".ckpt"), cp);
  }

  ExperimentReport report;
  const auto add_image_rows = [&](const std::string& model_name, const std::string& ratio_str,
                                  const std::vector<double>& psnrs,
                                  const std::vector<double>& psnrs_raw, double runtime) {
    double mean = 0.0;
    double mean_raw = 0.0;
    for (std::size_t i = 0; i < psnrs.size(); ++i) {
      ReportRow row;
      row.experiment = cfg.experiment;
      row.model = model_name;
      row.T = std::to_string(cfg.depth);
      row.cs_ratio = ratio_str;
      row.l2_variant = cfg.l2_variant;
      row.seed = cfg.seed;
      row.unit = "image_" + std::to_string(test_images[i]);
      row.metric = "psnr_db";
      row.value = psnrs[i];
      row.value_alt = psnrs_raw[i];
      row.config = echo;
      report.rows.push_back(row);
      mean += psnrs[i];
      mean_raw += psnrs_raw[i];
    }
    ReportRow avg;
    avg.experiment = cfg.experiment;
    avg.model = model_name;
    avg.T = std::to_string(cfg.depth);
    avg.cs_ratio = ratio_str;
    avg.l2_variant = cfg.l2_variant;
    avg.seed = cfg.seed;
    avg.unit = "average";
    avg.metric = "psnr_db";
    avg.value = mean / static_cast<double>(psnrs.size());
    avg.value_alt = mean_raw / static_cast<double>(psnrs.size());
    avg.runtime_sec = runtime;
    avg.config = echo;
    report.rows.push_back(avg);
  };

  // Reconstruct one held-out image on the stride grid.
  const auto reconstruct_image = [&](const Matrix& img_x, const Matrix& img_z,
                                     const auto& patch_forward) {
    const PatchGeometry geo = patch_geometry(img_x.rows(), img_x.cols(), cfg.patch);
    const Matrix patches_x = extract_patches(img_x, cfg.patch);
    const Matrix patches_z = extract_patches(img_z, cfg.patch);
    const Matrix rec_patches = patch_forward(patches_x, patches_z);
    return assemble_patches(rec_patches, geo);
  };

  if (cfg.model == "lesita_ae") {
    std::vector<double> psnrs;
    std::vector<double> psnrs_raw;
    for (Index idx : test_images) {
      const Matrix& img_x = pairs.x[static_cast<std::size_t>(idx)];
      const Matrix& img_z = pairs.z[static_cast<std::size_t>(idx)];
      const Matrix rec_img = reconstruct_image(img_x, img_z, [&](const Matrix& px, const Matrix& pz) {
        return ae.forward(px, pz).x_hat;
      });
      psnrs.push_back(psnr_db(detail::clamp_unit(rec_img), img_x));
      psnrs_raw.push_back(psnr_db(rec_img, img_x));
    }
    add_image_rows("lesita_ae", "", psnrs, psnrs_raw, watch.seconds());
    write_report_csv(detail::join_path(cfg.output_dir, "report.csv"), report);
    return report;
  }

  // Stage 2: reconstructor at the requested measurement ratio.
  const Index m = std::max<Index>(1, static_cast<Index>(std::lround(cfg.cs_ratio *
                                                                    static_cast<double>(n))));
  Rng phi_rng = root.split("phi");
  const Matrix Phi = phi_rng.normal_matrix(m, n) / std::sqrt(static_cast<double>(m));
  LeSITAReconstructor rec =
      cfg.rec_transfer
          ? reconstructor_from_autoencoder(ae, Phi, cfg.depth, /*phi_learnable=*/true, cfg.tied)
          : [&] {
              Rng rec_init = root.split("rec_init");
              LeSITAReconstructor fresh = LeSITAReconstructor::init_random(
                  n, n, cfg.image_code_dim, m, cfg.depth, cfg.t_si, cfg.lambda, variant, rec_init,
                  /*phi_learnable=*/true, cfg.tied);
              fresh.set_loss_weights(cfg.train.lambda1, cfg.train.lambda2);
              return fresh;
            }();
  TrainConfig rec_tc = cfg.train;
  rec_tc.seed = root.split("rec_train").next();
  const TrainHistory rec_history = train(rec, train_set, val_set, rec_tc);
  const std::string ratio_str = std::to_string(cfg.cs_ratio);
  const std::string rec_tag = "lesita_rec_" + cfg.l2_variant + "_r" + ratio_str +
                              (cfg.rec_transfer ? "" : "_scratch");
  detail::write_history_csv(detail::join_path(cfg.output_dir, rec_tag + "_history.csv"),
                            rec_history);
  {
    Checkpoint cp = pack_reconstructor(rec);
    cp.metadata["seed"] = cfg.seed;
    cp.metadata["config"] = nlohmann::json(cfg);
    save_checkpoint(detail::join_path(cfg.output_dir, rec_tag + ".ckpt"), cp);
  }

  Rng noise_rng = root.split("noise");
  std::vector<double> psnrs;
  std::vector<double> psnrs_raw;
  for (Index idx : test_images) {
    const Matrix& img_x = pairs.x[static_cast<std::size_t>(idx)];
    const Matrix& img_z = pairs.z[static_cast<std::size_t>(idx)];
    const Matrix rec_img = reconstruct_image(img_x, img_z, [&](const Matrix& px, const Matrix& pz) {
      const Matrix y = measure(px, rec.phi(), cfg.measurement_noise, noise_rng);
      return rec.forward_measured(y, pz).x_hat;
    });
    psnrs.push_back(psnr_db(detail::clamp_unit(rec_img), img_x));
    psnrs_raw.push_back(psnr_db(rec_img, img_x));
  }
  add_image_rows(cfg.rec_transfer ? "lesita_rec" : "lesita_rec_scratch", ratio_str, psnrs,
                 psnrs_raw, watch.seconds());
  write_report_csv(detail::join_path(cfg.output_dir, "report.csv"), report);
  return report;
}

inline ExperimentReport run_image_cs(const ExperimentConfig& cfg) {
  if (cfg.dataset_dir.empty())
    throw InvalidParameterError("run_image_cs: dataset_dir is required");
  return run_image_cs(cfg, load_image_pairs(cfg.dataset_dir));
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "synthetic_sparse") return run_synthetic(cfg);
  return run_image_cs(cfg);
}

// ---------------------------------------------------------------------------
// Grid runner: the cross product of the requested axes, one subdirectory per
// cell, plus a combined report.
// ---------------------------------------------------------------------------

struct GridConfig {
  ExperimentConfig base;
  std::vector<std::string> models;     // default: just base.model
  std::vector<int> depths;             // default: just base.depth
  std::vector<Index> rhos;             // synthetic axis
  std::vector<double> ratios;          // image axis
  std::vector<std::string> variants;   // image axis
};

inline void to_json(nlohmann::json& j, const GridConfig& g) {
  j = {{"base", g.base},   {"models", g.models},   {"depths", g.depths},
       {"rhos", g.rhos},   {"ratios", g.ratios},   {"variants", g.variants}};
}

inline void from_json(const nlohmann::json& j, GridConfig& g) {
  GridConfig def;
  g.base = j.value("base", def.base);
  g.models = j.value("models", def.models);
  g.depths = j.value("depths", def.depths);
  g.rhos = j.value("rhos", def.rhos);
  g.ratios = j.value("ratios", def.ratios);
  g.variants = j.value("variants", def.variants);
}

inline ExperimentReport run_grid(const GridConfig& grid) {
  const std::vector<std::string> models =
      grid.models.empty() ? std::vector<std::string>{grid.base.model} : grid.models;
  const std::vector<int> depths = grid.depths.empty() ? std::vector<int>{grid.base.depth}
                                                      : grid.depths;
  const std::vector<Index> rhos =
      grid.rhos.empty() ? std::vector<Index>{grid.base.synth.rho} : grid.rhos;
  const std::vector<double> ratios =
      grid.ratios.empty() ? std::vector<double>{grid.base.cs_ratio} : grid.ratios;
  const std::vector<std::string> variants =
      grid.variants.empty() ? std::vector<std::string>{grid.base.l2_variant} : grid.variants;

  ExperimentReport combined;
  for (const std::string& model : models) {
    for (int depth : depths) {
      if (grid.base.experiment == "synthetic_sparse") {
        for (Index rho : rhos) {
          ExperimentConfig cfg = grid.base;
          cfg.model = model;
          cfg.depth = depth;
          cfg.synth.rho = rho;
          std::string tag = model + "_T" + std::to_string(depth) + "_rho" + std::to_string(rho);
          cfg.output_dir = detail::join_path(grid.base.output_dir, tag);
          combined.append(run_synthetic(cfg));
        }
      } else {
        for (const std::string& variant : variants) {
          for (double ratio : ratios) {
            ExperimentConfig cfg = grid.base;
            cfg.model = model;
            cfg.depth = depth;
            cfg.l2_variant = variant;
            cfg.cs_ratio = ratio;
            std::string tag = model + "_T" + std::to_string(depth) + "_" + variant + "_r" +
                              std::to_string(ratio);
            cfg.output_dir = detail::join_path(grid.base.output_dir, tag);
            combined.append(run_image_cs(cfg));
          }
        }
      }
    }
  }
  write_report_csv(detail::join_path(grid.base.output_dir, "report.csv"), combined);
  return combined;
}

// ---------------------------------------------------------------------------
// Dataset generation entry points (used by the generate-data command).
// ---------------------------------------------------------------------------

inline void generate_synthetic_dataset(const ExperimentConfig& cfg, const std::string& dir) {
  const SyntheticData data = make_synthetic_data(cfg);
  nlohmann::json meta = {{"k", cfg.synth.k},      {"s", cfg.synth.s},
                         {"rho", cfg.synth.rho},  {"count", cfg.synth.count},
                         {"signal_dim", cfg.signal_dim}, {"seed", cfg.seed}};
  save_code_dataset(dir, data.all, meta, {{"D", data.D}});
}

inline void generate_image_dataset(const std::string& dir, Index count, Index rows, Index cols,
                                   std::uint64_t seed, double detail_weight = 0.35) {
  if (count < 1) throw InvalidParameterError("generate_image_dataset: count must be positive");
  std::vector<Matrix> xs;
  std::vector<Matrix> zs;
  for (Index i = 0; i < count; ++i) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(i));
    auto [x, z] = gen_correlated_images(rows, cols, rng, detail_weight);
    xs.push_back(std::move(x));
    zs.push_back(std::move(z));
  }
  save_image_pairs(dir, xs, zs,
                   {{"rows", rows}, {"cols", cols}, {"seed", seed},
                    {"detail_weight", detail_weight}, {"generator", "correlated-base"}});
}

}  // namespace lesita

#endif  // LESITA_EXPERIMENTS_HPP
