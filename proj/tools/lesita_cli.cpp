// Command-line front end: dataset generation, training/evaluation of the
// sparse-recovery models, experiment grids, and artifact inspection.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
// failure.  LESITA_OUTPUT_ROOT, when set, prefixes relative output paths.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lesita/checkpoint.hpp"
#include "lesita/common.hpp"
#include "lesita/datagen.hpp"
#include "lesita/dataset_io.hpp"
#include "lesita/experiments.hpp"
#include "lesita/metrics.hpp"
#include "lesita/pipelines.hpp"
#include "lesita/training.hpp"
#include "lesita/unfolded.hpp"

namespace {

std::string output_rooted(const std::string& path) {
  const char* root = std::getenv("LESITA_OUTPUT_ROOT");
  if (!root || !*root) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(root) / p).string();
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lesita::DataError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw lesita::InvalidParameterError("config file " + path + " is not valid JSON: " + e.what());
  }
}

void print_report(const lesita::ExperimentReport& report) {
  for (const lesita::ReportRow& row : report.rows) {
    std::cout << row.model;
    if (!row.T.empty()) std::cout << " T=" << row.T;
    if (!row.rho.empty()) std::cout << " rho=" << row.rho;
    if (!row.cs_ratio.empty()) std::cout << " ratio=" << row.cs_ratio;
    if (!row.l2_variant.empty()) std::cout << " L2=" << row.l2_variant;
    std::cout << " [" << row.unit << "] " << row.metric << " = " << row.value;
    if (std::isfinite(row.iters_mean)) std::cout << " (mean iterations " << row.iters_mean << ")";
    std::cout << "\n";
  }
}

// --- generate-data ---------------------------------------------------------

struct GenerateArgs {
  std::string kind = "synthetic";
  std::string out;
  std::string config;
  lesita::ExperimentConfig cfg;
  long image_count = 12;
  long rows = 64;
  long cols = 64;
  double detail_weight = 0.35;
};

void run_generate(const GenerateArgs& a) {
  const std::string out = output_rooted(a.out);
  lesita::ExperimentConfig cfg = a.cfg;
  if (!a.config.empty()) cfg = load_json_file(a.config).get<lesita::ExperimentConfig>();
  if (a.kind == "synthetic") {
    cfg.synth.validate();
    lesita::generate_synthetic_dataset(cfg, out);
    std::cout << "wrote synthetic code dataset (" << cfg.synth.count << " samples, k="
              << cfg.synth.k << ", s=" << cfg.synth.s << ", rho=" << cfg.synth.rho << ") to "
              << out << "\n";
  } else if (a.kind == "images") {
    lesita::generate_image_dataset(out, a.image_count, a.rows, a.cols, cfg.seed, a.detail_weight);
    std::cout << "wrote " << a.image_count << " correlated image pairs (" << a.rows << "x"
              << a.cols << ") to " << out << "\n";
  } else {
    throw lesita::InvalidParameterError("generate-data: unknown kind '" + a.kind +
                                        "' (expected synthetic or images)");
  }
}

// --- train / run-grid ------------------------------------------------------

struct TrainArgs {
  std::string config;
  lesita::ExperimentConfig cfg;
  // Values only applied when the flag was seen.
  CLI::Option* model_opt = nullptr;
  CLI::Option* depth_opt = nullptr;
  CLI::Option* rho_opt = nullptr;
  CLI::Option* ratio_opt = nullptr;
  CLI::Option* variant_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* output_opt = nullptr;
  CLI::Option* dataset_opt = nullptr;
  CLI::Option* experiment_opt = nullptr;
  std::string model;
  int depth = 0;
  long rho = 0;
  double ratio = 0.0;
  std::string variant;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string output;
  std::string dataset;
  std::string experiment;
};

void run_train(const TrainArgs& a) {
  lesita::ExperimentConfig cfg = a.cfg;
  if (!a.config.empty()) cfg = load_json_file(a.config).get<lesita::ExperimentConfig>();
  if (a.experiment_opt->count() > 0) cfg.experiment = a.experiment;
  if (a.model_opt->count() > 0) cfg.model = a.model;
  if (a.depth_opt->count() > 0) cfg.depth = a.depth;
  if (a.rho_opt->count() > 0) cfg.synth.rho = a.rho;
  if (a.ratio_opt->count() > 0) cfg.cs_ratio = a.ratio;
  if (a.variant_opt->count() > 0) cfg.l2_variant = a.variant;
  if (a.seed_opt->count() > 0) cfg.seed = a.seed;
  if (a.epochs_opt->count() > 0) cfg.train.epochs = a.epochs;
  if (a.output_opt->count() > 0) cfg.output_dir = a.output;
  if (a.dataset_opt->count() > 0) cfg.dataset_dir = a.dataset;
  cfg.output_dir = output_rooted(cfg.output_dir);
  const lesita::ExperimentReport report = lesita::run_experiment(cfg);
  print_report(report);
  std::cout << "report written to " << cfg.output_dir << "/report.csv\n";
}

void run_grid_cmd(const std::string& config_path) {
  lesita::GridConfig grid = load_json_file(config_path).get<lesita::GridConfig>();
  grid.base.output_dir = output_rooted(grid.base.output_dir);
  const lesita::ExperimentReport report = lesita::run_grid(grid);
  print_report(report);
  std::cout << "combined report written to " << grid.base.output_dir << "/report.csv\n";
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string dataset;
  long patch_size = 16;
  long stride = 4;
  double cs_noise = 0.0;
  std::string csv;
};

void run_evaluate(const EvaluateArgs& a) {
  const lesita::Checkpoint cp = lesita::load_checkpoint(a.checkpoint);
  const std::string model = lesita::checkpoint_model(cp);
  lesita::ExperimentReport report;

  if (model == "lista" || model == "lesita") {
    const lesita::UnfoldedNetwork net = lesita::unpack_network(cp);
    const lesita::CodeDataset data = lesita::load_code_dataset(a.dataset);
    if (net.kind() == lesita::NetKind::kLesita && data.W.size() == 0)
      throw lesita::DataError("evaluate: model needs side information but the dataset has none");
    const lesita::Matrix est = net.kind() == lesita::NetKind::kLesita
                                   ? net.forward(data.Y, data.W)
                                   : net.forward(data.Y);
    const lesita::NmseAggregate agg = lesita::nmse_db_aggregate(est, data.Alpha);
    std::cout << model << ": NMSE " << agg.mean_db << " dB (mean over " << agg.count
              << " samples; dB of mean ratio " << agg.db_of_mean_ratio << ")\n";
    lesita::ReportRow row;
    row.experiment = "evaluate";
    row.model = model;
    row.T = std::to_string(net.depth());
    row.unit = "dataset";
    row.metric = "nmse_db";
    row.value = agg.mean_db;
    row.value_alt = agg.db_of_mean_ratio;
    report.rows.push_back(row);
  } else if (model == "lesita_ae" || model == "lesita_rec") {
    const lesita::ImagePairSet pairs = lesita::load_image_pairs(a.dataset);
    const lesita::PatchSpec patch{static_cast<lesita::Index>(a.patch_size),
                                  static_cast<lesita::Index>(a.stride)};
    std::optional<lesita::LeSITAAutoencoder> ae;
    std::optional<lesita::LeSITAReconstructor> rec;
    if (model == "lesita_ae")
      ae.emplace(lesita::unpack_autoencoder(cp));
    else
      rec.emplace(lesita::unpack_reconstructor(cp));
    lesita::Rng noise_rng(0);
    double mean = 0.0;
    for (std::size_t i = 0; i < pairs.count(); ++i) {
      const lesita::Matrix px = lesita::extract_patches(pairs.x[i], patch);
      const lesita::Matrix pz = lesita::extract_patches(pairs.z[i], patch);
      lesita::Matrix rec_patches;
      if (ae) {
        rec_patches = ae->forward(px, pz).x_hat;
      } else {
        const lesita::Matrix y = lesita::measure(px, rec->phi(), a.cs_noise, noise_rng);
        rec_patches = rec->forward_measured(y, pz).x_hat;
      }
      const lesita::PatchGeometry geo =
          lesita::patch_geometry(pairs.x[i].rows(), pairs.x[i].cols(), patch);
      lesita::Matrix img = lesita::assemble_patches(rec_patches, geo);
      img = img.array().max(0.0).min(1.0).matrix();
      const double psnr = lesita::psnr_db(img, pairs.x[i]);
      mean += psnr;
      std::cout << "image_" << i << ": PSNR " << psnr << " dB\n";
      lesita::ReportRow row;
      row.experiment = "evaluate";
      row.model = model;
      row.unit = "image_" + std::to_string(i);
      row.metric = "psnr_db";
      row.value = psnr;
      report.rows.push_back(row);
    }
    mean /= static_cast<double>(pairs.count());
    std::cout << "average: PSNR " << mean << " dB over " << pairs.count() << " images\n";
    lesita::ReportRow avg;
    avg.experiment = "evaluate";
    avg.model = model;
    avg.unit = "average";
    avg.metric = "psnr_db";
    avg.value = mean;
    report.rows.push_back(avg);
  } else {
    throw lesita::DataError("evaluate: unsupported model kind '" + model + "' in checkpoint");
  }

  if (!a.csv.empty()) {
    lesita::write_report_csv(output_rooted(a.csv), report);
    std::cout << "rows written to " << output_rooted(a.csv) << "\n";
  }
}

// --- inspect ---------------------------------------------------------------

void inspect_checkpoint(const std::string& path) {
  const lesita::Checkpoint cp = lesita::load_checkpoint(path);
  std::cout << "checkpoint " << path << "\n";
  std::cout << "metadata: " << cp.metadata.dump(2) << "\n";
  std::cout << "blocks (" << cp.blocks.size() << "):\n";
  for (const lesita::CheckpointBlock& b : cp.blocks) {
    std::cout << "  " << b.name << "  [";
    for (std::size_t i = 0; i < b.dims.size(); ++i)
      std::cout << (i ? "x" : "") << b.dims[i];
    std::cout << "]";
    if (b.dims.empty() && b.data.size() == 1) {
      std::cout << "  value " << b.data[0];
    } else if (!b.data.empty()) {
      double lo = b.data[0];
      double hi = b.data[0];
      double sum = 0.0;
      for (double v : b.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      std::cout << "  min " << lo << "  max " << hi << "  mean "
                << sum / static_cast<double>(b.data.size());
    }
    std::cout << "\n";
  }
}

void inspect_dataset(const std::string& dir) {
  const nlohmann::json manifest = lesita::load_manifest(dir);
  std::cout << "dataset " << dir << "\n";
  const std::string kind = manifest.value("kind", "unknown");
  std::cout << "kind: " << kind << "\n";
  if (manifest.contains("metadata")) std::cout << "metadata: " << manifest["metadata"].dump(2) << "\n";
  if (kind == "synthetic_codes") {
    const lesita::CodeDataset data = lesita::load_code_dataset(dir);
    std::cout << "samples: " << data.count() << ", measurement dim " << data.Y.rows()
              << ", code length " << data.Alpha.rows() << "\n";
    lesita::Index nnz_lo = data.Alpha.rows();
    lesita::Index nnz_hi = 0;
    lesita::Index ov_lo = data.Alpha.rows();
    lesita::Index ov_hi = 0;
    bool signs_agree = true;
    for (lesita::Index j = 0; j < data.count(); ++j) {
      lesita::Index nnz = 0;
      lesita::Index overlap = 0;
      for (lesita::Index i = 0; i < data.Alpha.rows(); ++i) {
        const bool a = data.Alpha(i, j) != 0.0;
        const bool w = data.W.size() > 0 && data.W(i, j) != 0.0;
        if (a) ++nnz;
        if (a && w) {
          ++overlap;
          if (data.Alpha(i, j) * data.W(i, j) < 0.0) signs_agree = false;
        }
      }
      nnz_lo = std::min(nnz_lo, nnz);
      nnz_hi = std::max(nnz_hi, nnz);
      ov_lo = std::min(ov_lo, overlap);
      ov_hi = std::max(ov_hi, overlap);
    }
    std::cout << "code nonzeros per sample: min " << nnz_lo << ", max " << nnz_hi << "\n";
    if (data.W.size() > 0) {
      std::cout << "shared support per sample: min " << ov_lo << ", max " << ov_hi << "\n";
      std::cout << "shared-support sign agreement: " << (signs_agree ? "all" : "violated") << "\n";
    }
  } else if (kind == "image_pairs") {
    const lesita::ImagePairSet pairs = lesita::load_image_pairs(dir);
    std::cout << "pairs: " << pairs.count() << "\n";
    for (std::size_t i = 0; i < pairs.count(); ++i)
      std::cout << "  pair " << i << ": " << pairs.x[i].rows() << "x" << pairs.x[i].cols()
                << ", x range [" << pairs.x[i].minCoeff() << ", " << pairs.x[i].maxCoeff()
                << "], z range [" << pairs.z[i].minCoeff() << ", " << pairs.z[i].maxCoeff()
                << "]\n";
  }
}

void inspect_config(const std::string& path) {
  const lesita::ExperimentConfig cfg = load_json_file(path).get<lesita::ExperimentConfig>();
  cfg.validate();
  std::cout << "config " << path << " is valid:\n" << nlohmann::json(cfg).dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse signal recovery with side information: proximal solvers, unfolded "
               "networks, and compressed-sensing pipelines"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate-data", "Create a dataset directory");
  generate->add_option("--kind", gen.kind, "synthetic (coupled codes) or images (correlated pairs)")
      ->check(CLI::IsMember({"synthetic", "images"}));
  generate->add_option("--out", gen.out, "output directory")->required();
  generate->add_option("--config", gen.config, "JSON experiment config to draw parameters from");
  generate->add_option("--k", gen.cfg.synth.k, "code length");
  generate->add_option("--s", gen.cfg.synth.s, "nonzeros per code");
  generate->add_option("--rho", gen.cfg.synth.rho, "shared support size");
  generate->add_option("--count", gen.cfg.synth.count, "sample count (synthetic kind)");
  generate->add_option("--signal-dim", gen.cfg.signal_dim, "dictionary rows");
  generate->add_option("--seed", gen.cfg.seed, "root seed");
  generate->add_option("--image-count", gen.image_count, "number of image pairs (images kind)");
  generate->add_option("--rows", gen.rows, "image rows (images kind)");
  generate->add_option("--cols", gen.cols, "image cols (images kind)");
  generate->add_option("--detail-weight", gen.detail_weight,
                       "independent-detail weight for image pairs");
  generate->callback([&gen] { run_generate(gen); });

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand(
      "train", "Run one experiment cell (solve, or train + evaluate) from a config");
  train_cmd->add_option("--config", tr.config, "JSON experiment config file");
  tr.experiment_opt = train_cmd->add_option("--experiment", tr.experiment,
                                            "synthetic_sparse or image_cs");
  tr.model_opt = train_cmd->add_option("--model", tr.model,
                                       "ista | sita | lista | lesita | lesita_ae | lesita_rec");
  tr.depth_opt = train_cmd->add_option("--depth", tr.depth, "unfolded layers T");
  tr.rho_opt = train_cmd->add_option("--rho", tr.rho, "shared support size");
  tr.ratio_opt = train_cmd->add_option("--ratio", tr.ratio, "CS ratio m/n");
  tr.variant_opt = train_cmd->add_option("--variant", tr.variant, "latent loss variant A or B");
  tr.seed_opt = train_cmd->add_option("--seed", tr.seed, "root seed");
  tr.epochs_opt = train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  tr.output_opt = train_cmd->add_option("--output", tr.output, "output directory");
  tr.dataset_opt = train_cmd->add_option("--dataset", tr.dataset, "image-pair dataset directory");
  train_cmd->callback([&tr] { run_train(tr); });

  EvaluateArgs ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  evaluate->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  evaluate->add_option("--dataset", ev.dataset, "dataset directory")->required();
  evaluate->add_option("--patch-size", ev.patch_size, "patch size for image models");
  evaluate->add_option("--stride", ev.stride, "patch stride for image models");
  evaluate->add_option("--noise", ev.cs_noise, "measurement noise sigma");
  evaluate->add_option("--csv", ev.csv, "also write rows to this CSV file");
  evaluate->callback([&ev] { run_evaluate(ev); });

  std::string grid_config;
  CLI::App* grid = app.add_subcommand("run-grid", "Run a cross product of experiment cells");
  grid->add_option("--config", grid_config, "JSON grid config ({base, models, depths, ...})")
      ->required();
  grid->callback([&grid_config] { run_grid_cmd(grid_config); });

  std::string ins_checkpoint;
  std::string ins_dataset;
  std::string ins_config;
  CLI::App* inspect = app.add_subcommand("inspect", "Describe a checkpoint, dataset, or config");
  inspect->add_option("--checkpoint", ins_checkpoint, "checkpoint file");
  inspect->add_option("--dataset", ins_dataset, "dataset directory");
  inspect->add_option("--config", ins_config, "experiment config to validate");
  inspect->callback([&] {
    const int given = (!ins_checkpoint.empty()) + (!ins_dataset.empty()) + (!ins_config.empty());
    if (given != 1)
      throw lesita::InvalidParameterError(
          "inspect: give exactly one of --checkpoint, --dataset, --config");
    if (!ins_checkpoint.empty()) inspect_checkpoint(ins_checkpoint);
    else if (!ins_dataset.empty()) inspect_dataset(ins_dataset);
    else inspect_config(ins_config);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const lesita::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const lesita::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
