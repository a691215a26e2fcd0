#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lesita/experiments.hpp"

using namespace lesita;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("exp_test_tmp") / name) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all("exp_test_tmp"); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
  std::string str() const { return path.string(); }
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Small-but-real synthetic configuration; finishes in well under a second.
ExperimentConfig tiny_synthetic(const std::string& model, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.experiment = "synthetic_sparse";
  cfg.model = model;
  cfg.seed = 7;
  cfg.output_dir = out_dir;
  cfg.synth = SyntheticSpec{32, 4, 3, 80, 0};
  cfg.signal_dim = 16;
  cfg.lambda = 0.1;
  cfg.depth = 2;
  cfg.t_si = 2;
  cfg.solver.t_max = 3000;
  cfg.solver.rel_tol = 1e-9;
  cfg.solver_eval_count = 6;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 1e-3;
  cfg.val_fraction = 0.10;
  cfg.test_fraction = 0.15;
  return cfg;
}

ExperimentConfig tiny_image(const std::string& model, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.experiment = "image_cs";
  cfg.model = model;
  cfg.seed = 11;
  cfg.output_dir = out_dir;
  cfg.lambda = 0.1;
  cfg.depth = 2;
  cfg.t_si = 2;
  cfg.patch = PatchSpec{8, 4};
  cfg.image_code_dim = 80;
  cfg.train_patches = 60;
  cfg.cs_ratio = 0.5;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 1e-3;
  cfg.val_fraction = 0.10;
  cfg.test_fraction = 0.34;
  return cfg;
}

ImagePairSet tiny_pairs(int count, Index rows, Index cols, std::uint64_t seed) {
  ImagePairSet pairs;
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(i));
    auto [x, z] = gen_correlated_images(rows, cols, rng);
    pairs.x.push_back(std::move(x));
    pairs.z.push_back(std::move(z));
  }
  return pairs;
}

}  // namespace

TEST_CASE("experiment configs survive a JSON round trip", "[experiments]") {
  ExperimentConfig cfg = tiny_synthetic("lesita", "somewhere");
  cfg.tied = true;
  cfg.l2_variant = "B";
  cfg.measurement_noise = 0.01;
  cfg.rec_transfer = false;
  cfg.solver.target_nmse_db = -25.0;
  cfg.train.optimizer = OptimizerKind::kSgd;
  cfg.train.lr_decay = 0.9;

  nlohmann::json j = cfg;
  ExperimentConfig back = j.get<ExperimentConfig>();
  CHECK(back.experiment == cfg.experiment);
  CHECK(back.model == cfg.model);
  CHECK(back.seed == cfg.seed);
  CHECK(back.synth.k == cfg.synth.k);
  CHECK(back.synth.rho == cfg.synth.rho);
  CHECK(back.signal_dim == cfg.signal_dim);
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.depth == cfg.depth);
  CHECK(back.tied == cfg.tied);
  CHECK(back.l2_variant == "B");
  CHECK(back.measurement_noise == 0.01);
  CHECK_FALSE(back.rec_transfer);
  REQUIRE(back.solver.target_nmse_db.has_value());
  CHECK(*back.solver.target_nmse_db == -25.0);
  CHECK(back.train.optimizer == OptimizerKind::kSgd);
  CHECK(back.train.lr_decay == 0.9);
  CHECK(back.train.epochs == cfg.train.epochs);

  // Missing fields fall back to defaults.
  ExperimentConfig defaults = nlohmann::json::object().get<ExperimentConfig>();
  CHECK(defaults.experiment == "synthetic_sparse");
  CHECK(defaults.model == "lesita");
  CHECK(defaults.synth.k == 256);
  CHECK(defaults.depth == 7);
  CHECK(defaults.train.lr_decay == 1.0);
}

TEST_CASE("config validation rejects inconsistent settings", "[experiments]") {
  ExperimentConfig cfg = tiny_synthetic("lesita", "x");
  CHECK_NOTHROW(cfg.validate());

  auto broken = cfg;
  broken.experiment = "other";
  CHECK_THROWS_AS(broken.validate(), InvalidParameterError);
  broken = cfg;
  broken.model = "mystery";
  CHECK_THROWS_AS(broken.validate(), InvalidParameterError);
  broken = cfg;
  broken.model = "lesita_ae";  // image model on the synthetic study
  CHECK_THROWS_AS(broken.validate(), InvalidParameterError);
  broken = cfg;
  broken.signal_dim = cfg.synth.k + 1;
  CHECK_THROWS_AS(broken.validate(), InvalidParameterError);
  broken = cfg;
  broken.val_fraction = 0.6;
  broken.test_fraction = 0.5;
  CHECK_THROWS_AS(broken.validate(), InvalidParameterError);
  broken = cfg;
  broken.cs_ratio = 0.0;
  CHECK_THROWS_AS(broken.validate(), InvalidParameterError);

  ExperimentConfig img = tiny_image("lesita_rec", "x");
  CHECK_NOTHROW(img.validate());
  img.image_code_dim = 10;  // below patch_size^2
  CHECK_THROWS_AS(img.validate(), InvalidParameterError);
}

TEST_CASE("sample splits are disjoint, exhaustive, and deterministic", "[experiments]") {
  Rng rng(3);
  SplitIndices s = split_indices(200, 0.10, 0.25, rng);
  CHECK(s.test.size() == 50);
  CHECK(s.val.size() == 20);
  CHECK(s.train.size() == 130);

  std::set<Index> seen;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (Index i : *part) {
      CHECK(seen.insert(i).second);  // no duplicates across parts
    }
  CHECK(seen.size() == 200);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 199);

  Rng rng2(3);
  SplitIndices s2 = split_indices(200, 0.10, 0.25, rng2);
  CHECK(s2.train == s.train);
  CHECK(s2.val == s.val);
  CHECK(s2.test == s.test);

  Rng bad(0);
  CHECK_THROWS_AS(split_indices(0, 0.1, 0.1, bad), InvalidParameterError);
  CHECK_THROWS_AS(split_indices(10, 0.6, 0.5, bad), InvalidParameterError);
}

TEST_CASE("report CSV uses the documented schema", "[experiments]") {
  ExperimentReport report;
  ReportRow row;
  row.experiment = "synthetic_sparse";
  row.model = "lesita";
  row.T = "7";
  row.rho = "25";
  row.seed = 3;
  row.unit = "test";
  row.metric = "nmse_db";
  row.value = -33.5;
  row.value_alt = -30.25;
  row.iters_mean = 7.0;
  row.runtime_sec = 1.5;
  row.config = "{\"a\":1,\"b\":\"two\"}";  // commas and quotes must be escaped
  report.rows.push_back(row);

  std::ostringstream os;
  write_report_csv(os, report);
  std::istringstream is(os.str());
  std::string header, line;
  REQUIRE(std::getline(is, header));
  CHECK(header ==
        "experiment,model,T,rho,cs_ratio,l2_variant,seed,unit,metric,value,value_alt,"
        "iters_mean,runtime_sec,config");
  REQUIRE(std::getline(is, line));
  CHECK(line.rfind("synthetic_sparse,lesita,7,25,,,3,test,nmse_db,-33.5,-30.25,7,1.5,", 0) == 0);
  CHECK(line.find("\"{\"\"a\"\":1,\"\"b\"\":\"\"two\"\"}\"") != std::string::npos);

  // NaN fields are left empty rather than printed.
  ReportRow sparse_row;
  sparse_row.experiment = "e";
  sparse_row.model = "m";
  ExperimentReport r2;
  r2.rows.push_back(sparse_row);
  std::ostringstream os2;
  write_report_csv(os2, r2);
  std::istringstream is2(os2.str());
  std::getline(is2, header);
  REQUIRE(std::getline(is2, line));
  CHECK(line == "e,m,,,,,0,,,,,,,");
}

TEST_CASE("synthetic data generation is deterministic and well shaped", "[experiments]") {
  ExperimentConfig cfg = tiny_synthetic("lesita", "x");
  SyntheticData a = make_synthetic_data(cfg);
  SyntheticData b = make_synthetic_data(cfg);
  CHECK(a.D.rows() == 16);
  CHECK(a.D.cols() == 32);
  CHECK(a.all.Y.rows() == 16);
  CHECK(a.all.Alpha.rows() == 32);
  CHECK(a.all.count() == 80);
  CHECK(a.all.W.cols() == 80);
  CHECK((a.D - b.D).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.all.Alpha - b.all.Alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.split.train == b.split.train);

  // Measurements are exactly D * Alpha.
  CHECK((a.all.Y - a.D * a.all.Alpha).cwiseAbs().maxCoeff() < 1e-14);

  ExperimentConfig cfg2 = cfg;
  cfg2.seed = 8;
  SyntheticData c = make_synthetic_data(cfg2);
  CHECK((a.D - c.D).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("solver baselines produce report rows with iteration counts", "[experiments]") {
  TempDir tmp("solver_runs");
  for (const std::string model : {std::string("ista"), std::string("sita")}) {
    ExperimentConfig cfg = tiny_synthetic(model, tmp.sub(model));
    ExperimentReport report = run_synthetic(cfg);
    REQUIRE(report.rows.size() == 1);
    const ReportRow& row = report.rows[0];
    CHECK(row.model == model);
    CHECK(row.metric == "nmse_db");
    CHECK(row.unit == "test");
    CHECK(row.rho == "3");
    CHECK(std::isfinite(row.value));
    CHECK(row.value < 0.0);  // solvers should at least beat the zero estimate
    CHECK(row.iters_mean >= 1.0);
    CHECK(row.runtime_sec >= 0.0);
    CHECK(fs::exists(fs::path(cfg.output_dir) / "report.csv"));
    const auto lines = read_lines(tmp.sub(model) + "/report.csv");
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == report_csv_header());
  }
}

TEST_CASE("trained models leave checkpoints and histories behind", "[experiments]") {
  TempDir tmp("trained_runs");
  for (const std::string model : {std::string("lista"), std::string("lesita")}) {
    ExperimentConfig cfg = tiny_synthetic(model, tmp.sub(model));
    ExperimentReport report = run_synthetic(cfg);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].T == "2");
    CHECK(std::isfinite(report.rows[0].value));

    const std::string tag = model + "_T2_rho3";
    const fs::path dir(cfg.output_dir);
    REQUIRE(fs::exists(dir / (tag + ".ckpt")));
    REQUIRE(fs::exists(dir / (tag + "_history.csv")));

    Checkpoint cp = load_checkpoint((dir / (tag + ".ckpt")).string());
    CHECK(checkpoint_model(cp) == model);
    UnfoldedNetwork net = unpack_network(cp);
    CHECK(net.depth() == 2);
    CHECK(net.code_dim() == 32);

    const auto lines = read_lines((dir / (tag + "_history.csv")).string());
    CHECK(lines[0] == "epoch,train_loss,val_loss,train_code_l2,val_code_l2");
    CHECK(lines.size() == 3);  // header + one line per epoch
  }
}

TEST_CASE("synthetic runs are reproducible under a fixed seed", "[experiments]") {
  TempDir tmp("repro");
  ExperimentConfig a = tiny_synthetic("lesita", tmp.sub("a"));
  ExperimentConfig b = tiny_synthetic("lesita", tmp.sub("b"));
  ExperimentReport ra = run_synthetic(a);
  ExperimentReport rb = run_synthetic(b);
  CHECK(ra.rows[0].value == rb.rows[0].value);
  CHECK(ra.rows[0].value_alt == rb.rows[0].value_alt);
}

TEST_CASE("the autoencoder study reports per-image and average quality", "[experiments]") {
  TempDir tmp("image_ae");
  ExperimentConfig cfg = tiny_image("lesita_ae", tmp.sub("run"));
  ImagePairSet pairs = tiny_pairs(3, 16, 16, 21);
  ExperimentReport report = run_image_cs(cfg, pairs);

  REQUIRE(report.rows.size() == 2);  // one test image + the average row
  CHECK(report.rows[0].unit.rfind("image_", 0) == 0);
  CHECK(report.rows[1].unit == "average");
  for (const ReportRow& row : report.rows) {
    CHECK(row.model == "lesita_ae");
    CHECK(row.metric == "psnr_db");
    CHECK(row.l2_variant == "A");
    CHECK(std::isfinite(row.value));
    CHECK(row.value > 0.0);
  }
  const fs::path dir(cfg.output_dir);
  REQUIRE(fs::exists(dir / "lesita_ae_A.ckpt"));
  REQUIRE(fs::exists(dir / "lesita_ae_A_history.csv"));
  Checkpoint cp = load_checkpoint((dir / "lesita_ae_A.ckpt").string());
  CHECK(checkpoint_model(cp) == "lesita_ae");
}

TEST_CASE("the measurement study trains a reconstructor on top of the autoencoder",
          "[experiments]") {
  TempDir tmp("image_rec");
  ExperimentConfig cfg = tiny_image("lesita_rec", tmp.sub("run"));
  ImagePairSet pairs = tiny_pairs(3, 16, 16, 22);
  ExperimentReport report = run_image_cs(cfg, pairs);

  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].model == "lesita_rec");
  CHECK(report.rows[1].unit == "average");
  CHECK(report.rows[0].cs_ratio == std::to_string(0.5));
  CHECK(std::isfinite(report.rows[1].value));

  const fs::path dir(cfg.output_dir);
  const std::string rec_tag = "lesita_rec_A_r" + std::to_string(0.5);
  REQUIRE(fs::exists(dir / (rec_tag + ".ckpt")));
  Checkpoint cp = load_checkpoint((dir / (rec_tag + ".ckpt")).string());
  CHECK(checkpoint_model(cp) == "lesita_rec");
  LeSITAReconstructor rec = unpack_reconstructor(cp);
  CHECK(rec.phi().rows() == 32);  // half of the 64-dimensional patch space
  CHECK(rec.phi().cols() == 64);

  // The autoencoder stage also leaves its checkpoint.
  REQUIRE(fs::exists(dir / "lesita_ae_A.ckpt"));
}

TEST_CASE("a from-scratch reconstructor is labelled as such", "[experiments]") {
  TempDir tmp("image_scratch");
  ExperimentConfig cfg = tiny_image("lesita_rec", tmp.sub("run"));
  cfg.rec_transfer = false;
  ImagePairSet pairs = tiny_pairs(3, 16, 16, 23);
  ExperimentReport report = run_image_cs(cfg, pairs);
  CHECK(report.rows[0].model == "lesita_rec_scratch");
  const std::string rec_tag = "lesita_rec_A_r" + std::to_string(0.5) + "_scratch";
  CHECK(fs::exists(fs::path(cfg.output_dir) / (rec_tag + ".ckpt")));
}

TEST_CASE("the grid runner writes one cell per combination plus a combined report",
          "[experiments]") {
  TempDir tmp("grid");
  GridConfig grid;
  grid.base = tiny_synthetic("ista", tmp.sub("grid_out"));
  grid.models = {"ista"};
  grid.rhos = {2, 3};
  ExperimentReport combined = run_grid(grid);
  REQUIRE(combined.rows.size() == 2);
  CHECK(combined.rows[0].rho == "2");
  CHECK(combined.rows[1].rho == "3");
  const fs::path out(tmp.sub("grid_out"));
  CHECK(fs::exists(out / "ista_T2_rho2" / "report.csv"));
  CHECK(fs::exists(out / "ista_T2_rho3" / "report.csv"));
  const auto lines = read_lines((out / "report.csv").string());
  REQUIRE(lines.size() == 3);  // header + the two cells
}

TEST_CASE("generated datasets load back with their provenance", "[experiments]") {
  TempDir tmp("datasets");
  ExperimentConfig cfg = tiny_synthetic("lesita", "unused");
  generate_synthetic_dataset(cfg, tmp.sub("codes"));
  CodeDataset codes = load_code_dataset(tmp.sub("codes"));
  CHECK(codes.count() == 80);
  CHECK(codes.Alpha.rows() == 32);
  CHECK(codes.W.cols() == 80);
  nlohmann::json manifest = load_manifest(tmp.sub("codes"));
  CHECK(manifest.at("metadata").at("k") == 32);
  CHECK(manifest.at("metadata").at("rho") == 3);
  CHECK(manifest.at("arrays").contains("D"));

  // The stored dictionary reproduces the stored measurements.
  Matrix D = read_array((fs::path(tmp.sub("codes")) / "D.bin").string());
  CHECK((codes.Y - D * codes.Alpha).cwiseAbs().maxCoeff() < 1e-14);

  generate_image_dataset(tmp.sub("imgs"), 2, 16, 12, 31);
  ImagePairSet pairs = load_image_pairs(tmp.sub("imgs"));
  REQUIRE(pairs.count() == 2);
  CHECK(pairs.x[0].rows() == 16);
  CHECK(pairs.x[0].cols() == 12);
  CHECK(pairs.x[0].minCoeff() >= 0.0);
  CHECK(pairs.x[0].maxCoeff() <= 1.0);
  CHECK(pairs.z[1].rows() == 16);
}

TEST_CASE("the experiment dispatcher routes by study name", "[experiments]") {
  TempDir tmp("dispatch");
  ExperimentConfig cfg = tiny_synthetic("ista", tmp.sub("synth"));
  ExperimentReport report = run_experiment(cfg);
  CHECK(report.rows.size() == 1);
  CHECK(report.rows[0].experiment == "synthetic_sparse");

  ExperimentConfig img = tiny_image("lesita_ae", tmp.sub("img"));
  img.dataset_dir = "";  // image study without data must fail loudly
  CHECK_THROWS_AS(run_experiment(img), InvalidParameterError);
}
