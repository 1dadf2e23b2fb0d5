#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svlab/harness.hpp"
#include "svlab/matrix_io.hpp"

using namespace svlab;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("svlab_harness_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

RunConfig tiny_run(const std::string& out_dir) {
  RunConfig cfg;
  cfg.dataset.kind = "synth-shapes";
  cfg.dataset.count = 128;
  cfg.dataset.size = 16;
  cfg.model_kind = "split";
  cfg.latent_dim = 6;
  cfg.base_dim = 8;
  cfg.num_scales = 2;
  cfg.dense_width = 16;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.gmm_components = 3;
  cfg.fid_dims = 16;
  cfg.fid_samples = 100;
  cfg.seed = 321;
  cfg.out_dir = out_dir;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config validation rejects bad fields before any compute") {
  RunConfig cfg = tiny_run("unused");
  SUBCASE("model kind") {
    cfg.model_kind = "diffusion";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("non-positive numerics") {
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("beta mode") {
    cfg.beta_mode = "annealed";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("precision") {
    cfg.precision = "f16";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("config JSON round trip preserves every field") {
  RunConfig cfg = tiny_run("somewhere");
  cfg.beta0 = 2.5;
  cfg.fid_extractor = "random_conv";
  cfg.dataset.synth_seed = 777;
  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("training is reproducible from config and seed alone") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("run_a"));
  TrainResult a = cmd_train(cfg);
  cfg.out_dir = tmp.file("run_b");
  TrainResult b = cmd_train(cfg);

  REQUIRE(a.epochs.size() == b.epochs.size());
  CHECK(a.epochs[0].recon == b.epochs[0].recon);
  CHECK(a.epochs[0].kl == b.epochs[0].kl);
  const std::string log_a = slurp(a.log_path);
  CHECK(log_a == slurp(b.log_path));
  CHECK(log_a.rfind("epoch,recon,kl,beta_effective,active_units\n", 0) == 0);

  SUBCASE("rerunning from the echoed config is identical") {
    std::ifstream in(tmp.file("run_a") + "/config.json");
    nlohmann::json j;
    in >> j;
    RunConfig echoed = RunConfig::from_json(j);
    echoed.out_dir = tmp.file("run_c");
    TrainResult c = cmd_train(echoed);
    CHECK(slurp(c.log_path) == log_a);
  }
}

TEST_CASE("vanilla and split twins differ only in head parameter blocks") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("split"));
  cfg.epochs = 1;
  TrainResult split_result = cmd_train(cfg);
  cfg.model_kind = "vanilla";
  cfg.out_dir = tmp.file("vanilla");
  TrainResult vanilla_result = cmd_train(cfg);

  CheckpointData split_ckpt = load_checkpoint(split_result.checkpoint_last);
  CheckpointData vanilla_ckpt = load_checkpoint(vanilla_result.checkpoint_last);
  REQUIRE(split_ckpt.params.size() == vanilla_ckpt.params.size());
  for (const auto& [name, block] : split_ckpt.params) {
    REQUIRE(vanilla_ckpt.params.count(name) == 1);
    if (name.rfind("head/", 0) == 0) {
      CHECK(block.shape != vanilla_ckpt.params.at(name).shape);
    } else {
      CHECK(block.shape == vanilla_ckpt.params.at(name).shape);
    }
  }
}

TEST_CASE("a second run cannot claim a locked output directory") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("run"));
  fs::create_directories(cfg.out_dir);
  std::ofstream(cfg.out_dir + "/.lock") << "";
  CHECK_THROWS_WITH_AS(cmd_train(cfg), doctest::Contains("locked"), std::runtime_error);
}

TEST_CASE("SVLAB_OUT_ROOT prefixes relative output directories") {
  RunConfig cfg = tiny_run("rel/dir");
  ::setenv("SVLAB_OUT_ROOT", "/tmp/svlab_root", 1);
  CHECK(cfg.resolved_out_dir() == "/tmp/svlab_root/rel/dir");
  ::unsetenv("SVLAB_OUT_ROOT");
  CHECK(cfg.resolved_out_dir() == "rel/dir");
  cfg.out_dir = "/abs/dir";
  ::setenv("SVLAB_OUT_ROOT", "/tmp/svlab_root", 1);
  CHECK(cfg.resolved_out_dir() == "/abs/dir");
  ::unsetenv("SVLAB_OUT_ROOT");
}

TEST_CASE("generate command") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("run"));
  cfg.epochs = 1;
  TrainResult trained = cmd_train(cfg);

  SUBCASE("prior sampler produces the requested count") {
    GenerateOptions options;
    options.count = 100;
    options.seed = 4;
    GenerationResult result = cmd_generate(trained.checkpoint_last, options);
    CHECK(result.images.dim(0) == 100);
  }
  SUBCASE("split checkpoints write a sigma grid, vanilla ones do not") {
    GenerateOptions options;
    options.count = 6;
    options.grid_path = tmp.file("split_grid.png");
    cmd_generate(trained.checkpoint_last, options);
    CHECK(fs::exists(tmp.file("split_grid.png")));
    CHECK(fs::exists(tmp.file("split_grid_sigma.png")));

    RunConfig vcfg = tiny_run(tmp.file("vrun"));
    vcfg.epochs = 1;
    vcfg.model_kind = "vanilla";
    TrainResult vtrained = cmd_train(vcfg);
    options.grid_path = tmp.file("vanilla_grid.png");
    cmd_generate(vtrained.checkpoint_last, options);
    CHECK(fs::exists(tmp.file("vanilla_grid.png")));
    CHECK_FALSE(fs::exists(tmp.file("vanilla_grid_sigma.png")));
  }
  SUBCASE("gmm sampler requires a fitted mixture section") {
    GenerateOptions options;
    options.sampler = "gmm";
    CHECK_THROWS_WITH_AS(cmd_generate(trained.checkpoint_last, options),
                         doctest::Contains("mixture"), std::invalid_argument);
  }
  SUBCASE("same seed, same images") {
    GenerateOptions options;
    options.count = 8;
    options.seed = 11;
    GenerationResult a = cmd_generate(trained.checkpoint_last, options);
    GenerationResult b = cmd_generate(trained.checkpoint_last, options);
    CHECK(a.images.values() == b.images.values());
  }
}

TEST_CASE("fit-gmm command") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("run"));
  cfg.epochs = 1;
  TrainResult trained = cmd_train(cfg);

  SUBCASE("refitting with the same seed reproduces the mixture") {
    GaussianMixture a = cmd_fit_gmm(trained.checkpoint_last, cfg);
    GaussianMixture b = cmd_fit_gmm(trained.checkpoint_last, cfg);
    CHECK((a.means - b.means).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
    CheckpointData data = load_checkpoint(trained.checkpoint_last);
    REQUIRE(data.mixture.has_value());
    CHECK(data.mixture->n_components() == cfg.gmm_components);
  }
  SUBCASE("component counts 20 and 100 are accepted") {
    for (int components : {20, 100}) {
      cfg.gmm_components = components;
      cfg.gmm_max_iters = 5;
      GaussianMixture gmm = cmd_fit_gmm(trained.checkpoint_last, cfg);
      CHECK(gmm.n_components() == components);
    }
  }
  SUBCASE("component count above the dataset size is rejected") {
    cfg.gmm_components = 1000;
    CHECK_THROWS_AS(cmd_fit_gmm(trained.checkpoint_last, cfg), std::invalid_argument);
  }
  SUBCASE("a mixture of foreign dimension is rejected at generation") {
    CheckpointData data = load_checkpoint(trained.checkpoint_last);
    GaussianMixture wrong;
    wrong.weights = Eigen::VectorXd::Ones(1);
    wrong.means = Eigen::MatrixXd::Zero(1, 3);  // latent_dim is 6
    wrong.covariances = {Eigen::MatrixXd::Identity(3, 3)};
    data.mixture = wrong;
    const std::string path = tmp.file("wrong_gmm.ckpt");
    save_checkpoint(data, path);
    GenerateOptions options;
    options.sampler = "gmm";
    CHECK_THROWS_WITH_AS(cmd_generate(path, options), doctest::Contains("dimension"),
                         std::invalid_argument);
  }
}

TEST_CASE("encode command writes the latent matrix") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("run"));
  cfg.epochs = 1;
  TrainResult trained = cmd_train(cfg);
  const std::string out = tmp.file("codes.svmat");
  cmd_encode(trained.checkpoint_last, cfg, out);
  Eigen::MatrixXd codes = load_matrix(out);
  CHECK(codes.rows() == 128);
  CHECK(codes.cols() == 6);
}

TEST_CASE("eval-fid command") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("run"));
  cfg.epochs = 1;
  TrainResult trained = cmd_train(cfg);

  SUBCASE("a dataset against itself scores zero") {
    FidReport report = eval_fid_datasets(cfg.dataset, cfg.dataset, cfg, "");
    CHECK(std::abs(report.fid) < 1e-6);
  }
  SUBCASE("split checkpoints emit the four scores") {
    FidScores scores = eval_fid_model(trained.checkpoint_last, cfg, "prior", 80,
                                      tmp.file("reports"));
    REQUIRE(scores.by_variant.count("xhat") == 1);
    REQUIRE(scores.by_variant.count("x1") == 1);
    REQUIRE(scores.by_variant.count("x2") == 1);
    REQUIRE(scores.by_variant.count("mix") == 1);
    for (const auto& [variant, fid] : scores.by_variant) {
      CHECK(std::isfinite(fid));
      CHECK(fid >= 0.0);
    }
    CHECK(fs::exists(tmp.file("reports") + "/fid_xhat.json"));
    CHECK(fs::exists(tmp.file("reports") + "/fid_mix.json"));
  }
  SUBCASE("vanilla checkpoints emit only the composed score") {
    RunConfig vcfg = tiny_run(tmp.file("vrun"));
    vcfg.epochs = 1;
    vcfg.model_kind = "vanilla";
    TrainResult vtrained = cmd_train(vcfg);
    FidScores scores = eval_fid_model(vtrained.checkpoint_last, vcfg, "prior", 80, "");
    CHECK(scores.by_variant.size() == 1);
    CHECK(scores.by_variant.count("xhat") == 1);
  }
  SUBCASE("feature-file mode round-trips through the matrix format") {
    Eigen::MatrixXd f(40, 4);
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 4; ++j) f(i, j) = 0.1 * i + j;
    save_matrix(f, tmp.file("a.svmat"));
    save_matrix(f, tmp.file("b.svmat"));
    FidReport report =
        eval_fid_features(tmp.file("a.svmat"), tmp.file("b.svmat"), tmp.file("r.json"));
    CHECK(std::abs(report.fid) < 1e-6);
    CHECK(fs::exists(tmp.file("r.json")));
  }
}

TEST_CASE("ablate command") {
  TempDir tmp;
  RunConfig cfg = tiny_run(tmp.file("abl"));
  cfg.dataset.count = 96;
  cfg.epochs = 1;
  AblateOptions options;
  options.trials = 2;
  options.fid_eval_count = 64;

  std::vector<AblateRow> rows = cmd_ablate(cfg, options);

  // 2 trials x (1 vanilla + 3 split) + mean/std per variant
  int trial_rows = 0, aggregate_rows = 0;
  for (const AblateRow& row : rows) {
    if (row.trial == "mean" || row.trial == "std") {
      ++aggregate_rows;
    } else {
      ++trial_rows;
      CHECK(std::isfinite(row.fid));
    }
  }
  CHECK(trial_rows == 2 * 4);
  CHECK(aggregate_rows == 2 * 4);

  const std::string csv = slurp(tmp.file("abl") + "/ablate.csv");
  CHECK(csv.rfind("epoch,trial,variant,fid,active_units\n", 0) == 0);
  CHECK(csv.find("vanilla_xhat") != std::string::npos);
  CHECK(csv.find("split_x1") != std::string::npos);

  SUBCASE("trial seeds derive from the base seed deterministically") {
    RunConfig cfg2 = cfg;
    cfg2.out_dir = tmp.file("abl2");
    std::vector<AblateRow> rows2 = cmd_ablate(cfg2, options);
    REQUIRE(rows2.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows2[i].fid == rows[i].fid);
      CHECK(rows2[i].variant == rows[i].variant);
    }
  }
}
