// Run configuration and the command implementations behind the CLI:
// train, generate, fit-gmm, eval-fid, encode, ablate. Every command is
// reproducible from (config, seed): component streams are derived by hashing
// the base seed with a component label, and logs carry no timestamps.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "svlab/checkpoint.hpp"
#include "svlab/dataset.hpp"
#include "svlab/fid.hpp"
#include "svlab/gmm.hpp"
#include "svlab/loss.hpp"
#include "svlab/vae.hpp"

namespace svlab {

struct DatasetCfg {
  std::string kind = "synth-shapes";  // synth-shapes|synth-two-gaussians|idx|cifar10|raw-dir
  std::string path;
  std::string labels_path;
  size_t count = 2000;      // synthetic image count
  size_t size = 16;         // synthetic canvas extent
  uint64_t synth_seed = 9001;  // synthetic generator stream
  size_t raw_h = 0, raw_w = 0, raw_c = 1;
};

struct RunConfig {
  DatasetCfg dataset;

  std::string model_kind = "split";
  int latent_dim = 16;
  int base_dim = 16;
  int num_scales = 2;
  int blocks_per_scale = 1;
  int convs_per_block = 2;
  int dense_width = 128;
  int dec_base_dim = 0;  // 0 derives encoder base_dim * 2^num_scales
  std::string activation = "relu";

  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  double beta0 = 1.0;
  std::string beta_mode = "balanced";
  double ema_decay = 0.99;
  int save_interval = 10;
  std::string precision = "f32";

  int gmm_components = 10;
  int gmm_max_iters = 200;
  double gmm_tol = 1e-4;
  std::string gmm_covariance = "full";

  std::string fid_extractor = "pca";  // identity|pca|random_conv
  int fid_dims = 64;
  int fid_samples = 10000;

  uint64_t seed = 1234;
  std::string out_dir = "runs/out";

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  // Resolved output directory (SVLAB_OUT_ROOT is prepended to relative paths).
  std::string resolved_out_dir() const;
  VaeConfig model_config(const Dataset& dataset) const;
  BetaSchedule beta_schedule() const;
  GmmFitOptions gmm_options() const;
  FeatureExtractor fid_feature_extractor() const;
};

Dataset load_dataset(const DatasetCfg& cfg);

struct EpochStats {
  int epoch = 0;
  double recon = 0.0;
  double kl = 0.0;
  double beta_effective = 0.0;
  int active_units = 0;
  std::vector<double> kl_per_unit;
};

struct TrainResult {
  std::string checkpoint_last;
  std::string checkpoint_best;
  std::string log_path;
  std::vector<EpochStats> epochs;
};

using EpochHook =
    std::function<void(const EpochStats&, VaeModel&, const Dataset&)>;

TrainResult cmd_train(const RunConfig& cfg, const EpochHook& hook = {});

// Encoder means over the dataset (eval mode), one row per image.
Eigen::MatrixXd encode_dataset(VaeModel& model, const Dataset& dataset, int batch_size = 256);
// Dataset-averaged per-unit KL of the encoder posteriors.
std::vector<double> dataset_per_unit_kl(VaeModel& model, const Dataset& dataset,
                                        int batch_size = 256);

struct GenerateOptions {
  std::string sampler = "prior";  // prior|gmm
  int count = 25;
  uint64_t seed = 0;
  std::string grid_path;  // main grid file; split models add <stem>_sigma<ext>
};

GenerationResult cmd_generate(const std::string& checkpoint_path, const GenerateOptions& options);

// Encodes the configured dataset, fits the mixture, and embeds it into the
// checkpoint (rewritten in place).
GaussianMixture cmd_fit_gmm(const std::string& checkpoint_path, const RunConfig& cfg);

void cmd_encode(const std::string& checkpoint_path, const RunConfig& cfg,
                const std::string& matrix_path);

struct FidScores {
  std::map<std::string, double> by_variant;  // xhat / x1 / x2 / mix
};

// Generated-vs-real evaluation; split checkpoints yield the four scores.
FidScores eval_fid_model(const std::string& checkpoint_path, const RunConfig& cfg,
                         const std::string& sampler, int count, const std::string& report_dir);
// Two feature files through the distance directly.
FidReport eval_fid_features(const std::string& path_a, const std::string& path_b,
                            const std::string& report_path);
// Two image sets through the configured extractor.
FidReport eval_fid_datasets(const DatasetCfg& a, const DatasetCfg& b, const RunConfig& cfg,
                            const std::string& report_path);

struct AblateOptions {
  int trials = 3;
  int eval_interval = 0;    // 0: evaluate only after the final epoch
  int fid_eval_count = 1000;
  bool shared_init = true;  // twins share trunk initialization per trial
};

struct AblateRow {
  int epoch = 0;
  std::string trial;  // index, or "mean"/"std" aggregate rows
  std::string variant;
  double fid = 0.0;
  double active_units = 0.0;
};

std::vector<AblateRow> cmd_ablate(const RunConfig& cfg, const AblateOptions& options);

}  // namespace svlab
