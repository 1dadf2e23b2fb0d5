// svlab: train vanilla and split VAEs at desk scale, resample latents with a
// fitted Gaussian mixture, and score generated sets with the Frechet
// distance.
#include <exception>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "svlab/harness.hpp"

namespace {

using svlab::RunConfig;

// Config file first, then explicitly passed flags on top.
struct ConfigCli {
  std::string config_path;
  RunConfig cfg;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");

    cmd->add_option("--dataset", cfg.dataset.kind,
                    "dataset kind: synth-shapes|synth-two-gaussians|idx|cifar10|raw-dir");
    cmd->add_option("--data-path", cfg.dataset.path, "dataset file or directory");
    cmd->add_option("--labels-path", cfg.dataset.labels_path, "IDX labels file");
    cmd->add_option("--data-count", cfg.dataset.count, "synthetic image count");
    cmd->add_option("--data-size", cfg.dataset.size, "synthetic canvas extent");
    cmd->add_option("--synth-seed", cfg.dataset.synth_seed, "synthetic generator seed");
    cmd->add_option("--raw-h", cfg.dataset.raw_h, "raw-dir image height");
    cmd->add_option("--raw-w", cfg.dataset.raw_w, "raw-dir image width");
    cmd->add_option("--raw-c", cfg.dataset.raw_c, "raw-dir channel count");

    cmd->add_option("--model-kind", cfg.model_kind, "vanilla|split");
    cmd->add_option("--latent-dim", cfg.latent_dim, "latent dimension k");
    cmd->add_option("--base-dim", cfg.base_dim, "encoder channels at the first scale");
    cmd->add_option("--num-scales", cfg.num_scales, "downsample count");
    cmd->add_option("--blocks-per-scale", cfg.blocks_per_scale, "residual blocks per scale");
    cmd->add_option("--convs-per-block", cfg.convs_per_block, "convolutions per residual block");
    cmd->add_option("--dense-width", cfg.dense_width, "dense block hidden width");
    cmd->add_option("--dec-base-dim", cfg.dec_base_dim, "decoder 4x4 seed channels (0: derived)");
    cmd->add_option("--activation", cfg.activation, "relu|leaky_relu");

    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--batch-size", cfg.batch_size, "batch size");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--beta0", cfg.beta0, "initial beta");
    cmd->add_option("--beta-mode", cfg.beta_mode, "fixed|balanced");
    cmd->add_option("--ema-decay", cfg.ema_decay, "balanced-schedule EMA decay");
    cmd->add_option("--save-interval", cfg.save_interval, "checkpoint every N epochs");
    cmd->add_option("--precision", cfg.precision, "f32|f64");

    cmd->add_option("--gmm-components", cfg.gmm_components, "mixture component count");
    cmd->add_option("--gmm-max-iters", cfg.gmm_max_iters, "EM iteration cap");
    cmd->add_option("--gmm-tol", cfg.gmm_tol, "EM convergence tolerance");
    cmd->add_option("--gmm-covariance", cfg.gmm_covariance, "full|diagonal");

    cmd->add_option("--fid-extractor", cfg.fid_extractor, "identity|pca|random_conv");
    cmd->add_option("--fid-dims", cfg.fid_dims, "feature dimension");
    cmd->add_option("--fid-samples", cfg.fid_samples, "samples per FID evaluation");

    cmd->add_option("--seed", cfg.seed, "base seed");
    cmd->add_option("--out-dir", cfg.out_dir, "output directory");
  }

  RunConfig resolve(CLI::App* cmd) {
    RunConfig resolved;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw CLI::ValidationError("--config", "cannot open " + config_path);
      nlohmann::json j;
      in >> j;
      resolved = RunConfig::from_json(j);
    }
    // Flags win over the file: re-run the CLI assignments on top.
    RunConfig flag_values = cfg;
    RunConfig defaults;
    auto take = [&](const std::string& flag, auto member) {
      if (cmd->count(flag) > 0) resolved.*member = flag_values.*member;
      (void)defaults;
    };
    auto take_ds = [&](const std::string& flag, auto member) {
      if (cmd->count(flag) > 0) resolved.dataset.*member = flag_values.dataset.*member;
    };
    take_ds("--dataset", &svlab::DatasetCfg::kind);
    take_ds("--data-path", &svlab::DatasetCfg::path);
    take_ds("--labels-path", &svlab::DatasetCfg::labels_path);
    take_ds("--data-count", &svlab::DatasetCfg::count);
    take_ds("--data-size", &svlab::DatasetCfg::size);
    take_ds("--synth-seed", &svlab::DatasetCfg::synth_seed);
    take_ds("--raw-h", &svlab::DatasetCfg::raw_h);
    take_ds("--raw-w", &svlab::DatasetCfg::raw_w);
    take_ds("--raw-c", &svlab::DatasetCfg::raw_c);
    take("--model-kind", &RunConfig::model_kind);
    take("--latent-dim", &RunConfig::latent_dim);
    take("--base-dim", &RunConfig::base_dim);
    take("--num-scales", &RunConfig::num_scales);
    take("--blocks-per-scale", &RunConfig::blocks_per_scale);
    take("--convs-per-block", &RunConfig::convs_per_block);
    take("--dense-width", &RunConfig::dense_width);
    take("--dec-base-dim", &RunConfig::dec_base_dim);
    take("--activation", &RunConfig::activation);
    take("--epochs", &RunConfig::epochs);
    take("--batch-size", &RunConfig::batch_size);
    take("--lr", &RunConfig::lr);
    take("--beta0", &RunConfig::beta0);
    take("--beta-mode", &RunConfig::beta_mode);
    take("--ema-decay", &RunConfig::ema_decay);
    take("--save-interval", &RunConfig::save_interval);
    take("--precision", &RunConfig::precision);
    take("--gmm-components", &RunConfig::gmm_components);
    take("--gmm-max-iters", &RunConfig::gmm_max_iters);
    take("--gmm-tol", &RunConfig::gmm_tol);
    take("--gmm-covariance", &RunConfig::gmm_covariance);
    take("--fid-extractor", &RunConfig::fid_extractor);
    take("--fid-dims", &RunConfig::fid_dims);
    take("--fid-samples", &RunConfig::fid_samples);
    take("--seed", &RunConfig::seed);
    take("--out-dir", &RunConfig::out_dir);
    return resolved;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-VAE laboratory: training, generation, latent diagnostics, FID"};
  app.require_subcommand(1);

  ConfigCli train_cfg, gmm_cfg, gen_unused, fid_cfg, encode_cfg, ablate_cfg;

  auto* train = app.add_subcommand("train", "train a model and write checkpoints + CSV log");
  train_cfg.attach(train);

  auto* gen = app.add_subcommand("generate", "decode samples from a checkpoint into image grids");
  std::string gen_checkpoint, gen_sampler = "prior", gen_grid = "samples.png";
  int gen_count = 25;
  uint64_t gen_seed = 0;
  gen->add_option("--checkpoint", gen_checkpoint, "checkpoint file")->required();
  gen->add_option("--sampler", gen_sampler, "prior|gmm");
  gen->add_option("--count", gen_count, "sample count");
  gen->add_option("--gen-seed", gen_seed, "generation seed");
  gen->add_option("--grid-out", gen_grid, "grid image path (.png/.ppm)");

  auto* fitgmm = app.add_subcommand("fit-gmm", "fit a latent mixture and embed it in the checkpoint");
  std::string fitgmm_checkpoint;
  fitgmm->add_option("--checkpoint", fitgmm_checkpoint, "checkpoint file")->required();
  gmm_cfg.attach(fitgmm);

  auto* evalfid = app.add_subcommand("eval-fid", "Frechet distance between two sets");
  std::string fid_checkpoint, fid_sampler = "prior", fid_features_a, fid_features_b,
              fid_set_b_kind, fid_set_b_path, fid_report = "fid_report";
  int fid_count = 0;
  evalfid->add_option("--checkpoint", fid_checkpoint, "generated side: checkpoint file");
  evalfid->add_option("--sampler", fid_sampler, "prior|gmm (checkpoint mode)");
  evalfid->add_option("--features-a", fid_features_a, "feature matrix file, side A");
  evalfid->add_option("--features-b", fid_features_b, "feature matrix file, side B");
  evalfid->add_option("--set-b", fid_set_b_kind, "dataset kind for side B (dataset mode)");
  evalfid->add_option("--set-b-path", fid_set_b_path, "dataset path for side B");
  evalfid->add_option("--count", fid_count, "override fid sample count");
  evalfid->add_option("--report-out", fid_report, "report file or directory");
  fid_cfg.attach(evalfid);

  auto* encode = app.add_subcommand("encode", "write encoder means as a matrix file");
  std::string encode_checkpoint, encode_out = "latents.svmat";
  encode->add_option("--checkpoint", encode_checkpoint, "checkpoint file")->required();
  encode->add_option("--matrix-out", encode_out, "output matrix file");
  encode_cfg.attach(encode);

  auto* ablate = app.add_subcommand("ablate", "vanilla-vs-split twin comparison over trials");
  svlab::AblateOptions ablate_opts;
  ablate->add_option("--trials", ablate_opts.trials, "independent trainings per variant");
  ablate->add_option("--eval-interval", ablate_opts.eval_interval,
                     "evaluate FID every N epochs (0: final only)");
  ablate->add_option("--fid-eval-count", ablate_opts.fid_eval_count, "samples per epoch FID");
  ablate->add_flag("--shared-init,!--no-shared-init", ablate_opts.shared_init,
                   "twins share trunk initialization");
  ablate_cfg.attach(ablate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      RunConfig cfg = train_cfg.resolve(train);
      svlab::TrainResult result = svlab::cmd_train(cfg);
      std::cout << "log: " << result.log_path << "\n"
                << "last checkpoint: " << result.checkpoint_last << "\n"
                << "best checkpoint: " << result.checkpoint_best << "\n";
      if (!result.epochs.empty()) {
        const auto& last = result.epochs.back();
        std::cout << "final epoch " << last.epoch << ": recon " << last.recon << ", kl "
                  << last.kl << ", beta " << last.beta_effective << ", active units "
                  << last.active_units << "\n";
      }
    } else if (gen->parsed()) {
      svlab::GenerateOptions options;
      options.sampler = gen_sampler;
      options.count = gen_count;
      options.seed = gen_seed;
      options.grid_path = gen_grid;
      svlab::GenerationResult result = svlab::cmd_generate(gen_checkpoint, options);
      std::cout << "generated " << result.images.dim(0) << " images -> " << gen_grid << "\n";
      if (result.split) std::cout << "sigma/x1/x2 rows included (split model)\n";
    } else if (fitgmm->parsed()) {
      RunConfig cfg = gmm_cfg.resolve(fitgmm);
      svlab::GaussianMixture gmm = svlab::cmd_fit_gmm(fitgmm_checkpoint, cfg);
      std::cout << "fitted " << gmm.n_components() << "-component mixture over "
                << gmm.dims() << " latent dims; embedded into " << fitgmm_checkpoint << "\n";
    } else if (evalfid->parsed()) {
      RunConfig cfg = fid_cfg.resolve(evalfid);
      if (!fid_features_a.empty() || !fid_features_b.empty()) {
        if (fid_features_a.empty() || fid_features_b.empty()) {
          throw std::invalid_argument("feature mode needs both --features-a and --features-b");
        }
        svlab::FidReport report =
            svlab::eval_fid_features(fid_features_a, fid_features_b, fid_report);
        std::cout << "fid " << report.fid << " (mean term " << report.mean_term
                  << ", trace term " << report.trace_term << ")\n";
      } else if (!fid_checkpoint.empty()) {
        const int count = fid_count > 0 ? fid_count : cfg.fid_samples;
        svlab::FidScores scores =
            svlab::eval_fid_model(fid_checkpoint, cfg, fid_sampler, count, fid_report);
        for (const auto& [variant, fid] : scores.by_variant) {
          std::cout << "fid[" << variant << "] = " << fid << "\n";
        }
      } else if (!fid_set_b_kind.empty()) {
        svlab::DatasetCfg b = cfg.dataset;
        b.kind = fid_set_b_kind;
        b.path = fid_set_b_path;
        svlab::FidReport report = svlab::eval_fid_datasets(cfg.dataset, b, cfg, fid_report);
        std::cout << "fid " << report.fid << "\n";
      } else {
        throw std::invalid_argument(
            "eval-fid needs --checkpoint, --features-a/--features-b, or --set-b");
      }
    } else if (encode->parsed()) {
      RunConfig cfg = encode_cfg.resolve(encode);
      svlab::cmd_encode(encode_checkpoint, cfg, encode_out);
      std::cout << "latent codes -> " << encode_out << "\n";
    } else if (ablate->parsed()) {
      RunConfig cfg = ablate_cfg.resolve(ablate);
      std::vector<svlab::AblateRow> rows = svlab::cmd_ablate(cfg, ablate_opts);
      std::cout << "ablation rows: " << rows.size() << " -> "
                << cfg.resolved_out_dir() << "/ablate.csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
