#include "svlab/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "svlab/image_io.hpp"
#include "svlab/matrix_io.hpp"
#include "svlab/optimizer.hpp"
#include "svlab/rng.hpp"
#include "svlab/tape.hpp"

namespace svlab {

namespace fs = std::filesystem;

namespace {

// One training run per output directory.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw std::runtime_error("output directory " + dir +
                               " is locked by another run (remove .lock if stale)");
    }
    ::close(fd);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Precision precision_from_name(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32|f64)");
}

void require_positive(const char* field, double value) {
  if (!(value > 0.0)) {
    throw std::invalid_argument(std::string("config: ") + field + " must be positive");
  }
}

std::string grid_sigma_path(const std::string& grid_path) {
  const fs::path p(grid_path);
  fs::path out = p.parent_path() / (p.stem().string() + "_sigma" + p.extension().string());
  return out.string();
}

Tensor concat_batches(const std::vector<Tensor>& parts) {
  size_t total = 0;
  for (const Tensor& t : parts) total += t.dim(0);
  Shape shape = parts.front().shape();
  const size_t stride = parts.front().size() / parts.front().dim(0);
  shape[0] = total;
  std::vector<double> values;
  values.reserve(total * stride);
  for (const Tensor& t : parts) {
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor::from_values(std::move(shape), std::move(values));
}

// Decode latents in bounded chunks so large sample counts stay in memory.
GenerationResult decode_latents(VaeModel& model, const Tensor& z, int chunk = 128) {
  const size_t n = z.dim(0);
  const size_t k = z.dim(1);
  std::vector<Tensor> images, sigmas, x1s, x2s;
  const bool split = model.config().kind == ModelKind::split;
  for (size_t at = 0; at < n; at += static_cast<size_t>(chunk)) {
    const size_t len = std::min<size_t>(chunk, n - at);
    std::vector<double> part(len * k);
    std::copy(z.values().begin() + at * k, z.values().begin() + (at + len) * k, part.begin());
    ModelOutput out = model.decode(Tensor::from_values({len, k}, std::move(part)), false);
    images.push_back(out.composed);
    if (split) {
      sigmas.push_back(out.split->sigma_map);
      x1s.push_back(out.split->x1);
      x2s.push_back(out.split->x2);
    }
  }
  GenerationResult result;
  result.latents = z;
  result.images = concat_batches(images);
  if (split) {
    SplitOutput stacks;
    stacks.sigma_map = concat_batches(sigmas);
    stacks.x1 = concat_batches(x1s);
    stacks.x2 = concat_batches(x2s);
    stacks.composed = result.images;
    result.split = std::move(stacks);
  }
  return result;
}

}  // namespace

void RunConfig::validate() const {
  if (model_kind != "vanilla" && model_kind != "split") {
    throw std::invalid_argument("config: model_kind must be vanilla|split");
  }
  require_positive("latent_dim", latent_dim);
  require_positive("base_dim", base_dim);
  if (num_scales < 0) throw std::invalid_argument("config: num_scales must be >= 0");
  require_positive("blocks_per_scale", blocks_per_scale);
  require_positive("convs_per_block", convs_per_block);
  require_positive("dense_width", dense_width);
  require_positive("epochs", epochs);
  if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
  require_positive("lr", lr);
  if (beta0 < 0.0) throw std::invalid_argument("config: beta0 must be >= 0");
  if (beta_mode != "fixed" && beta_mode != "balanced") {
    throw std::invalid_argument("config: beta_mode must be fixed|balanced");
  }
  if (ema_decay < 0.0 || ema_decay >= 1.0) {
    throw std::invalid_argument("config: ema_decay must be in [0,1)");
  }
  require_positive("save_interval", save_interval);
  require_positive("gmm_components", gmm_components);
  require_positive("gmm_max_iters", gmm_max_iters);
  require_positive("gmm_tol", gmm_tol);
  if (gmm_covariance != "full" && gmm_covariance != "diagonal") {
    throw std::invalid_argument("config: gmm_covariance must be full|diagonal");
  }
  if (fid_extractor != "identity" && fid_extractor != "pca" && fid_extractor != "random_conv") {
    throw std::invalid_argument("config: fid_extractor must be identity|pca|random_conv");
  }
  require_positive("fid_dims", fid_dims);
  require_positive("fid_samples", fid_samples);
  precision_from_name(precision);
  activation_from_name(activation);
  if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be set");
}

nlohmann::json RunConfig::to_json() const {
  return {{"dataset",
           {{"kind", dataset.kind},
            {"path", dataset.path},
            {"labels_path", dataset.labels_path},
            {"count", dataset.count},
            {"size", dataset.size},
            {"synth_seed", dataset.synth_seed},
            {"raw_h", dataset.raw_h},
            {"raw_w", dataset.raw_w},
            {"raw_c", dataset.raw_c}}},
          {"model",
           {{"kind", model_kind},
            {"latent_dim", latent_dim},
            {"base_dim", base_dim},
            {"num_scales", num_scales},
            {"blocks_per_scale", blocks_per_scale},
            {"convs_per_block", convs_per_block},
            {"dense_width", dense_width},
            {"dec_base_dim", dec_base_dim},
            {"activation", activation}}},
          {"train",
           {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"beta0", beta0},
            {"beta_mode", beta_mode},
            {"ema_decay", ema_decay},
            {"save_interval", save_interval},
            {"precision", precision}}},
          {"gmm",
           {{"components", gmm_components},
            {"max_iters", gmm_max_iters},
            {"tol", gmm_tol},
            {"covariance", gmm_covariance}}},
          {"fid",
           {{"extractor", fid_extractor}, {"dims", fid_dims}, {"samples", fid_samples}}},
          {"seed", seed},
          {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset.kind = d.value("kind", cfg.dataset.kind);
    cfg.dataset.path = d.value("path", cfg.dataset.path);
    cfg.dataset.labels_path = d.value("labels_path", cfg.dataset.labels_path);
    cfg.dataset.count = d.value("count", cfg.dataset.count);
    cfg.dataset.size = d.value("size", cfg.dataset.size);
    cfg.dataset.synth_seed = d.value("synth_seed", cfg.dataset.synth_seed);
    cfg.dataset.raw_h = d.value("raw_h", cfg.dataset.raw_h);
    cfg.dataset.raw_w = d.value("raw_w", cfg.dataset.raw_w);
    cfg.dataset.raw_c = d.value("raw_c", cfg.dataset.raw_c);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model_kind = m.value("kind", cfg.model_kind);
    cfg.latent_dim = m.value("latent_dim", cfg.latent_dim);
    cfg.base_dim = m.value("base_dim", cfg.base_dim);
    cfg.num_scales = m.value("num_scales", cfg.num_scales);
    cfg.blocks_per_scale = m.value("blocks_per_scale", cfg.blocks_per_scale);
    cfg.convs_per_block = m.value("convs_per_block", cfg.convs_per_block);
    cfg.dense_width = m.value("dense_width", cfg.dense_width);
    cfg.dec_base_dim = m.value("dec_base_dim", cfg.dec_base_dim);
    cfg.activation = m.value("activation", cfg.activation);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.epochs = t.value("epochs", cfg.epochs);
    cfg.batch_size = t.value("batch_size", cfg.batch_size);
    cfg.lr = t.value("lr", cfg.lr);
    cfg.beta0 = t.value("beta0", cfg.beta0);
    cfg.beta_mode = t.value("beta_mode", cfg.beta_mode);
    cfg.ema_decay = t.value("ema_decay", cfg.ema_decay);
    cfg.save_interval = t.value("save_interval", cfg.save_interval);
    cfg.precision = t.value("precision", cfg.precision);
  }
  if (j.contains("gmm")) {
    const auto& g = j.at("gmm");
    cfg.gmm_components = g.value("components", cfg.gmm_components);
    cfg.gmm_max_iters = g.value("max_iters", cfg.gmm_max_iters);
    cfg.gmm_tol = g.value("tol", cfg.gmm_tol);
    cfg.gmm_covariance = g.value("covariance", cfg.gmm_covariance);
  }
  if (j.contains("fid")) {
    const auto& f = j.at("fid");
    cfg.fid_extractor = f.value("extractor", cfg.fid_extractor);
    cfg.fid_dims = f.value("dims", cfg.fid_dims);
    cfg.fid_samples = f.value("samples", cfg.fid_samples);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  return cfg;
}

std::string RunConfig::resolved_out_dir() const {
  const char* root = std::getenv("SVLAB_OUT_ROOT");
  fs::path p(out_dir);
  if (root != nullptr && *root != '\0' && p.is_relative()) {
    return (fs::path(root) / p).string();
  }
  return p.string();
}

VaeConfig RunConfig::model_config(const Dataset& ds) const {
  VaeConfig model;
  model.kind = model_kind_from_name(model_kind);
  model.image = {ds.h, ds.w, ds.c};
  model.latent_dim = latent_dim;
  model.encoder.base_dim = base_dim;
  model.encoder.num_scales = num_scales;
  model.encoder.dense_block_width = dense_width;
  model.encoder.scale_block.num_residual_blocks = blocks_per_scale;
  model.encoder.scale_block.block.num_convs = convs_per_block;
  model.encoder.scale_block.block.activation = activation_from_name(activation);
  model.decoder.base_dim = dec_base_dim;  // 0 resolves in finalize()
  model.decoder.scale_block = model.encoder.scale_block;
  model.finalize();
  return model;
}

BetaSchedule RunConfig::beta_schedule() const {
  BetaSchedule schedule;
  schedule.beta0 = beta0;
  schedule.mode = beta_mode == "fixed" ? BetaMode::fixed : BetaMode::balanced;
  schedule.ema_decay = ema_decay;
  return schedule;
}

GmmFitOptions RunConfig::gmm_options() const {
  GmmFitOptions options;
  options.max_iters = gmm_max_iters;
  options.tol = gmm_tol;
  options.kind = gmm_covariance == "diagonal" ? CovarianceKind::diagonal : CovarianceKind::full;
  return options;
}

FeatureExtractor RunConfig::fid_feature_extractor() const {
  if (fid_extractor == "identity") return FeatureExtractor::identity();
  if (fid_extractor == "random_conv") {
    return FeatureExtractor::random_conv(fid_dims, derive_seed(seed, "fid-extractor"));
  }
  return FeatureExtractor::pca(fid_dims);
}

Dataset load_dataset(const DatasetCfg& cfg) {
  if (cfg.kind == "synth-shapes" || cfg.kind == "synth-two-gaussians") {
    const SynthKind kind =
        cfg.kind == "synth-shapes" ? SynthKind::shapes : SynthKind::two_gaussians;
    return synth_dataset(kind, cfg.count, cfg.size, cfg.synth_seed);
  }
  if (cfg.kind == "idx") return load_idx(cfg.path, cfg.labels_path);
  if (cfg.kind == "cifar10") return load_cifar10(cfg.path);
  if (cfg.kind == "raw-dir") {
    if (cfg.raw_h == 0 || cfg.raw_w == 0 || cfg.raw_c == 0) {
      throw std::invalid_argument("raw-dir dataset needs raw_h/raw_w/raw_c");
    }
    return load_raw_dir(cfg.path, cfg.raw_h, cfg.raw_w, cfg.raw_c);
  }
  throw std::invalid_argument("unknown dataset kind '" + cfg.kind + "'");
}

namespace {

void write_log_header(std::ostream& out) {
  out << "epoch,recon,kl,beta_effective,active_units\n";
}

void write_log_row(std::ostream& out, const EpochStats& stats) {
  out << stats.epoch << ',' << std::setprecision(17) << stats.recon << ',' << stats.kl << ','
      << stats.beta_effective << ',' << stats.active_units << '\n';
}

CheckpointData snapshot(const VaeModel& model, const RunConfig& cfg, const Adam& adam,
                        const BetaSchedule& schedule, int epochs_completed) {
  CheckpointData data = make_checkpoint(model);
  CheckpointData::AdamState adam_state;
  adam_state.cfg = adam.config();
  adam_state.step_count = adam.step_count();
  adam_state.slots = adam.state();
  data.adam = std::move(adam_state);
  data.beta = schedule;
  data.meta = {{"base_seed", cfg.seed},
               {"epochs_completed", epochs_completed},
               {"run_config", cfg.to_json()}};
  return data;
}

}  // namespace

TrainResult cmd_train(const RunConfig& cfg, const EpochHook& hook) {
  cfg.validate();
  set_default_precision(precision_from_name(cfg.precision));

  Dataset dataset = load_dataset(cfg.dataset);
  const size_t divisor = static_cast<size_t>(1) << cfg.num_scales;
  if (dataset.h % divisor != 0 || dataset.w % divisor != 0) {
    throw std::invalid_argument("dataset extents " + std::to_string(dataset.h) + "x" +
                                std::to_string(dataset.w) + " are not divisible by 2^" +
                                std::to_string(cfg.num_scales));
  }
  if (dataset.count < static_cast<size_t>(cfg.batch_size)) {
    throw std::invalid_argument("dataset has fewer images than one batch");
  }

  const std::string out_dir = cfg.resolved_out_dir();
  fs::create_directories(out_dir);
  DirLock lock(out_dir);

  {
    std::ofstream echo(fs::path(out_dir) / "config.json");
    echo << cfg.to_json().dump(2) << "\n";
  }

  VaeModel model = VaeModel::build(cfg.model_config(dataset), derive_seed(cfg.seed, "model"));
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam adam(model.params(), adam_cfg);
  BetaSchedule schedule = cfg.beta_schedule();

  TrainResult result;
  result.log_path = (fs::path(out_dir) / "log.csv").string();
  result.checkpoint_last = (fs::path(out_dir) / "last.ckpt").string();
  result.checkpoint_best = (fs::path(out_dir) / "best.ckpt").string();
  std::ofstream log(result.log_path);
  write_log_header(log);

  const size_t k = static_cast<size_t>(cfg.latent_dim);
  double best_total = std::numeric_limits<double>::infinity();

  std::vector<size_t> order(dataset.count);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.next_below(i + 1)]);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.kl_per_unit.assign(k, 0.0);
    size_t batches = 0;

    for (size_t at = 0; at + 1 < dataset.count; at += cfg.batch_size) {
      const size_t len = std::min<size_t>(cfg.batch_size, dataset.count - at);
      if (len < 2) break;  // batch statistics need at least two samples
      std::vector<size_t> idx(order.begin() + at, order.begin() + at + len);
      Tensor x = dataset.batch(idx);

      Rng noise_rng(derive_seed(cfg.seed, "noise",
                                static_cast<uint64_t>(epoch) * 1000000 + batches));
      std::vector<double> noise(len * k);
      for (double& v : noise) v = noise_rng.next_normal();
      round_buffer_to_precision(noise);
      Tensor eps = Tensor::from_values({len, k}, std::move(noise));

      Tape tape;
      LossBreakdown breakdown;
      {
        TapeScope scope(tape);
        auto fwd = model.forward(x, eps, /*training=*/true);
        breakdown = total_loss(x, fwd.out, fwd.latent, schedule);
        adam.zero_grad();
        tape.backward(breakdown.total_tensor);
      }
      adam.step();

      stats.recon += breakdown.recon;
      stats.kl += breakdown.kl;
      stats.beta_effective = breakdown.beta_effective;
      for (size_t j = 0; j < k; ++j) stats.kl_per_unit[j] += breakdown.kl_per_unit[j];
      ++batches;
    }

    stats.recon /= static_cast<double>(batches);
    stats.kl /= static_cast<double>(batches);
    for (double& v : stats.kl_per_unit) v /= static_cast<double>(batches);
    stats.active_units = active_units(stats.kl_per_unit).count_active;
    write_log_row(log, stats);
    log.flush();
    result.epochs.push_back(stats);

    const double epoch_total = stats.recon + stats.beta_effective * stats.kl;
    if (epoch_total < best_total) {
      best_total = epoch_total;
      save_checkpoint(snapshot(model, cfg, adam, schedule, epoch), result.checkpoint_best);
    }
    if (epoch % cfg.save_interval == 0 || epoch == cfg.epochs) {
      save_checkpoint(snapshot(model, cfg, adam, schedule, epoch), result.checkpoint_last);
    }
    if (hook) hook(stats, model, dataset);
  }
  return result;
}

Eigen::MatrixXd encode_dataset(VaeModel& model, const Dataset& dataset, int batch_size) {
  const int k = model.config().latent_dim;
  Eigen::MatrixXd codes(static_cast<Eigen::Index>(dataset.count), k);
  std::vector<size_t> idx;
  for (size_t at = 0; at < dataset.count; at += batch_size) {
    const size_t len = std::min<size_t>(batch_size, dataset.count - at);
    idx.resize(len);
    std::iota(idx.begin(), idx.end(), at);
    LatentParams latent = model.encode(dataset.batch(idx), /*training=*/false);
    for (size_t i = 0; i < len; ++i) {
      for (int j = 0; j < k; ++j) {
        codes(static_cast<Eigen::Index>(at + i), j) =
            latent.mu.at({i, static_cast<size_t>(j)});
      }
    }
  }
  return codes;
}

std::vector<double> dataset_per_unit_kl(VaeModel& model, const Dataset& dataset, int batch_size) {
  const size_t k = static_cast<size_t>(model.config().latent_dim);
  std::vector<double> acc(k, 0.0);
  std::vector<size_t> idx;
  for (size_t at = 0; at < dataset.count; at += batch_size) {
    const size_t len = std::min<size_t>(batch_size, dataset.count - at);
    idx.resize(len);
    std::iota(idx.begin(), idx.end(), at);
    LatentParams latent = model.encode(dataset.batch(idx), /*training=*/false);
    for (size_t i = 0; i < len; ++i) {
      for (size_t j = 0; j < k; ++j) {
        const double mu = latent.mu.at({i, j});
        const double logvar = latent.logvar.at({i, j});
        acc[j] += 0.5 * (mu * mu + std::exp(logvar) - logvar - 1.0);
      }
    }
  }
  for (double& v : acc) v /= static_cast<double>(dataset.count);
  return acc;
}

GenerationResult cmd_generate(const std::string& checkpoint_path, const GenerateOptions& options) {
  set_default_precision(Precision::f64);
  CheckpointData data = load_checkpoint(checkpoint_path);
  VaeModel model = model_from_checkpoint(data);

  GenerationConfig gen;
  gen.count = options.count;
  gen.seed = options.seed;
  const GaussianMixture* mixture = nullptr;
  if (options.sampler == "gmm") {
    gen.sampler = SamplerKind::gmm;
    if (!data.mixture) {
      throw std::invalid_argument("checkpoint has no mixture section; run fit-gmm first");
    }
    mixture = &*data.mixture;
  } else if (options.sampler != "prior") {
    throw std::invalid_argument("unknown sampler '" + options.sampler + "' (prior|gmm)");
  }

  // Draw all latents, then decode in chunks.
  const int k = model.config().latent_dim;
  std::vector<double> zs(static_cast<size_t>(gen.count) * k);
  if (gen.sampler == SamplerKind::gmm) {
    if (mixture->dims() != k) {
      throw std::invalid_argument("mixture dimension does not match checkpoint latent_dim");
    }
    Eigen::MatrixXd draws = sample_gmm(*mixture, gen.count, derive_seed(gen.seed, "generate"));
    for (int i = 0; i < gen.count; ++i)
      for (int j = 0; j < k; ++j) zs[static_cast<size_t>(i) * k + j] = draws(i, j);
  } else {
    Rng rng(derive_seed(gen.seed, "generate"));
    for (double& v : zs) v = rng.next_normal();
  }
  GenerationResult result = decode_latents(
      model, Tensor::from_values({static_cast<size_t>(gen.count), static_cast<size_t>(k)},
                                 std::move(zs)));

  if (!options.grid_path.empty()) {
    if (result.split) {
      // The four-row figure layout: sigma, x1, x2, composed.
      export_grid({result.split->sigma_map, result.split->x1, result.split->x2,
                   result.split->composed},
                  options.grid_path);
      export_grid({result.split->sigma_map}, grid_sigma_path(options.grid_path));
    } else {
      // Square-ish layout for plain sample sheets.
      const size_t n = result.images.dim(0);
      const size_t cols = static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
      const size_t rows_n = (n + cols - 1) / cols;
      const size_t h = result.images.dim(1), w = result.images.dim(2), c = result.images.dim(3);
      std::vector<Tensor> rows;
      for (size_t r = 0; r < rows_n; ++r) {
        std::vector<double> vals(cols * h * w * c, 0.5);
        for (size_t j = 0; j < cols; ++j) {
          const size_t i = r * cols + j;
          if (i >= n) break;
          const double* src = result.images.values().data() + i * h * w * c;
          std::copy(src, src + h * w * c, vals.begin() + j * h * w * c);
        }
        rows.push_back(Tensor::from_values({cols, h, w, c}, std::move(vals)));
      }
      export_grid(rows, options.grid_path);
    }
  }
  return result;
}

GaussianMixture cmd_fit_gmm(const std::string& checkpoint_path, const RunConfig& cfg) {
  cfg.validate();
  set_default_precision(Precision::f64);
  CheckpointData data = load_checkpoint(checkpoint_path);
  VaeModel model = model_from_checkpoint(data);
  Dataset dataset = load_dataset(cfg.dataset);
  if (static_cast<size_t>(cfg.gmm_components) > dataset.count) {
    throw std::invalid_argument("gmm components exceed the dataset size");
  }

  Eigen::MatrixXd codes = encode_dataset(model, dataset);
  GaussianMixture gmm =
      fit_gmm(codes, cfg.gmm_components, cfg.gmm_options(), derive_seed(cfg.seed, "fit-gmm"));
  data.mixture = gmm;
  save_checkpoint(data, checkpoint_path);
  return gmm;
}

void cmd_encode(const std::string& checkpoint_path, const RunConfig& cfg,
                const std::string& matrix_path) {
  cfg.validate();
  set_default_precision(Precision::f64);
  CheckpointData data = load_checkpoint(checkpoint_path);
  VaeModel model = model_from_checkpoint(data);
  Dataset dataset = load_dataset(cfg.dataset);
  save_matrix(encode_dataset(model, dataset), matrix_path);
}

namespace {

FidReport report_against(const GaussianStats& real, const Tensor& images,
                         const FeatureExtractor& extractor) {
  return frechet_distance(real, gaussian_stats(extractor.extract(images)));
}

}  // namespace

FidScores eval_fid_model(const std::string& checkpoint_path, const RunConfig& cfg,
                         const std::string& sampler, int count, const std::string& report_dir) {
  cfg.validate();
  set_default_precision(Precision::f64);
  CheckpointData data = load_checkpoint(checkpoint_path);
  VaeModel model = model_from_checkpoint(data);
  Dataset dataset = load_dataset(cfg.dataset);

  const int n = std::min<int>(count, static_cast<int>(dataset.count));
  if (n < 2) throw std::invalid_argument("eval-fid needs at least 2 samples");
  Tensor real = dataset.sample_images(static_cast<size_t>(n), derive_seed(cfg.seed, "fid-real"));

  FeatureExtractor extractor = cfg.fid_feature_extractor();
  extractor.fit(real);
  GaussianStats real_stats = gaussian_stats(extractor.extract(real));

  GenerateOptions gen;
  gen.sampler = sampler;
  gen.count = n;
  gen.seed = derive_seed(cfg.seed, "fid-generate");
  GenerationResult generated = cmd_generate(checkpoint_path, gen);

  FidScores scores;
  if (!report_dir.empty()) fs::create_directories(report_dir);
  auto record = [&](const std::string& variant, const Tensor& images) {
    FidReport report = report_against(real_stats, images, extractor);
    scores.by_variant[variant] = report.fid;
    if (!report_dir.empty()) {
      write_fid_report(report, (fs::path(report_dir) / ("fid_" + variant + ".json")).string());
    }
  };

  record("xhat", generated.images);
  if (generated.split) {
    record("x1", generated.split->x1);
    record("x2", generated.split->x2);
    // Per-sample coin flip between the two branches.
    Rng mix_rng(derive_seed(cfg.seed, "fid-mix"));
    const size_t stride = generated.images.size() / generated.images.dim(0);
    std::vector<double> mixed(generated.images.size());
    for (size_t i = 0; i < generated.images.dim(0); ++i) {
      const Tensor& pick = mix_rng.next_below(2) == 0 ? generated.split->x1 : generated.split->x2;
      std::copy(pick.values().begin() + i * stride, pick.values().begin() + (i + 1) * stride,
                mixed.begin() + i * stride);
    }
    record("mix", Tensor::from_values(generated.images.shape(), std::move(mixed)));
  }
  return scores;
}

FidReport eval_fid_features(const std::string& path_a, const std::string& path_b,
                            const std::string& report_path) {
  FeatureMatrix a = load_features(path_a);
  FeatureMatrix b = load_features(path_b);
  if (a.dims() != b.dims()) {
    throw std::invalid_argument("feature files disagree on dimension: " +
                                std::to_string(a.dims()) + " vs " + std::to_string(b.dims()));
  }
  FidReport report = frechet_distance(gaussian_stats(a), gaussian_stats(b));
  if (!report_path.empty()) write_fid_report(report, report_path);
  return report;
}

namespace {

// Sampling streams keyed by the dataset description, so evaluating a set
// against itself compares literally identical samples.
uint64_t dataset_sample_seed(const RunConfig& cfg, const DatasetCfg& ds) {
  return derive_seed(cfg.seed, "fid-set:" + ds.kind + ":" + ds.path + ":" +
                                   std::to_string(ds.count) + ":" + std::to_string(ds.size) +
                                   ":" + std::to_string(ds.synth_seed));
}

}  // namespace

FidReport eval_fid_datasets(const DatasetCfg& a, const DatasetCfg& b, const RunConfig& cfg,
                            const std::string& report_path) {
  set_default_precision(Precision::f64);
  Dataset da = load_dataset(a);
  Dataset db = load_dataset(b);
  const size_t n = std::min<size_t>({static_cast<size_t>(cfg.fid_samples), da.count, db.count});
  Tensor ia = da.sample_images(n, dataset_sample_seed(cfg, a));
  Tensor ib = db.sample_images(n, dataset_sample_seed(cfg, b));
  FidReport report = fid_between_sets(ia, ib, cfg.fid_feature_extractor());
  if (!report_path.empty()) write_fid_report(report, report_path);
  return report;
}

std::vector<AblateRow> cmd_ablate(const RunConfig& cfg, const AblateOptions& options) {
  cfg.validate();
  if (options.trials < 1) throw std::invalid_argument("ablate: trials must be >= 1");
  const std::string out_dir = cfg.resolved_out_dir();
  fs::create_directories(out_dir);

  Dataset dataset = load_dataset(cfg.dataset);
  const int eval_count = std::min<int>(options.fid_eval_count, static_cast<int>(dataset.count));
  Tensor real = dataset.sample_images(static_cast<size_t>(eval_count),
                                      derive_seed(cfg.seed, "ablate-real"));
  set_default_precision(Precision::f64);
  FeatureExtractor extractor = cfg.fid_feature_extractor();
  extractor.fit(real);
  GaussianStats real_stats = gaussian_stats(extractor.extract(real));

  std::vector<AblateRow> rows;

  for (int trial = 0; trial < options.trials; ++trial) {
    const uint64_t trial_seed = derive_seed(cfg.seed, "trial", static_cast<uint64_t>(trial));
    for (const std::string& kind : {std::string("vanilla"), std::string("split")}) {
      RunConfig run = cfg;
      run.model_kind = kind;
      run.seed = options.shared_init
                     ? trial_seed
                     : derive_seed(trial_seed, "variant-" + kind);
      run.out_dir =
          (fs::path(out_dir) / ("trial" + std::to_string(trial) + "_" + kind)).string();

      auto evaluate = [&](const EpochStats& stats, VaeModel& model) {
        set_default_precision(Precision::f64);
        Eigen::MatrixXd codes = encode_dataset(model, dataset);
        GaussianMixture gmm = fit_gmm(codes, cfg.gmm_components, cfg.gmm_options(),
                                      derive_seed(trial_seed, "ablate-gmm"));
        Eigen::MatrixXd draws =
            sample_gmm(gmm, eval_count, derive_seed(trial_seed, "ablate-sample"));
        std::vector<double> zs(static_cast<size_t>(eval_count) * model.config().latent_dim);
        for (int i = 0; i < eval_count; ++i)
          for (int j = 0; j < model.config().latent_dim; ++j)
            zs[static_cast<size_t>(i) * model.config().latent_dim + j] = draws(i, j);
        GenerationResult gen = decode_latents(
            model, Tensor::from_values({static_cast<size_t>(eval_count),
                                        static_cast<size_t>(model.config().latent_dim)},
                                       std::move(zs)));

        auto push = [&](const std::string& variant, const Tensor& images) {
          FidReport report = report_against(real_stats, images, extractor);
          rows.push_back(AblateRow{stats.epoch, std::to_string(trial), variant, report.fid,
                                   static_cast<double>(stats.active_units)});
        };
        if (kind == "vanilla") {
          push("vanilla_xhat", gen.images);
        } else {
          push("split_xhat", gen.images);
          push("split_x1", gen.split->x1);
          push("split_x2", gen.split->x2);
        }
        set_default_precision(precision_from_name(cfg.precision));
      };

      cmd_train(run, [&](const EpochStats& stats, VaeModel& model, const Dataset&) {
        const bool last = stats.epoch == run.epochs;
        const bool scheduled =
            options.eval_interval > 0 && stats.epoch % options.eval_interval == 0;
        if (last || scheduled) evaluate(stats, model);
      });
    }
  }

  // Mean and standard deviation across trials per (epoch, variant).
  std::map<std::pair<int, std::string>, std::vector<const AblateRow*>> groups;
  for (const AblateRow& row : rows) groups[{row.epoch, row.variant}].push_back(&row);
  std::vector<AblateRow> aggregates;
  for (const auto& [key, members] : groups) {
    AblateRow mean_row{key.first, "mean", key.second, 0.0, 0.0};
    for (const AblateRow* r : members) {
      mean_row.fid += r->fid;
      mean_row.active_units += r->active_units;
    }
    mean_row.fid /= members.size();
    mean_row.active_units /= members.size();
    AblateRow std_row{key.first, "std", key.second, 0.0, 0.0};
    for (const AblateRow* r : members) {
      std_row.fid += (r->fid - mean_row.fid) * (r->fid - mean_row.fid);
      std_row.active_units +=
          (r->active_units - mean_row.active_units) * (r->active_units - mean_row.active_units);
    }
    std_row.fid = std::sqrt(std_row.fid / members.size());
    std_row.active_units = std::sqrt(std_row.active_units / members.size());
    aggregates.push_back(mean_row);
    aggregates.push_back(std_row);
  }
  rows.insert(rows.end(), aggregates.begin(), aggregates.end());

  std::ofstream csv(fs::path(out_dir) / "ablate.csv");
  csv << "epoch,trial,variant,fid,active_units\n";
  for (const AblateRow& row : rows) {
    csv << row.epoch << ',' << row.trial << ',' << row.variant << ','
        << std::setprecision(17) << row.fid << ',' << row.active_units << '\n';
  }
  return rows;
}

}  // namespace svlab
