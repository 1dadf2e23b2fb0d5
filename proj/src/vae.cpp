#include "svlab/vae.hpp"

#include <stdexcept>

#include "svlab/gmm.hpp"
#include "svlab/rng.hpp"

namespace svlab {

std::string model_kind_name(ModelKind kind) {
  return kind == ModelKind::vanilla ? "vanilla" : "split";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "vanilla") return ModelKind::vanilla;
  if (name == "split") return ModelKind::split;
  throw std::invalid_argument("unknown model kind '" + name + "' (expected vanilla|split)");
}

void VaeConfig::finalize() {
  encoder.latent_dim = latent_dim;
  decoder.latent_dim = latent_dim;
  if (decoder.base_dim == 0) {
    decoder.base_dim = encoder.base_dim << encoder.num_scales;
  }
}

void VaeConfig::validate() const {
  if (image.h == 0 || image.w == 0 || image.c == 0) {
    throw std::invalid_argument("VaeConfig: image shape must be set");
  }
  if (latent_dim < 1) throw std::invalid_argument("VaeConfig: latent_dim must be positive");
  if (encoder.latent_dim != latent_dim || decoder.latent_dim != latent_dim) {
    throw std::invalid_argument("VaeConfig: call finalize() before building");
  }
}

Tensor reparameterize(const LatentParams& params, const Tensor& noise) {
  if (params.mu.shape() != params.logvar.shape()) {
    throw std::invalid_argument("reparameterize: mu/logvar shape mismatch");
  }
  if (noise.shape() != params.mu.shape()) {
    throw std::invalid_argument("reparameterize: noise shape " + shape_str(noise.shape()) +
                                " does not match latent shape " + shape_str(params.mu.shape()));
  }
  Tensor std_dev = exp(scale(params.logvar, 0.5));
  return add(params.mu, mul(std_dev, noise));
}

SplitOutput split_head(const Tensor& head_pre, size_t image_channels) {
  const size_t expected = 1 + 2 * image_channels;
  if (head_pre.ndim() != 4 || head_pre.shape().back() != expected) {
    throw std::invalid_argument("split_head: expected " + std::to_string(expected) +
                                " channels (1+2C for C=" + std::to_string(image_channels) +
                                "), got " + shape_str(head_pre.shape()));
  }
  SplitOutput out;
  out.sigma_map = sigmoid(slice_channels(head_pre, 0, 1));
  out.x1 = sigmoid(slice_channels(head_pre, 1, 1 + image_channels));
  out.x2 = sigmoid(slice_channels(head_pre, 1 + image_channels, expected));
  out.composed = compose(out.sigma_map, out.x1, out.x2);
  return out;
}

Tensor vanilla_head(const Tensor& head_pre, size_t image_channels) {
  if (head_pre.ndim() != 4 || head_pre.shape().back() != image_channels) {
    throw std::invalid_argument("vanilla_head: expected " + std::to_string(image_channels) +
                                " channels, got " + shape_str(head_pre.shape()));
  }
  return sigmoid(head_pre);
}

size_t VaeModel::head_channels() const {
  return cfg_.kind == ModelKind::split ? 1 + 2 * cfg_.image.c : cfg_.image.c;
}

VaeModel VaeModel::build(VaeConfig cfg, uint64_t seed) {
  cfg.finalize();
  cfg.validate();
  VaeModel model;
  model.cfg_ = cfg;
  build_encoder(model.params_, cfg.encoder, cfg.image, seed);
  build_decoder(model.params_, cfg.decoder, cfg.image, seed);
  const int trunk_width = decoder_output_width(cfg.decoder, cfg.image);
  const size_t head_out = model.head_channels();
  Tensor& head_w = model.params_.create(
      "head/w", {3, 3, static_cast<size_t>(trunk_width), head_out}, true);
  init_fan_in_uniform(head_w, 9 * static_cast<size_t>(trunk_width), derive_seed(seed, "head/w"));
  model.params_.create("head/b", {head_out}, true, 0.0);
  return model;
}

LatentParams VaeModel::encode(const Tensor& x, bool training) {
  if (x.ndim() != 4 || x.dim(3) != cfg_.image.c) {
    throw std::invalid_argument("VaeModel::encode: expected [N,H,W," +
                                std::to_string(cfg_.image.c) + "] input, got " +
                                shape_str(x.shape()));
  }
  auto [mu, logvar] = encoder_forward(x, cfg_.encoder, params_, training);
  return LatentParams{mu, logvar};
}

ModelOutput VaeModel::decode(const Tensor& z, bool training) {
  Tensor features = decoder_forward(z, cfg_.decoder, params_, cfg_.image, training);
  Tensor pre = conv2d(features, params_.get("head/w"), 1, Padding::same);
  pre = add(pre, params_.get("head/b"));
  ModelOutput out;
  if (cfg_.kind == ModelKind::split) {
    out.split = split_head(pre, cfg_.image.c);
    out.composed = out.split->composed;
  } else {
    out.composed = vanilla_head(pre, cfg_.image.c);
  }
  return out;
}

VaeModel::ForwardResult VaeModel::forward(const Tensor& x, const Tensor& noise, bool training) {
  ForwardResult result;
  result.latent = encode(x, training);
  result.z = reparameterize(result.latent, noise);
  result.out = decode(result.z, training);
  return result;
}

GenerationResult generate(VaeModel& model, const GenerationConfig& cfg,
                          const GaussianMixture* mixture) {
  if (cfg.count < 1) throw std::invalid_argument("generate: count must be positive");
  const int k = model.config().latent_dim;
  const size_t n = static_cast<size_t>(cfg.count);

  std::vector<double> zs(n * static_cast<size_t>(k));
  if (cfg.sampler == SamplerKind::gmm) {
    if (mixture == nullptr) {
      throw std::invalid_argument("generate: gmm sampler needs a fitted mixture");
    }
    if (mixture->dims() != k) {
      throw std::invalid_argument("generate: mixture dimension " +
                                  std::to_string(mixture->dims()) +
                                  " does not match latent_dim " + std::to_string(k));
    }
    Eigen::MatrixXd draws = sample_gmm(*mixture, cfg.count, derive_seed(cfg.seed, "generate"));
    for (size_t i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) zs[i * k + j] = draws(static_cast<int>(i), j);
  } else {
    Rng rng(derive_seed(cfg.seed, "generate"));
    for (double& v : zs) v = rng.next_normal();
  }
  round_buffer_to_precision(zs);
  Tensor z = Tensor::from_values({n, static_cast<size_t>(k)}, std::move(zs));

  GenerationResult result;
  result.latents = z;
  ModelOutput out = model.decode(z, /*training=*/false);
  result.images = out.composed;
  result.split = std::move(out.split);
  return result;
}

}  // namespace svlab
