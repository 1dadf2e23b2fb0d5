// Latent sampling, the vanilla and split decoder heads, and ancestral
// generation. A split model's head convolution emits 1+2C channels: the
// sigma map plus two candidate images. All three are logistic-squashed and
// the output is composed inside the model graph, so the loss only ever sees
// the composed image.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "svlab/blocks.hpp"
#include "svlab/ops.hpp"
#include "svlab/params.hpp"

namespace svlab {

struct GaussianMixture;

enum class ModelKind { vanilla, split };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct VaeConfig {
  ModelKind kind = ModelKind::split;
  ImageShape image;
  int latent_dim = 32;
  EncoderCfg encoder;
  DecoderCfg decoder;

  // Keeps encoder/decoder latent_dim in sync and derives the decoder seed
  // width when it is left at 0 (encoder base_dim doubled per scale).
  void finalize();
  void validate() const;
};

struct LatentParams {
  Tensor mu;      // [N,k]
  Tensor logvar;  // [N,k]
};

struct SplitOutput {
  Tensor sigma_map;  // [N,H,W,1], values in (0,1)
  Tensor x1;         // [N,H,W,C]
  Tensor x2;         // [N,H,W,C]
  Tensor composed;   // sigma*x1 + (1-sigma)*x2, built in-graph
};

struct ModelOutput {
  Tensor composed;
  std::optional<SplitOutput> split;
};

// z = mu + exp(0.5*logvar) * noise. The caller supplies noise ~ N(0,I) so
// sampling stays outside the differentiation path.
Tensor reparameterize(const LatentParams& params, const Tensor& noise);

// head_pre holds the head convolution output (pre-activation).
SplitOutput split_head(const Tensor& head_pre, size_t image_channels);
Tensor vanilla_head(const Tensor& head_pre, size_t image_channels);

class VaeModel {
 public:
  static VaeModel build(VaeConfig cfg, uint64_t seed);

  const VaeConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  size_t head_channels() const;

  LatentParams encode(const Tensor& x, bool training);
  ModelOutput decode(const Tensor& z, bool training);

  struct ForwardResult {
    LatentParams latent;
    Tensor z;
    ModelOutput out;
  };
  ForwardResult forward(const Tensor& x, const Tensor& noise, bool training);

 private:
  VaeConfig cfg_;
  ParamStore params_;
};

enum class SamplerKind { prior, gmm };

struct GenerationConfig {
  SamplerKind sampler = SamplerKind::prior;
  int count = 25;
  uint64_t seed = 0;
};

struct GenerationResult {
  Tensor latents;  // [count,k]
  Tensor images;   // [count,H,W,C]
  std::optional<SplitOutput> split;
};

// Deterministic per seed. sampler == gmm requires a fitted mixture whose
// dimension matches the model's latent_dim.
GenerationResult generate(VaeModel& model, const GenerationConfig& cfg,
                          const GaussianMixture* mixture = nullptr);

}  // namespace svlab
