// Architecture building blocks: Residual Block, Scale Block, Dense Block,
// and the encoder/decoder trunks assembled from them.
//
// A Residual Block applies num_convs rounds of batch-norm, activation and a
// 3x3 shape-preserving convolution, then adds the input back. A Scale Block
// is a sequence of Residual Blocks at one resolution. The Dense Block is the
// fully connected analogue (two dense layers with a skip).
//
// The encoder downsamples with stride-2 convolutions, doubling channels at
// each scale; after the last Scale Block, global average pooling feeds a
// Dense Block and the two latent heads. The decoder seeds a 4x4 map from z
// with a dense layer, then alternates Scale Blocks with nearest-neighbor
// upsampling plus a halving convolution until it reaches the first power-of-
// two extent >= the target, and center-crops. Residual-block counts per
// scale are our own defaults; they are configurable, not taken from any
// published recipe.
#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "svlab/ops.hpp"
#include "svlab/params.hpp"

namespace svlab {

struct ResidualBlockCfg {
  int num_convs = 2;
  Activation activation = Activation::relu;
};

struct ScaleBlockCfg {
  int num_residual_blocks = 1;
  ResidualBlockCfg block;
};

struct ImageShape {
  size_t h = 0, w = 0, c = 0;
};

struct EncoderCfg {
  int base_dim = 32;
  int num_scales = 2;
  ScaleBlockCfg scale_block;
  int latent_dim = 32;
  int dense_block_width = 256;
};

struct DecoderCfg {
  int base_dim = 128;  // channels of the 4x4 seed map
  int min_width = 16;  // channel floor while halving across upsamples
  ScaleBlockCfg scale_block;
  int latent_dim = 32;
};

// Fan-in scaled uniform init: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
void init_fan_in_uniform(Tensor& weight, size_t fan_in, uint64_t seed);

// Parameter creation. Each weight draws from a stream derived from
// (seed, parameter name), so identically named parameters of two models
// built with the same seed receive identical values.
void build_residual_block(ParamStore& store, const std::string& prefix, int channels,
                          const ResidualBlockCfg& cfg, uint64_t seed);
void build_scale_block(ParamStore& store, const std::string& prefix, int channels,
                       const ScaleBlockCfg& cfg, uint64_t seed);
void build_dense_block(ParamStore& store, const std::string& prefix, int dim, int width,
                       uint64_t seed);
void build_encoder(ParamStore& store, const EncoderCfg& cfg, ImageShape image, uint64_t seed,
                   const std::string& prefix = "enc");
void build_decoder(ParamStore& store, const DecoderCfg& cfg, ImageShape target, uint64_t seed,
                   const std::string& prefix = "dec");

Tensor residual_block_forward(const Tensor& x, const ResidualBlockCfg& cfg, ParamStore& store,
                              const std::string& prefix, bool training);
Tensor scale_block_forward(const Tensor& x, const ScaleBlockCfg& cfg, ParamStore& store,
                           const std::string& prefix, bool training);
Tensor dense_block_forward(const Tensor& x, ParamStore& store, const std::string& prefix,
                           Activation act, bool training);

// Trunk output before pooling (spatial map at the final scale).
Tensor encoder_trunk_forward(const Tensor& x, const EncoderCfg& cfg, ParamStore& store,
                             bool training, const std::string& prefix = "enc");
// (mu, logvar), each [N, latent_dim].
std::pair<Tensor, Tensor> encoder_forward(const Tensor& x, const EncoderCfg& cfg,
                                          ParamStore& store, bool training,
                                          const std::string& prefix = "enc");

int decoder_num_upsamples(size_t target_h, size_t target_w);
int decoder_output_width(const DecoderCfg& cfg, ImageShape target);
// Head-agnostic feature map at the target resolution.
Tensor decoder_forward(const Tensor& z, const DecoderCfg& cfg, ParamStore& store,
                       ImageShape target, bool training, const std::string& prefix = "dec");

}  // namespace svlab
