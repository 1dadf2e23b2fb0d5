// Dataset ingestion and synthetic dataset generation. Pixels live in [0,1]
// as floats; batches are materialized into tensors on demand.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svlab/tensor.hpp"

namespace svlab {

struct Dataset {
  size_t count = 0, h = 0, w = 0, c = 0;
  std::vector<float> pixels;  // count*h*w*c, row-major
  std::vector<int> labels;    // empty when the source carries none

  Tensor batch(const std::vector<size_t>& indices) const;
  Tensor all() const;
  // First `n` images under a seeded shuffle of the dataset order.
  Tensor sample_images(size_t n, uint64_t seed) const;
};

// IDX image file (magic 0x00000803). Rejects label files (magic 0x00000801)
// with a format error; pass labels_path to attach labels.
Dataset load_idx(const std::string& images_path, const std::string& labels_path = "");

// One CIFAR-10 binary batch: 3073-byte records, label byte + 3072
// channel-planar pixel bytes.
Dataset load_cifar10(const std::string& batch_path);

// Every regular file in the directory read as h*w*c raw bytes, sorted by name.
Dataset load_raw_dir(const std::string& dir, size_t h, size_t w, size_t c);

enum class SynthKind { shapes, two_gaussians };
SynthKind synth_kind_from_name(const std::string& name);

// Deterministic per seed with an integer-only sampling path, so the bytes
// are identical across platforms. "shapes" draws one random rectangle or
// ellipse per canvas (label = shape kind); "two_gaussians" draws a radial
// bump around one of two cluster centers (label = cluster).
Dataset synth_dataset(SynthKind kind, size_t count, size_t size, uint64_t seed);

}  // namespace svlab
