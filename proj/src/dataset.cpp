#include "svlab/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "svlab/rng.hpp"

namespace svlab {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error(std::string("idx file: truncated ") + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

std::vector<unsigned char> read_exact(std::istream& in, size_t n, const char* what) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw std::runtime_error(std::string("idx file: truncated ") + what);
  }
  return buf;
}

}  // namespace

Tensor Dataset::batch(const std::vector<size_t>& indices) const {
  const size_t stride = h * w * c;
  std::vector<double> values(indices.size() * stride);
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= count) throw std::out_of_range("Dataset::batch: index out of range");
    const float* src = pixels.data() + indices[i] * stride;
    double* dst = values.data() + i * stride;
    for (size_t j = 0; j < stride; ++j) dst[j] = static_cast<double>(src[j]);
  }
  return Tensor::from_values({indices.size(), h, w, c}, std::move(values));
}

Tensor Dataset::all() const {
  std::vector<size_t> indices(count);
  std::iota(indices.begin(), indices.end(), 0);
  return batch(indices);
}

Tensor Dataset::sample_images(size_t n, uint64_t seed) const {
  if (n > count) {
    throw std::invalid_argument("Dataset::sample_images: requested " + std::to_string(n) +
                                " of " + std::to_string(count) + " images");
  }
  std::vector<size_t> indices(count);
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(derive_seed(seed, "dataset-sample"));
  for (size_t i = count - 1; i > 0; --i) {
    size_t j = rng.next_below(i + 1);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(n);
  return batch(indices);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream in(images_path, std::ios::binary);
  if (!in) throw std::runtime_error("load_idx: cannot open " + images_path);
  const uint32_t magic = read_be_u32(in, "magic");
  if (magic == kIdxLabelsMagic) {
    throw std::runtime_error("load_idx: " + images_path +
                             " is an IDX label file, expected an image file");
  }
  if (magic != kIdxImagesMagic) {
    throw std::runtime_error("load_idx: bad magic in " + images_path);
  }
  Dataset ds;
  ds.count = read_be_u32(in, "count");
  ds.h = read_be_u32(in, "rows");
  ds.w = read_be_u32(in, "cols");
  ds.c = 1;
  auto raw = read_exact(in, ds.count * ds.h * ds.w, "pixel payload");
  ds.pixels.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) ds.pixels[i] = static_cast<float>(raw[i]) / 255.0f;

  if (!labels_path.empty()) {
    std::ifstream lin(labels_path, std::ios::binary);
    if (!lin) throw std::runtime_error("load_idx: cannot open " + labels_path);
    if (read_be_u32(lin, "magic") != kIdxLabelsMagic) {
      throw std::runtime_error("load_idx: bad magic in " + labels_path);
    }
    const uint32_t n = read_be_u32(lin, "count");
    if (n != ds.count) {
      throw std::runtime_error("load_idx: label count does not match image count");
    }
    auto bytes = read_exact(lin, n, "label payload");
    ds.labels.assign(bytes.begin(), bytes.end());
  }
  return ds;
}

Dataset load_cifar10(const std::string& batch_path) {
  constexpr size_t kRecord = 3073;
  constexpr size_t kSide = 32;
  constexpr size_t kPlane = kSide * kSide;
  std::ifstream in(batch_path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cifar10: cannot open " + batch_path);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<size_t>(in.tellg());
  in.seekg(0);
  if (file_size == 0 || file_size % kRecord != 0) {
    throw std::runtime_error("load_cifar10: " + batch_path +
                             " is not a whole number of 3073-byte records");
  }
  Dataset ds;
  ds.count = file_size / kRecord;
  ds.h = kSide;
  ds.w = kSide;
  ds.c = 3;
  ds.pixels.resize(ds.count * kPlane * 3);
  ds.labels.resize(ds.count);
  std::vector<unsigned char> record(kRecord);
  for (size_t i = 0; i < ds.count; ++i) {
    in.read(reinterpret_cast<char*>(record.data()), kRecord);
    if (!in) throw std::runtime_error("load_cifar10: truncated record");
    ds.labels[i] = record[0];
    float* img = ds.pixels.data() + i * kPlane * 3;
    for (size_t p = 0; p < kPlane; ++p) {
      // channel-planar record -> interleaved NHWC
      img[p * 3 + 0] = static_cast<float>(record[1 + p]) / 255.0f;
      img[p * 3 + 1] = static_cast<float>(record[1 + kPlane + p]) / 255.0f;
      img[p * 3 + 2] = static_cast<float>(record[1 + 2 * kPlane + p]) / 255.0f;
    }
  }
  return ds;
}

Dataset load_raw_dir(const std::string& dir, size_t h, size_t w, size_t c) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  if (files.empty()) throw std::runtime_error("load_raw_dir: no files in " + dir);
  std::sort(files.begin(), files.end());

  Dataset ds;
  ds.count = files.size();
  ds.h = h;
  ds.w = w;
  ds.c = c;
  const size_t stride = h * w * c;
  ds.pixels.resize(ds.count * stride);
  for (size_t i = 0; i < files.size(); ++i) {
    std::ifstream in(files[i], std::ios::binary);
    auto raw = read_exact(in, stride, "raw image payload");
    char extra;
    if (in.read(&extra, 1)) {
      throw std::runtime_error("load_raw_dir: " + files[i].string() + " is larger than " +
                               std::to_string(stride) + " bytes");
    }
    for (size_t j = 0; j < stride; ++j) {
      ds.pixels[i * stride + j] = static_cast<float>(raw[j]) / 255.0f;
    }
  }
  return ds;
}

SynthKind synth_kind_from_name(const std::string& name) {
  if (name == "shapes") return SynthKind::shapes;
  if (name == "two-gaussians" || name == "two_gaussians") return SynthKind::two_gaussians;
  throw std::invalid_argument("unknown synthetic dataset kind '" + name + "'");
}

Dataset synth_dataset(SynthKind kind, size_t count, size_t size, uint64_t seed) {
  if (size < 8) throw std::invalid_argument("synth_dataset: size must be >= 8");
  if (count == 0) throw std::invalid_argument("synth_dataset: count must be positive");

  Dataset ds;
  ds.count = count;
  ds.h = size;
  ds.w = size;
  ds.c = 1;
  ds.pixels.assign(count * size * size, 0.0f);
  ds.labels.resize(count);
  Rng rng(derive_seed(seed, "synth-dataset"));
  const long s = static_cast<long>(size);

  for (size_t i = 0; i < count; ++i) {
    float* img = ds.pixels.data() + i * size * size;
    if (kind == SynthKind::shapes) {
      const int shape_kind = static_cast<int>(rng.next_below(2));
      ds.labels[i] = shape_kind;
      const uint64_t level = 100 + rng.next_below(156);  // intensity in [100, 255]
      const float intensity = static_cast<float>(level) / 255.0f;
      if (shape_kind == 0) {
        // rectangle
        const long x0 = 1 + static_cast<long>(rng.next_below(size / 2));
        const long y0 = 1 + static_cast<long>(rng.next_below(size / 2));
        const long x1 = x0 + 2 + static_cast<long>(rng.next_below(size - 3 - x0));
        const long y1 = y0 + 2 + static_cast<long>(rng.next_below(size - 3 - y0));
        for (long y = y0; y <= y1; ++y)
          for (long x = x0; x <= x1; ++x) img[y * s + x] = intensity;
      } else {
        // ellipse: integer membership test, no transcendentals
        const long cx = static_cast<long>(size / 4 + rng.next_below(size / 2));
        const long cy = static_cast<long>(size / 4 + rng.next_below(size / 2));
        const long rx = 2 + static_cast<long>(rng.next_below(size / 4));
        const long ry = 2 + static_cast<long>(rng.next_below(size / 4));
        for (long y = 0; y < s; ++y)
          for (long x = 0; x < s; ++x) {
            const long dx = x - cx, dy = y - cy;
            if (dx * dx * ry * ry + dy * dy * rx * rx <= rx * rx * ry * ry) {
              img[y * s + x] = intensity;
            }
          }
      }
    } else {
      // two_gaussians: radial bump around one of two cluster centers;
      // 1 - d^2/r^2 profile keeps the arithmetic exactly reproducible.
      const int cluster = static_cast<int>(rng.next_below(2));
      ds.labels[i] = cluster;
      const long jitter_range = std::max<long>(1, s / 8);
      const long jx = static_cast<long>(rng.next_below(2 * jitter_range + 1)) - jitter_range;
      const long jy = static_cast<long>(rng.next_below(2 * jitter_range + 1)) - jitter_range;
      const long base = cluster == 0 ? s / 4 : 3 * s / 4;
      const long cx = base + jx, cy = base + jy;
      const long r = s / 4 + static_cast<long>(rng.next_below(std::max<long>(1, s / 12)));
      const double r2 = static_cast<double>(r * r);
      const double intensity = static_cast<double>(128 + rng.next_below(128)) / 255.0;
      for (long y = 0; y < s; ++y)
        for (long x = 0; x < s; ++x) {
          const long dx = x - cx, dy = y - cy;
          const double d2 = static_cast<double>(dx * dx + dy * dy);
          if (d2 < r2) {
            img[y * s + x] = static_cast<float>(intensity * (1.0 - d2 / r2));
          }
        }
    }
  }
  return ds;
}

}  // namespace svlab
