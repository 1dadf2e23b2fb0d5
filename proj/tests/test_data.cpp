#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "svlab/checkpoint.hpp"
#include "svlab/dataset.hpp"
#include "svlab/image_io.hpp"
#include "svlab/matrix_io.hpp"
#include "svlab/rng.hpp"

using namespace svlab;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("svlab_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_be32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx_images(const std::string& path, uint32_t count, uint32_t rows, uint32_t cols,
                      const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary);
  write_be32(out, 0x00000803);
  write_be32(out, count);
  write_be32(out, rows);
  write_be32(out, cols);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
}

VaeConfig tiny_config(ModelKind kind) {
  VaeConfig cfg;
  cfg.kind = kind;
  cfg.image = {8, 8, 1};
  cfg.latent_dim = 4;
  cfg.encoder.base_dim = 4;
  cfg.encoder.num_scales = 1;
  cfg.encoder.dense_block_width = 8;
  cfg.decoder.min_width = 4;
  return cfg;
}

}  // namespace

TEST_CASE("idx loading") {
  TempDir tmp;
  SUBCASE("synthetic fixture round-trips values exactly") {
    std::vector<unsigned char> payload(2 * 3 * 4);
    for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<unsigned char>(i * 9);
    const std::string path = tmp.file("images.idx");
    write_idx_images(path, 2, 3, 4, payload);
    Dataset ds = load_idx(path);
    CHECK(ds.count == 2);
    CHECK(ds.h == 3);
    CHECK(ds.w == 4);
    CHECK(ds.c == 1);
    for (size_t i = 0; i < payload.size(); ++i) {
      CHECK(ds.pixels[i] == static_cast<float>(payload[i]) / 255.0f);
    }
  }
  SUBCASE("dimensions come from the header") {
    std::vector<unsigned char> payload(5 * 28 * 28, 0);
    const std::string path = tmp.file("images28.idx");
    write_idx_images(path, 5, 28, 28, payload);
    Dataset ds = load_idx(path);
    CHECK(ds.count == 5);
    CHECK(ds.h == 28);
    CHECK(ds.w == 28);
  }
  SUBCASE("label magic on an image path is a format error") {
    const std::string path = tmp.file("labels.idx");
    std::ofstream out(path, std::ios::binary);
    write_be32(out, 0x00000801);
    write_be32(out, 2);
    out.put(1);
    out.put(7);
    out.close();
    CHECK_THROWS_WITH_AS(load_idx(path), doctest::Contains("label"), std::runtime_error);
  }
  SUBCASE("truncated payload is rejected") {
    std::vector<unsigned char> payload(10, 0);  // header promises 60000 images
    const std::string path = tmp.file("trunc.idx");
    write_idx_images(path, 60000, 28, 28, payload);
    CHECK_THROWS_WITH_AS(load_idx(path), doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("labels attach when the companion file is given") {
    std::vector<unsigned char> payload(2 * 2 * 2, 128);
    const std::string ipath = tmp.file("im.idx");
    write_idx_images(ipath, 2, 2, 2, payload);
    const std::string lpath = tmp.file("lb.idx");
    std::ofstream out(lpath, std::ios::binary);
    write_be32(out, 0x00000801);
    write_be32(out, 2);
    out.put(3);
    out.put(9);
    out.close();
    Dataset ds = load_idx(ipath, lpath);
    CHECK(ds.labels == std::vector<int>{3, 9});
  }
}

TEST_CASE("cifar10 binary batches") {
  TempDir tmp;
  const std::string path = tmp.file("batch.bin");
  std::ofstream out(path, std::ios::binary);
  // two records: label + 3072 planar bytes
  for (int rec = 0; rec < 2; ++rec) {
    out.put(static_cast<char>(rec + 3));
    for (int plane = 0; plane < 3; ++plane) {
      for (int p = 0; p < 1024; ++p) out.put(static_cast<char>(50 * (plane + 1)));
    }
  }
  out.close();
  Dataset ds = load_cifar10(path);
  CHECK(ds.count == 2);
  CHECK(ds.h == 32);
  CHECK(ds.w == 32);
  CHECK(ds.c == 3);
  CHECK(ds.labels == std::vector<int>{3, 4});
  // channel-planar to NHWC: every pixel should hold (50,100,150)/255
  CHECK(ds.pixels[0] == 50.0f / 255.0f);
  CHECK(ds.pixels[1] == 100.0f / 255.0f);
  CHECK(ds.pixels[2] == 150.0f / 255.0f);

  std::ofstream bad(tmp.file("bad.bin"), std::ios::binary);
  bad.put(0);
  bad.close();
  CHECK_THROWS(load_cifar10(tmp.file("bad.bin")));
}

TEST_CASE("raw directory import") {
  TempDir tmp;
  fs::create_directories(tmp.file("raw"));
  for (int i = 0; i < 3; ++i) {
    std::ofstream out(tmp.file("raw/img" + std::to_string(i) + ".bin"), std::ios::binary);
    for (int b = 0; b < 4 * 4 * 3; ++b) out.put(static_cast<char>(i * 40 + b % 8));
  }
  Dataset ds = load_raw_dir(tmp.file("raw"), 4, 4, 3);
  CHECK(ds.count == 3);
  CHECK(ds.c == 3);
  CHECK(ds.pixels[0] == 0.0f);

  std::ofstream out(tmp.file("raw/odd.bin"), std::ios::binary);
  out.put(1);
  out.close();
  CHECK_THROWS(load_raw_dir(tmp.file("raw"), 4, 4, 3));
}

TEST_CASE("synthetic datasets") {
  SUBCASE("identical bytes across runs for a fixed seed") {
    Dataset a = synth_dataset(SynthKind::shapes, 100, 16, 42);
    Dataset b = synth_dataset(SynthKind::shapes, 100, 16, 42);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    Dataset c = synth_dataset(SynthKind::shapes, 100, 16, 43);
    CHECK(a.pixels != c.pixels);
  }
  SUBCASE("rectangle and ellipse class means differ") {
    Dataset ds = synth_dataset(SynthKind::shapes, 400, 16, 7);
    std::vector<double> mean_rect(16 * 16, 0.0), mean_ellipse(16 * 16, 0.0);
    size_t n_rect = 0, n_ellipse = 0;
    for (size_t i = 0; i < ds.count; ++i) {
      auto& dst = ds.labels[i] == 0 ? mean_rect : mean_ellipse;
      (ds.labels[i] == 0 ? n_rect : n_ellipse) += 1;
      for (size_t p = 0; p < 256; ++p) dst[p] += ds.pixels[i * 256 + p];
    }
    REQUIRE(n_rect > 0);
    REQUIRE(n_ellipse > 0);
    double gap = 0.0;
    for (size_t p = 0; p < 256; ++p) {
      const double d = mean_rect[p] / n_rect - mean_ellipse[p] / n_ellipse;
      gap += d * d;
    }
    CHECK(gap > 0.0);
  }
  SUBCASE("values stay within [0,1]") {
    for (SynthKind kind : {SynthKind::shapes, SynthKind::two_gaussians}) {
      Dataset ds = synth_dataset(kind, 50, 12, 3);
      for (float v : ds.pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
  SUBCASE("two-gaussians clusters sit in opposite quadrants") {
    Dataset ds = synth_dataset(SynthKind::two_gaussians, 200, 16, 5);
    double mass_ul_c0 = 0.0, mass_ul_c1 = 0.0;
    size_t n0 = 0, n1 = 0;
    for (size_t i = 0; i < ds.count; ++i) {
      double ul = 0.0;
      for (size_t y = 0; y < 8; ++y)
        for (size_t x = 0; x < 8; ++x) ul += ds.pixels[i * 256 + y * 16 + x];
      if (ds.labels[i] == 0) {
        mass_ul_c0 += ul;
        ++n0;
      } else {
        mass_ul_c1 += ul;
        ++n1;
      }
    }
    REQUIRE(n0 > 0);
    REQUIRE(n1 > 0);
    CHECK(mass_ul_c0 / n0 > mass_ul_c1 / n1);
  }
  SUBCASE("canvas below 8 pixels is rejected") {
    CHECK_THROWS_AS(synth_dataset(SynthKind::shapes, 10, 7, 1), std::invalid_argument);
  }
}

TEST_CASE("matrix file round trip") {
  TempDir tmp;
  Eigen::MatrixXd m(3, 2);
  m << 1.5, -2.25, 3.0, 1e-300, 0.0, 7.75;
  const std::string path = tmp.file("m.svmat");
  save_matrix(m, path);
  Eigen::MatrixXd loaded = load_matrix(path);
  REQUIRE(loaded.rows() == 3);
  REQUIRE(loaded.cols() == 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) CHECK(loaded(i, j) == m(i, j));

  SUBCASE("truncated payload is rejected") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size - 5);
    CHECK_THROWS_WITH_AS(load_matrix(path), doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("foreign file is rejected") {
    std::ofstream out(tmp.file("junk.svmat"), std::ios::binary);
    out << "not a matrix";
    out.close();
    CHECK_THROWS_WITH_AS(load_matrix(tmp.file("junk.svmat")), doctest::Contains("magic"),
                         std::runtime_error);
  }
}

TEST_CASE("checkpoint container") {
  TempDir tmp;
  VaeModel model = VaeModel::build(tiny_config(ModelKind::split), 71);
  CheckpointData data = make_checkpoint(model);
  data.meta = {{"base_seed", 71}, {"epochs_completed", 0}};

  BetaSchedule beta;
  beta.beta0 = 2.0;
  beta.mode = BetaMode::balanced;
  update_beta(beta, 0.25);
  data.beta = beta;

  Adam adam(model.params());
  CheckpointData::AdamState adam_state;
  adam_state.cfg = adam.config();
  adam_state.step_count = adam.step_count();
  adam_state.slots = adam.state();
  data.adam = adam_state;

  GaussianMixture gmm;
  gmm.weights = Eigen::VectorXd::Ones(1);
  gmm.means = Eigen::MatrixXd::Zero(1, 4);
  gmm.covariances = {Eigen::MatrixXd::Identity(4, 4)};
  data.mixture = gmm;

  const std::string path = tmp.file("model.ckpt");
  save_checkpoint(data, path);

  SUBCASE("round trip is bitwise for every parameter block") {
    CheckpointData loaded = load_checkpoint(path);
    REQUIRE(loaded.params.size() == data.params.size());
    for (const auto& [name, block] : data.params) {
      REQUIRE(loaded.params.count(name) == 1);
      CHECK(loaded.params.at(name).shape == block.shape);
      CHECK(loaded.params.at(name).values == block.values);
    }
    REQUIRE(loaded.beta.has_value());
    CHECK(loaded.beta->recon_ema == beta.recon_ema);
    REQUIRE(loaded.adam.has_value());
    CHECK(loaded.adam->step_count == 0);
    REQUIRE(loaded.mixture.has_value());
    CHECK(loaded.mixture->dims() == 4);
    CHECK(loaded.meta.at("base_seed").get<int>() == 71);

    VaeModel rebuilt = model_from_checkpoint(loaded);
    for (const std::string& name : model.params().names()) {
      CHECK(rebuilt.params().get(name).values() == model.params().get(name).values());
    }
  }
  SUBCASE("a corrupted byte fails the checksum and yields no state") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char byte;
    f.seekg(200);
    f.get(byte);
    f.seekp(200);
    f.put(static_cast<char>(byte ^ 0x40));
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"),
                         std::runtime_error);
  }
  SUBCASE("version mismatch refuses to load") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const uint32_t bad_version = 9;
    f.write(reinterpret_cast<const char*>(&bad_version), 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"),
                         std::runtime_error);
  }
  SUBCASE("a split checkpoint refuses a vanilla head") {
    VaeModel vanilla = VaeModel::build(tiny_config(ModelKind::vanilla), 71);
    CheckpointData loaded = load_checkpoint(path);
    CHECK_THROWS_WITH_AS(apply_checkpoint_params(vanilla.params(), loaded),
                         doctest::Contains("head"), std::runtime_error);
  }
}

TEST_CASE("grid export") {
  TempDir tmp;
  SUBCASE("layout arithmetic for 4 rows of 10 images") {
    Rng rng(5);
    std::vector<Tensor> rows;
    for (int r = 0; r < 4; ++r) {
      std::vector<double> vals(10 * 28 * 28);
      for (double& v : vals) v = rng.next_uniform();
      rows.push_back(Tensor::from_values({10, 28, 28, 1}, std::move(vals)));
    }
    const std::string path = tmp.file("grid.png");
    export_grid(rows, path, 2);
    ImageU8 img = load_image(path);
    CHECK(img.h == 4 * 28 + 5 * 2);
    CHECK(img.w == 10 * 28 + 11 * 2);
    CHECK(img.c == 1);
  }
  SUBCASE("all-0.5 input produces a uniform mid-gray file") {
    std::vector<Tensor> rows = {Tensor::full({3, 8, 8, 1}, 0.5)};
    const std::string path = tmp.file("gray.png");
    export_grid(rows, path);
    ImageU8 img = load_image(path);
    for (uint8_t v : img.pixels) CHECK(v == 128);
  }
  SUBCASE("round trip recovers values within 8-bit quantization") {
    Rng rng(6);
    std::vector<double> vals(5 * 9 * 9);
    for (double& v : vals) v = rng.next_uniform();
    Tensor row = Tensor::from_values({5, 9, 9, 1}, vals);
    for (const char* name : {"roundtrip.png", "roundtrip.ppm"}) {
      const std::string path = tmp.file(name);
      export_grid({row}, path, 0);
      ImageU8 img = load_image(path);
      Tensor back = image_to_tensor(img);
      // margin 0: the grid is the 5 images side by side
      for (size_t i = 0; i < 5; ++i)
        for (size_t y = 0; y < 9; ++y)
          for (size_t x = 0; x < 9; ++x) {
            const double expect = row.at({i, y, x, 0});
            const double got = back.at({y, i * 9 + x, 0});
            CHECK(std::abs(expect - got) <= 1.0 / 255.0 + 1e-12);
          }
    }
  }
  SUBCASE("mixed image sizes are rejected") {
    std::vector<Tensor> rows = {Tensor::full({2, 8, 8, 1}, 0.5), Tensor::full({2, 6, 6, 1}, 0.5)};
    CHECK_THROWS_AS(export_grid(rows, tmp.file("bad.png")), std::invalid_argument);
  }
  SUBCASE("gray rows are promoted inside RGB grids") {
    std::vector<Tensor> rows = {Tensor::full({2, 4, 4, 1}, 0.25), Tensor::full({2, 4, 4, 3}, 0.75)};
    const std::string path = tmp.file("mixed.png");
    export_grid(rows, path);
    ImageU8 img = load_image(path);
    CHECK(img.c == 3);
  }
}
