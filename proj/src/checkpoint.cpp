#include "svlab/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace svlab {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) { raw(&v, sizeof(v)); }
  void u64(uint64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  const std::vector<uint8_t>& bytes() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<uint8_t> buf) : buf_(std::move(buf)) {}
  uint8_t u8() { return *take(1); }
  uint32_t u32() { return read_pod<uint32_t>(); }
  uint64_t u64() { return read_pod<uint64_t>(); }
  double f64() { return read_pod<double>(); }
  std::string str() {
    const uint32_t n = u32();
    const uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::vector<double> doubles() {
    const uint64_t n = u64();
    std::vector<double> out(n);
    std::memcpy(out.data(), take(n * sizeof(double)), n * sizeof(double));
    return out;
  }
  bool exhausted() const { return at_ == buf_.size(); }

 private:
  template <typename T>
  T read_pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const uint8_t* take(size_t n) {
    if (at_ + n > buf_.size()) throw std::runtime_error("checkpoint: truncated section payload");
    const uint8_t* p = buf_.data() + at_;
    at_ += n;
    return p;
  }
  std::vector<uint8_t> buf_;
  size_t at_ = 0;
};

std::vector<uint8_t> encode_params(const std::map<std::string, CheckpointData::Block>& params) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, block] : params) {
    w.str(name);
    w.u8(block.trainable ? 1 : 0);
    w.u32(static_cast<uint32_t>(block.shape.size()));
    for (size_t d : block.shape) w.u64(d);
    w.doubles(block.values);
  }
  return w.bytes();
}

std::map<std::string, CheckpointData::Block> decode_params(ByteReader r) {
  std::map<std::string, CheckpointData::Block> params;
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    CheckpointData::Block block;
    block.trainable = r.u8() != 0;
    const uint32_t ndim = r.u32();
    block.shape.resize(ndim);
    for (uint32_t d = 0; d < ndim; ++d) block.shape[d] = r.u64();
    block.values = r.doubles();
    if (block.values.size() != shape_size(block.shape)) {
      throw std::runtime_error("checkpoint: block '" + name +
                               "' element count does not match its shape");
    }
    params.emplace(std::move(name), std::move(block));
  }
  return params;
}

std::vector<uint8_t> encode_adam(const CheckpointData::AdamState& adam) {
  ByteWriter w;
  w.f64(adam.cfg.lr);
  w.f64(adam.cfg.beta1);
  w.f64(adam.cfg.beta2);
  w.f64(adam.cfg.eps);
  w.u64(adam.step_count);
  w.u32(static_cast<uint32_t>(adam.slots.size()));
  for (const auto& [name, slot] : adam.slots) {
    w.str(name);
    w.doubles(slot.m);
    w.doubles(slot.v);
  }
  return w.bytes();
}

CheckpointData::AdamState decode_adam(ByteReader r) {
  CheckpointData::AdamState adam;
  adam.cfg.lr = r.f64();
  adam.cfg.beta1 = r.f64();
  adam.cfg.beta2 = r.f64();
  adam.cfg.eps = r.f64();
  adam.step_count = r.u64();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Adam::Slot slot;
    slot.m = r.doubles();
    slot.v = r.doubles();
    adam.slots.emplace(std::move(name), std::move(slot));
  }
  return adam;
}

std::vector<uint8_t> encode_beta(const BetaSchedule& beta) {
  ByteWriter w;
  w.f64(beta.beta0);
  w.u8(beta.mode == BetaMode::fixed ? 0 : 1);
  w.f64(beta.ema_decay);
  w.u8(beta.has_measurement ? 1 : 0);
  w.f64(beta.recon_ema);
  w.f64(beta.initial_recon);
  return w.bytes();
}

BetaSchedule decode_beta(ByteReader r) {
  BetaSchedule beta;
  beta.beta0 = r.f64();
  beta.mode = r.u8() == 0 ? BetaMode::fixed : BetaMode::balanced;
  beta.ema_decay = r.f64();
  beta.has_measurement = r.u8() != 0;
  beta.recon_ema = r.f64();
  beta.initial_recon = r.f64();
  return beta;
}

std::vector<uint8_t> encode_gmm(const GaussianMixture& gmm) {
  ByteWriter w;
  w.u8(gmm.kind == CovarianceKind::full ? 0 : 1);
  const int n = gmm.n_components();
  const int k = gmm.dims();
  w.u32(static_cast<uint32_t>(n));
  w.u32(static_cast<uint32_t>(k));
  for (int c = 0; c < n; ++c) w.f64(gmm.weights[c]);
  for (int c = 0; c < n; ++c)
    for (int j = 0; j < k; ++j) w.f64(gmm.means(c, j));
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) w.f64(gmm.covariances[c](i, j));
  return w.bytes();
}

GaussianMixture decode_gmm(ByteReader r) {
  GaussianMixture gmm;
  gmm.kind = r.u8() == 0 ? CovarianceKind::full : CovarianceKind::diagonal;
  const int n = static_cast<int>(r.u32());
  const int k = static_cast<int>(r.u32());
  gmm.weights.resize(n);
  gmm.means.resize(n, k);
  gmm.covariances.assign(n, Eigen::MatrixXd(k, k));
  for (int c = 0; c < n; ++c) gmm.weights[c] = r.f64();
  for (int c = 0; c < n; ++c)
    for (int j = 0; j < k; ++j) gmm.means(c, j) = r.f64();
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) gmm.covariances[c](i, j) = r.f64();
  return gmm;
}

std::vector<uint8_t> json_bytes(const nlohmann::json& j) {
  const std::string text = j.dump();
  return std::vector<uint8_t>(text.begin(), text.end());
}

void write_section(std::ostream& out, const std::string& name,
                   const std::vector<uint8_t>& payload) {
  const auto name_len = static_cast<uint32_t>(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
  out.write(name.data(), name.size());
  const auto payload_len = static_cast<uint64_t>(payload.size());
  out.write(reinterpret_cast<const char*>(&payload_len), sizeof(payload_len));
  if (!payload.empty()) {
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  }
  const auto crc = static_cast<uint32_t>(
      crc32(0L, payload.empty() ? Z_NULL : payload.data(), static_cast<uInt>(payload.size())));
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
}

}  // namespace

void save_checkpoint(const CheckpointData& data, const std::string& path) {
  std::vector<std::pair<std::string, std::vector<uint8_t>>> sections;
  sections.emplace_back("config", json_bytes(data.config));
  sections.emplace_back("meta", json_bytes(data.meta));
  sections.emplace_back("params", encode_params(data.params));
  if (data.adam) sections.emplace_back("adam", encode_adam(*data.adam));
  if (data.beta) sections.emplace_back("beta", encode_beta(*data.beta));
  if (data.mixture) sections.emplace_back("gmm", encode_gmm(*data.mixture));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const auto count = static_cast<uint32_t>(sections.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, payload] : sections) write_section(out, name, payload);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion) {
    throw std::runtime_error("load_checkpoint: version " + std::to_string(version) +
                             " unsupported (expected " + std::to_string(kVersion) + ")");
  }
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header");

  CheckpointData data;
  bool saw_config = false, saw_params = false;
  for (uint32_t s = 0; s < count; ++s) {
    uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint64_t payload_len = 0;
    in.read(reinterpret_cast<char*>(&payload_len), sizeof(payload_len));
    if (!in) throw std::runtime_error("load_checkpoint: truncated section header");
    std::vector<uint8_t> payload(payload_len);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_len));
    uint32_t crc_stored = 0;
    in.read(reinterpret_cast<char*>(&crc_stored), sizeof(crc_stored));
    if (!in) throw std::runtime_error("load_checkpoint: truncated section '" + name + "'");
    const auto crc_actual = static_cast<uint32_t>(
        crc32(0L, payload.empty() ? Z_NULL : payload.data(), static_cast<uInt>(payload.size())));
    if (crc_actual != crc_stored) {
      throw std::runtime_error("load_checkpoint: checksum failure in section '" + name + "'");
    }

    if (name == "config") {
      data.config = nlohmann::json::parse(std::string(payload.begin(), payload.end()));
      saw_config = true;
    } else if (name == "meta") {
      data.meta = nlohmann::json::parse(std::string(payload.begin(), payload.end()));
    } else if (name == "params") {
      data.params = decode_params(ByteReader(std::move(payload)));
      saw_params = true;
    } else if (name == "adam") {
      data.adam = decode_adam(ByteReader(std::move(payload)));
    } else if (name == "beta") {
      data.beta = decode_beta(ByteReader(std::move(payload)));
    } else if (name == "gmm") {
      data.mixture = decode_gmm(ByteReader(std::move(payload)));
    } else {
      throw std::runtime_error("load_checkpoint: unknown section '" + name + "'");
    }
  }
  if (!saw_config || !saw_params) {
    throw std::runtime_error("load_checkpoint: missing config or params section");
  }
  return data;
}

namespace {

nlohmann::json scale_block_to_json(const ScaleBlockCfg& cfg) {
  return {{"num_residual_blocks", cfg.num_residual_blocks},
          {"num_convs", cfg.block.num_convs},
          {"activation", cfg.block.activation == Activation::relu ? "relu" : "leaky_relu"}};
}

ScaleBlockCfg scale_block_from_json(const nlohmann::json& j) {
  ScaleBlockCfg cfg;
  cfg.num_residual_blocks = j.at("num_residual_blocks").get<int>();
  cfg.block.num_convs = j.at("num_convs").get<int>();
  const std::string act = j.at("activation").get<std::string>();
  if (act == "relu") {
    cfg.block.activation = Activation::relu;
  } else if (act == "leaky_relu") {
    cfg.block.activation = Activation::leaky_relu;
  } else {
    throw std::invalid_argument("unknown activation '" + act + "'");
  }
  return cfg;
}

}  // namespace

nlohmann::json vae_config_to_json(const VaeConfig& cfg) {
  return {{"kind", model_kind_name(cfg.kind)},
          {"image", {{"h", cfg.image.h}, {"w", cfg.image.w}, {"c", cfg.image.c}}},
          {"latent_dim", cfg.latent_dim},
          {"encoder",
           {{"base_dim", cfg.encoder.base_dim},
            {"num_scales", cfg.encoder.num_scales},
            {"dense_block_width", cfg.encoder.dense_block_width},
            {"scale_block", scale_block_to_json(cfg.encoder.scale_block)}}},
          {"decoder",
           {{"base_dim", cfg.decoder.base_dim},
            {"min_width", cfg.decoder.min_width},
            {"scale_block", scale_block_to_json(cfg.decoder.scale_block)}}}};
}

VaeConfig vae_config_from_json(const nlohmann::json& j) {
  VaeConfig cfg;
  cfg.kind = model_kind_from_name(j.at("kind").get<std::string>());
  cfg.image.h = j.at("image").at("h").get<size_t>();
  cfg.image.w = j.at("image").at("w").get<size_t>();
  cfg.image.c = j.at("image").at("c").get<size_t>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.encoder.base_dim = j.at("encoder").at("base_dim").get<int>();
  cfg.encoder.num_scales = j.at("encoder").at("num_scales").get<int>();
  cfg.encoder.dense_block_width = j.at("encoder").at("dense_block_width").get<int>();
  cfg.encoder.scale_block = scale_block_from_json(j.at("encoder").at("scale_block"));
  cfg.decoder.base_dim = j.at("decoder").at("base_dim").get<int>();
  cfg.decoder.min_width = j.at("decoder").at("min_width").get<int>();
  cfg.decoder.scale_block = scale_block_from_json(j.at("decoder").at("scale_block"));
  cfg.finalize();
  return cfg;
}

CheckpointData make_checkpoint(const VaeModel& model) {
  CheckpointData data;
  data.config = vae_config_to_json(model.config());
  for (const std::string& name : model.params().names()) {
    const Tensor& t = model.params().get(name);
    data.params.emplace(name, CheckpointData::Block{t.shape(), model.params().is_trainable(name),
                                                    t.values()});
  }
  return data;
}

void apply_checkpoint_params(ParamStore& store, const CheckpointData& data) {
  const auto names = store.names();
  if (names.size() != data.params.size()) {
    throw std::runtime_error("checkpoint: parameter block count mismatch (" +
                             std::to_string(data.params.size()) + " in file, " +
                             std::to_string(names.size()) + " in model)");
  }
  for (const std::string& name : names) {
    auto it = data.params.find(name);
    if (it == data.params.end()) {
      throw std::runtime_error("checkpoint: missing block '" + name + "'");
    }
    Tensor& t = store.get(name);
    if (t.shape() != it->second.shape) {
      throw std::runtime_error("checkpoint: block '" + name + "' has shape " +
                               shape_str(it->second.shape) + ", model expects " +
                               shape_str(t.shape()));
    }
    t.values() = it->second.values;
  }
}

VaeModel model_from_checkpoint(const CheckpointData& data) {
  VaeConfig cfg = vae_config_from_json(data.config);
  VaeModel model = VaeModel::build(cfg, /*seed=*/0);
  apply_checkpoint_params(model.params(), data);
  return model;
}

}  // namespace svlab
