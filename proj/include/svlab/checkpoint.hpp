// Sectioned binary checkpoint container.
//
// Layout: magic "SVAECKPT", version u32, section count u32, then per
// section: name length u32, name bytes, payload length u64, payload bytes,
// CRC32 of the payload. Loading verifies the version and every checksum
// before returning, so a corrupted file never yields partial state.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "svlab/gmm.hpp"
#include "svlab/loss.hpp"
#include "svlab/optimizer.hpp"
#include "svlab/vae.hpp"

namespace svlab {

struct CheckpointData {
  nlohmann::json config;  // model configuration echo
  nlohmann::json meta;    // run bookkeeping: base seed, epochs completed, ...

  struct Block {
    Shape shape;
    bool trainable = false;
    std::vector<double> values;
  };
  std::map<std::string, Block> params;

  struct AdamState {
    AdamConfig cfg;
    uint64_t step_count = 0;
    std::map<std::string, Adam::Slot> slots;
  };
  std::optional<AdamState> adam;
  std::optional<BetaSchedule> beta;
  std::optional<GaussianMixture> mixture;
};

void save_checkpoint(const CheckpointData& data, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

nlohmann::json vae_config_to_json(const VaeConfig& cfg);
VaeConfig vae_config_from_json(const nlohmann::json& j);

// Captures the model's configuration and every parameter block.
CheckpointData make_checkpoint(const VaeModel& model);

// Writes checkpoint blocks into an existing store. Every block must match an
// existing entry by name and shape, and vice versa; a vanilla store refuses
// split-head blocks.
void apply_checkpoint_params(ParamStore& store, const CheckpointData& data);

// Rebuilds the model from the embedded configuration and parameters.
VaeModel model_from_checkpoint(const CheckpointData& data);

}  // namespace svlab
