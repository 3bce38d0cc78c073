// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "oie/codec.hpp"
#include "oie/flowmatch.hpp"

namespace oie {

// On-disk layout:
//   config.json            model, codec, lora (or null), flow config, frozen names
//   weights/<name>.tns     one float32 tensor per parameter
//   state.json             step, seed, loss history          (training state only)
//   adam/{m,v}/<name>.tns  optimizer moments                 (training state only)
enum class CheckpointForm { Adapter, Merged };

struct Checkpoint {
  Model<float> model;
  CodecParams codec;
  FlowConfig flow;
  std::optional<TrainState<float>> state;  // model field mirrors `model`
};

void save_checkpoint(const std::filesystem::path& dir, const Model<float>& model, const CodecParams& codec,
                     const FlowConfig& flow, const TrainState<float>* state = nullptr);

// Merged form folds adapters into the host weights on load.
Checkpoint load_checkpoint(const std::filesystem::path& dir, CheckpointForm form = CheckpointForm::Adapter);

nlohmann::json to_json(const CodecParams& c);
CodecParams codec_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FlowConfig& c);
FlowConfig flow_config_from_json(const nlohmann::json& j);

}  // namespace oie
