// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oie/autograd.hpp"
#include "oie/tensor.hpp"

namespace oie {

struct ModelConfig {
  int width = 64;  // d
  int blocks = 4;
  int heads = 4;
  int ffn_mult = 4;
  int patch = 4;
  int frames = 8;
  int frame_height = 32;
  int frame_width = 32;
  int channels = 3;
  std::array<int, 4> guider_channels = scaled_guider_channels(64);
  int text_vocab = 16;
  std::uint64_t seed = 0;

  int tokens_per_frame() const { return (frame_height / patch) * (frame_width / patch); }
  int video_tokens() const { return frames * tokens_per_frame(); }
  int ffn_width() const { return width * ffn_mult; }

  // Throws ConfigError naming the first invalid field.
  void validate() const;

  // 32/96/192/256 scaled by d/1024, floored at 4.
  static std::array<int, 4> scaled_guider_channels(int d);

  bool operator==(const ModelConfig&) const = default;
};

enum class LoraSite { Q, K, V, O, FfnUp, FfnDown };

struct LoraConfig {
  int rank = 4;
  double alpha = 4.0;
  std::vector<LoraSite> sites = {LoraSite::Q, LoraSite::K, LoraSite::V,
                                 LoraSite::O, LoraSite::FfnUp, LoraSite::FfnDown};
  // Q/K/V/O sites apply to cross-attention as well as self-attention.
  bool cross_attention = true;
  std::uint64_t seed = 0;

  double delta_scale() const { return alpha / rank; }
  bool operator==(const LoraConfig&) const = default;
};

template <class T>
struct Param {
  Mat<T> value;
  bool trainable = true;
};

// A concrete adapted projection: host weight name and the adapter key
// ("<block>.<site>", e.g. "2.sa_q").
struct LoraTarget {
  std::string host;
  std::string key;
};

template <class T>
struct Model {
  ModelConfig config;
  std::map<std::string, Param<T>> params;
  std::optional<LoraConfig> lora;

  const Mat<T>& at(const std::string& name) const;
  Mat<T>& at(const std::string& name);
  bool has(const std::string& name) const { return params.count(name) != 0; }
  bool has_guider() const { return has("guider.proj.weight"); }

  template <class U>
  Model<U> cast() const;
};

// Adapted projections for a config, in deterministic order.
std::vector<LoraTarget> lora_targets(const ModelConfig& cfg, const LoraConfig& lora);
std::string lora_site_name(LoraSite s);
LoraSite lora_site_from_string(const std::string& s);

bool is_base_param(const std::string& name);

// Leaves for model parameters on one graph; each name is bound once so that
// repeated uses accumulate into a single gradient.
template <class T>
class ParamBinding {
 public:
  ParamBinding(ag::Graph<T>& graph, const Model<T>& model) : graph_(graph), model_(model) {}

  const ag::Var<T>& operator()(const std::string& name);
  ag::Graph<T>& graph() { return graph_; }
  const Model<T>& model() const { return model_; }
  // Gradients of bound trainable parameters after Graph::backward.
  std::map<std::string, Mat<T>> gradients() const;

 private:
  ag::Graph<T>& graph_;
  const Model<T>& model_;
  std::map<std::string, ag::Var<T>> vars_;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LoraConfig& c);
LoraConfig lora_config_from_json(const nlohmann::json& j);

}  // namespace oie
