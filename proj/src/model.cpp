// SPDX-License-Identifier: Apache-2.0
#include "oie/model.hpp"

#include <algorithm>

namespace oie {

std::array<int, 4> ModelConfig::scaled_guider_channels(int d) {
  constexpr std::array<int, 4> kFullScale = {32, 96, 192, 256};
  std::array<int, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = std::max(4, kFullScale[i] * d / 1024);
  return out;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (width < 1) fail("width must be positive");
  if (heads < 1) fail("heads must be positive");
  if (width % heads != 0) fail("d not divisible by n_heads");
  if (blocks < 1) fail("blocks must be positive");
  if (ffn_mult < 1) fail("ffn_mult must be positive");
  if (patch < 1 || (patch & (patch - 1)) != 0 || patch > 16) fail("patch must be a power of two <= 16");
  if (frames < 1) fail("frames must be positive");
  if (frame_height % patch != 0 || frame_width % patch != 0 || frame_height < 1 || frame_width < 1) {
    fail("frame size not divisible by patch");
  }
  if (channels < 1) fail("channels must be positive");
  for (int c : guider_channels)
    if (c < 1) fail("guider channels must be positive");
  if (text_vocab < 1) fail("text_vocab must be positive");
}

std::string lora_site_name(LoraSite s) {
  switch (s) {
    case LoraSite::Q: return "q";
    case LoraSite::K: return "k";
    case LoraSite::V: return "v";
    case LoraSite::O: return "o";
    case LoraSite::FfnUp: return "ffn_up";
    case LoraSite::FfnDown: return "ffn_down";
  }
  return "?";
}

LoraSite lora_site_from_string(const std::string& s) {
  for (auto site : {LoraSite::Q, LoraSite::K, LoraSite::V, LoraSite::O, LoraSite::FfnUp, LoraSite::FfnDown}) {
    if (lora_site_name(site) == s) return site;
  }
  throw ConfigError("unknown LoRA site: " + s);
}

std::vector<LoraTarget> lora_targets(const ModelConfig& cfg, const LoraConfig& lora) {
  std::vector<LoraTarget> out;
  auto has = [&](LoraSite s) { return std::find(lora.sites.begin(), lora.sites.end(), s) != lora.sites.end(); };
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string blk = "blocks." + std::to_string(b) + ".";
    const std::string key = std::to_string(b) + ".";
    std::vector<std::string> attn = {"sa"};
    if (lora.cross_attention) attn.push_back("ca");
    for (const auto& a : attn) {
      for (auto s : {LoraSite::Q, LoraSite::K, LoraSite::V, LoraSite::O}) {
        if (!has(s)) continue;
        const std::string n = lora_site_name(s);
        out.push_back({blk + a + "." + n + ".weight", key + a + "_" + n});
      }
    }
    if (has(LoraSite::FfnUp)) out.push_back({blk + "ffn.up.weight", key + "ffn_up"});
    if (has(LoraSite::FfnDown)) out.push_back({blk + "ffn.down.weight", key + "ffn_down"});
  }
  return out;
}

bool is_base_param(const std::string& name) {
  return name.rfind("lora.", 0) != 0 && name.rfind("guider.", 0) != 0 && name.rfind("text.", 0) != 0;
}

template <class T>
const Mat<T>& Model<T>::at(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) throw ConfigError("model has no parameter " + name);
  return it->second.value;
}

template <class T>
Mat<T>& Model<T>::at(const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw ConfigError("model has no parameter " + name);
  return it->second.value;
}

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.config = config;
  out.lora = lora;
  for (const auto& [name, p] : params) out.params[name] = {p.value.template cast<U>(), p.trainable};
  return out;
}

template <class T>
const ag::Var<T>& ParamBinding<T>::operator()(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  const auto pit = model_.params.find(name);
  if (pit == model_.params.end()) throw ConfigError("model has no parameter " + name);
  return vars_[name] = graph_.leaf(pit->second.value, pit->second.trainable);
}

template <class T>
std::map<std::string, Mat<T>> ParamBinding<T>::gradients() const {
  std::map<std::string, Mat<T>> out;
  for (const auto& [name, v] : vars_) {
    if (!v->requires_grad) continue;
    out[name] = v->grad.size() ? v->grad : Mat<T>::Zero(v->value.rows(), v->value.cols());
  }
  return out;
}

template struct Model<float>;
template struct Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;
template class ParamBinding<float>;
template class ParamBinding<double>;

nlohmann::json to_json(const ModelConfig& c) {
  return {{"width", c.width},
          {"blocks", c.blocks},
          {"heads", c.heads},
          {"ffn_mult", c.ffn_mult},
          {"patch", c.patch},
          {"frames", c.frames},
          {"frame_height", c.frame_height},
          {"frame_width", c.frame_width},
          {"channels", c.channels},
          {"guider_channels", c.guider_channels},
          {"text_vocab", c.text_vocab},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.width = j.value("width", c.width);
  c.guider_channels = ModelConfig::scaled_guider_channels(c.width);
  c.blocks = j.value("blocks", c.blocks);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.patch = j.value("patch", c.patch);
  c.frames = j.value("frames", c.frames);
  c.frame_height = j.value("frame_height", c.frame_height);
  c.frame_width = j.value("frame_width", c.frame_width);
  c.channels = j.value("channels", c.channels);
  if (j.contains("guider_channels")) c.guider_channels = j.at("guider_channels").get<std::array<int, 4>>();
  c.text_vocab = j.value("text_vocab", c.text_vocab);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json to_json(const LoraConfig& c) {
  std::vector<std::string> sites;
  for (auto s : c.sites) sites.push_back(lora_site_name(s));
  return {{"rank", c.rank}, {"alpha", c.alpha}, {"sites", sites}, {"cross_attention", c.cross_attention}, {"seed", c.seed}};
}

LoraConfig lora_config_from_json(const nlohmann::json& j) {
  LoraConfig c;
  c.rank = j.value("rank", c.rank);
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("sites")) {
    c.sites.clear();
    for (const auto& s : j.at("sites")) c.sites.push_back(lora_site_from_string(s.get<std::string>()));
  }
  c.cross_attention = j.value("cross_attention", c.cross_attention);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace oie
