// SPDX-License-Identifier: Apache-2.0
#include "oie/checkpoint.hpp"

#include <fstream>

#include "oie/adapters.hpp"

namespace oie {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "oie-checkpoint-1";

nlohmann::json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw RuntimeError("checkpoint: missing " + p.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError("checkpoint: malformed " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream f(p);
  f << j.dump(2) << "\n";
  if (!f) throw RuntimeError("checkpoint: cannot write " + p.string());
}

void save_mats(const fs::path& dir, const std::map<std::string, Mat<float>>& mats) {
  fs::create_directories(dir);
  for (const auto& [name, m] : mats) save_tns(dir / (name + ".tns"), to_tensor(m));
}

std::map<std::string, Mat<float>> load_mats(const fs::path& dir, const std::vector<std::string>& names) {
  std::map<std::string, Mat<float>> out;
  for (const auto& n : names) {
    const fs::path p = dir / (n + ".tns");
    if (!fs::exists(p)) throw RuntimeError("checkpoint: missing tensor " + p.string());
    out[n] = mat_from_tensor<float>(load_tns(p));
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const CodecParams& c) {
  return {{"patch", c.patch}, {"width", c.width}, {"channels", c.channels}, {"seed", c.seed},
          {"garment_mode", to_string(c.mode)}, {"scale", c.scale}};
}

CodecParams codec_params_from_json(const nlohmann::json& j) {
  CodecParams c;
  c.patch = j.value("patch", c.patch);
  c.width = j.value("width", c.width);
  c.channels = j.value("channels", c.channels);
  c.seed = j.value("seed", c.seed);
  c.scale = j.value("scale", c.scale);
  if (j.contains("garment_mode")) c.mode = garment_mode_from_string(j.at("garment_mode").get<std::string>());
  return c;
}

nlohmann::json to_json(const FlowConfig& c) {
  const auto& o = c.optimizer;
  return {{"lr", o.lr},       {"beta1", o.beta1}, {"beta2", o.beta2},
          {"eps", o.eps},     {"weight_decay", o.weight_decay}, {"pin_first_frame", c.pin_first_frame}};
}

FlowConfig flow_config_from_json(const nlohmann::json& j) {
  FlowConfig c;
  auto& o = c.optimizer;
  o.lr = j.value("lr", o.lr);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.eps = j.value("eps", o.eps);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  c.pin_first_frame = j.value("pin_first_frame", c.pin_first_frame);
  if (!(o.lr > 0.0) || o.beta1 < 0.0 || o.beta1 >= 1.0 || o.beta2 < 0.0 || o.beta2 >= 1.0 || !(o.eps > 0.0)) {
    throw ConfigError("flow config: invalid optimizer hyperparameters");
  }
  return c;
}

void save_checkpoint(const fs::path& dir, const Model<float>& model, const CodecParams& codec, const FlowConfig& flow,
                     const TrainState<float>* state) {
  fs::create_directories(dir / "weights");
  nlohmann::json frozen = nlohmann::json::array();
  nlohmann::json names = nlohmann::json::array();
  std::map<std::string, Mat<float>> weights;
  for (const auto& [name, p] : model.params) {
    names.push_back(name);
    if (!p.trainable) frozen.push_back(name);
    weights[name] = p.value;
  }
  write_json(dir / "config.json", {{"format", kFormat},
                                   {"model", to_json(model.config)},
                                   {"codec", to_json(codec)},
                                   {"lora", model.lora ? to_json(*model.lora) : nlohmann::json(nullptr)},
                                   {"flow", to_json(flow)},
                                   {"params", names},
                                   {"frozen", frozen}});
  save_mats(dir / "weights", weights);
  if (state) {
    write_json(dir / "state.json", {{"step", state->step}, {"seed", state->seed}, {"losses", state->losses}});
    save_mats(dir / "adam" / "m", state->adam_m);
    save_mats(dir / "adam" / "v", state->adam_v);
  }
}

Checkpoint load_checkpoint(const fs::path& dir, CheckpointForm form) {
  const auto cfg = read_json(dir / "config.json");
  if (cfg.value("format", "") != kFormat) throw RuntimeError("checkpoint: unknown format in " + dir.string());
  Checkpoint ck;
  ck.model.config = model_config_from_json(cfg.at("model"));
  ck.model.config.validate();
  if (!cfg.at("lora").is_null()) ck.model.lora = lora_config_from_json(cfg.at("lora"));
  ck.codec = codec_params_from_json(cfg.at("codec"));
  ck.flow = flow_config_from_json(cfg.at("flow"));
  const auto names = cfg.at("params").get<std::vector<std::string>>();
  const auto frozen = cfg.at("frozen").get<std::vector<std::string>>();
  auto weights = load_mats(dir / "weights", names);
  for (auto& [name, m] : weights) ck.model.params[name] = {std::move(m), true};
  for (const auto& name : frozen) {
    auto it = ck.model.params.find(name);
    if (it == ck.model.params.end()) throw RuntimeError("checkpoint: frozen entry names unknown parameter " + name);
    it->second.trainable = false;
  }
  if (fs::exists(dir / "state.json")) {
    const auto sj = read_json(dir / "state.json");
    TrainState<float> st;
    st.model = ck.model;
    st.step = sj.at("step").get<std::int64_t>();
    st.seed = sj.at("seed").get<std::uint64_t>();
    st.losses = sj.at("losses").get<std::vector<double>>();
    std::vector<std::string> moment_names;
    if (fs::exists(dir / "adam" / "m")) {
      for (const auto& e : fs::directory_iterator(dir / "adam" / "m")) moment_names.push_back(e.path().stem().string());
    }
    std::sort(moment_names.begin(), moment_names.end());
    st.adam_m = load_mats(dir / "adam" / "m", moment_names);
    st.adam_v = load_mats(dir / "adam" / "v", moment_names);
    ck.state = std::move(st);
  }
  if (form == CheckpointForm::Merged) {
    ck.model = merge_lora(ck.model);
    ck.state.reset();
  }
  return ck;
}

}  // namespace oie
