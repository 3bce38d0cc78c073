// SPDX-License-Identifier: Apache-2.0
#include "oie/adapters.hpp"

#include <algorithm>
#include <cmath>

namespace oie {

namespace {

std::string group_of(const std::string& name) {
  if (name.rfind("lora.", 0) == 0) return "lora";
  if (name.rfind("guider.", 0) == 0) return "guider";
  if (name.rfind("text.", 0) == 0) return "text";
  return "base";
}

}  // namespace

template <class T>
Model<T> attach_lora(const Model<T>& model, const LoraConfig& cfg) {
  if (model.lora) throw ConfigError("attach_lora: model already carries adapters");
  if (cfg.rank < 1) throw ConfigError("attach_lora: rank must be >= 1");
  const auto targets = lora_targets(model.config, cfg);
  for (const auto& t : targets) {
    const Mat<T>& w = model.at(t.host);
    if (cfg.rank >= std::min(w.rows(), w.cols())) {
      throw ConfigError("attach_lora: rank not < min(d,k) at site " + t.key + " (" + std::to_string(w.rows()) +
                        "x" + std::to_string(w.cols()) + ", r=" + std::to_string(cfg.rank) + ")");
    }
  }
  Model<T> out = model;
  for (auto& [name, p] : out.params) p.trainable = !is_base_param(name);
  Rng rng(mix_seed(cfg.seed, 0x10BA));
  const double std = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
  for (const auto& t : targets) {
    const Mat<T>& w = model.at(t.host);
    out.params["lora." + t.key + ".A"] = {random_normal<T>(static_cast<int>(w.rows()), cfg.rank, std, rng), true};
    out.params["lora." + t.key + ".B"] = {Mat<T>::Zero(w.cols(), cfg.rank), true};
  }
  out.lora = cfg;
  return out;
}

template <class T>
Model<T> merge_lora(const Model<T>& model) {
  Model<T> out = model;
  if (!model.lora) return out;
  const T sc = static_cast<T>(model.lora->delta_scale());
  for (const auto& t : lora_targets(model.config, *model.lora)) {
    const Mat<T>& a = model.at("lora." + t.key + ".A");
    const Mat<T>& b = model.at("lora." + t.key + ".B");
    out.at(t.host) += sc * (a * b.transpose());
    out.params.erase("lora." + t.key + ".A");
    out.params.erase("lora." + t.key + ".B");
  }
  out.lora.reset();
  for (auto& [name, p] : out.params) p.trainable = true;
  return out;
}

template <class T>
Model<T> detach_guider(const Model<T>& model) {
  Model<T> out = model;
  std::erase_if(out.params, [](const auto& kv) { return kv.first.rfind("guider.", 0) == 0; });
  return out;
}

template <class T>
ParamReport count_params(const Model<T>& model) {
  ParamReport r;
  for (const auto& [name, p] : model.params) {
    const auto n = static_cast<std::int64_t>(p.value.size());
    r.total += n;
    if (p.trainable) r.trainable += n;
    const std::string grp = group_of(name);
    r.by_group[grp] += n;
    if (grp == "lora" || grp == "guider") r.added_over_base += n;
  }
  return r;
}

double overhead_ratio(double base_params, double total_params) {
  if (base_params <= 0.0) throw ConfigError("overhead_ratio: base must be positive");
  return (total_params - base_params) / base_params;
}

#define OIE_INSTANTIATE(T)                                              \
  template Model<T> attach_lora<T>(const Model<T>&, const LoraConfig&); \
  template Model<T> merge_lora<T>(const Model<T>&);                     \
  template Model<T> detach_guider<T>(const Model<T>&);                  \
  template ParamReport count_params<T>(const Model<T>&);

OIE_INSTANTIATE(float)
OIE_INSTANTIATE(double)

#undef OIE_INSTANTIATE

}  // namespace oie
