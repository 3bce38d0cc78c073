// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "oie/model.hpp"

namespace oie {

// Adds "lora.<block>.<site>.{A,B}" factors for every selected projection,
// freezes the base weights and leaves adapters, guider and text trainable.
// A ~ N(0, 1/r), B = 0, so the adapted forward starts identical to the base.
template <class T>
Model<T> attach_lora(const Model<T>& model, const LoraConfig& cfg);

// Folds W + (alpha/r) A B^T into the host weights and drops the adapters.
// Identity on a model without adapters.
template <class T>
Model<T> merge_lora(const Model<T>& model);

// Removes the mask guider (the "w/o agnostic" configuration).
template <class T>
Model<T> detach_guider(const Model<T>& model);

struct ParamReport {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  std::int64_t added_over_base = 0;  // guider + adapters
  std::map<std::string, std::int64_t> by_group;  // base / text / guider / lora
};

template <class T>
ParamReport count_params(const Model<T>& model);

// Added-parameter share (total - base) / base.
double overhead_ratio(double base_params, double total_params);

}  // namespace oie
