// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "oie/model.hpp"

namespace oie {

// FLOPs convention: 2*m*k*n per matrix product, 2*out_voxels*Cin*Cout*kt*kh*kw
// per convolution. Normalisation, softmax, activations and elementwise ops
// are not counted. All estimates are for one forward pass.
std::int64_t matmul_flops(std::int64_t m, std::int64_t k, std::int64_t n);
std::int64_t conv3d_flops(std::int64_t out_voxels, std::int64_t c_in, std::int64_t c_out, int kt = 3, int kh = 3,
                          int kw = 3);
// Q/K/V/O projections plus scores and value products over n tokens.
std::int64_t self_attention_flops(std::int64_t n, std::int64_t d);

struct FlopsBreakdown {
  std::int64_t base = 0;
  std::int64_t guider = 0;
  std::int64_t lora = 0;  // unmerged adapter path: x*A then (xA)*B^T per site

  std::int64_t total() const { return base + guider + lora; }
};

// `garment_rows` defaults to one frame block (tokens_per_frame).
FlopsBreakdown estimate_flops(const ModelConfig& cfg, bool guider, const std::optional<LoraConfig>& lora,
                              std::optional<int> garment_rows = std::nullopt);

struct EfficiencyReport {
  std::int64_t base_params = 0;
  std::int64_t total_params = 0;
  std::int64_t trainable_params = 0;
  double added_over_base_pct = 0.0;
  double trainable_pct = 0.0;  // trainable / total
  std::int64_t flops_base = 0;
  std::int64_t flops_conditioned = 0;  // base + guider + unmerged adapter path
  double flops_overhead_pct = 0.0;
  std::int64_t flops_merged = 0;  // adapters folded into the host weights
  double flops_merged_overhead_pct = 0.0;
  FlopsBreakdown breakdown;
  double wall_time_per_step = 0.0;  // seconds, median; 0 when not measured
  std::string environment;
};

// Percentage (total - base) / base * 100.
double overhead_pct(double base, double total);

struct TimingOptions {
  int runs = 5;
  int warmups = 2;
  bool enabled = true;
};

// `conditioned` must share `base_config`. Wall time is the median forward
// pass of `conditioned` on seeded random inputs.
EfficiencyReport build_report(const ModelConfig& base_config, const Model<float>& conditioned,
                              const TimingOptions& timing = {});

nlohmann::json to_json(const EfficiencyReport& r);
// Fixed-width table with the columns FLOPs(G), s/it, Inference Param, Training Param.
std::string render_table(const EfficiencyReport& r);
// Scatter rows: model, inference_params, training_params, flops.
std::string render_csv(const EfficiencyReport& r);

}  // namespace oie
