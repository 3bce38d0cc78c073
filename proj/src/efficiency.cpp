// SPDX-License-Identifier: Apache-2.0
#include "oie/efficiency.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <vector>

#include "oie/adapters.hpp"
#include "oie/backbone.hpp"
#include "oie/conditioning.hpp"

namespace oie {

std::int64_t matmul_flops(std::int64_t m, std::int64_t k, std::int64_t n) { return 2 * m * k * n; }

std::int64_t conv3d_flops(std::int64_t out_voxels, std::int64_t c_in, std::int64_t c_out, int kt, int kh, int kw) {
  return 2 * out_voxels * c_in * c_out * kt * kh * kw;
}

std::int64_t self_attention_flops(std::int64_t n, std::int64_t d) {
  return 4 * matmul_flops(n, d, d) + 2 * matmul_flops(n, n, d);
}

FlopsBreakdown estimate_flops(const ModelConfig& cfg, bool guider, const std::optional<LoraConfig>& lora,
                              std::optional<int> garment_rows) {
  cfg.validate();
  const std::int64_t d = cfg.width, f = cfg.ffn_width();
  const std::int64_t v = cfg.video_tokens();
  const std::int64_t g = garment_rows.value_or(cfg.tokens_per_frame());
  if (g < 1 || g > cfg.tokens_per_frame()) throw ConfigError("estimate_flops: garment rows out of range");
  const std::int64_t n = g + v;

  FlopsBreakdown out;
  std::int64_t& b = out.base;
  b += 2 * matmul_flops(v, d, d) + matmul_flops(g, d, d);  // x_t, pose and garment embeddings
  b += 2 * matmul_flops(1, d, d);                          // timestep MLP
  for (int i = 0; i < cfg.blocks; ++i) {
    b += matmul_flops(1, d, 6 * d);
    b += self_attention_flops(n, d);
    b += 2 * matmul_flops(n, d, d) + 2 * matmul_flops(1, d, d) + 2 * matmul_flops(n, 1, d);  // cross-attention
    b += matmul_flops(n, d, f) + matmul_flops(n, f, d);
  }
  b += matmul_flops(1, d, 2 * d) + matmul_flops(v, d, d);

  if (guider) {
    int cin = cfg.channels + 1;
    for (int l = 0; l < 4; ++l) {
      const auto s = guider_layer_shape(cfg, l);
      const std::int64_t voxels = static_cast<std::int64_t>(s.out_frames()) * s.out_height() * s.out_width();
      out.guider += conv3d_flops(voxels, cin, cfg.guider_channels[l]);
      cin = cfg.guider_channels[l];
    }
    out.guider += matmul_flops(v, cin, d);
  }

  if (lora) {
    for (const auto& [site_host, key] : lora_targets(cfg, *lora)) {
      // Host rows: text-row projections see a single token.
      const bool text_side = site_host.find(".ca.k.") != std::string::npos || site_host.find(".ca.v.") != std::string::npos;
      const bool up = site_host.find("ffn.up") != std::string::npos;
      const bool down = site_host.find("ffn.down") != std::string::npos;
      const std::int64_t rows = text_side ? 1 : n;
      const std::int64_t din = down ? f : d, dout = up ? f : d;
      out.lora += matmul_flops(rows, din, lora->rank) + matmul_flops(rows, lora->rank, dout);
    }
  }
  return out;
}

double overhead_pct(double base, double total) { return 100.0 * (total - base) / base; }

EfficiencyReport build_report(const ModelConfig& base_config, const Model<float>& conditioned,
                              const TimingOptions& timing) {
  if (!(conditioned.config == base_config)) {
    throw ConfigError("build_report: conditioned model config differs from the base config");
  }
  const Model<float> base = detach_guider(merge_lora(init_model<float>(base_config)));
  EfficiencyReport r;
  const ParamReport pb = count_params(base);
  const ParamReport pc = count_params(conditioned);
  r.base_params = pb.total;
  r.total_params = pc.total;
  r.trainable_params = pc.trainable;
  r.added_over_base_pct = overhead_pct(static_cast<double>(r.base_params), static_cast<double>(r.total_params));
  r.trainable_pct = 100.0 * static_cast<double>(r.trainable_params) / static_cast<double>(r.total_params);

  r.breakdown = estimate_flops(base_config, conditioned.has_guider(), conditioned.lora);
  r.flops_base = r.breakdown.base;
  r.flops_conditioned = r.breakdown.total();
  r.flops_overhead_pct = overhead_pct(static_cast<double>(r.flops_base), static_cast<double>(r.flops_conditioned));
  r.flops_merged = r.breakdown.base + r.breakdown.guider;
  r.flops_merged_overhead_pct = overhead_pct(static_cast<double>(r.flops_base), static_cast<double>(r.flops_merged));

  if (timing.enabled) {
    if (timing.runs < 1 || timing.warmups < 0) throw ConfigError("build_report: invalid timing run counts");
    const ModelConfig& c = base_config;
    Rng rng(mix_seed(c.seed, 0x7141E));
    const Mat<float> x = random_normal<float>(c.video_tokens(), c.width, 1.0, rng);
    LatentFrames<float> pose{c.frames, c.tokens_per_frame(), random_normal<float>(c.video_tokens(), c.width, 1.0, rng)};
    GarmentBlock<float> garment{random_normal<float>(c.tokens_per_frame(), c.width, 1.0, rng)};
    const auto seq = assemble_sequence(garment, pose);
    VideoTensor agn(c.frames, c.channels, c.frame_height, c.frame_width, 0.5f);
    VideoTensor mask(c.frames, 1, c.frame_height, c.frame_width, 1.0f);
    const TextStub text = make_text(kDefaultInstruction, c.text_vocab);
    std::vector<double> times;
    for (int i = 0; i < timing.warmups + timing.runs; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      Mat<float> feats;
      if (conditioned.has_guider()) feats = guider_forward(conditioned, agn, mask);
      const Mat<float> out = forward(conditioned, x, seq, text, 0.5f, conditioned.has_guider() ? &feats : nullptr);
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (i >= timing.warmups) times.push_back(dt);
      if (!out.allFinite()) throw RuntimeError("build_report: non-finite forward output while timing");
    }
    std::sort(times.begin(), times.end());
    const std::size_t m = times.size();
    r.wall_time_per_step = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
    r.environment = "cpu, 1 thread, float32 forward, " + std::to_string(timing.runs) + " timed runs after " +
                    std::to_string(timing.warmups) + " warmups";
  }
  return r;
}

nlohmann::json to_json(const EfficiencyReport& r) {
  return {{"base_params", r.base_params},
          {"total_params", r.total_params},
          {"trainable_params", r.trainable_params},
          {"added_over_base_pct", r.added_over_base_pct},
          {"trainable_pct", r.trainable_pct},
          {"flops_base", r.flops_base},
          {"flops_conditioned", r.flops_conditioned},
          {"flops_overhead_pct", r.flops_overhead_pct},
          {"flops_merged", r.flops_merged},
          {"flops_merged_overhead_pct", r.flops_merged_overhead_pct},
          {"flops_breakdown", {{"base", r.breakdown.base}, {"guider", r.breakdown.guider}, {"lora", r.breakdown.lora}}},
          {"wall_time_per_step", r.wall_time_per_step},
          {"environment", r.environment}};
}

std::string render_table(const EfficiencyReport& r) {
  char buf[512];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-22s %12s %10s %16s %16s\n", "Model", "FLOPs(G)", "s/it", "Inference Param",
                "Training Param");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-22s %12.4f %10s %16lld %16lld\n", "base", r.flops_base * 1e-9, "-",
                static_cast<long long>(r.base_params), static_cast<long long>(r.base_params));
  os << buf;
  std::snprintf(buf, sizeof buf, "%-22s %12.4f %10.4f %16lld %16lld\n", "conditioned (adapters)",
                r.flops_conditioned * 1e-9, r.wall_time_per_step, static_cast<long long>(r.total_params),
                static_cast<long long>(r.trainable_params));
  os << buf;
  std::snprintf(buf, sizeof buf, "%-22s %12.4f %10s %16s %16s\n", "conditioned (merged)", r.flops_merged * 1e-9, "-",
                "-", "-");
  os << buf;
  std::snprintf(buf, sizeof buf, "params added over base %.4f%%, trainable/total %.4f%%, FLOPs overhead %.4f%% "
                "(merged %.4f%%)\n",
                r.added_over_base_pct, r.trainable_pct, r.flops_overhead_pct, r.flops_merged_overhead_pct);
  os << buf;
  return os.str();
}

std::string render_csv(const EfficiencyReport& r) {
  std::ostringstream os;
  os << "model,inference_params,training_params,flops\n";
  os << "base," << r.base_params << "," << r.base_params << "," << r.flops_base << "\n";
  os << "conditioned," << r.total_params << "," << r.trainable_params << "," << r.flops_conditioned << "\n";
  return os.str();
}

}  // namespace oie
