// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "oie/adapters.hpp"
#include "oie/backbone.hpp"
#include "oie/conditioning.hpp"
#include "oie/efficiency.hpp"
#include "support.hpp"

using namespace oie;

namespace {

bool has(const std::string& s, const char* part) { return s.find(part) != std::string::npos; }

// Walks the parameter table: every 2-D weight is one product whose row count
// is the number of tokens its input carries; attention adds score and value
// products. Biases, embeddings and tables cost nothing.
std::int64_t flops_from_params(const Model<float>& m) {
  const ModelConfig& c = m.config;
  const std::int64_t v = c.video_tokens(), g = c.tokens_per_frame(), n = v + g, d = c.width;
  std::int64_t total = 0;
  auto rows_for = [&](const std::string& name) -> std::int64_t {
    if (name == "patch_in.weight_x") return v;
    if (name == "patch_in.weight_c") return n;
    if (has(name, "time.") || has(name, "ada.")) return 1;
    if (has(name, ".ca.k.") || has(name, ".ca.v.")) return 1;
    if (name == "final.out.weight" || name == "guider.proj.weight") return v;
    return n;
  };
  for (const auto& [name, p] : m.params) {
    if (name.rfind("lora.", 0) == 0) {
      const std::string host_key = name.substr(5, name.size() - 7);  // "<block>.<site>"
      const std::string site = host_key.substr(host_key.find('.') + 1);
      const std::int64_t rows = (site == "ca_k" || site == "ca_v") ? 1 : n;
      total += 2 * rows * p.value.rows() * p.value.cols();
      continue;
    }
    if (!has(name, "weight") || has(name, "guider.conv")) continue;
    total += 2 * rows_for(name) * p.value.rows() * p.value.cols();
  }
  total += c.blocks * (2 * 2 * n * n * d + 2 * 2 * n * 1 * d);
  if (m.has_guider()) {
    for (int l = 0; l < 4; ++l) {
      const auto s = guider_layer_shape(c, l);
      const Mat<float>& w = m.at("guider.conv" + std::to_string(l) + ".weight");
      total += 2 * static_cast<std::int64_t>(s.out_frames()) * s.out_height() * s.out_width() * w.rows() * w.cols();
    }
  }
  return total;
}

}  // namespace

TEST_CASE("FLOPs formula examples") {
  CHECK(matmul_flops(2, 3, 4) == 48);
  CHECK(conv3d_flops(8 * 8 * 8, 1, 1) == 27648);
  const std::int64_t proj = 4 * (2LL * 576 * 64 * 64), scores = 2 * (2LL * 576 * 576 * 64);
  CHECK(proj == 18874368);
  CHECK(scores == 84934656);
  CHECK(self_attention_flops(576, 64) == proj + scores);
}

TEST_CASE("estimate_flops agrees with a parameter-table walk") {
  for (const ModelConfig& c : {ModelConfig{}, test::tiny_config()}) {
    const auto full = attach_lora(init_model<float>(c), LoraConfig{2, 2.0});
    const auto bare = detach_guider(merge_lora(init_model<float>(c)));
    const FlopsBreakdown fb = estimate_flops(c, true, full.lora);
    CHECK(fb.total() == flops_from_params(full));
    CHECK(fb.base == flops_from_params(bare));
    CHECK(estimate_flops(c, false, std::nullopt).total() == fb.base);
    CHECK(fb.total() == fb.base + fb.guider + fb.lora);
  }
}

TEST_CASE("FLOPs grow with sequence length and width") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    c.heads = 1 + static_cast<int>(rng.next() % 4);
    c.width = c.heads * (8 + 8 * static_cast<int>(rng.next() % 4));
    if (c.width < 48) c.width = 48 * c.heads;
    c.frames = 2 + static_cast<int>(rng.next() % 6);
    c.blocks = 1 + static_cast<int>(rng.next() % 3);
    ModelConfig longer = c, wider = c;
    longer.frames += 1;
    wider.width += c.heads;
    const LoraConfig lc;
    CHECK(estimate_flops(longer, true, lc).total() > estimate_flops(c, true, lc).total());
    CHECK(estimate_flops(wider, true, lc).total() > estimate_flops(c, true, lc).total());
    CHECK(estimate_flops(c, true, lc, 1).total() < estimate_flops(c, true, lc).total());
  }
}

TEST_CASE("overhead arithmetic") {
  CHECK(overhead_pct(14.28602e9, 14.36269e9) == doctest::Approx(0.536678).epsilon(1e-5));
  CHECK(std::round(overhead_pct(14.28602e9, 14.36269e9) * 1e4) / 1e4 == 0.5367);
  CHECK(100 * overhead_ratio(14.28602e9, 14.36269e9) == doctest::Approx(overhead_pct(14.28602e9, 14.36269e9)));
  CHECK(overhead_pct(5.0, 5.0) == 0.0);
  CHECK_THROWS_AS(overhead_ratio(0.0, 1.0), ConfigError);
}

TEST_CASE("report consistency") {
  const ModelConfig c;
  const auto bare = detach_guider(merge_lora(init_model<float>(c)));
  TimingOptions no_timing;
  no_timing.enabled = false;
  const EfficiencyReport self = build_report(c, bare, no_timing);
  CHECK(self.added_over_base_pct == 0.0);
  CHECK(self.flops_overhead_pct == 0.0);

  const auto cond = attach_lora(init_model<float>(c), LoraConfig{});
  const EfficiencyReport r = build_report(c, cond, TimingOptions{3, 1, true});
  const ParamReport pc = count_params(cond);
  CHECK(r.trainable_params == pc.trainable);
  CHECK(r.total_params == pc.total);
  CHECK(r.base_params == count_params(bare).total);
  CHECK(r.added_over_base_pct == 100.0 * (r.total_params - r.base_params) / static_cast<double>(r.base_params));
  CHECK(r.flops_conditioned == r.breakdown.base + r.breakdown.guider + r.breakdown.lora);
  CHECK(r.flops_merged == r.breakdown.base + r.breakdown.guider);
  CHECK(r.wall_time_per_step > 0.0);
  CHECK(to_json(r).at("trainable_params") == r.trainable_params);
  CHECK(render_table(r).find("Training Param") != std::string::npos);
  CHECK(render_csv(r).rfind("model,inference_params,training_params,flops\n", 0) == 0);

  ModelConfig other = c;
  other.seed = 9;
  CHECK_THROWS_AS(build_report(other, cond, no_timing), ConfigError);
}
