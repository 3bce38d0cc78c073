// SPDX-License-Identifier: Apache-2.0
// Command-line front end over the C API. Exit codes: 0 success, 2 invalid
// configuration or arguments, 1 runtime failure.
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "oie/oie.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 1;

int fail(oie_status st) {
  std::fprintf(stderr, "oie: %s\n", oie_last_error());
  return st == OIE_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

void print_progress(const char* phase, int64_t step, double loss, void* user) {
  const bool quiet = *static_cast<bool*>(user);
  const std::string p = phase;
  if (p == "pretrain" || p == "train") {
    if (!quiet && (step % 100 == 0)) std::fprintf(stderr, "[%s] step %lld loss %.5f\n", phase, (long long)step, loss);
  } else {
    std::fprintf(stderr, "[ablate] %s done after %lld steps, final loss %.5f\n", phase, (long long)step, loss);
  }
}

struct Config {
  oie_config* ptr = nullptr;
  ~Config() { oie_config_free(ptr); }
};

struct ModelHandle {
  oie_model* ptr = nullptr;
  ~ModelHandle() { oie_model_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-time injection video try-on: data generation, training, sampling, evaluation, profiling"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "out", set_json;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run seed (meaning depends on the subcommand)");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--set", set_json, "JSON merge patch applied to the configuration");
  app.add_flag("--quiet", quiet, "Suppress per-step progress");

  std::string manifest, checkpoint, variant, setting = "paired", variants;
  int sample_index = 0, garment = -1, steps = 0;
  bool merged = false;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset into <out>/dataset");
  auto* train = app.add_subcommand("train", "Pretrain (or reuse) the base and fine-tune one variant");
  train->add_option("--manifest", manifest, "Dataset manifest (default <out>/dataset/manifest.json)");
  train->add_option("--variant", variant, "full | no_pose | no_agnostic | no_both");
  train->add_option("--steps", steps, "Fine-tuning steps")->check(CLI::PositiveNumber);
  auto* sample = app.add_subcommand("sample", "Try a garment on one dataset sample");
  sample->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  sample->add_option("--manifest", manifest, "Dataset manifest (default <out>/dataset/manifest.json)");
  sample->add_option("--sample", sample_index, "Sample index")->required();
  sample->add_option("--garment", garment, "Garment id (default: the worn garment)");
  sample->add_flag("--merged", merged, "Fold adapters into the base weights before sampling");
  auto* eval = app.add_subcommand("eval", "Paired or unpaired evaluation on the eval split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest (default <out>/dataset/manifest.json)");
  eval->add_option("--setting", setting, "paired | unpaired")->check(CLI::IsMember({"paired", "unpaired"}));
  eval->add_option("--variant", variant, "Conditioning variant the checkpoint was trained with");
  eval->add_flag("--merged", merged, "Fold adapters into the base weights before evaluating");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the ablation matrix");
  ablate->add_option("--manifest", manifest, "Dataset manifest (default <out>/dataset/manifest.json)");
  ablate->add_option("--variants", variants, "Comma-separated variants (default: all four)");
  ablate->add_option("--steps", steps, "Fine-tuning steps per run")->check(CLI::PositiveNumber);
  auto* profile = app.add_subcommand("profile", "Parameter, FLOPs and wall-time report");
  profile->add_option("--checkpoint", checkpoint, "Checkpoint to profile (default: fresh conditioned model)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  Config cfg;
  oie_status st = config_path.empty() ? oie_config_default(&cfg.ptr) : oie_config_load(config_path.c_str(), &cfg.ptr);
  if (st != OIE_OK) return fail(st);
  auto patch = [&](const std::string& json) { return oie_config_patch(cfg.ptr, json.c_str()); };
  if (!set_json.empty() && (st = patch(set_json)) != OIE_OK) return fail(st);
  if (!variant.empty() && (st = patch("{\"variant\":\"" + variant + "\"}")) != OIE_OK) return fail(st);
  if (steps > 0 && (st = patch("{\"train\":{\"steps\":" + std::to_string(steps) + "}}")) != OIE_OK) return fail(st);
  if (seed) {
    const std::string s = std::to_string(*seed);
    if (gen->parsed()) st = patch("{\"data\":{\"seed\":" + s + "}}");
    if (train->parsed()) st = patch("{\"train\":{\"seed\":" + s + "}}");
    if (ablate->parsed()) {
      st = patch("{\"seeds\":[" + s + "," + std::to_string(*seed + 1) + "," + std::to_string(*seed + 2) + "]}");
    }
    if (st != OIE_OK) return fail(st);
  }
  if (manifest.empty()) manifest = (std::filesystem::path(out_dir) / "dataset" / "manifest.json").string();

  if (gen->parsed()) {
    if ((st = oie_gen_data(cfg.ptr, out_dir.c_str())) != OIE_OK) return fail(st);
    std::printf("dataset written to %s\n", (std::filesystem::path(out_dir) / "dataset").c_str());
    return 0;
  }
  if (train->parsed()) {
    oie_train_summary sum{};
    if ((st = oie_train(cfg.ptr, manifest.c_str(), out_dir.c_str(), print_progress, &quiet, &sum)) != OIE_OK) {
      return fail(st);
    }
    std::printf("trained %lld steps: smoothed loss %.5f -> %.5f (%.1f%%)\n", (long long)sum.steps, sum.initial_loss,
                sum.final_loss, 100.0 * sum.final_loss / sum.initial_loss);
    return 0;
  }
  if (profile->parsed()) {
    ModelHandle model;
    if (!checkpoint.empty() && (st = oie_model_load(checkpoint.c_str(), 0, &model.ptr)) != OIE_OK) return fail(st);
    oie_efficiency eff{};
    if ((st = oie_profile(cfg.ptr, model.ptr, out_dir.c_str(), &eff)) != OIE_OK) return fail(st);
    std::printf("params: base %lld total %lld trainable %lld (added %.4f%%, trainable/total %.4f%%)\n",
                (long long)eff.base_params, (long long)eff.total_params, (long long)eff.trainable_params,
                eff.added_over_base_pct, eff.trainable_pct);
    std::printf("flops: base %lld conditioned %lld (+%.4f%%), merged %lld (+%.4f%%); %.4f s/forward\n",
                (long long)eff.flops_base, (long long)eff.flops_conditioned, eff.flops_overhead_pct,
                (long long)eff.flops_merged, eff.flops_merged_overhead_pct, eff.wall_time_per_step);
    return 0;
  }
  if (ablate->parsed()) {
    if ((st = oie_ablate(cfg.ptr, manifest.c_str(), variants.empty() ? nullptr : variants.c_str(), out_dir.c_str(),
                         print_progress, &quiet)) != OIE_OK) {
      return fail(st);
    }
    std::printf("ablation table written to %s\n", (std::filesystem::path(out_dir) / "reports" / "ablation.csv").c_str());
    return 0;
  }

  ModelHandle model;
  if ((st = oie_model_load(checkpoint.c_str(), merged ? 1 : 0, &model.ptr)) != OIE_OK) return fail(st);
  if (sample->parsed()) {
    oie_tryon_stats stats{};
    if ((st = oie_sample(cfg.ptr, model.ptr, manifest.c_str(), sample_index, garment, seed.value_or(0),
                         out_dir.c_str(), &stats)) != OIE_OK) {
      return fail(st);
    }
    std::printf("sample %d written (editor calls %d, sequence assemblies %d)\n", sample_index, stats.editor_calls,
                stats.assemble_calls);
    return 0;
  }
  oie_metrics m{};
  if ((st = oie_eval(cfg.ptr, model.ptr, manifest.c_str(), setting.c_str(), out_dir.c_str(), &m)) != OIE_OK) {
    return fail(st);
  }
  std::printf("%s: ssim %.5f perc %.5f fvd %.5f over %d samples\n", setting.c_str(), m.ssim, m.perc, m.fvd, m.samples);
  return 0;
}
