// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oie/checkpoint.hpp"
#include "oie/firstframe.hpp"
#include "oie/metrics.hpp"
#include "oie/synthdata.hpp"

namespace oie {

enum class Variant { Full, NoPose, NoAgnostic, NoBoth };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
bool uses_pose(Variant v);
bool uses_guider(Variant v);

// Full-parameter training of the bare backbone on scenes drawn from `seed`,
// disjoint from the try-on dataset. This stands in for the pretrained video
// model that the adapters fine-tune. Pose latents are always zero here. With
// `image_conditioned` the garment block carries the clip's own frame 0 (an
// image-to-video prior); otherwise it is zero too (an unconditional prior).
struct PretrainConfig {
  int steps = 1500;
  double lr = 1e-3;
  std::uint64_t seed = 0x9E7A;
  int scenes = 64;
  bool image_conditioned = false;
};

struct TrainConfig {
  int steps = 2000;
  std::uint64_t seed = 1;
  int checkpoint_interval = 500;  // 0 disables intermediate checkpoints
  int smoothing_window = 100;
};

struct PipelineConfig {
  GenerationConfig data;
  ModelConfig model;  // frame grid and patch are taken from `data`
  CodecParams codec;
  LoraConfig lora;
  FlowConfig flow;
  PretrainConfig pretrain;
  TrainConfig train;
  int inference_steps = 10;
  std::uint64_t feature_net_seed = 1234;
  std::uint64_t unpaired_seed = 5;
  std::string instruction = "replace the garment";
  Variant variant = Variant::Full;
  std::vector<std::uint64_t> seeds = {1, 2, 3};  // ablation seeds
  // Empty selects the oracle editor; otherwise an external plug-in command.
  std::string editor_command;
  std::string editor_name = "external";

  // Throws ConfigError on inconsistent sub-configs.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
// Missing keys keep their defaults; model/codec geometry follows `data`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

Codec make_codec(const PipelineConfig& cfg);

using Progress = std::function<void(std::int64_t step, double loss)>;

Model<float> pretrain_base(const PipelineConfig& cfg, const Progress& progress = {});

// Loads the base saved in `dir` when its recorded model and pretrain config
// match `cfg`; otherwise pretrains and saves it there.
Model<float> load_or_pretrain_base(const PipelineConfig& cfg, const std::filesystem::path& dir,
                                   const Progress& progress = {});

std::unique_ptr<Editor> make_editor(const PipelineConfig& cfg);

// Guider (unless the variant drops it) and LoRA attached to a frozen base.
Model<float> conditioned_model(const Model<float>& base, const PipelineConfig& cfg, Variant variant);

// Inputs for one try-on. The scene and garment id are editor metadata that
// only the oracle reads.
struct TryonInputs {
  VideoTensor source;
  VideoTensor pose;
  VideoTensor agnostic;
  VideoTensor mask;
  VideoTensor garment;
  std::string instruction = "replace the garment";
  std::optional<SceneSpec> scene;
  std::optional<int> garment_id;
};

TryonInputs tryon_inputs(const Sample& s, const GarmentSpec& garment, const std::string& instruction);

// Editor invocations and sequence assemblies observed by run_tryon.
struct TryonCounters {
  int editor_calls = 0;
  int assemble_calls = 0;
};

struct PreparedConditioning {
  Conditioning<float> cond;
  TryonCounters counters;
};

// First-frame edit, garment block, pose latents, assembly and guider input.
PreparedConditioning prepare_conditioning(const Model<float>& model, const Codec& codec, const TryonInputs& in,
                                          Editor& editor, Variant variant);

// frame 0 -> edit (once) -> encode_image -> encode pose -> assemble ->
// guider -> Euler sampling -> decode, clamped to [0, 1]. Stage failures are
// rethrown prefixed with the stage name.
struct TryonOptions {
  std::uint64_t seed = 0;
  int steps = 10;
  Variant variant = Variant::Full;
  bool pin_first_frame = false;
};

VideoTensor run_tryon(const Model<float>& model, const Codec& codec, const TryonInputs& in, Editor& editor,
                      const TryonOptions& opt, TryonCounters* counters = nullptr);

// Training example for a dataset sample on its worn garment.
TrainExample<float> make_train_example(const Model<float>& model, const Codec& codec, const Sample& s,
                                       const std::string& instruction, Variant variant, Editor& editor);

// Sample index used at `step` for a run seeded with `seed`.
std::size_t data_index(std::uint64_t seed, std::int64_t step, std::size_t n);

struct TrainResult {
  TrainState<float> state;
  double initial_smoothed = 0.0;  // mean of the first window
  double final_smoothed = 0.0;    // mean of the last window
};

double window_mean(const std::vector<double>& losses, std::size_t begin, std::size_t count);

// Fine-tunes `conditioned_model(base, cfg, variant)` on the train split. With
// `checkpoint_dir`, training state is saved every checkpoint_interval steps
// and at the end; an existing state there is resumed.
TrainResult train(const PipelineConfig& cfg, const Model<float>& base, const Manifest& manifest, Variant variant,
                  std::uint64_t seed, const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
                  const Progress& progress = {});

// Cyclic permutation of garment ids (no fixed points) seeded by `seed`.
std::vector<int> garment_derangement(int pool_size, std::uint64_t seed);

struct EvalRow {
  int sample = 0;
  int garment = 0;
  double ssim = 0.0;
  double perc = 0.0;
};

struct EvalResult {
  MetricsReport report;
  std::vector<EvalRow> rows;
};

// Sampling seed for an eval sample.
std::uint64_t eval_seed(int sample_index);

// Produces the try-on video of `s` wearing garment `garment_id`.
using VideoGenerator = std::function<VideoTensor(const SampleRecord& rec, const Sample& s, int garment_id)>;

// Paired: worn garment against the source video. Unpaired: garment from
// garment_derangement against the matching ground-truth video.
EvalResult run_eval(const PipelineConfig& cfg, const Manifest& manifest, EvalSetting setting,
                    const VideoGenerator& generate);
EvalResult run_eval(const PipelineConfig& cfg, const Model<float>& model, const Manifest& manifest,
                    EvalSetting setting, Variant variant, Editor& editor);

struct AblationRow {
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  int steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  MetricsReport metrics;
};

AblationRow ablation_row(const PipelineConfig& cfg, const Model<float>& base, const Manifest& manifest,
                         Variant variant, std::uint64_t seed, Editor& editor);

std::vector<AblationRow> run_ablation(const PipelineConfig& cfg, const Model<float>& base, const Manifest& manifest,
                                      const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                      Editor& editor, const std::function<void(const AblationRow&)>& on_row = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);
void write_metrics(const std::filesystem::path& dir, const EvalResult& r);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

// One binary PPM (3 channels) or PGM (1 channel) per frame:
// <dir>/<prefix>_<frame>.ppm|pgm with value round(255 * clamp(v, 0, 1)).
void export_frames(const VideoTensor& v, const std::filesystem::path& dir, const std::string& prefix);

}  // namespace oie
