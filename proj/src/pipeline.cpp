// SPDX-License-Identifier: Apache-2.0
#include "oie/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "oie/adapters.hpp"
#include "oie/backbone.hpp"
#include "oie/conditioning.hpp"

namespace oie {

namespace fs = std::filesystem;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoPose: return "no_pose";
    case Variant::NoAgnostic: return "no_agnostic";
    case Variant::NoBoth: return "no_both";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no_pose") return Variant::NoPose;
  if (s == "no_agnostic") return Variant::NoAgnostic;
  if (s == "no_both") return Variant::NoBoth;
  throw ConfigError("unknown ablation variant: " + s);
}

bool uses_pose(Variant v) { return v == Variant::Full || v == Variant::NoAgnostic; }
bool uses_guider(Variant v) { return v == Variant::Full || v == Variant::NoPose; }

void PipelineConfig::validate() const {
  model.validate();
  if (model.frames != data.frames || model.frame_height != data.height || model.frame_width != data.width ||
      model.patch != data.patch) {
    throw ConfigError("config: model geometry differs from the data geometry");
  }
  if (codec.patch != model.patch || codec.width != model.width || codec.channels != model.channels) {
    throw ConfigError("config: codec geometry differs from the model");
  }
  if (lora.rank < 1) throw ConfigError("config: lora rank must be >= 1");
  if (lora.sites.empty()) throw ConfigError("config: lora needs at least one site");
  if (inference_steps < 1) throw ConfigError("config: inference_steps must be >= 1");
  if (train.steps < 1) throw ConfigError("config: train steps must be >= 1");
  if (train.smoothing_window < 1) throw ConfigError("config: smoothing window must be >= 1");
  if (train.checkpoint_interval < 0) throw ConfigError("config: negative checkpoint interval");
  if (pretrain.steps < 0 || pretrain.scenes < 1 || !(pretrain.lr > 0.0)) throw ConfigError("config: invalid pretrain");
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (data.pool_size < 2) throw ConfigError("config: garment pool needs at least 2 garments");
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"data", to_json(c.data)},
          {"model", to_json(c.model)},
          {"codec", to_json(c.codec)},
          {"lora", to_json(c.lora)},
          {"flow", to_json(c.flow)},
          {"pretrain", {{"steps", c.pretrain.steps}, {"lr", c.pretrain.lr}, {"seed", c.pretrain.seed},
                        {"scenes", c.pretrain.scenes}, {"image_conditioned", c.pretrain.image_conditioned}}},
          {"train", {{"steps", c.train.steps}, {"seed", c.train.seed},
                     {"checkpoint_interval", c.train.checkpoint_interval},
                     {"smoothing_window", c.train.smoothing_window}}},
          {"inference_steps", c.inference_steps},
          {"feature_net_seed", c.feature_net_seed},
          {"unpaired_seed", c.unpaired_seed},
          {"instruction", c.instruction},
          {"variant", to_string(c.variant)},
          {"seeds", c.seeds},
          {"editor_command", c.editor_command},
          {"editor_name", c.editor_name}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  nlohmann::json merged = to_json(PipelineConfig{});
  for (const auto& [k, v] : j.items()) {
    if (!merged.contains(k)) throw ConfigError("config: unknown key \"" + k + "\"");
  }
  merged.merge_patch(j);
  try {
    PipelineConfig c;
    c.data = generation_config_from_json(merged.at("data"));
    c.model = model_config_from_json(merged.at("model"));
    c.model.frames = c.data.frames;
    c.model.frame_height = c.data.height;
    c.model.frame_width = c.data.width;
    c.model.patch = c.data.patch;
    c.codec = codec_params_from_json(merged.at("codec"));
    c.codec.patch = c.model.patch;
    c.codec.width = c.model.width;
    c.codec.channels = c.model.channels;
    c.lora = lora_config_from_json(merged.at("lora"));
    c.flow = flow_config_from_json(merged.at("flow"));
    const auto& p = merged.at("pretrain");
    c.pretrain = {p.at("steps").get<int>(), p.at("lr").get<double>(), p.at("seed").get<std::uint64_t>(),
                  p.at("scenes").get<int>(), p.at("image_conditioned").get<bool>()};
    const auto& t = merged.at("train");
    c.train = {t.at("steps").get<int>(), t.at("seed").get<std::uint64_t>(), t.at("checkpoint_interval").get<int>(),
               t.at("smoothing_window").get<int>()};
    c.inference_steps = merged.at("inference_steps").get<int>();
    c.feature_net_seed = merged.at("feature_net_seed").get<std::uint64_t>();
    c.unpaired_seed = merged.at("unpaired_seed").get<std::uint64_t>();
    c.instruction = merged.at("instruction").get<std::string>();
    c.variant = variant_from_string(merged.at("variant").get<std::string>());
    c.seeds = merged.at("seeds").get<std::vector<std::uint64_t>>();
    c.editor_command = merged.at("editor_command").get<std::string>();
    c.editor_name = merged.at("editor_name").get<std::string>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  try {
    return pipeline_config_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
}

Codec make_codec(const PipelineConfig& cfg) { return Codec(cfg.codec); }

std::size_t data_index(std::uint64_t seed, std::int64_t step, std::size_t n) {
  if (n == 0) throw ConfigError("data_index: empty dataset");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(step), 0xDA7A));
  return static_cast<std::size_t>(rng.next() % n);
}

Model<float> pretrain_base(const PipelineConfig& cfg, const Progress& progress) {
  cfg.validate();
  Model<float> model = detach_guider(init_model<float>(cfg.model));
  if (cfg.pretrain.steps == 0) return model;
  const Codec codec = make_codec(cfg);
  const auto pool = make_garment_pool(cfg.data);
  const TextStub text = make_text(cfg.instruction, cfg.model.text_vocab);
  std::vector<TrainExample<float>> data;
  for (int i = 0; i < cfg.pretrain.scenes; ++i) {
    const SceneSpec scene = make_scene(cfg.data, mix_seed(cfg.pretrain.seed, static_cast<std::uint64_t>(i)));
    const VideoTensor video = render_video(scene, pool[static_cast<std::size_t>(i) % pool.size()]);
    TrainExample<float> ex;
    LatentFrames<float> z = codec.encode_video<float>(video);
    ex.target = z.rows;
    GarmentBlock<float> gb = codec.encode_image<float>(video.frame(0));
    if (!cfg.pretrain.image_conditioned) gb.rows.setZero();
    z.rows.setZero();
    ex.cond.sequence = assemble_sequence(gb, z);
    ex.cond.text = text;
    data.push_back(std::move(ex));
  }
  FlowConfig fc = cfg.flow;
  fc.optimizer.lr = cfg.pretrain.lr;
  fc.pin_first_frame = false;
  TrainState<float> st = make_train_state(std::move(model), cfg.pretrain.seed);
  while (st.step < cfg.pretrain.steps) {
    const double loss = training_step(st, data[data_index(cfg.pretrain.seed, st.step, data.size())], fc);
    if (progress) progress(st.step, loss);
  }
  return st.model;
}

namespace {

nlohmann::json base_echo(const PipelineConfig& cfg) {
  const nlohmann::json j = to_json(cfg);
  return {{"model", j.at("model")}, {"codec", j.at("codec")}, {"data", j.at("data")},
          {"pretrain", j.at("pretrain")}, {"flow", j.at("flow")}, {"instruction", cfg.instruction}};
}

}  // namespace

Model<float> load_or_pretrain_base(const PipelineConfig& cfg, const fs::path& dir, const Progress& progress) {
  const fs::path echo_path = dir / "pretrain.json";
  if (fs::exists(echo_path)) {
    std::ifstream f(echo_path);
    nlohmann::json echo;
    try {
      echo = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception&) {
      echo = nullptr;
    }
    if (echo == base_echo(cfg)) return load_checkpoint(dir).model;
  }
  Model<float> base = pretrain_base(cfg, progress);
  save_checkpoint(dir, base, cfg.codec, cfg.flow);
  std::ofstream f(echo_path);
  f << base_echo(cfg).dump(2) << "\n";
  if (!f) throw RuntimeError("cannot write " + echo_path.string());
  return base;
}

std::unique_ptr<Editor> make_editor(const PipelineConfig& cfg) {
  if (cfg.editor_command.empty()) return std::make_unique<OracleEditor>();
  return plug_editor(cfg.editor_name, cfg.editor_command);
}

Model<float> conditioned_model(const Model<float>& base, const PipelineConfig& cfg, Variant variant) {
  if (!(base.config == cfg.model)) throw ConfigError("conditioned_model: base config differs from the run config");
  Model<float> m = detach_guider(merge_lora(base));
  if (uses_guider(variant)) m = attach_guider(m);
  return attach_lora(m, cfg.lora);
}

TryonInputs tryon_inputs(const Sample& s, const GarmentSpec& garment, const std::string& instruction) {
  TryonInputs in;
  in.source = s.source_video;
  in.pose = s.pose_video;
  in.agnostic = s.agnostic_video;
  in.mask = s.agnostic_mask;
  in.garment = render_garment(garment);
  in.instruction = instruction;
  in.scene = s.scene;
  in.garment_id = garment.id;
  return in;
}

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("run_tryon[") + name + "]: " + e.what());
  } catch (const std::exception& e) {
    throw RuntimeError(std::string("run_tryon[") + name + "]: " + e.what());
  }
}

}  // namespace

PreparedConditioning prepare_conditioning(const Model<float>& model, const Codec& codec, const TryonInputs& in,
                                          Editor& editor, Variant variant) {
  PreparedConditioning out;
  const EditorResult edited = stage("edit", [&] {
    EditorRequest req{in.source.frame(0), in.instruction, in.garment, in.scene, in.garment_id};
    ++out.counters.editor_calls;
    return editor.edit(req);
  });
  const GarmentBlock<float> gb = stage("encode_image", [&] { return codec.encode_image<float>(edited.ir); });
  LatentFrames<float> pose = stage("encode_pose", [&] { return codec.encode_video<float>(in.pose); });
  if (!uses_pose(variant)) pose.rows.setZero();
  out.cond.sequence = stage("assemble", [&] {
    ++out.counters.assemble_calls;
    return assemble_sequence(gb, pose);
  });
  if (uses_guider(variant) && model.has_guider()) {
    out.cond.guider_input = stage("guider", [&] { return guider_input<float>(model.config, in.agnostic, in.mask); });
  }
  out.cond.text = make_text(in.instruction, model.config.text_vocab);
  out.cond.first_frame = stage("encode_image", [&] { return codec.encode_video<float>(edited.ir).rows; });
  return out;
}

VideoTensor run_tryon(const Model<float>& model, const Codec& codec, const TryonInputs& in, Editor& editor,
                      const TryonOptions& opt, TryonCounters* counters) {
  if (!in.source.same_shape(in.pose)) throw ConfigError("run_tryon: pose video shape differs from the source");
  const PreparedConditioning prep = prepare_conditioning(model, codec, in, editor, opt.variant);
  if (counters) {
    counters->editor_calls += prep.counters.editor_calls;
    counters->assemble_calls += prep.counters.assemble_calls;
  }
  // The sampler sees only the prepared conditioning; the garment image is not reachable from here.
  const Mat<float> z = stage("sample", [&] {
    return euler_sample(model, prep.cond, opt.steps, opt.seed, opt.pin_first_frame);
  });
  VideoTensor out = stage("decode", [&] {
    const LatentFrames<float> lf{in.source.frames, prep.cond.sequence.tokens_per_frame, z};
    return codec.decode_video(lf, in.source.height, in.source.width);
  });
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

TrainExample<float> make_train_example(const Model<float>& model, const Codec& codec, const Sample& s,
                                       const std::string& instruction, Variant variant, Editor& editor) {
  const GarmentSpec worn = make_garment(s.g_worn, s.garment_image.height, s.garment_image.width);
  PreparedConditioning prep = prepare_conditioning(model, codec, tryon_inputs(s, worn, instruction), editor, variant);
  TrainExample<float> ex;
  ex.target = codec.encode_video<float>(s.source_video).rows;
  ex.cond = std::move(prep.cond);
  return ex;
}

double window_mean(const std::vector<double>& losses, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > losses.size()) throw ConfigError("window_mean: window outside the history");
  return std::accumulate(losses.begin() + static_cast<std::ptrdiff_t>(begin),
                         losses.begin() + static_cast<std::ptrdiff_t>(begin + count), 0.0) /
         static_cast<double>(count);
}

TrainResult train(const PipelineConfig& cfg, const Model<float>& base, const Manifest& manifest, Variant variant,
                  std::uint64_t seed, const std::optional<fs::path>& checkpoint_dir, const Progress& progress) {
  cfg.validate();
  PipelineConfig run = cfg;
  run.lora.seed = mix_seed(cfg.lora.seed, seed);
  const Codec codec = make_codec(run);
  const Model<float> model = conditioned_model(base, run, variant);
  const auto split = manifest.split("train");
  if (split.empty()) throw ConfigError("train: empty train split");
  OracleEditor editor;
  std::vector<TrainExample<float>> data;
  for (const SampleRecord* rec : split) {
    data.push_back(make_train_example(model, codec, load_sample(manifest, *rec), run.instruction, variant, editor));
  }

  TrainResult res;
  res.state = make_train_state(model, seed);
  if (checkpoint_dir && fs::exists(*checkpoint_dir / "state.json")) {
    Checkpoint ck = load_checkpoint(*checkpoint_dir);
    if (!ck.state || !(ck.model.config == model.config) || ck.model.lora != model.lora ||
        ck.model.has_guider() != model.has_guider() || ck.state->seed != seed) {
      throw ConfigError("train: checkpoint in " + checkpoint_dir->string() + " belongs to a different run");
    }
    res.state = std::move(*ck.state);
  }
  const int interval = run.train.checkpoint_interval;
  while (res.state.step < run.train.steps) {
    const std::size_t idx = data_index(seed, res.state.step, data.size());
    const double loss = training_step(res.state, data[idx], run.flow);
    if (progress) progress(res.state.step, loss);
    if (checkpoint_dir && interval > 0 && res.state.step % interval == 0 && res.state.step < run.train.steps) {
      save_checkpoint(*checkpoint_dir, res.state.model, run.codec, run.flow, &res.state);
    }
  }
  if (checkpoint_dir) save_checkpoint(*checkpoint_dir, res.state.model, run.codec, run.flow, &res.state);
  const auto& losses = res.state.losses;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(run.train.smoothing_window), losses.size());
  res.initial_smoothed = window_mean(losses, 0, w);
  res.final_smoothed = window_mean(losses, losses.size() - w, w);
  return res;
}

std::uint64_t eval_seed(int sample_index) { return mix_seed(0xE7A1, static_cast<std::uint64_t>(sample_index)); }

std::vector<int> garment_derangement(int pool_size, std::uint64_t seed) {
  if (pool_size < 2) throw ConfigError("garment_derangement: need at least 2 garments");
  std::vector<int> p(static_cast<std::size_t>(pool_size));
  std::iota(p.begin(), p.end(), 0);
  Rng rng(mix_seed(seed, 0xDE7A));
  // Sattolo: a uniformly random single cycle, hence no fixed points.
  for (int i = pool_size - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

EvalResult run_eval(const PipelineConfig& cfg, const Manifest& manifest, EvalSetting setting,
                    const VideoGenerator& generate) {
  const auto split = manifest.split("eval");
  if (split.empty()) throw ConfigError("run_eval: empty eval split");
  const auto der = garment_derangement(static_cast<int>(manifest.garments.size()), cfg.unpaired_seed);
  EvalResult res;
  std::vector<VideoTensor> outputs, references;
  for (const SampleRecord* rec : split) {
    const Sample s = load_sample(manifest, *rec);
    const int gid = setting == EvalSetting::Paired ? s.g_worn : der.at(static_cast<std::size_t>(s.g_worn));
    const VideoTensor& reference = setting == EvalSetting::Paired ? s.source_video : s.truth_videos.at(gid);
    const VideoTensor out = generate(*rec, s, gid);
    if (!out.same_shape(reference)) throw RuntimeError("run_eval: generated video shape differs from the reference");
    res.rows.push_back({rec->index, gid, ssim_video(out, reference), perceptual_distance(out, reference,
                                                                                          cfg.feature_net_seed)});
    outputs.push_back(out);
    references.push_back(reference);
  }
  MetricsReport& r = res.report;
  r.setting = setting;
  r.samples = static_cast<int>(res.rows.size());
  r.feature_net_seed = cfg.feature_net_seed;
  for (const auto& row : res.rows) {
    r.ssim += row.ssim / r.samples;
    r.perc += row.perc / r.samples;
  }
  r.fvd = res.rows.size() >= 2 ? frechet_video_distance(outputs, references, cfg.feature_net_seed) : 0.0;
  return res;
}

EvalResult run_eval(const PipelineConfig& cfg, const Model<float>& model, const Manifest& manifest,
                    EvalSetting setting, Variant variant, Editor& editor) {
  const Codec codec = make_codec(cfg);
  return run_eval(cfg, manifest, setting, [&](const SampleRecord& rec, const Sample& s, int gid) {
    const GarmentSpec& garment = manifest.garments.at(static_cast<std::size_t>(gid));
    const TryonOptions opt{eval_seed(rec.index), cfg.inference_steps, variant, cfg.flow.pin_first_frame};
    return run_tryon(model, codec, tryon_inputs(s, garment, cfg.instruction), editor, opt);
  });
}

AblationRow ablation_row(const PipelineConfig& cfg, const Model<float>& base, const Manifest& manifest,
                         Variant variant, std::uint64_t seed, Editor& editor) {
  TrainResult tr = train(cfg, base, manifest, variant, seed);
  AblationRow row;
  row.variant = variant;
  row.seed = seed;
  row.steps = static_cast<int>(tr.state.step);
  row.initial_loss = tr.initial_smoothed;
  row.final_loss = tr.final_smoothed;
  row.metrics = run_eval(cfg, tr.state.model, manifest, EvalSetting::Paired, variant, editor).report;
  return row;
}

std::vector<AblationRow> run_ablation(const PipelineConfig& cfg, const Model<float>& base, const Manifest& manifest,
                                      const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                      Editor& editor, const std::function<void(const AblationRow&)>& on_row) {
  if (variants.empty()) throw ConfigError("run_ablation: need at least one variant");
  if (seeds.empty()) throw ConfigError("run_ablation: need at least one seed");
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    for (std::uint64_t seed : seeds) {
      rows.push_back(ablation_row(cfg, base, manifest, v, seed, editor));
      if (on_row) on_row(rows.back());
    }
  }
  return rows;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream f(path);
  f << "step,loss\n";
  f.precision(9);
  for (std::size_t i = 0; i < losses.size(); ++i) f << i + 1 << "," << losses[i] << "\n";
  if (!f) throw RuntimeError("cannot write " + path.string());
}

void write_metrics(const fs::path& dir, const EvalResult& r) {
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "report.json");
    f << to_json(r.report).dump(2) << "\n";
    if (!f) throw RuntimeError("cannot write report.json in " + dir.string());
  }
  std::ofstream f(dir / "metrics.csv");
  f.precision(9);
  f << "sample,garment,ssim,perc\n";
  for (const auto& row : r.rows) f << row.sample << "," << row.garment << "," << row.ssim << "," << row.perc << "\n";
  if (!f) throw RuntimeError("cannot write metrics.csv in " + dir.string());
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream f(path);
  f.precision(9);
  f << "variant,seed,steps,initial_loss,final_loss,ssim,perc,fvd\n";
  for (const auto& r : rows) {
    f << to_string(r.variant) << "," << r.seed << "," << r.steps << "," << r.initial_loss << "," << r.final_loss
      << "," << r.metrics.ssim << "," << r.metrics.perc << "," << r.metrics.fvd << "\n";
  }
  if (!f) throw RuntimeError("cannot write " + path.string());
}

void export_frames(const VideoTensor& v, const fs::path& dir, const std::string& prefix) {
  if (v.channels != 1 && v.channels != 3) throw ConfigError("export_frames: need 1 or 3 channels");
  fs::create_directories(dir);
  for (int f = 0; f < v.frames; ++f) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%03d", f);
    const fs::path p = dir / (prefix + "_" + idx + (v.channels == 3 ? ".ppm" : ".pgm"));
    std::ofstream out(p, std::ios::binary);
    out << (v.channels == 3 ? "P6\n" : "P5\n") << v.width << " " << v.height << "\n255\n";
    for (int y = 0; y < v.height; ++y) {
      for (int x = 0; x < v.width; ++x) {
        for (int c = 0; c < v.channels; ++c) {
          const double val = std::clamp(static_cast<double>(v.at(f, c, y, x)), 0.0, 1.0);
          out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * val))));
        }
      }
    }
    if (!out) throw RuntimeError("export_frames: cannot write " + p.string());
  }
}

}  // namespace oie
