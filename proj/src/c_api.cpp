// SPDX-License-Identifier: Apache-2.0
#include "oie/oie.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "oie/adapters.hpp"
#include "oie/backbone.hpp"
#include "oie/efficiency.hpp"
#include "oie/pipeline.hpp"

struct oie_config {
  oie::PipelineConfig cfg;
};

struct oie_model {
  oie::Checkpoint ck;
};

namespace {

namespace fs = std::filesystem;

thread_local std::string g_last_error;

template <class F>
oie_status guarded(F&& f) {
  try {
    f();
    return OIE_OK;
  } catch (const oie::ConfigError& e) {
    g_last_error = e.what();
    return OIE_ERR_CONFIG;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return OIE_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return OIE_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return OIE_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw oie::ConfigError(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

oie::Progress phase_progress(oie_progress_fn fn, void* user, const std::string& phase) {
  if (!fn) return {};
  return [fn, user, phase](std::int64_t step, double loss) { fn(phase.c_str(), step, loss, user); };
}

fs::path reports_dir(const char* out_dir) {
  const fs::path p = fs::path(out_dir) / "reports";
  fs::create_directories(p);
  return p;
}

void check_model_matches(const oie::PipelineConfig& cfg, const oie_model* m) {
  if (!(m->ck.model.config == cfg.model)) {
    throw oie::ConfigError("checkpoint model config differs from the run config");
  }
}

// The run config with codec parameters taken from the checkpoint.
oie::PipelineConfig with_checkpoint_codec(const oie::PipelineConfig& cfg, const oie_model* m) {
  oie::PipelineConfig out = cfg;
  out.codec = m->ck.codec;
  out.validate();
  return out;
}

}  // namespace

extern "C" {

const char* oie_version(void) { return "0.1.0"; }

const char* oie_last_error(void) { return g_last_error.c_str(); }

void oie_string_free(char* s) { std::free(s); }

oie_status oie_config_default(oie_config** out) {
  return guarded([&] {
    require(out != nullptr, "oie_config_default: null output");
    *out = new oie_config{};
  });
}

oie_status oie_config_load(const char* path, oie_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "oie_config_load: null argument");
    *out = new oie_config{oie::load_pipeline_config(path)};
  });
}

oie_status oie_config_patch(oie_config* cfg, const char* json_patch) {
  return guarded([&] {
    require(cfg != nullptr && json_patch != nullptr, "oie_config_patch: null argument");
    nlohmann::json j = oie::to_json(cfg->cfg);
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(json_patch);
    } catch (const nlohmann::json::parse_error& e) {
      throw oie::ConfigError(std::string("oie_config_patch: ") + e.what());
    }
    if (!patch.is_object()) throw oie::ConfigError("oie_config_patch: patch must be a JSON object");
    for (const auto& [k, v] : patch.items()) {
      if (!j.contains(k)) throw oie::ConfigError("config: unknown key \"" + k + "\"");
    }
    j.merge_patch(patch);
    cfg->cfg = oie::pipeline_config_from_json(j);
  });
}

oie_status oie_config_to_json(const oie_config* cfg, char** out_json) {
  return guarded([&] {
    require(cfg != nullptr && out_json != nullptr, "oie_config_to_json: null argument");
    *out_json = dup_string(oie::to_json(cfg->cfg).dump(2));
  });
}

void oie_config_free(oie_config* cfg) { delete cfg; }

oie_status oie_gen_data(const oie_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg != nullptr && out_dir != nullptr, "oie_gen_data: null argument");
    oie::build_dataset(cfg->cfg.data, fs::path(out_dir) / "dataset");
  });
}

oie_status oie_train(const oie_config* cfg, const char* manifest_path, const char* out_dir, oie_progress_fn progress,
                     void* user, oie_train_summary* out) {
  return guarded([&] {
    require(cfg != nullptr && manifest_path != nullptr && out_dir != nullptr, "oie_train: null argument");
    const oie::PipelineConfig& c = cfg->cfg;
    const oie::Manifest manifest = oie::load_manifest(manifest_path);
    const fs::path ckdir = fs::path(out_dir) / "checkpoints";
    const oie::Model<float> base =
        oie::load_or_pretrain_base(c, ckdir / "base", phase_progress(progress, user, "pretrain"));
    const oie::TrainResult r = oie::train(c, base, manifest, c.variant, c.train.seed, ckdir / oie::to_string(c.variant),
                                          phase_progress(progress, user, "train"));
    oie::write_loss_csv(reports_dir(out_dir) / "loss.csv", r.state.losses);
    if (out) *out = {r.state.step, r.initial_smoothed, r.final_smoothed};
  });
}

oie_status oie_model_load(const char* checkpoint_dir, int merged, oie_model** out) {
  return guarded([&] {
    require(checkpoint_dir != nullptr && out != nullptr, "oie_model_load: null argument");
    if (!fs::exists(fs::path(checkpoint_dir) / "config.json")) {
      throw oie::ConfigError(std::string("oie_model_load: no checkpoint in ") + checkpoint_dir);
    }
    *out = new oie_model{oie::load_checkpoint(checkpoint_dir, merged ? oie::CheckpointForm::Merged
                                                                     : oie::CheckpointForm::Adapter)};
  });
}

oie_status oie_model_params(const oie_model* model, int64_t* total, int64_t* trainable) {
  return guarded([&] {
    require(model != nullptr, "oie_model_params: null model");
    const oie::ParamReport r = oie::count_params(model->ck.model);
    if (total) *total = r.total;
    if (trainable) *trainable = r.trainable;
  });
}

void oie_model_free(oie_model* model) { delete model; }

oie_status oie_sample(const oie_config* cfg, const oie_model* model, const char* manifest_path, int sample_index,
                      int garment_id, uint64_t seed, const char* out_dir, oie_tryon_stats* stats) {
  return guarded([&] {
    require(cfg != nullptr && model != nullptr && manifest_path != nullptr && out_dir != nullptr,
            "oie_sample: null argument");
    check_model_matches(cfg->cfg, model);
    const oie::PipelineConfig c = with_checkpoint_codec(cfg->cfg, model);
    const oie::Manifest manifest = oie::load_manifest(manifest_path);
    const oie::SampleRecord* rec = nullptr;
    for (const auto& r : manifest.samples) {
      if (r.index == sample_index) rec = &r;
    }
    if (!rec) throw oie::ConfigError("oie_sample: no sample " + std::to_string(sample_index) + " in the manifest");
    const oie::Sample s = oie::load_sample(manifest, *rec);
    const int gid = garment_id < 0 ? s.g_worn : garment_id;
    if (gid >= static_cast<int>(manifest.garments.size())) {
      throw oie::ConfigError("oie_sample: garment " + std::to_string(gid) + " is not in the pool");
    }
    auto editor = oie::make_editor(c);
    oie::TryonCounters counters;
    const oie::TryonOptions opt{seed, c.inference_steps, c.variant, c.flow.pin_first_frame};
    const oie::VideoTensor out = oie::run_tryon(model->ck.model, oie::make_codec(c),
                                                oie::tryon_inputs(s, manifest.garments.at(gid), c.instruction),
                                                *editor, opt, &counters);
    const fs::path dir = fs::path(out_dir) / "samples" /
                         (std::to_string(sample_index) + "_g" + std::to_string(gid));
    fs::create_directories(dir);
    oie::save_tns(dir / "output.tns", oie::to_tensor(out));
    oie::export_frames(out, dir, "frame");
    if (stats) *stats = {counters.editor_calls, counters.assemble_calls};
  });
}

oie_status oie_eval(const oie_config* cfg, const oie_model* model, const char* manifest_path, const char* setting,
                    const char* out_dir, oie_metrics* out) {
  return guarded([&] {
    require(cfg != nullptr && model != nullptr && manifest_path != nullptr && setting != nullptr && out_dir != nullptr,
            "oie_eval: null argument");
    check_model_matches(cfg->cfg, model);
    const oie::PipelineConfig c = with_checkpoint_codec(cfg->cfg, model);
    const oie::EvalSetting st = oie::eval_setting_from_string(setting);
    auto editor = oie::make_editor(c);
    const oie::EvalResult r =
        oie::run_eval(c, model->ck.model, oie::load_manifest(manifest_path), st, c.variant, *editor);
    oie::write_metrics(reports_dir(out_dir), r);
    if (out) *out = {r.report.ssim, r.report.perc, r.report.fvd, r.report.samples};
  });
}

oie_status oie_ablate(const oie_config* cfg, const char* manifest_path, const char* variants, const char* out_dir,
                      oie_progress_fn progress, void* user) {
  return guarded([&] {
    require(cfg != nullptr && manifest_path != nullptr && out_dir != nullptr, "oie_ablate: null argument");
    const oie::PipelineConfig& c = cfg->cfg;
    std::vector<oie::Variant> vs;
    if (variants == nullptr) {
      vs = {oie::Variant::NoBoth, oie::Variant::NoPose, oie::Variant::NoAgnostic, oie::Variant::Full};
    } else {
      std::stringstream ss(variants);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) vs.push_back(oie::variant_from_string(item));
      }
    }
    const oie::Manifest manifest = oie::load_manifest(manifest_path);
    const oie::Model<float> base = oie::load_or_pretrain_base(c, fs::path(out_dir) / "checkpoints" / "base",
                                                              phase_progress(progress, user, "pretrain"));
    auto editor = oie::make_editor(c);
    const fs::path csv = reports_dir(out_dir) / "ablation.csv";
    std::vector<oie::AblationRow> rows;
    for (oie::Variant v : vs) {
      for (std::uint64_t seed : c.seeds) {
        rows.push_back(oie::ablation_row(c, base, manifest, v, seed, *editor));
        oie::write_ablation_csv(csv, rows);
        if (progress) progress((oie::to_string(v) + "/" + std::to_string(seed)).c_str(), rows.back().steps,
                               rows.back().final_loss, user);
      }
    }
  });
}

oie_status oie_profile(const oie_config* cfg, const oie_model* model, const char* out_dir, oie_efficiency* out) {
  return guarded([&] {
    require(cfg != nullptr && out_dir != nullptr, "oie_profile: null argument");
    const oie::PipelineConfig& c = cfg->cfg;
    oie::Model<float> m;
    if (model) {
      check_model_matches(c, model);
      m = model->ck.model;
    } else {
      m = oie::conditioned_model(oie::detach_guider(oie::init_model<float>(c.model)), c, oie::Variant::Full);
    }
    const oie::EfficiencyReport r = oie::build_report(c.model, m);
    const fs::path dir = reports_dir(out_dir);
    std::ofstream(dir / "efficiency.json") << oie::to_json(r).dump(2) << "\n";
    std::ofstream(dir / "efficiency.txt") << oie::render_table(r);
    std::ofstream(dir / "efficiency.csv") << oie::render_csv(r);
    if (out) {
      *out = {r.base_params,        r.total_params,      r.trainable_params, r.added_over_base_pct,
              r.trainable_pct,      r.flops_base,        r.flops_conditioned, r.flops_overhead_pct,
              r.flops_merged,       r.flops_merged_overhead_pct, r.wall_time_per_step};
    }
  });
}

oie_status oie_overhead_pct(double base, double total, double* out) {
  return guarded([&] {
    require(out != nullptr, "oie_overhead_pct: null output");
    if (!(base > 0.0) || !(total >= 0.0)) throw oie::ConfigError("oie_overhead_pct: base must be positive");
    *out = oie::overhead_pct(base, total);
  });
}

}  // extern "C"
