// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <stdlib.h>

#include <algorithm>
#include <vector>

#include "oie/backbone.hpp"

namespace oie::test {

TempDir::TempDir(const std::string& tag) {
  std::string pattern = (std::filesystem::temp_directory_path() / ("oie-" + tag + "-XXXXXX")).string();
  std::vector<char> buf(pattern.begin(), pattern.end());
  buf.push_back('\0');
  if (!mkdtemp(buf.data())) throw RuntimeError("mkdtemp failed for " + pattern);
  path_ = buf.data();
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

VideoTensor random_video(int f, int c, int h, int w, std::uint64_t seed) {
  VideoTensor v(f, c, h, w);
  Rng rng(seed);
  for (float& x : v.data) x = static_cast<float>(rng.uniform());
  return v;
}

}  // namespace oie::test

namespace oie::test {

ModelConfig tiny_config() {
  ModelConfig c;
  c.width = 8;
  c.blocks = 2;
  c.heads = 2;
  c.ffn_mult = 2;
  c.frames = 2;
  c.frame_height = 8;
  c.frame_width = 8;
  c.guider_channels = {4, 4, 4, 4};
  c.text_vocab = 4;
  c.seed = 3;
  return c;
}

template <class T>
TrainExample<T> random_example(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const int P = cfg.tokens_per_frame();
  GarmentBlock<T> g{random_normal<T>(P, cfg.width, 1.0, rng)};
  LatentFrames<T> p{cfg.frames, P, random_normal<T>(cfg.video_tokens(), cfg.width, 1.0, rng)};
  TrainExample<T> ex;
  ex.cond.sequence = assemble_sequence(g, p);
  ex.cond.text = make_text("replace the garment", cfg.text_vocab);
  const int voxels = cfg.frames * cfg.frame_height * cfg.frame_width;
  ex.cond.guider_input = random_normal<T>(voxels, cfg.channels + 1, 1.0, rng);
  ex.cond.first_frame = random_normal<T>(P, cfg.width, 1.0, rng);
  ex.target = random_normal<T>(cfg.video_tokens(), cfg.width, 1.0, rng);
  return ex;
}

template <class T>
void randomize_adapters(Model<T>& m, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, p] : m.params) {
    if (name.rfind("lora.", 0) == 0 && name.back() == 'B') {
      p.value = random_normal<T>(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()), stddev, rng);
    }
  }
}

template TrainExample<float> random_example<float>(const ModelConfig&, std::uint64_t);
template TrainExample<double> random_example<double>(const ModelConfig&, std::uint64_t);
template void randomize_adapters<float>(Model<float>&, double, std::uint64_t);
template void randomize_adapters<double>(Model<double>&, double, std::uint64_t);

std::map<std::string, double> gradient_errors(const Model<double>& model, const TrainExample<double>& ex,
                                              const PathSample<double>& path, double h) {
  const LossAndGrad<double> lg = loss_and_gradients(model, ex, path);
  std::map<std::string, double> out;
  Model<double> probe = model;
  for (const auto& [name, p] : model.params) {
    if (!p.trainable) continue;
    const auto it = lg.grads.find(name);
    Mat<double> analytic = it == lg.grads.end() ? Mat<double>::Zero(p.value.rows(), p.value.cols()) : it->second;
    Mat<double> numeric(p.value.rows(), p.value.cols());
    Mat<double>& w = probe.at(name);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double up = loss_and_gradients(probe, ex, path).loss;
      w.data()[i] = keep - h;
      const double down = loss_and_gradients(probe, ex, path).loss;
      w.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double scale =
        std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-6});
    out[name] = (analytic - numeric).cwiseAbs().maxCoeff() / scale;
  }
  return out;
}

PipelineConfig small_pipeline_config() {
  PipelineConfig c;
  c.data.frames = 4;
  c.data.pool_size = 4;
  c.data.train_samples = 4;
  c.data.eval_samples = 3;
  c.model.width = 48;
  c.model.blocks = 1;
  c.model.heads = 2;
  c.model.ffn_mult = 2;
  c.model.frames = 4;
  c.model.guider_channels = ModelConfig::scaled_guider_channels(48);
  c.codec.width = 48;
  c.lora.rank = 2;
  c.lora.alpha = 2.0;
  c.pretrain.steps = 0;
  c.train.steps = 6;
  c.train.checkpoint_interval = 0;
  c.train.smoothing_window = 2;
  c.inference_steps = 2;
  c.seeds = {1, 2};
  c.validate();
  return c;
}

}  // namespace oie::test
