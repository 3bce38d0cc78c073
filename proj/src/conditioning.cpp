// SPDX-License-Identifier: Apache-2.0
#include "oie/conditioning.hpp"

#include <bit>
#include <cmath>

namespace oie {

ag::Conv3dShape guider_layer_shape(const ModelConfig& cfg, int layer) {
  const int down = std::countr_zero(static_cast<unsigned>(cfg.patch));  // number of stride-2 layers
  ag::Conv3dShape s;
  s.frames = cfg.frames;
  s.height = cfg.frame_height;
  s.width = cfg.frame_width;
  for (int i = 0; i < layer; ++i) {
    if (i < down) {
      s.height = (s.height - 1) / 2 + 1;
      s.width = (s.width - 1) / 2 + 1;
    }
  }
  s.stride_t = 1;
  s.stride_h = s.stride_w = layer < down ? 2 : 1;
  return s;
}

void init_guider(Model<double>& m) {
  const ModelConfig& cfg = m.config;
  Rng rng(mix_seed(cfg.seed, 0x6D1DE));
  int cin = cfg.channels + 1;
  for (int i = 0; i < 4; ++i) {
    const int cout = cfg.guider_channels[static_cast<std::size_t>(i)];
    const std::string p = "guider.conv" + std::to_string(i) + ".";
    m.params[p + "weight"] = {random_normal<double>(27 * cin, cout, 1.0 / std::sqrt(27.0 * cin), rng), true};
    m.params[p + "bias"] = {Mat<double>::Zero(1, cout), true};
    cin = cout;
  }
  m.params["guider.proj.weight"] = {Mat<double>::Zero(cin, cfg.width), true};
  m.params["guider.proj.bias"] = {Mat<double>::Zero(1, cfg.width), true};
}

template <class T>
Model<T> attach_guider(const Model<T>& model) {
  if (model.has_guider()) throw ConfigError("attach_guider: model already has a mask guider");
  Model<double> g;
  g.config = model.config;
  init_guider(g);
  Model<T> out = model;
  for (auto& [name, prm] : g.template cast<T>().params) out.params[name] = prm;
  return out;
}

template <class T>
Mat<T> guider_input(const ModelConfig& cfg, const VideoTensor& agnostic, const VideoTensor& mask) {
  if (agnostic.frames != cfg.frames || agnostic.height != cfg.frame_height || agnostic.width != cfg.frame_width ||
      agnostic.channels != cfg.channels) {
    throw ConfigError("guider: agnostic video does not match the backbone grid");
  }
  if (mask.frames != agnostic.frames || mask.channels != 1 || mask.height != agnostic.height ||
      mask.width != agnostic.width) {
    throw ConfigError("guider: mask must be F x 1 x H x W matching the agnostic video");
  }
  const int F = agnostic.frames, H = agnostic.height, W = agnostic.width, C = agnostic.channels;
  Mat<T> x(static_cast<Eigen::Index>(F) * H * W, C + 1);
  for (int f = 0; f < F; ++f)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(f) * H + y) * W + xx;
        for (int c = 0; c < C; ++c) x(r, c) = static_cast<T>(agnostic.at(f, c, y, xx));
        x(r, C) = static_cast<T>(mask.at(f, 0, y, xx));
      }
  return x;
}

template <class T>
ag::Var<T> guider_forward(ParamBinding<T>& p, const Mat<T>& input) {
  auto& g = p.graph();
  const ModelConfig& cfg = p.model().config;
  if (input.rows() != static_cast<Eigen::Index>(cfg.frames) * cfg.frame_height * cfg.frame_width ||
      input.cols() != cfg.channels + 1) {
    throw ConfigError("guider: input grid mismatch vs backbone config");
  }
  ag::Var<T> h = g.constant(input);
  for (int i = 0; i < 4; ++i) {
    const std::string n = "guider.conv" + std::to_string(i) + ".";
    h = ag::silu(g, ag::conv3d(g, h, p(n + "weight"), p(n + "bias"), guider_layer_shape(cfg, i)));
  }
  if (h->value.rows() != cfg.video_tokens()) throw ConfigError("guider: output grid mismatch vs backbone tokens");
  return ag::linear(g, h, p("guider.proj.weight"), p("guider.proj.bias"));
}

template <class T>
Mat<T> guider_forward(const Model<T>& model, const VideoTensor& agnostic, const VideoTensor& mask) {
  ag::Graph<T> g(false);
  ParamBinding<T> p(g, model);
  return guider_forward(p, guider_input<T>(model.config, agnostic, mask))->value;
}

template <class T>
Mat<T> inject(const Mat<T>& hidden, const Mat<T>& features, const LatentSequence<T>& seq) {
  if (hidden.rows() != static_cast<Eigen::Index>(seq.index.size()) || features.rows() != seq.video_rows() ||
      features.cols() != hidden.cols()) {
    throw ConfigError("inject: row-count mismatch between hidden states and guider features");
  }
  Mat<T> out = hidden;
  for (std::size_t r = 0; r < seq.index.size(); ++r) {
    const TokenRef& ref = seq.index[r];
    if (ref.garment) continue;
    out.row(static_cast<Eigen::Index>(r)) += features.row(ref.frame * seq.tokens_per_frame + ref.patch);
  }
  return out;
}

#define OIE_INSTANTIATE(T)                                                                          \
  template Model<T> attach_guider<T>(const Model<T>&);                                             \
  template Mat<T> guider_input<T>(const ModelConfig&, const VideoTensor&, const VideoTensor&);      \
  template ag::Var<T> guider_forward<T>(ParamBinding<T>&, const Mat<T>&);                           \
  template Mat<T> guider_forward<T>(const Model<T>&, const VideoTensor&, const VideoTensor&);        \
  template Mat<T> inject<T>(const Mat<T>&, const Mat<T>&, const LatentSequence<T>&);

OIE_INSTANTIATE(float)
OIE_INSTANTIATE(double)

#undef OIE_INSTANTIATE

}  // namespace oie
