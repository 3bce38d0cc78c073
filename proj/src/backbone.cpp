// SPDX-License-Identifier: Apache-2.0
#include "oie/backbone.hpp"

#include <cmath>

#include "oie/conditioning.hpp"

namespace oie {

TextStub make_text(const std::string& instruction, int vocab) {
  if (vocab < 1) throw ConfigError("text vocab must be positive");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : instruction) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return {instruction, static_cast<int>(h % static_cast<std::uint64_t>(vocab))};
}

template <class T>
Mat<T> timestep_embedding(T t, int d) {
  const int half = d / 2;
  Mat<T> e = Mat<T>::Zero(1, d);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    const double arg = 1000.0 * static_cast<double>(t) * freq;
    e(0, i) = static_cast<T>(std::cos(arg));
    e(0, half + i) = static_cast<T>(std::sin(arg));
  }
  return e;
}

template <class T>
Model<T> init_model(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0xBAC4B0));
  Model<double> m;
  m.config = cfg;
  const int d = cfg.width, f = cfg.ffn_width();
  auto normal = [&](const std::string& name, int rows, int cols, double std) {
    m.params[name] = {random_normal<double>(rows, cols, std, rng), true};
  };
  auto zeros = [&](const std::string& name, int rows, int cols) {
    m.params[name] = {Mat<double>::Zero(rows, cols), true};
  };
  const double s = 1.0 / std::sqrt(static_cast<double>(d));

  normal("patch_in.weight_x", d, d, s);
  normal("patch_in.weight_c", d, d, s);
  zeros("patch_in.bias", 1, d);
  normal("pos.video", cfg.video_tokens(), d, 0.5);
  normal("pos.garment", cfg.tokens_per_frame(), d, 0.5);
  normal("time.fc1.weight", d, d, s);
  zeros("time.fc1.bias", 1, d);
  normal("time.fc2.weight", d, d, s);
  zeros("time.fc2.bias", 1, d);

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    // Modulation rows: shift1, scale1, gate1, shift2, scale2, gate2.
    normal(p + "ada.weight", d, 6 * d, 0.2 * s);
    zeros(p + "ada.bias", 1, 6 * d);
    m.params[p + "ada.bias"].value.middleCols(2 * d, d).setOnes();
    m.params[p + "ada.bias"].value.middleCols(5 * d, d).setOnes();
    for (const char* attn : {"sa", "ca"}) {
      for (const char* proj : {"q", "k", "v", "o"}) {
        normal(p + attn + "." + proj + ".weight", d, d, s);
        zeros(p + attn + "." + proj + ".bias", 1, d);
      }
    }
    normal(p + "ffn.up.weight", d, f, s);
    zeros(p + "ffn.up.bias", 1, f);
    normal(p + "ffn.down.weight", f, d, 1.0 / std::sqrt(static_cast<double>(f)));
    zeros(p + "ffn.down.bias", 1, d);
  }
  normal("final.ada.weight", d, 2 * d, 0.2 * s);
  zeros("final.ada.bias", 1, 2 * d);
  normal("final.out.weight", d, d, s);
  zeros("final.out.bias", 1, d);

  normal("text.embedding", cfg.text_vocab, d, 1.0);
  init_guider(m);
  return m.template cast<T>();
}

namespace {

template <class T>
ag::Var<T> projection(ParamBinding<T>& p, const std::string& block, const std::string& name,
                      const std::string& lora_key, const ag::Var<T>& x) {
  auto& g = p.graph();
  ag::Var<T> y = ag::linear(g, x, p(block + name + ".weight"), p(block + name + ".bias"));
  const std::string a = "lora." + lora_key + ".A";
  if (p.model().has(a)) {
    const T sc = static_cast<T>(p.model().lora->delta_scale());
    auto delta = ag::matmul_bt(g, ag::matmul(g, x, p(a)), p("lora." + lora_key + ".B"));
    y = ag::add(g, y, ag::scale(g, delta, sc));
  }
  return y;
}

template <class T>
ag::Var<T> block_forward(ParamBinding<T>& p, int b, const ag::Var<T>& h_in, const ag::Var<T>& cond,
                         const ag::Var<T>& text_row) {
  auto& g = p.graph();
  const ModelConfig& cfg = p.model().config;
  const int d = cfg.width;
  const std::string blk = "blocks." + std::to_string(b) + ".";
  const std::string key = std::to_string(b) + ".";

  auto mod = ag::linear(g, cond, p(blk + "ada.weight"), p(blk + "ada.bias"));
  auto chunk = [&](int i) { return ag::slice_cols(g, mod, i * d, d); };

  ag::Var<T> h = h_in;
  {
    auto x = ag::modulate(g, ag::layer_norm(g, h), chunk(0), chunk(1));
    auto q = projection(p, blk, "sa.q", key + "sa_q", x);
    auto k = projection(p, blk, "sa.k", key + "sa_k", x);
    auto v = projection(p, blk, "sa.v", key + "sa_v", x);
    auto a = projection(p, blk, "sa.o", key + "sa_o", ag::attention(g, q, k, v, cfg.heads));
    h = ag::gated_add(g, h, chunk(2), a);
  }
  {
    auto q = projection(p, blk, "ca.q", key + "ca_q", h);
    auto k = projection(p, blk, "ca.k", key + "ca_k", text_row);
    auto v = projection(p, blk, "ca.v", key + "ca_v", text_row);
    auto a = projection(p, blk, "ca.o", key + "ca_o", ag::attention(g, q, k, v, cfg.heads));
    h = ag::add(g, h, a);
  }
  {
    auto x = ag::modulate(g, ag::layer_norm(g, h), chunk(3), chunk(4));
    auto up = ag::gelu(g, projection(p, blk, "ffn.up", key + "ffn_up", x));
    auto down = projection(p, blk, "ffn.down", key + "ffn_down", up);
    h = ag::gated_add(g, h, chunk(5), down);
  }
  return h;
}

}  // namespace

template <class T>
ag::Var<T> forward(ParamBinding<T>& p, const ag::Var<T>& x_t, const LatentSequence<T>& seq, const TextStub& text,
                   T t, const ag::Var<T>& guider) {
  auto& g = p.graph();
  const ModelConfig& cfg = p.model().config;
  const int d = cfg.width;
  const int video = cfg.video_tokens();
  if (!(t >= T(0) && t <= T(1))) throw ConfigError("forward: t must lie in [0, 1]");
  if (x_t->value.rows() != video || x_t->value.cols() != d) {
    throw ConfigError("forward: noisy latent shape " + std::to_string(x_t->value.rows()) + "x" +
                      std::to_string(x_t->value.cols()) + " does not match the model's " +
                      std::to_string(video) + "x" + std::to_string(d));
  }
  if (seq.video_rows() != video || seq.rows.cols() != d ||
      seq.garment_rows > cfg.tokens_per_frame() || seq.garment_rows < 1) {
    throw ConfigError("forward: latent sequence does not match the model config");
  }
  if (guider && (guider->value.rows() != video || guider->value.cols() != d)) {
    throw ConfigError("forward: guider features do not match the video-token grid");
  }
  if (text.id < 0 || text.id >= cfg.text_vocab) throw ConfigError("forward: text id out of range");

  auto temb = ag::linear(g, g.constant(timestep_embedding<T>(t, d)), p("time.fc1.weight"), p("time.fc1.bias"));
  temb = ag::linear(g, ag::silu(g, temb), p("time.fc2.weight"), p("time.fc2.bias"));
  auto cond = ag::silu(g, temb);
  auto text_row = ag::gather_row(g, p("text.embedding"), text.id);

  const int G = seq.garment_rows;
  auto garment = g.constant(seq.rows.topRows(G));
  auto pose = g.constant(seq.rows.bottomRows(video));

  auto hg = ag::linear(g, garment, p("patch_in.weight_c"), p("patch_in.bias"));
  hg = ag::add(g, hg, ag::slice_rows(g, p("pos.garment"), 0, G));
  auto hv = ag::add(g, ag::matmul(g, x_t, p("patch_in.weight_x")),
                    ag::linear(g, pose, p("patch_in.weight_c"), p("patch_in.bias")));
  hv = ag::add(g, hv, p("pos.video"));
  auto h = ag::concat_rows(g, hg, hv);

  for (int b = 0; b < cfg.blocks; ++b) {
    h = block_forward(p, b, h, cond, text_row);
    if (b == 0 && guider) h = ag::add_rows_at(g, h, guider, G);
  }

  auto fmod = ag::linear(g, cond, p("final.ada.weight"), p("final.ada.bias"));
  auto hvid = ag::slice_rows(g, h, G, video);
  auto y = ag::modulate(g, ag::layer_norm(g, hvid), ag::slice_cols(g, fmod, 0, d), ag::slice_cols(g, fmod, d, d));
  return ag::linear(g, y, p("final.out.weight"), p("final.out.bias"));
}

template <class T>
Mat<T> forward(const Model<T>& model, const Mat<T>& x_t, const LatentSequence<T>& seq, const TextStub& text, T t,
               const Mat<T>* guider) {
  ag::Graph<T> g(false);
  ParamBinding<T> p(g, model);
  ag::Var<T> gf = guider ? g.constant(*guider) : nullptr;
  return forward(p, g.constant(x_t), seq, text, t, gf)->value;
}

#define OIE_INSTANTIATE(T)                                                                                     \
  template Model<T> init_model<T>(const ModelConfig&);                                                          \
  template Mat<T> timestep_embedding<T>(T, int);                                                                \
  template ag::Var<T> forward<T>(ParamBinding<T>&, const ag::Var<T>&, const LatentSequence<T>&, const TextStub&, \
                                 T, const ag::Var<T>&);                                                         \
  template Mat<T> forward<T>(const Model<T>&, const Mat<T>&, const LatentSequence<T>&, const TextStub&, T,       \
                             const Mat<T>*);

OIE_INSTANTIATE(float)
OIE_INSTANTIATE(double)

#undef OIE_INSTANTIATE

}  // namespace oie
