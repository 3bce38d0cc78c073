// SPDX-License-Identifier: Apache-2.0
#include <set>

#include "doctest.h"
#include "oie/adapters.hpp"
#include "oie/backbone.hpp"
#include "oie/conditioning.hpp"
#include "support.hpp"

using namespace oie;

namespace {

// Hand-summed parameter count of init_model for `c`, guider included.
std::int64_t closed_form_params(const ModelConfig& c) {
  const std::int64_t d = c.width, f = c.ffn_width(), P = c.tokens_per_frame(), V = c.video_tokens();
  std::int64_t n = 2 * d * d + d;           // patch_in
  n += V * d + P * d;                       // positional tables
  n += 2 * (d * d + d);                     // time MLP
  n += c.blocks * (d * 6 * d + 6 * d        // adaLN
                   + 8 * (d * d + d)        // self + cross attention
                   + d * f + f + f * d + d  // FFN
                  );
  n += d * 2 * d + 2 * d + d * d + d;       // final modulation and output
  n += c.text_vocab * d;
  std::int64_t cin = c.channels + 1;
  for (int ch : c.guider_channels) {
    n += 27 * cin * ch + ch;
    cin = ch;
  }
  return n + cin * d + d;
}

template <class T>
Mat<T> run(const Model<T>& m, const TrainExample<T>& ex, T t, bool with_guider) {
  ag::Graph<T> g(false);
  ParamBinding<T> p(g, m);
  ag::Var<T> gf;
  if (with_guider) gf = guider_forward(p, ex.cond.guider_input);
  Rng rng(77);
  const Mat<T> xt = random_normal<T>(m.config.video_tokens(), m.config.width, 1.0, rng);
  return forward(p, g.constant(xt), ex.cond.sequence, ex.cond.text, t, gf)->value;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  c.width = 65;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("d not divisible by n_heads") != std::string::npos);
  }
  CHECK(ModelConfig::scaled_guider_channels(64) == std::array<int, 4>{4, 6, 12, 16});
  CHECK(ModelConfig::scaled_guider_channels(1024) == std::array<int, 4>{32, 96, 192, 256});
  CHECK(model_config_from_json(to_json(ModelConfig{})) == ModelConfig{});
}

TEST_CASE("parameter count matches the closed form") {
  for (const ModelConfig& c : {ModelConfig{}, test::tiny_config()}) {
    const auto m = init_model<float>(c);
    const ParamReport r = count_params(m);
    CHECK(r.total == closed_form_params(c));
    CHECK(r.trainable == r.total);
  }
  // A single 4 -> 3 linear with bias.
  Model<double> lin;
  lin.params["w"] = {Mat<double>::Zero(4, 3), true};
  lin.params["b"] = {Mat<double>::Zero(1, 3), true};
  CHECK(count_params(lin).total == 15);
}

TEST_CASE("init is deterministic and honours the seed") {
  const ModelConfig c = test::tiny_config();
  const auto a = init_model<double>(c), b = init_model<double>(c);
  for (const auto& [name, p] : a.params) CHECK(p.value == b.at(name));
  ModelConfig other = c;
  other.seed = 4;
  CHECK(init_model<double>(other).at("blocks.0.sa.q.weight") != a.at("blocks.0.sa.q.weight"));
  CHECK(a.at("guider.proj.weight").cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.at("guider.proj.bias").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward shape, determinism and width") {
  const ModelConfig c = test::tiny_config();
  const auto m = init_model<double>(c);
  const auto ex = test::random_example<double>(c, 1);
  const Mat<double> y = run(m, ex, 0.3, true);
  CHECK(y.rows() == c.video_tokens());
  CHECK(y.cols() == c.width);
  CHECK(run(m, ex, 0.3, true) == y);

  ModelConfig wide = c;
  wide.width = 16;
  const auto mw = init_model<double>(wide);
  CHECK(run(mw, test::random_example<double>(wide, 1), 0.3, true).cols() == 16);
}

TEST_CASE("forward argument checks") {
  const ModelConfig c = test::tiny_config();
  const auto m = init_model<double>(c);
  const auto ex = test::random_example<double>(c, 1);
  const Mat<double> xt = Mat<double>::Zero(c.video_tokens(), c.width);
  CHECK_THROWS_AS(forward(m, xt, ex.cond.sequence, ex.cond.text, 1.5), ConfigError);
  CHECK_THROWS_AS(forward(m, xt, ex.cond.sequence, ex.cond.text, -0.1), ConfigError);
  CHECK_THROWS_AS(forward(m, Mat<double>(Mat<double>::Zero(3, c.width)), ex.cond.sequence, ex.cond.text, 0.5),
                  ConfigError);
  const Mat<double> bad_guider = Mat<double>::Zero(3, c.width);
  CHECK_THROWS_AS(forward(m, xt, ex.cond.sequence, ex.cond.text, 0.5, &bad_guider), ConfigError);
}

TEST_CASE("zero-initialised guider is a no-op at init") {
  const ModelConfig c = test::tiny_config();
  const auto m = init_model<double>(c);
  const auto ex = test::random_example<double>(c, 2);
  CHECK(run(m, ex, 0.6, true) == run(m, ex, 0.6, false));
  const auto plain = detach_guider(m);
  CHECK(run(plain, ex, 0.6, false) == run(m, ex, 0.6, true));
}

TEST_CASE("garment block rows steer attention") {
  const ModelConfig c = test::tiny_config();
  const auto m = init_model<double>(c);
  auto ex = test::random_example<double>(c, 3);
  const Mat<double> y = run(m, ex, 0.5, false);
  ex.cond.sequence.rows.row(0).swap(ex.cond.sequence.rows.row(1));
  CHECK((run(m, ex, 0.5, false) - y).cwiseAbs().maxCoeff() > 1e-9);
  ex.cond.sequence.rows.row(1) = ex.cond.sequence.rows.row(0);
  const Mat<double> same = run(m, ex, 0.5, false);
  ex.cond.sequence.rows.row(0).swap(ex.cond.sequence.rows.row(1));
  CHECK(run(m, ex, 0.5, false) == same);
}

TEST_CASE("timestep embedding") {
  const Mat<double> e = timestep_embedding<double>(0.0, 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(e(0, i) == 1.0);
    CHECK(e(0, 4 + i) == 0.0);
  }
  const Mat<double> h = timestep_embedding<double>(0.5, 8);
  CHECK(h(0, 0) == doctest::Approx(std::cos(500.0)));
  CHECK(h(0, 5) == doctest::Approx(std::sin(500.0 * std::exp(-std::log(10000.0) / 4))));
}

TEST_CASE("text stub") {
  CHECK(make_text("replace the garment", 16).id == make_text("replace the garment", 16).id);
  const TextStub t = make_text("anything", 5);
  CHECK(t.id >= 0);
  CHECK(t.id < 5);
  CHECK_THROWS_AS(make_text("x", 0), ConfigError);
}

TEST_CASE("LoRA attach: transparency, freezing and counts") {
  const ModelConfig c = test::tiny_config();
  const auto base = init_model<double>(c);
  LoraConfig lc;
  lc.rank = 2;
  const auto adapted = attach_lora(base, lc);
  const auto ex = test::random_example<double>(c, 4);
  CHECK((run(adapted, ex, 0.4, true) - run(base, ex, 0.4, true)).cwiseAbs().maxCoeff() <= 1e-7);

  for (const auto& [name, p] : adapted.params) CHECK(p.trainable == !is_base_param(name));
  const ParamReport r = count_params(adapted);
  CHECK(r.by_group.at("lora") == c.blocks * (8 * 2 * (8 + 8) + 2 * 2 * (8 + 16)));
  CHECK(r.total - count_params(base).total == r.by_group.at("lora"));
  CHECK(r.added_over_base == r.by_group.at("lora") + r.by_group.at("guider"));

  std::set<std::string> names;
  for (const auto& t : lora_targets(c, lc)) names.insert(t.key);
  CHECK(names.size() == static_cast<std::size_t>(c.blocks * 10));

  const double std_a = [&] {
    double s2 = 0;
    std::int64_t n = 0;
    for (const auto& [name, p] : attach_lora(init_model<double>(ModelConfig{}), LoraConfig{}).params) {
      if (name.rfind("lora.", 0) == 0 && name.back() == 'A') {
        s2 += p.value.squaredNorm();
        n += p.value.size();
      } else if (name.rfind("lora.", 0) == 0) {
        CHECK(p.value.cwiseAbs().maxCoeff() == 0.0);
      }
    }
    return std::sqrt(s2 / static_cast<double>(n));
  }();
  CHECK(std_a == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("LoRA counting example on Q, K, V") {
  LoraConfig lc;
  lc.sites = {LoraSite::Q, LoraSite::K, LoraSite::V};
  lc.cross_attention = false;
  const auto m = attach_lora(init_model<float>(ModelConfig{}), lc);
  CHECK(count_params(m).by_group.at("lora") == 6144);
}

TEST_CASE("LoRA rank bound names the site") {
  LoraConfig lc;
  lc.rank = 64;
  try {
    attach_lora(init_model<float>(ModelConfig{}), lc);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rank not < min(d,k)") != std::string::npos);
    CHECK(std::string(e.what()).find("0.sa_q") != std::string::npos);
  }
  Model<double> one;
  one.config.width = 8;
  one.config.blocks = 1;
  one.config.heads = 1;
  one.config.ffn_mult = 1;
  one.params["blocks.0.sa.q.weight"] = {Mat<double>::Zero(8, 8), true};
  LoraConfig q;
  q.rank = 2;
  q.sites = {LoraSite::Q};
  q.cross_attention = false;
  CHECK(count_params(attach_lora(one, q)).by_group.at("lora") == 32);
  CHECK_THROWS_AS(attach_lora(attach_lora(one, q), q), ConfigError);
}

TEST_CASE("merge: exact on fresh adapters, equivalent on trained ones, idempotent") {
  const ModelConfig c = test::tiny_config();
  const auto base = init_model<double>(c);
  auto adapted = attach_lora(base, LoraConfig{2, 3.0});
  const auto fresh = merge_lora(adapted);
  for (const auto& [name, p] : base.params) CHECK(fresh.at(name) == p.value);
  CHECK_FALSE(fresh.lora);

  test::randomize_adapters(adapted, 0.3, 5);
  const auto merged = merge_lora(adapted);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto ex = test::random_example<double>(c, 50 + s);
    CHECK(test::max_rel_err(run(merged, ex, 0.7, true), run(adapted, ex, 0.7, true)) <= 1e-5);
  }
  const auto twice = merge_lora(merged);
  for (const auto& [name, p] : merged.params) CHECK(twice.at(name) == p.value);
}

TEST_CASE("guider grid and mask channel") {
  for (int patch : {1, 2, 4, 8}) {
    ModelConfig c;
    c.patch = patch;
    c.frames = 3;
    for (int i = 0; i < 4; ++i) CHECK(guider_layer_shape(c, i).stride_t == 1);
    const auto m = attach_guider(detach_guider(init_model<float>(c)));
    Rng rng(1);
    const Mat<float> in =
        random_normal<float>(c.frames * c.frame_height * c.frame_width, c.channels + 1, 1.0, rng);
    ag::Graph<float> g(false);
    ParamBinding<float> p(g, m);
    CHECK(guider_forward(p, in)->value.rows() == c.video_tokens());
    CHECK(guider_forward(p, in)->value.cwiseAbs().maxCoeff() == 0.0f);
  }
  const ModelConfig c;
  const auto m = init_model<float>(c);
  CHECK_THROWS_AS(attach_guider(m), ConfigError);
  CHECK_THROWS_AS(guider_input<float>(c, VideoTensor(8, 3, 16, 32), VideoTensor(8, 1, 16, 32)), ConfigError);
  CHECK_THROWS_AS(guider_input<float>(c, VideoTensor(8, 3, 32, 32), VideoTensor(8, 3, 32, 32)), ConfigError);
  const Mat<float> gi = guider_input<float>(c, test::random_video(8, 3, 32, 32, 1), VideoTensor(8, 1, 32, 32, 1.0f));
  CHECK(gi.cols() == 4);
  CHECK(gi.col(3).minCoeff() == 1.0f);
}

TEST_CASE("inject adds to video rows only") {
  const ModelConfig c = test::tiny_config();
  const auto ex = test::random_example<double>(c, 6);
  const auto& seq = ex.cond.sequence;
  Rng rng(2);
  const Mat<double> h = random_normal<double>(static_cast<int>(seq.rows.rows()), c.width, 1.0, rng);
  const Mat<double> gf = random_normal<double>(c.video_tokens(), c.width, 1.0, rng);
  CHECK(inject(h, Mat<double>(Mat<double>::Zero(c.video_tokens(), c.width)), seq) == h);
  const Mat<double> out = inject(h, gf, seq);
  CHECK(out.topRows(seq.garment_rows) == h.topRows(seq.garment_rows));
  CHECK((out.bottomRows(c.video_tokens()) - h.bottomRows(c.video_tokens()) - gf).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((inject(out, Mat<double>(-gf), seq) - h).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK_THROWS_AS(inject(h, Mat<double>(gf.topRows(3)), seq), ConfigError);
}

TEST_CASE("conditioning adds no structural change to the backbone") {
  const auto base = detach_guider(merge_lora(init_model<float>(ModelConfig{})));
  const auto cond = attach_lora(attach_guider(base), LoraConfig{});
  std::set<std::string> a, b;
  for (const auto& [name, p] : base.params) a.insert(name);
  for (const auto& [name, p] : cond.params)
    if (is_base_param(name) || name.rfind("text.", 0) == 0) b.insert(name);
  CHECK(a == b);
  for (const auto& name : a) CHECK(cond.at(name) == base.at(name));
}

TEST_CASE("gradients match central differences (tiny, 64-bit)") {
  const ModelConfig c = test::tiny_config();
  SUBCASE("all parameters of the bare backbone") {
    const auto m = init_model<double>(c);
    const auto ex = test::random_example<double>(c, 8);
    const auto path = sample_path<double>(ex.target, 3, 0.37);
    for (const auto& [name, err] : test::gradient_errors(m, ex, path)) {
      INFO(name);
      CHECK(err < 1e-4);
    }
  }
  SUBCASE("adapted model with live adapters and guider") {
    auto m = attach_lora(init_model<double>(c), LoraConfig{2, 2.0});
    test::randomize_adapters(m, 0.2, 4);
    Rng rng(9);
    m.at("guider.proj.weight") = random_normal<double>(4, c.width, 0.3, rng);
    const auto ex = test::random_example<double>(c, 9);
    const auto path = sample_path<double>(ex.target, 4, 0.81);
    const auto errs = test::gradient_errors(m, ex, path);
    CHECK(errs.count("lora.0.sa_q.A") == 1);
    CHECK(errs.count("blocks.0.sa.q.weight") == 0);
    for (const auto& [name, err] : errs) {
      INFO(name);
      CHECK(err < 1e-4);
    }
  }
}
