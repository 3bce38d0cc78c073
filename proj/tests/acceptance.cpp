// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Criteria listed with
// --expect-fail are still run and reported; they only stop counting towards
// the exit status.
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "oie/adapters.hpp"
#include "oie/backbone.hpp"
#include "oie/conditioning.hpp"
#include "oie/efficiency.hpp"
#include "oie/metrics.hpp"
#include "oie/pipeline.hpp"
#include "support.hpp"

using namespace oie;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Conditioning<double> to_double(const Conditioning<float>& c) {
  Conditioning<double> out;
  out.sequence = {c.sequence.rows.cast<double>(), c.sequence.garment_rows, c.sequence.frames,
                  c.sequence.tokens_per_frame, c.sequence.index};
  out.guider_input = c.guider_input.cast<double>();
  out.text = c.text;
  out.first_frame = c.first_frame.cast<double>();
  return out;
}

template <class T>
Mat<T> forward_with_guider(const Model<T>& m, const TrainExample<T>& ex, const Mat<T>& xt, T t) {
  ag::Graph<T> g(false);
  ParamBinding<T> p(g, m);
  ag::Var<T> gf;
  if (m.has_guider()) gf = guider_forward(p, ex.cond.guider_input);
  return forward(p, g.constant(xt), ex.cond.sequence, ex.cond.text, t, gf)->value;
}

// State shared by the training-based criteria.
struct Shared {
  PipelineConfig cfg;
  fs::path work;
  std::optional<Manifest> manifest;
  std::optional<Model<float>> base;
  std::map<std::uint64_t, TrainResult> full_runs;
  std::map<std::uint64_t, double> full_ssim;
  double untrained_ssim = 0.0;
  bool have_untrained = false;

  const Manifest& data() {
    if (!manifest) manifest = build_dataset(cfg.data, work / "dataset");
    return *manifest;
  }
  const Model<float>& base_model() {
    if (!base) {
      const auto t0 = std::chrono::steady_clock::now();
      base = load_or_pretrain_base(cfg, work / "base");
      std::printf("  base model ready (%.0f s)\n", seconds_since(t0));
      std::fflush(stdout);
    }
    return *base;
  }
  const TrainResult& full(std::uint64_t seed) {
    auto it = full_runs.find(seed);
    if (it == full_runs.end()) {
      const auto t0 = std::chrono::steady_clock::now();
      it = full_runs.emplace(seed, train(cfg, base_model(), data(), Variant::Full, seed)).first;
      std::printf("  full/seed %llu: %lld steps, smoothed loss %.4f -> %.4f (%.0f s)\n",
                  static_cast<unsigned long long>(seed), static_cast<long long>(it->second.state.step),
                  it->second.initial_smoothed, it->second.final_smoothed, seconds_since(t0));
      std::fflush(stdout);
    }
    return it->second;
  }
  double paired_ssim(const Model<float>& m, Variant v) {
    OracleEditor editor;
    return run_eval(cfg, m, data(), EvalSetting::Paired, v, editor).report.ssim;
  }
  double full_paired_ssim(std::uint64_t seed) {
    auto it = full_ssim.find(seed);
    if (it == full_ssim.end()) it = full_ssim.emplace(seed, paired_ssim(full(seed).state.model, Variant::Full)).first;
    return it->second;
  }
};

Outcome c1_zero_init_chain(Shared& sh) {
  const PipelineConfig& cfg = sh.cfg;
  const Model<float>& base = sh.base_model();
  const Model<float> chained = conditioned_model(base, cfg, Variant::Full);
  const Codec codec = make_codec(cfg);
  const auto eval = sh.data().split("eval");
  float worst32 = 0.0f;
  bool bitwise64 = true;
  for (std::size_t i = 0; i < 3; ++i) {
    const Sample s = load_sample(sh.data(), *eval[i]);
    const auto in = tryon_inputs(s, sh.data().garments.at(s.g_worn), cfg.instruction);
    OracleEditor e;
    const TryonOptions opt{eval_seed(eval[i]->index), cfg.inference_steps, Variant::Full};
    worst32 = std::max(worst32, max_abs_diff(run_tryon(base, codec, in, e, opt), run_tryon(chained, codec, in, e, opt)));
    const auto prep_bare = prepare_conditioning(base, codec, in, e, Variant::Full);
    const auto prep_full = prepare_conditioning(chained, codec, in, e, Variant::Full);
    const Mat<double> z_bare = euler_sample(base.cast<double>(), to_double(prep_bare.cond), cfg.inference_steps, opt.seed);
    const Mat<double> z_full =
        euler_sample(chained.cast<double>(), to_double(prep_full.cond), cfg.inference_steps, opt.seed);
    bitwise64 = bitwise64 && z_bare.size() == z_full.size() &&
                std::memcmp(z_bare.data(), z_full.data(), sizeof(double) * static_cast<std::size_t>(z_bare.size())) == 0;
  }
  return {worst32 <= 1e-6f && bitwise64,
          fmt("guider+LoRA vs bare base over 3 eval videos: max abs %.3g in 32-bit, %s in 64-bit", worst32,
              bitwise64 ? "bitwise identical" : "NOT bitwise identical")};
}

Outcome c2_merge(const PipelineConfig& cfg) {
  Model<float> adapted = conditioned_model(detach_guider(init_model<float>(cfg.model)), cfg, Variant::Full);
  test::randomize_adapters(adapted, 0.05, 2024);
  Rng rng(11);
  for (auto& [name, p] : adapted.params) {
    if (name == "guider.proj.weight") p.value = random_normal<float>(p.value.rows(), p.value.cols(), 0.05, rng);
  }
  const Model<float> merged = merge_lora(adapted);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto ex = test::random_example<float>(cfg.model, 1000 + static_cast<std::uint64_t>(i));
    const Mat<float> xt = random_normal<float>(cfg.model.video_tokens(), cfg.model.width, 1.0, rng);
    const float t = static_cast<float>(rng.uniform());
    worst = std::max(worst, test::max_rel_err(forward_with_guider(merged, ex, xt, t),
                                              forward_with_guider(adapted, ex, xt, t)));
  }
  return {worst <= 1e-5, fmt("merged vs adapter path on 100 random inputs: max rel err %.3g (<= 1e-5)", worst)};
}

Outcome c3_gradients() {
  Model<double> m = attach_lora(init_model<double>(test::tiny_config()), LoraConfig{2, 2.0});
  test::randomize_adapters(m, 0.3, 8);
  Rng rng(5);
  m.at("guider.proj.weight") = random_normal<double>(static_cast<int>(m.at("guider.proj.weight").rows()),
                                                     m.config.width, 0.3, rng);
  double worst = 0.0;
  std::string worst_name;
  std::size_t tensors = 0;
  for (std::uint64_t trial = 0; trial < 2; ++trial) {
    const auto ex = test::random_example<double>(m.config, 40 + trial);
    const auto path = sample_path(ex.target, 90 + trial);
    for (const auto& [name, err] : test::gradient_errors(m, ex, path)) {
      ++tensors;
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
  }
  return {worst < 1e-4, fmt("%zu trainable tensors (d=8, 2 blocks, 64-bit): max rel err %.3g at %s (< 1e-4)", tensors,
                            worst, worst_name.c_str())};
}

Outcome c4_euler() {
  Mat<double> one(1, 1);
  one(0, 0) = 1.0;
  const Mat<double> decay = euler_integrate<double>(one, 10, [](const Mat<double>& x, double) -> Mat<double> {
    return -x;
  });
  const double err = std::abs(decay(0, 0) - std::pow(0.9, 10));
  Mat<double> start = Mat<double>::Constant(2, 3, -0.25);
  Mat<double> vel(2, 3);
  vel << 1, 2, 3, -4, 5.5, 0.125;
  const Mat<double> end = euler_integrate<double>(start, 1, [&](const Mat<double>&, double) { return vel; });
  const bool exact = end == (start + vel).eval();
  return {err <= 1e-12 && exact,
          fmt("u=-x, 10 steps: %.12f vs 0.9^10, err %.2g; constant field endpoint %s", decay(0, 0), err,
              exact ? "exact" : "NOT exact")};
}

Outcome c5_codec(const PipelineConfig& cfg) {
  const Codec codec = make_codec(cfg);
  const GenerationConfig& g = cfg.data;
  float worst = 0.0f;
  for (int i = 0; i < 100; ++i) {
    const VideoTensor v = test::random_video(g.frames, 3, g.height, g.width, 500 + static_cast<std::uint64_t>(i));
    worst = std::max(worst, max_abs_diff(codec.decode_video(codec.encode_video<float>(v), g.height, g.width), v));
  }
  return {worst <= 1e-5f, fmt("decode(encode(v)) on 100 random videos: max abs err %.3g (<= 1e-5)", worst)};
}

Outcome c6_training(Shared& sh) {
  int ok = 0;
  std::ostringstream d;
  for (std::uint64_t seed : sh.cfg.seeds) {
    const TrainResult& r = sh.full(seed);
    const double ratio = r.final_smoothed / r.initial_smoothed;
    ok += ratio <= 0.5;
    d << fmt("seed %llu: %.4f -> %.4f (%.1f%%); ", static_cast<unsigned long long>(seed), r.initial_smoothed,
             r.final_smoothed, 100 * ratio);
  }
  d << fmt("need <= 50%% on %zu/%zu", sh.cfg.seeds.size(), sh.cfg.seeds.size());
  return {ok == static_cast<int>(sh.cfg.seeds.size()), d.str()};
}

Outcome c7_efficacy(Shared& sh) {
  if (!sh.have_untrained) {
    sh.untrained_ssim = sh.paired_ssim(conditioned_model(sh.base_model(), sh.cfg, Variant::Full), Variant::Full);
    sh.have_untrained = true;
  }
  int ok = 0;
  std::ostringstream d;
  d << fmt("untrained paired SSIM %.4f; ", sh.untrained_ssim);
  for (std::uint64_t seed : sh.cfg.seeds) {
    const double s = sh.full_paired_ssim(seed);
    ok += s - sh.untrained_ssim >= 0.05;
    d << fmt("seed %llu trained %.4f (%+.4f); ", static_cast<unsigned long long>(seed), s, s - sh.untrained_ssim);
  }
  d << fmt("need +0.05 on %zu/%zu", sh.cfg.seeds.size(), sh.cfg.seeds.size());
  return {ok == static_cast<int>(sh.cfg.seeds.size()), d.str()};
}

Outcome c8_ablation(Shared& sh) {
  constexpr double kTie = 0.01;  // SSIM differences below this count as ties
  int ordered = 0, both_worst = 0;
  std::ostringstream d;
  for (std::uint64_t seed : sh.cfg.seeds) {
    std::map<Variant, double> ssim;
    ssim[Variant::Full] = sh.full_paired_ssim(seed);
    for (Variant v : {Variant::NoAgnostic, Variant::NoPose, Variant::NoBoth}) {
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult r = train(sh.cfg, sh.base_model(), sh.data(), v, seed);
      ssim[v] = sh.paired_ssim(r.state.model, v);
      std::printf("  %s/seed %llu: loss %.4f -> %.4f, paired SSIM %.4f (%.0f s)\n", to_string(v).c_str(),
                  static_cast<unsigned long long>(seed), r.initial_smoothed, r.final_smoothed, ssim[v],
                  seconds_since(t0));
      std::fflush(stdout);
    }
    const double full = ssim[Variant::Full], noagn = ssim[Variant::NoAgnostic], nopose = ssim[Variant::NoPose],
                 noboth = ssim[Variant::NoBoth];
    ordered += full > noagn && noagn > nopose;
    both_worst += noboth <= std::min({full, noagn, nopose}) || std::abs(noboth - nopose) < kTie;
    d << fmt("seed %llu full %.4f, no_agnostic %.4f, no_pose %.4f, no_both %.4f; ",
             static_cast<unsigned long long>(seed), full, noagn, nopose, noboth);
  }
  const int need = static_cast<int>(sh.cfg.seeds.size()) / 2 + 1;
  d << fmt("ordering held on %d, no_both worst-or-tied on %d (need %d)", ordered, both_worst, need);
  return {ordered >= need && both_worst >= need, d.str()};
}

Outcome c9_efficiency(const PipelineConfig& cfg) {
  const double reported = overhead_pct(14.28602e9, 14.36269e9);
  const bool rounds = std::abs(std::round(reported * 1e4) / 1e4 - 0.5367) < 1e-12;
  const Model<float> adapted = conditioned_model(detach_guider(init_model<float>(cfg.model)), cfg, Variant::Full);
  const EfficiencyReport r = build_report(cfg.model, adapted, TimingOptions{0, 0, false});
  const bool additive = r.breakdown.total() == r.breakdown.base + r.breakdown.guider + r.breakdown.lora &&
                        r.flops_conditioned == r.breakdown.total() && r.flops_base == r.breakdown.base &&
                        r.flops_merged == r.breakdown.base + r.breakdown.guider &&
                        r.breakdown.base == estimate_flops(cfg.model, false, std::nullopt).total();
  const bool pass = rounds && r.trainable_pct < 2.0 && r.flops_overhead_pct < 5.0 && additive;
  return {pass, fmt("reported counts give %.4f%% overhead (%s); toy trainable/total %.3f%% (< 2%%), FLOPs overhead "
                    "%.3f%% (< 5%%), additivity %s",
                    reported, rounds ? "0.5367" : "NOT 0.5367", r.trainable_pct, r.flops_overhead_pct,
                    additive ? "exact" : "BROKEN")};
}

Outcome c10_single_injection(Shared& sh) {
  const Model<float> model = conditioned_model(sh.base_model(), sh.cfg, Variant::Full);
  const Codec codec = make_codec(sh.cfg);
  const Manifest& m = sh.data();
  Rng rng(2718);
  int good = 0;
  for (int run = 0; run < 20; ++run) {
    const SampleRecord& rec = m.samples[rng.next() % m.samples.size()];
    const int gid = static_cast<int>(rng.next() % m.garments.size());
    const Variant v = static_cast<Variant>(rng.next() % 4);
    OracleEditor e;
    TryonCounters counters;
    const TryonOptions opt{rng.next(), 1 + static_cast<int>(rng.next() % 4), v};
    run_tryon(model, codec, tryon_inputs(load_sample(m, rec), m.garments.at(gid), sh.cfg.instruction), e, opt,
              &counters);
    good += counters.editor_calls == 1 && counters.assemble_calls == 1 && e.calls() == 1;
  }
  return {good == 20, fmt("%d/20 randomized runs with exactly one edit and one sequence assembly", good)};
}

Outcome c11_metrics(const PipelineConfig& cfg) {
  double ssim_err = 0.0, perc_self = 0.0, perc_asym = 0.0;
  bool positive = true;
  std::vector<VideoTensor> set;
  for (int i = 0; i < 50; ++i) {
    const VideoTensor a = test::random_video(4, 3, 32, 32, 7000 + static_cast<std::uint64_t>(i));
    const VideoTensor b = test::random_video(4, 3, 32, 32, 9000 + static_cast<std::uint64_t>(i));
    ssim_err = std::max(ssim_err, std::abs(ssim_video(a, a) - 1.0));
    perc_self = std::max(perc_self, std::abs(perceptual_distance(a, a, cfg.feature_net_seed)));
    const double ab = perceptual_distance(a, b, cfg.feature_net_seed);
    perc_asym = std::max(perc_asym, std::abs(ab - perceptual_distance(b, a, cfg.feature_net_seed)));
    positive = positive && ab > 0.0;
    if (i < 16) set.push_back(a);
  }
  const double fvd = frechet_video_distance(set, set, cfg.feature_net_seed);
  const bool pass = ssim_err <= 1e-9 && std::abs(fvd) <= 1e-6 && perc_self == 0.0 && perc_asym <= 1e-12 && positive;
  return {pass, fmt("|ssim(v,v)-1| %.2g, fvd(S,S) %.2g, perceptual d(a,a) max %.2g, |d(a,b)-d(b,a)| max %.2g, d>0 %s",
                    ssim_err, fvd, perc_self, perc_asym, positive ? "on all 50" : "VIOLATED")};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-11"};
  std::string work = (fs::temp_directory_path() / "oie-acceptance").string(), only, expect_fail;
  app.add_option("--work", work, "Working directory for the dataset and base model")->capture_default_str();
  app.add_option("--only", only, "Comma-separated criteria to run (default: all)");
  app.add_option("--expect-fail", expect_fail, "Comma-separated criteria known to be unattainable");
  std::string patch;
  app.add_option("--set", patch, "JSON merge patch applied to the default configuration");
  CLI11_PARSE(app, argc, argv);

  Shared sh;
  if (!patch.empty()) sh.cfg = pipeline_config_from_json(nlohmann::json::parse(patch));
  sh.work = work;
  fs::create_directories(sh.work);
  const std::set<int> selected = parse_list(only), known = parse_list(expect_fail);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"zero-init transparency chain", [&] { return c1_zero_init_chain(sh); }},
      {"LoRA merge equivalence", [&] { return c2_merge(sh.cfg); }},
      {"gradient correctness", [] { return c3_gradients(); }},
      {"Euler integrator oracle", [] { return c4_euler(); }},
      {"codec round trip", [&] { return c5_codec(sh.cfg); }},
      {"training progress", [&] { return c6_training(sh); }},
      {"try-on efficacy trend", [&] { return c7_efficacy(sh); }},
      {"ablation direction", [&] { return c8_ablation(sh); }},
      {"efficiency accounting", [&] { return c9_efficiency(sh.cfg); }},
      {"single-injection invariant", [&] { return c10_single_injection(sh); }},
      {"metrics self-consistency", [&] { return c11_metrics(sh.cfg); }},
  };

  int unexpected = 0, passed = 0, known_failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool expected_failure = known.count(id) != 0;
    if (o.pass) ++passed;
    else if (expected_failure) ++known_failed;
    else ++unexpected;
    std::printf("[%s] %2d %s: %s [%.1f s]%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0), !o.pass && expected_failure ? " (known unattainable, see notes)" : "");
    std::fflush(stdout);
  }
  std::printf("%d passed, %d failed as known unattainable, %d failed unexpectedly\n", passed, known_failed, unexpected);
  return unexpected == 0 ? 0 : 1;
}
