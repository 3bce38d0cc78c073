// SPDX-License-Identifier: Apache-2.0
#include "oie/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace oie {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kStrokeHalfWidth = 1.0;  // 2 px strokes
constexpr double kMaskMargin = 1.0;       // agnostic box dilation, px

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

Rgb random_color(Rng& rng, double lo, double hi) {
  return {static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
          static_cast<float>(uniform(rng, lo, hi))};
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(a[c] + (b[c] - a[c]) * t);
  return out;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Inverse bilinear map of p into the unit square spanned by the quad.
std::pair<double, double> quad_coords(const std::array<Point, 4>& q, Point p) {
  const double ex = q[1].x - q[0].x, ey = q[1].y - q[0].y;
  const double fx = q[3].x - q[0].x, fy = q[3].y - q[0].y;
  const double gx = q[0].x - q[1].x + q[2].x - q[3].x, gy = q[0].y - q[1].y + q[2].y - q[3].y;
  double s = 0.5, t = 0.5;
  for (int it = 0; it < 12; ++it) {
    const double rx = q[0].x + s * ex + t * fx + s * t * gx - p.x;
    const double ry = q[0].y + s * ey + t * fy + s * t * gy - p.y;
    const double j00 = ex + t * gx, j01 = fx + s * gx;
    const double j10 = ey + t * gy, j11 = fy + s * gy;
    const double det = j00 * j11 - j01 * j10;
    if (std::abs(det) < 1e-12) break;
    s -= (j11 * rx - j01 * ry) / det;
    t -= (-j10 * rx + j00 * ry) / det;
  }
  return {std::clamp(s, 0.0, 1.0), std::clamp(t, 0.0, 1.0)};
}

Rgb sample_texture(const VideoTensor& tex, double s, double t) {
  const double u = s * tex.width - 0.5, v = t * tex.height - 0.5;
  const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
  const double ax = u - x0, ay = v - y0;
  auto px = [&](int c, int y, int x) {
    return static_cast<double>(tex.at(0, c, std::clamp(y, 0, tex.height - 1), std::clamp(x, 0, tex.width - 1)));
  };
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    const double top = px(c, y0, x0) * (1 - ax) + px(c, y0, x0 + 1) * ax;
    const double bot = px(c, y0 + 1, x0) * (1 - ax) + px(c, y0 + 1, x0 + 1) * ax;
    out[c] = static_cast<float>(top * (1 - ay) + bot * ay);
  }
  return out;
}

Rgb background_color(const SceneSpec& s, int f, double x, double y) {
  const double sx = x - s.pan * f;
  switch (s.background) {
    case BackgroundKind::Gradient: {
      const double t = 0.5 * y / s.height + 0.25 + 0.25 * std::cos(kTwoPi * sx / s.width);
      return lerp(s.color_a, s.color_b, t);
    }
    case BackgroundKind::Checker: {
      const auto cx = static_cast<long>(std::floor(sx / s.checker_period));
      const auto cy = static_cast<long>(std::floor(y / s.checker_period));
      return ((cx + cy) % 2 == 0) ? s.color_a : s.color_b;
    }
    case BackgroundKind::Solid:
      break;
  }
  return s.color_a;
}

void put(VideoTensor& v, int f, int y, int x, const Rgb& c) {
  for (int ch = 0; ch < 3; ++ch) v.at(f, ch, y, x) = c[ch];
}

const std::array<std::pair<int, int>, 4> kBones = {
    {{kHip, kShoulder}, {kShoulder, kHead}, {kShoulder, kLeftHand}, {kShoulder, kRightHand}}};

}  // namespace

Point SceneSpec::keypoint(int joint, int frame) const {
  const JointMotion& j = joints.at(static_cast<std::size_t>(joint));
  const double a = sway.omega * frame + sway.phase;
  const double b = j.omega * frame + j.phase;
  return {j.base.x + sway.amplitude * std::sin(a) + j.amplitude * std::sin(b),
          j.base.y + 0.5 * sway.amplitude * std::cos(a) + 0.5 * j.amplitude * std::cos(b)};
}

std::array<Point, 4> SceneSpec::torso_quad(int frame) const {
  const Point s = keypoint(kShoulder, frame), h = keypoint(kHip, frame);
  const double ux = s.x - h.x, uy = s.y - h.y;
  const double len = std::sqrt(ux * ux + uy * uy);
  const double nx = -uy / len, ny = ux / len;
  return {Point{s.x - shoulder_half_width * nx, s.y - shoulder_half_width * ny},
          Point{s.x + shoulder_half_width * nx, s.y + shoulder_half_width * ny},
          Point{h.x + hip_half_width * nx, h.y + hip_half_width * ny},
          Point{h.x - hip_half_width * nx, h.y - hip_half_width * ny}};
}

bool inside_quad(const std::array<Point, 4>& q, double x, double y) {
  const Point p{x, y};
  bool pos = false, neg = false;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(q[i], q[(i + 1) % 4], p);
    pos = pos || c > 0;
    neg = neg || c < 0;
  }
  return !(pos && neg);
}

SceneSpec make_scene(const GenerationConfig& config, std::uint64_t seed) {
  if (config.frames < 4) throw ConfigError("make_scene: need at least 4 frames");
  if (config.height < 32 || config.width < 32) throw ConfigError("make_scene: frames must be at least 32x32");
  if (config.patch < 1 || config.height % config.patch != 0 || config.width % config.patch != 0) {
    throw ConfigError("make_scene: frame size not divisible by patch size " + std::to_string(config.patch));
  }
  if (config.amplitude < 0.0 || config.pan_max < 0.0) throw ConfigError("make_scene: negative motion parameter");

  Rng rng(mix_seed(seed, 0x5CE4E));
  SceneSpec s;
  s.seed = seed;
  s.frames = config.frames;
  s.height = config.height;
  s.width = config.width;
  const double H = config.height, W = config.width;

  s.background = static_cast<BackgroundKind>(rng.next() % 3);
  s.color_a = random_color(rng, 0.1, 0.9);
  s.color_b = random_color(rng, 0.1, 0.9);
  s.checker_period = (rng.next() % 2 == 0) ? 4 : 8;
  s.pan = uniform(rng, -config.pan_max, config.pan_max);
  s.skin = {static_cast<float>(uniform(rng, 0.75, 0.95)), static_cast<float>(uniform(rng, 0.55, 0.7)),
            static_cast<float>(uniform(rng, 0.4, 0.55))};
  s.shoulder_half_width = 0.17 * W;
  s.hip_half_width = 0.13 * W;
  s.head_radius = 0.08 * H;

  auto motion = [&](Point base, double cap) {
    JointMotion m;
    m.base = base;
    m.amplitude = cap * uniform(rng, 0.5, 1.0);
    m.omega = uniform(rng, 0.3, 0.8);
    m.phase = uniform(rng, 0.0, kTwoPi);
    return m;
  };
  const double A = config.amplitude;
  s.sway = motion({0.0, 0.0}, A);
  const Point hip{W / 2 + uniform(rng, -1.0, 1.0) * W / 32, 0.70 * H};
  const Point shoulder{hip.x + uniform(rng, -1.0, 1.0), 0.40 * H};
  s.joints[kHip] = motion(hip, A);
  s.joints[kShoulder] = motion(shoulder, A);
  s.joints[kHead] = motion({shoulder.x, 0.22 * H}, A);
  s.joints[kLeftHand] = motion({shoulder.x - 0.24 * W, 0.55 * H}, 1.5 * A);
  s.joints[kRightHand] = motion({shoulder.x + 0.24 * W, 0.55 * H}, 1.5 * A);

  // Conservative envelope: every phase of every joint must stay in frame.
  for (int j = 0; j < kNumJoints; ++j) {
    const JointMotion& m = s.joints[j];
    const double ex = s.sway.amplitude + m.amplitude;
    const double ey = 0.5 * ex;
    if (m.base.x - ex < 0.0 || m.base.x + ex > W - 1 || m.base.y - ey < 0.0 || m.base.y + ey > H - 1) {
      throw ConfigError("make_scene: amplitude " + std::to_string(A) + " lets keypoints exit the frame");
    }
  }
  for (int f = 0; f < s.frames; ++f) {
    const auto q = s.torso_quad(f);
    // Simple quad: consistent orientation at every corner.
    for (int i = 0; i < 4; ++i) {
      if (cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]) <= 0.0) {
        throw ConfigError("make_scene: torso quad degenerates at frame " + std::to_string(f));
      }
    }
  }
  return s;
}

GarmentSpec make_garment(int id, int height, int width) {
  static const std::array<Rgb, 8> kPalette = {{{0.85f, 0.15f, 0.15f},
                                               {0.15f, 0.70f, 0.20f},
                                               {0.15f, 0.25f, 0.85f},
                                               {0.90f, 0.85f, 0.15f},
                                               {0.80f, 0.20f, 0.75f},
                                               {0.15f, 0.80f, 0.80f},
                                               {0.95f, 0.55f, 0.10f},
                                               {0.45f, 0.20f, 0.70f}}};
  if (id < 0) throw ConfigError("garment id must be non-negative");
  Rng rng(mix_seed(static_cast<std::uint64_t>(id), 0x6A12));
  GarmentSpec g;
  g.id = id;
  g.pattern = static_cast<Pattern>(id % 4);
  g.height = height;
  g.width = width;
  g.period = 4 + 2 * static_cast<int>(rng.next() % 3);
  g.color_a = kPalette[static_cast<std::size_t>(id) % kPalette.size()];
  // Secondary colour: a darkened or lightened copy so patterns stay visible.
  const bool dark = rng.uniform() < 0.5;
  for (int c = 0; c < 3; ++c) {
    g.color_b[c] = dark ? g.color_a[c] * 0.35f : 1.0f - (1.0f - g.color_a[c]) * 0.35f;
  }
  return g;
}

std::vector<GarmentSpec> make_garment_pool(const GenerationConfig& config) {
  std::vector<GarmentSpec> pool;
  for (int i = 0; i < config.pool_size; ++i) {
    pool.push_back(make_garment(i, config.garment_height, config.garment_width));
  }
  return pool;
}

VideoTensor render_garment(const GarmentSpec& g) {
  VideoTensor img(1, 3, g.height, g.width);
  const int half = std::max(1, g.period / 2);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      bool primary = true;
      switch (g.pattern) {
        case Pattern::Stripes:
          primary = (y / half) % 2 == 0;
          break;
        case Pattern::Checks:
          primary = ((x / half) + (y / half)) % 2 == 0;
          break;
        case Pattern::Dots: {
          const double cx = (std::floor(x / static_cast<double>(g.period)) + 0.5) * g.period;
          const double cy = (std::floor(y / static_cast<double>(g.period)) + 0.5) * g.period;
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          primary = std::sqrt(dx * dx + dy * dy) > g.period / 3.0;
          break;
        }
        case Pattern::Solid:
          break;
      }
      put(img, 0, y, x, primary ? g.color_a : g.color_b);
    }
  }
  return img;
}

VideoTensor render_video(const SceneSpec& scene, const GarmentSpec& g) {
  const VideoTensor tex = render_garment(g);
  VideoTensor v(scene.frames, 3, scene.height, scene.width);
  for (int f = 0; f < scene.frames; ++f) {
    const auto quad = scene.torso_quad(f);
    const Point sh = scene.keypoint(kShoulder, f), head = scene.keypoint(kHead, f);
    const Point lh = scene.keypoint(kLeftHand, f), rh = scene.keypoint(kRightHand, f);
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        const Point p{x + 0.5, y + 0.5};
        Rgb c = background_color(scene, f, p.x, p.y);
        if (inside_quad(quad, p.x, p.y)) {
          const auto [s, t] = quad_coords(quad, p);
          c = sample_texture(tex, s, t);
        }
        if (segment_distance(p, sh, lh) <= kStrokeHalfWidth || segment_distance(p, sh, rh) <= kStrokeHalfWidth ||
            segment_distance(p, sh, head) <= kStrokeHalfWidth) {
          c = scene.skin;
        }
        const double hx = p.x - head.x, hy = p.y - head.y;
        if (std::sqrt(hx * hx + hy * hy) <= scene.head_radius) c = scene.skin;
        put(v, f, y, x, c);
      }
    }
  }
  return v;
}

VideoTensor render_pose(const SceneSpec& scene) {
  VideoTensor v(scene.frames, 3, scene.height, scene.width);
  for (int f = 0; f < scene.frames; ++f) {
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        const Point p{x + 0.5, y + 0.5};
        for (const auto& [a, b] : kBones) {
          if (segment_distance(p, scene.keypoint(a, f), scene.keypoint(b, f)) <= kStrokeHalfWidth) {
            put(v, f, y, x, {1.0f, 1.0f, 1.0f});
            break;
          }
        }
      }
    }
  }
  return v;
}

VideoTensor render_agnostic_mask(const SceneSpec& scene) {
  VideoTensor m(scene.frames, 1, scene.height, scene.width);
  for (int f = 0; f < scene.frames; ++f) {
    const auto q = scene.torso_quad(f);
    double x0 = q[0].x, x1 = q[0].x, y0 = q[0].y, y1 = q[0].y;
    for (const auto& p : q) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (px >= x0 - kMaskMargin && px <= x1 + kMaskMargin && py >= y0 - kMaskMargin &&
            py <= y1 + kMaskMargin) {
          m.at(f, 0, y, x) = 1.0f;
        }
      }
    }
  }
  return m;
}

Sample render_sample(const SceneSpec& scene, const GarmentSpec& worn, const std::vector<GarmentSpec>& pool) {
  const auto it = std::find_if(pool.begin(), pool.end(), [&](const GarmentSpec& g) { return g.id == worn.id; });
  if (it == pool.end()) throw ConfigError("render_sample: worn garment not in pool");
  Sample s;
  s.scene = scene;
  s.g_worn = worn.id;
  s.source_video = render_video(scene, worn);
  s.pose_video = render_pose(scene);
  s.agnostic_mask = render_agnostic_mask(scene);
  s.agnostic_video = s.source_video;
  for (int f = 0; f < scene.frames; ++f)
    for (int y = 0; y < scene.height; ++y)
      for (int x = 0; x < scene.width; ++x)
        if (s.agnostic_mask.at(f, 0, y, x) > 0.5f)
          for (int c = 0; c < 3; ++c) s.agnostic_video.at(f, c, y, x) = kAgnosticFill;
  s.garment_image = render_garment(worn);
  for (const auto& g : pool) s.truth_videos[g.id] = render_video(scene, g);
  return s;
}

std::vector<const SampleRecord*> Manifest::split(const std::string& name) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : samples)
    if (r.split == name) out.push_back(&r);
  return out;
}

nlohmann::json to_json(const GenerationConfig& c) {
  return {{"frames", c.frames},
          {"height", c.height},
          {"width", c.width},
          {"patch", c.patch},
          {"amplitude", c.amplitude},
          {"pan_max", c.pan_max},
          {"garment_height", c.garment_height},
          {"garment_width", c.garment_width},
          {"pool_size", c.pool_size},
          {"train_samples", c.train_samples},
          {"eval_samples", c.eval_samples},
          {"seed", c.seed}};
}

GenerationConfig generation_config_from_json(const nlohmann::json& j) {
  GenerationConfig c;
  c.frames = j.value("frames", c.frames);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.patch = j.value("patch", c.patch);
  c.amplitude = j.value("amplitude", c.amplitude);
  c.pan_max = j.value("pan_max", c.pan_max);
  c.garment_height = j.value("garment_height", c.garment_height);
  c.garment_width = j.value("garment_width", c.garment_width);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.train_samples = j.value("train_samples", c.train_samples);
  c.eval_samples = j.value("eval_samples", c.eval_samples);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

nlohmann::json rgb_json(const Rgb& c) { return {c[0], c[1], c[2]}; }
Rgb rgb_from(const nlohmann::json& j) { return {j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()}; }

nlohmann::json motion_json(const JointMotion& m) {
  return {{"base", {m.base.x, m.base.y}}, {"amplitude", m.amplitude}, {"omega", m.omega}, {"phase", m.phase}};
}

JointMotion motion_from(const nlohmann::json& j) {
  JointMotion m;
  m.base = {j.at("base").at(0).get<double>(), j.at("base").at(1).get<double>()};
  m.amplitude = j.at("amplitude").get<double>();
  m.omega = j.at("omega").get<double>();
  m.phase = j.at("phase").get<double>();
  return m;
}

nlohmann::json garment_json(const GarmentSpec& g) {
  static const char* kNames[] = {"stripes", "checks", "dots", "solid"};
  return {{"id", g.id},
          {"pattern", kNames[static_cast<int>(g.pattern)]},
          {"period", g.period},
          {"color_a", rgb_json(g.color_a)},
          {"color_b", rgb_json(g.color_b)},
          {"height", g.height},
          {"width", g.width}};
}

}  // namespace

nlohmann::json to_json(const SceneSpec& s) {
  static const char* kKinds[] = {"gradient", "checker", "solid"};
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : s.joints) joints.push_back(motion_json(j));
  return {{"seed", s.seed},
          {"frames", s.frames},
          {"height", s.height},
          {"width", s.width},
          {"background", kKinds[static_cast<int>(s.background)]},
          {"color_a", rgb_json(s.color_a)},
          {"color_b", rgb_json(s.color_b)},
          {"checker_period", s.checker_period},
          {"pan", s.pan},
          {"skin", rgb_json(s.skin)},
          {"shoulder_half_width", s.shoulder_half_width},
          {"hip_half_width", s.hip_half_width},
          {"head_radius", s.head_radius},
          {"sway", motion_json(s.sway)},
          {"joints", joints}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.frames = j.at("frames").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  const auto kind = j.at("background").get<std::string>();
  if (kind == "gradient") {
    s.background = BackgroundKind::Gradient;
  } else if (kind == "checker") {
    s.background = BackgroundKind::Checker;
  } else if (kind == "solid") {
    s.background = BackgroundKind::Solid;
  } else {
    throw RuntimeError("unknown background kind: " + kind);
  }
  s.color_a = rgb_from(j.at("color_a"));
  s.color_b = rgb_from(j.at("color_b"));
  s.checker_period = j.at("checker_period").get<int>();
  s.pan = j.at("pan").get<double>();
  s.skin = rgb_from(j.at("skin"));
  s.shoulder_half_width = j.at("shoulder_half_width").get<double>();
  s.hip_half_width = j.at("hip_half_width").get<double>();
  s.head_radius = j.at("head_radius").get<double>();
  s.sway = motion_from(j.at("sway"));
  for (int i = 0; i < kNumJoints; ++i) s.joints[i] = motion_from(j.at("joints").at(i));
  return s;
}

Manifest build_dataset(const GenerationConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "garments", ec);
  if (ec) throw RuntimeError("cannot create " + (out_dir / "garments").string() + ": " + ec.message());

  Manifest m;
  m.root = out_dir;
  m.config = config;
  m.garments = make_garment_pool(config);
  for (const auto& g : m.garments) {
    save_tns(out_dir / "garments" / ("garment_" + std::to_string(g.id) + ".tns"), to_tensor(render_garment(g)));
  }

  const int total = config.train_samples + config.eval_samples;
  for (int i = 0; i < total; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d", i);
    const fs::path rel = fs::path("samples") / name;
    fs::create_directories(out_dir / rel, ec);
    if (ec) throw RuntimeError("cannot create " + (out_dir / rel).string() + ": " + ec.message());

    const SceneSpec scene = make_scene(config, mix_seed(config.seed, static_cast<std::uint64_t>(i)));
    Rng pick(mix_seed(config.seed, static_cast<std::uint64_t>(i), 1));
    const int worn = static_cast<int>(pick.next() % static_cast<std::uint64_t>(config.pool_size));
    const Sample s = render_sample(scene, m.garments[static_cast<std::size_t>(worn)], m.garments);

    SampleRecord r;
    r.index = i;
    r.split = i < config.train_samples ? "train" : "eval";
    r.g_worn = worn;
    r.scene = scene;
    auto write = [&](const std::string& key, const VideoTensor& v) {
      const fs::path file = rel / (key + ".tns");
      save_tns(out_dir / file, to_tensor(v));
      r.files[key] = file.generic_string();
    };
    write("source", s.source_video);
    write("pose", s.pose_video);
    write("agnostic", s.agnostic_video);
    write("mask", s.agnostic_mask);
    r.files["garment"] = "garments/garment_" + std::to_string(worn) + ".tns";
    for (const auto& [gid, video] : s.truth_videos) {
      const fs::path file = rel / ("truth_" + std::to_string(gid) + ".tns");
      save_tns(out_dir / file, to_tensor(video));
      r.truth_files[gid] = file.generic_string();
    }
    m.samples.push_back(std::move(r));
  }

  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["root"] = ".";
  j["config"] = to_json(config);
  j["garments"] = nlohmann::json::array();
  for (const auto& g : m.garments) {
    auto gj = garment_json(g);
    gj["file"] = "garments/garment_" + std::to_string(g.id) + ".tns";
    j["garments"].push_back(gj);
  }
  j["samples"] = nlohmann::json::array();
  for (const auto& r : m.samples) {
    nlohmann::json truth;
    for (const auto& [gid, f] : r.truth_files) truth[std::to_string(gid)] = f;
    j["samples"].push_back({{"index", r.index},
                            {"split", r.split},
                            {"g_worn", r.g_worn},
                            {"scene", to_json(r.scene)},
                            {"files", r.files},
                            {"truth", truth}});
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + (out_dir / "manifest.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw RuntimeError("write failed: " + (out_dir / "manifest.json").string());
  return m;
}

Manifest load_manifest(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw RuntimeError("cannot open manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  Manifest m;
  m.format_version = j.at("format_version").get<std::string>();
  if (m.format_version != "1") throw RuntimeError("unsupported manifest format_version " + m.format_version);
  m.root = manifest_path.parent_path() / j.value("root", std::string("."));
  m.config = generation_config_from_json(j.at("config"));
  m.garments = make_garment_pool(m.config);
  auto require = [&](const std::string& rel) {
    const fs::path p = m.root / rel;
    if (!fs::exists(p)) throw RuntimeError("manifest references missing file: " + p.string());
  };
  for (const auto& gj : j.at("garments")) require(gj.at("file").get<std::string>());
  for (const auto& sj : j.at("samples")) {
    SampleRecord r;
    r.index = sj.at("index").get<int>();
    r.split = sj.at("split").get<std::string>();
    r.g_worn = sj.at("g_worn").get<int>();
    r.scene = scene_from_json(sj.at("scene"));
    r.files = sj.at("files").get<std::map<std::string, std::string>>();
    for (const auto& [k, v] : sj.at("truth").items()) r.truth_files[std::stoi(k)] = v.get<std::string>();
    for (const auto& [k, v] : r.files) require(v);
    for (const auto& [k, v] : r.truth_files) require(v);
    m.samples.push_back(std::move(r));
  }
  return m;
}

Sample load_sample(const Manifest& m, const SampleRecord& rec) {
  Sample s;
  s.scene = rec.scene;
  s.g_worn = rec.g_worn;
  auto video = [&](const std::string& key) { return video_from_tensor(load_tns(m.root / rec.files.at(key))); };
  s.source_video = video("source");
  s.pose_video = video("pose");
  s.agnostic_video = video("agnostic");
  s.agnostic_mask = video("mask");
  s.garment_image = video("garment");
  for (const auto& [gid, file] : rec.truth_files) s.truth_videos[gid] = video_from_tensor(load_tns(m.root / file));
  return s;
}

}  // namespace oie
