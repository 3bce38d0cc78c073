// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "oie/tensor.hpp"

namespace oie {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class BackgroundKind { Gradient, Checker, Solid };
enum class Pattern { Stripes, Checks, Dots, Solid };

using Rgb = std::array<float, 3>;

struct JointMotion {
  Point base;
  double amplitude = 0.0;  // px
  double omega = 0.0;      // rad / frame
  double phase = 0.0;      // rad
};

enum Joint { kHip = 0, kShoulder = 1, kHead = 2, kLeftHand = 3, kRightHand = 4, kNumJoints = 5 };

struct SceneSpec {
  std::uint64_t seed = 0;
  int frames = 0;
  int height = 0;
  int width = 0;
  BackgroundKind background = BackgroundKind::Gradient;
  Rgb color_a{};
  Rgb color_b{};
  int checker_period = 8;
  double pan = 0.0;  // background drift, px / frame along x
  Rgb skin{};
  double shoulder_half_width = 0.0;
  double hip_half_width = 0.0;
  double head_radius = 0.0;
  // Whole-body sway shared by all joints, then per-joint motion on top.
  JointMotion sway;
  std::array<JointMotion, kNumJoints> joints;

  Point keypoint(int joint, int frame) const;
  // Corners in order: shoulder-left, shoulder-right, hip-right, hip-left.
  std::array<Point, 4> torso_quad(int frame) const;
};

struct GarmentSpec {
  int id = 0;
  Pattern pattern = Pattern::Solid;
  int period = 4;
  Rgb color_a{};
  Rgb color_b{};
  int height = 16;
  int width = 16;
};

struct GenerationConfig {
  int frames = 8;
  int height = 32;
  int width = 32;
  int patch = 4;
  double amplitude = 2.0;  // px, per-joint motion cap
  double pan_max = 0.75;   // px / frame
  int garment_height = 16;
  int garment_width = 16;
  int pool_size = 8;
  int train_samples = 64;
  int eval_samples = 16;
  std::uint64_t seed = 7;
};

struct Sample {
  SceneSpec scene;
  VideoTensor source_video;
  VideoTensor pose_video;
  VideoTensor agnostic_video;
  VideoTensor agnostic_mask;  // F x 1 x H x W, values in {0, 1}
  VideoTensor garment_image;  // 1 x 3 x Hg x Wg of the worn garment
  std::map<int, VideoTensor> truth_videos;
  int g_worn = 0;
};

SceneSpec make_scene(const GenerationConfig& config, std::uint64_t seed);
// Garment parameters are a pure function of the id.
GarmentSpec make_garment(int id, int height = 16, int width = 16);
std::vector<GarmentSpec> make_garment_pool(const GenerationConfig& config);

VideoTensor render_garment(const GarmentSpec& g);
// Renders the scene wearing garment `g`.
VideoTensor render_video(const SceneSpec& scene, const GarmentSpec& g);
VideoTensor render_pose(const SceneSpec& scene);
VideoTensor render_agnostic_mask(const SceneSpec& scene);
bool inside_quad(const std::array<Point, 4>& quad, double x, double y);

Sample render_sample(const SceneSpec& scene, const GarmentSpec& worn,
                     const std::vector<GarmentSpec>& pool);

constexpr float kAgnosticFill = 0.5f;

struct SampleRecord {
  int index = 0;
  std::string split;  // "train" or "eval"
  int g_worn = 0;
  SceneSpec scene;
  std::map<std::string, std::string> files;  // relative to dataset root
  std::map<int, std::string> truth_files;
};

struct Manifest {
  std::filesystem::path root;
  std::string format_version = "1";
  GenerationConfig config;
  std::vector<GarmentSpec> garments;
  std::vector<SampleRecord> samples;

  std::vector<const SampleRecord*> split(const std::string& name) const;
};

Manifest build_dataset(const GenerationConfig& config, const std::filesystem::path& out_dir);
Manifest load_manifest(const std::filesystem::path& manifest_path);
Sample load_sample(const Manifest& m, const SampleRecord& rec);

nlohmann::json to_json(const GenerationConfig& c);
GenerationConfig generation_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j);

}  // namespace oie
