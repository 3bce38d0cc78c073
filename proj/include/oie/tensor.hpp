// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oie {

// Row-major dense matrices carry every latent, hidden state and weight.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Invalid configuration or arguments. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running (I/O, non-finite values, contract violations).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense F x C x H x W float video. Images are videos with a single frame.
struct VideoTensor {
  int frames = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  VideoTensor() = default;
  VideoTensor(int f, int c, int h, int w, float fill = 0.0f);

  std::size_t size() const { return data.size(); }
  std::array<int, 4> shape() const { return {frames, channels, height, width}; }
  bool same_shape(const VideoTensor& o) const { return shape() == o.shape(); }

  std::size_t index(int f, int c, int y, int x) const {
    return ((static_cast<std::size_t>(f) * channels + c) * height + y) * width + x;
  }
  float& at(int f, int c, int y, int x) { return data[index(f, c, y, x)]; }
  float at(int f, int c, int y, int x) const { return data[index(f, c, y, x)]; }

  VideoTensor frame(int f) const;
  void set_frame(int f, const VideoTensor& img);

  bool operator==(const VideoTensor& o) const = default;
};

float max_abs_diff(const VideoTensor& a, const VideoTensor& b);

// Generic n-d float32 tensor as stored in ".tns" files.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const;
};

// ".tns" container: "OIETNS01", u32 LE rank, rank x u32 LE dims, f32 LE payload.
void save_tns(const std::filesystem::path& path, const Tensor& t);
Tensor load_tns(const std::filesystem::path& path);

Tensor to_tensor(const VideoTensor& v);
VideoTensor video_from_tensor(const Tensor& t);

template <class T>
Tensor to_tensor(const Mat<T>& m);
template <class T>
Mat<T> mat_from_tensor(const Tensor& t);

// Deterministic generator helpers. std::normal_distribution is
// implementation-defined, so normals come from Box-Muller on mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();
  double normal();
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes several integers into one seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

template <class T>
Mat<T> random_normal(int rows, int cols, double stddev, Rng& rng);

}  // namespace oie
