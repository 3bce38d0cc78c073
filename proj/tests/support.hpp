// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <map>

#include "oie/flowmatch.hpp"
#include "oie/pipeline.hpp"
#include "oie/tensor.hpp"

namespace oie::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Uniform [0, 1) video drawn from `seed`.
VideoTensor random_video(int f, int c, int h, int w, std::uint64_t seed);

// Max |a - b| / max(1, |b|) over all entries.
template <class T>
double max_rel_err(const Mat<T>& a, const Mat<T>& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double ref = static_cast<double>(b.data()[i]);
    const double e = std::abs(static_cast<double>(a.data()[i]) - ref) / std::max(1.0, std::abs(ref));
    worst = std::max(worst, e);
  }
  return worst;
}

// d=8, 2 blocks, 2 heads, 2 frames of 8x8 pixels (4 tokens per frame).
ModelConfig tiny_config();

// Random garment block, pose rows, guider input and target for `cfg`.
template <class T>
TrainExample<T> random_example(const ModelConfig& cfg, std::uint64_t seed);

// Fills every LoRA B factor with N(0, stddev) so adapter paths carry signal.
template <class T>
void randomize_adapters(Model<T>& m, double stddev, std::uint64_t seed);

// Per trainable tensor: max|analytic - central difference| divided by
// max(max|analytic|, max|numeric|, 1e-6).
std::map<std::string, double> gradient_errors(const Model<double>& model, const TrainExample<double>& ex,
                                              const PathSample<double>& path, double h = 1e-6);

// Pipeline small enough for unit tests: 4 frames of 32x32, d=48, one block,
// 4 train and 3 eval samples, no base pretraining.
PipelineConfig small_pipeline_config();

}  // namespace oie::test
