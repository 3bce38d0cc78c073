// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "oie/tensor.hpp"

namespace oie {

// SSIM with an 11x11 Gaussian window (sigma 1.5, valid region),
// C1 = 0.01^2, C2 = 0.03^2 on unit range; mean over channels and frames.
double ssim_image(const VideoTensor& a, const VideoTensor& b, int frame, int channel);
double ssim_video(const VideoTensor& a, const VideoTensor& b);

// Perceptual-distance surrogate: three fixed random conv layers, features
// unit-normalised over channels at every location, squared distances
// averaged spatially, summed over layers, averaged over frames.
double perceptual_distance(const VideoTensor& a, const VideoTensor& b, std::uint64_t feature_net_seed);

// Per-video features from a fixed random 3-D conv net (mean and std pooled).
std::vector<double> video_features(const VideoTensor& v, std::uint64_t feature_net_seed);

// Frechet distance between Gaussian fits of two feature sets (one row per
// item). Square roots use symmetric eigendecompositions floored at 0.
double frechet_distance(const Mat<double>& features_a, const Mat<double>& features_b);

double frechet_video_distance(const std::vector<VideoTensor>& set_a, const std::vector<VideoTensor>& set_b,
                              std::uint64_t feature_net_seed);

enum class EvalSetting { Paired, Unpaired };
std::string to_string(EvalSetting s);
EvalSetting eval_setting_from_string(const std::string& s);

struct MetricsReport {
  double ssim = 0.0;
  double perc = 0.0;
  double fvd = 0.0;
  EvalSetting setting = EvalSetting::Paired;
  int samples = 0;
  std::uint64_t feature_net_seed = 0;
};

nlohmann::json to_json(const MetricsReport& r);

}  // namespace oie
