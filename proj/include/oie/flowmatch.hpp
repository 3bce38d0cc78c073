// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "oie/backbone.hpp"
#include "oie/codec.hpp"
#include "oie/model.hpp"

namespace oie {

// Straight path from noise x0 (t = 0) to data x1 (t = 1).
template <class T>
struct PathSample {
  Mat<T> x0;
  Mat<T> x1;
  T t = T(0);
  Mat<T> xt;
  Mat<T> vt;
};

// x0 ~ N(0, 1) from `seed`; t ~ U[0, 1] unless forced.
template <class T>
PathSample<T> sample_path(const Mat<T>& x1, std::uint64_t seed, std::optional<T> forced_t = std::nullopt);

// Everything the backbone consumes besides x_t and t.
template <class T>
struct Conditioning {
  LatentSequence<T> sequence;
  Mat<T> guider_input;  // empty when no agnostic video is supplied
  TextStub text;
  Mat<T> first_frame;   // clean frame-0 latent rows, used only when pinning
};

template <class T>
struct TrainExample {
  Mat<T> target;  // x1: clean video latent rows
  Conditioning<T> cond;
};

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // adapters only
};

struct FlowConfig {
  OptimizerConfig optimizer;
  bool pin_first_frame = false;
};

template <class T>
struct TrainState {
  Model<T> model;
  std::map<std::string, Mat<T>> adam_m;
  std::map<std::string, Mat<T>> adam_v;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::vector<double> losses;
};

template <class T>
TrainState<T> make_train_state(Model<T> model, std::uint64_t seed);

template <class T>
struct LossAndGrad {
  T loss = T(0);
  std::map<std::string, Mat<T>> grads;
};

// Velocity-regression loss (mean over video-token elements) and gradients
// with respect to every trainable parameter.
template <class T>
LossAndGrad<T> loss_and_gradients(const Model<T>& model, const TrainExample<T>& ex, const PathSample<T>& path,
                                  bool pin_first_frame = false);

// Mean squared error between a predicted and the target velocity.
template <class T>
T velocity_loss(const Mat<T>& predicted, const Mat<T>& target);

// One AdamW update drawn from (state.seed, state.step). Throws RuntimeError
// naming the step on a non-finite loss.
template <class T>
T training_step(TrainState<T>& state, const TrainExample<T>& ex, const FlowConfig& cfg);

template <class T>
using VelocityField = std::function<Mat<T>(const Mat<T>& x, T t)>;

// Explicit Euler: x <- x + u(x, k/steps) / steps for k = 0..steps-1.
template <class T>
Mat<T> euler_integrate(Mat<T> x, int steps, const VelocityField<T>& field);

template <class T>
Mat<T> initial_noise(int rows, int cols, std::uint64_t seed);

// Samples video latents from noise drawn with `seed`. Guider features are
// computed once, before integration.
template <class T>
Mat<T> euler_sample(const Model<T>& model, const Conditioning<T>& cond, int steps, std::uint64_t seed,
                    bool pin_first_frame = false);

}  // namespace oie
