// SPDX-License-Identifier: Apache-2.0
#include "oie/flowmatch.hpp"

#include <cmath>
#include <string>

#include "oie/conditioning.hpp"

namespace oie {

template <class T>
Mat<T> initial_noise(int rows, int cols, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xF10));
  return random_normal<T>(rows, cols, 1.0, rng);
}

template <class T>
PathSample<T> sample_path(const Mat<T>& x1, std::uint64_t seed, std::optional<T> forced_t) {
  if (!x1.allFinite()) throw ConfigError("sample_path: x1 must be finite");
  PathSample<T> p;
  Rng rng(mix_seed(seed, 0xF10));
  p.x0 = random_normal<T>(static_cast<int>(x1.rows()), static_cast<int>(x1.cols()), 1.0, rng);
  p.x1 = x1;
  p.t = forced_t ? *forced_t : static_cast<T>(rng.uniform());
  // Written so that t = 0 and t = 1 reproduce the endpoints exactly.
  p.xt = (T(1) - p.t) * p.x0 + p.t * p.x1;
  p.vt = p.x1 - p.x0;
  return p;
}

template <class T>
TrainState<T> make_train_state(Model<T> model, std::uint64_t seed) {
  TrainState<T> s;
  s.model = std::move(model);
  s.seed = seed;
  return s;
}

template <class T>
T velocity_loss(const Mat<T>& predicted, const Mat<T>& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
    throw ConfigError("velocity_loss: shape mismatch");
  }
  return (predicted - target).squaredNorm() / static_cast<T>(predicted.size());
}

template <class T>
LossAndGrad<T> loss_and_gradients(const Model<T>& model, const TrainExample<T>& ex, const PathSample<T>& path,
                                  bool pin_first_frame) {
  ag::Graph<T> g(true);
  ParamBinding<T> p(g, model);
  const int P = ex.cond.sequence.tokens_per_frame;
  Mat<T> xt = path.xt;
  if (pin_first_frame) xt.topRows(P) = path.x1.topRows(P);
  ag::Var<T> gf;
  if (model.has_guider() && ex.cond.guider_input.size() > 0) gf = guider_forward(p, ex.cond.guider_input);
  auto out = forward(p, g.constant(xt), ex.cond.sequence, ex.cond.text, path.t, gf);
  ag::Var<T> loss;
  if (pin_first_frame) {
    const auto rows = static_cast<int>(path.vt.rows()) - P;
    loss = ag::mse(g, ag::slice_rows(g, out, P, rows), Mat<T>(path.vt.bottomRows(rows)));
  } else {
    loss = ag::mse(g, out, path.vt);
  }
  g.backward(loss);
  return {loss->value(0, 0), p.gradients()};
}

template <class T>
T training_step(TrainState<T>& state, const TrainExample<T>& ex, const FlowConfig& cfg) {
  const PathSample<T> path = sample_path<T>(ex.target, mix_seed(state.seed, static_cast<std::uint64_t>(state.step)));
  LossAndGrad<T> lg = loss_and_gradients(state.model, ex, path, cfg.pin_first_frame);
  if (!std::isfinite(static_cast<double>(lg.loss))) {
    throw RuntimeError("training_step: non-finite loss at step " + std::to_string(state.step));
  }
  const OptimizerConfig& o = cfg.optimizer;
  const double t = static_cast<double>(state.step + 1);
  const T c1 = static_cast<T>(1.0 - std::pow(o.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(o.beta2, t));
  const T lr = static_cast<T>(o.lr), b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T eps = static_cast<T>(o.eps), wd = static_cast<T>(o.weight_decay);
  for (auto& [name, grad] : lg.grads) {
    Param<T>& prm = state.model.params.at(name);
    if (!prm.trainable) continue;
    auto& m = state.adam_m[name];
    auto& v = state.adam_v[name];
    if (m.size() == 0) {
      m = Mat<T>::Zero(grad.rows(), grad.cols());
      v = Mat<T>::Zero(grad.rows(), grad.cols());
    }
    m = b1 * m + (T(1) - b1) * grad;
    v = b2 * v + (T(1) - b2) * grad.cwiseAbs2();
    if (name.rfind("lora.", 0) == 0) prm.value *= (T(1) - lr * wd);
    prm.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
  state.losses.push_back(static_cast<double>(lg.loss));
  ++state.step;
  return lg.loss;
}

template <class T>
Mat<T> euler_integrate(Mat<T> x, int steps, const VelocityField<T>& field) {
  if (steps < 1) throw ConfigError("euler: steps must be >= 1");
  const T dt = T(1) / static_cast<T>(steps);
  for (int k = 0; k < steps; ++k) {
    const T t = static_cast<T>(k) / static_cast<T>(steps);
    x += dt * field(x, t);
    if (!x.allFinite()) throw RuntimeError("euler: non-finite state at step " + std::to_string(k));
  }
  return x;
}

template <class T>
Mat<T> euler_sample(const Model<T>& model, const Conditioning<T>& cond, int steps, std::uint64_t seed,
                    bool pin_first_frame) {
  const int rows = model.config.video_tokens();
  const int P = model.config.tokens_per_frame();
  Mat<T> x = initial_noise<T>(rows, model.config.width, seed);
  std::optional<Mat<T>> gf;
  if (model.has_guider() && cond.guider_input.size() > 0) {
    ag::Graph<T> g(false);
    ParamBinding<T> p(g, model);
    gf = guider_forward(p, cond.guider_input)->value;
  }
  if (pin_first_frame && cond.first_frame.rows() != P) {
    throw ConfigError("euler_sample: pinning frame 0 needs a frame-block first-frame latent");
  }
  const VelocityField<T> field = [&](const Mat<T>& xs, T t) -> Mat<T> {
    if (!pin_first_frame) return forward(model, xs, cond.sequence, cond.text, t, gf ? &*gf : nullptr);
    Mat<T> pinned = xs;
    pinned.topRows(P) = cond.first_frame;
    Mat<T> u = forward(model, pinned, cond.sequence, cond.text, t, gf ? &*gf : nullptr);
    u.topRows(P).setZero();
    return u;
  };
  if (pin_first_frame) x.topRows(P) = cond.first_frame;
  return euler_integrate<T>(std::move(x), steps, field);
}

#define OIE_INSTANTIATE(T)                                                                                \
  template Mat<T> initial_noise<T>(int, int, std::uint64_t);                                              \
  template PathSample<T> sample_path<T>(const Mat<T>&, std::uint64_t, std::optional<T>);                  \
  template TrainState<T> make_train_state<T>(Model<T>, std::uint64_t);                                    \
  template T velocity_loss<T>(const Mat<T>&, const Mat<T>&);                                              \
  template LossAndGrad<T> loss_and_gradients<T>(const Model<T>&, const TrainExample<T>&,                  \
                                                const PathSample<T>&, bool);                              \
  template T training_step<T>(TrainState<T>&, const TrainExample<T>&, const FlowConfig&);                 \
  template Mat<T> euler_integrate<T>(Mat<T>, int, const VelocityField<T>&);                               \
  template Mat<T> euler_sample<T>(const Model<T>&, const Conditioning<T>&, int, std::uint64_t, bool);

OIE_INSTANTIATE(float)
OIE_INSTANTIATE(double)

#undef OIE_INSTANTIATE

}  // namespace oie
