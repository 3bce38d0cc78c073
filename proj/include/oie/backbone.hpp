// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "oie/codec.hpp"
#include "oie/model.hpp"

namespace oie {

// Instruction text reduced to one learned embedding row.
struct TextStub {
  std::string instruction;
  int id = 0;
};

TextStub make_text(const std::string& instruction, int vocab);

inline constexpr const char* kDefaultInstruction = "replace the garment";

// Deterministic in cfg.seed. Creates the base transformer, the text stub and
// the mask guider (with its output projection zeroed). Every parameter starts
// trainable; attach_lora freezes the base.
template <class T>
Model<T> init_model(const ModelConfig& cfg);

// Velocity for the video-token rows of x_t.
//
// The sequence seen by attention is [garment block rows; video rows]. Video
// rows combine the noisy latent and the pose latent through the input
// projection; garment rows are clean conditioning and produce no output.
// `guider` (may be null) is added to the video rows after block 0.
template <class T>
ag::Var<T> forward(ParamBinding<T>& p, const ag::Var<T>& x_t, const LatentSequence<T>& seq,
                   const TextStub& text, T t, const ag::Var<T>& guider);

// Convenience inference wrapper without gradient recording.
template <class T>
Mat<T> forward(const Model<T>& model, const Mat<T>& x_t, const LatentSequence<T>& seq, const TextStub& text,
               T t, const Mat<T>* guider = nullptr);

// Sinusoidal embedding of 1000 * t, width d (cos half, then sin half).
template <class T>
Mat<T> timestep_embedding(T t, int d);

}  // namespace oie
