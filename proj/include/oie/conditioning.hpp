// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oie/codec.hpp"
#include "oie/model.hpp"

namespace oie {

// Mask guider: four 3x3x3 conv layers (SiLU between) over the agnostic video
// plus its mask channel, then a zero-initialised projection to width d.
// Parameters live under "guider.". Spatial strides of 2 are spent on the
// first log2(patch) layers so the output lands on the codec token grid.

void init_guider(Model<double>& m);

// Adds freshly initialised (trainable) guider parameters to `model`.
template <class T>
Model<T> attach_guider(const Model<T>& model);

// Conv stride layout for layer i under config cfg.
ag::Conv3dShape guider_layer_shape(const ModelConfig& cfg, int layer);

// (F*H*W) x (C+1) voxel rows from the agnostic video and its mask.
template <class T>
Mat<T> guider_input(const ModelConfig& cfg, const VideoTensor& agnostic, const VideoTensor& mask);

// (F*P) x d features aligned with the backbone's video tokens.
template <class T>
ag::Var<T> guider_forward(ParamBinding<T>& p, const Mat<T>& input);

template <class T>
Mat<T> guider_forward(const Model<T>& model, const VideoTensor& agnostic, const VideoTensor& mask);

// Adds guider rows to the video-token rows of `hidden` (laid out like `seq`);
// garment-block rows pass through untouched.
template <class T>
Mat<T> inject(const Mat<T>& hidden, const Mat<T>& features, const LatentSequence<T>& seq);

}  // namespace oie
