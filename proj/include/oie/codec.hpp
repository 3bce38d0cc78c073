// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oie/tensor.hpp"

namespace oie {

enum class GarmentMode { FrameBlock, SinglePooled };

std::string to_string(GarmentMode mode);
GarmentMode garment_mode_from_string(const std::string& s);

struct CodecParams {
  int patch = 4;     // spatial patch size; temporal patch is always 1
  int width = 64;    // latent width d
  int channels = 3;  // video channels
  std::uint64_t seed = 0;
  GarmentMode mode = GarmentMode::FrameBlock;
  // z = scale * patch * E puts latent entries on the scale of the unit
  // sampling noise (rms about 2.4 on rendered scenes); decode divides it back
  // out. There is no shift, so encoding stays linear.
  double scale = 5.0;
};

// F x P tokens of width d, stored frame-major as (F * P) x d rows.
template <class T>
struct LatentFrames {
  int frames = 0;
  int tokens_per_frame = 0;
  Mat<T> rows;
};

template <class T>
struct GarmentBlock {
  Mat<T> rows;  // P x d (frame block) or 1 x d (single pooled)
};

struct TokenRef {
  bool garment = false;
  int frame = -1;  // -1 for garment rows
  int patch = 0;
};

// Unified sequence: garment block first, then pose latents frame-major.
template <class T>
struct LatentSequence {
  Mat<T> rows;
  int garment_rows = 0;
  int frames = 0;
  int tokens_per_frame = 0;
  std::vector<TokenRef> index;

  int video_rows() const { return frames * tokens_per_frame; }
  GarmentBlock<T> garment_block() const;
  LatentFrames<T> pose_latents() const;
};

// Fixed orthogonal patch embedding. Each C*ps*ps patch is mapped through a
// matrix with orthonormal rows, so the transpose decodes exactly.
class Codec {
 public:
  explicit Codec(const CodecParams& params);

  const CodecParams& params() const { return params_; }
  int patch_dim() const { return params_.channels * params_.patch * params_.patch; }
  int tokens_per_frame(int height, int width) const;
  const Mat<double>& embedding() const { return embed_; }

  template <class T>
  LatentFrames<T> encode_video(const VideoTensor& v) const;
  template <class T>
  VideoTensor decode_video(const LatentFrames<T>& z, int height, int width) const;
  template <class T>
  GarmentBlock<T> encode_image(const VideoTensor& image) const;
  template <class T>
  GarmentBlock<T> encode_image(const VideoTensor& image, GarmentMode mode) const;

 private:
  void check_dims(int channels, int height, int width) const;

  CodecParams params_;
  Mat<double> embed_;  // patch_dim x width
};

template <class T>
LatentSequence<T> assemble_sequence(const GarmentBlock<T>& g, const LatentFrames<T>& p);

}  // namespace oie
