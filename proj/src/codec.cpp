// SPDX-License-Identifier: Apache-2.0
#include "oie/codec.hpp"

#include <cmath>

#include <Eigen/QR>

namespace oie {

std::string to_string(GarmentMode mode) {
  return mode == GarmentMode::FrameBlock ? "frame-block" : "single-pooled";
}

GarmentMode garment_mode_from_string(const std::string& s) {
  if (s == "frame-block") return GarmentMode::FrameBlock;
  if (s == "single-pooled") return GarmentMode::SinglePooled;
  throw ConfigError("unknown garment mode: " + s);
}

Codec::Codec(const CodecParams& params) : params_(params) {
  if (params.patch < 1 || params.width < 1 || params.channels < 1) {
    throw ConfigError("codec: patch, width and channels must be positive");
  }
  if (!(params.scale > 0.0) || !std::isfinite(params.scale)) {
    throw ConfigError("codec: scale must be positive and finite");
  }
  if (patch_dim() > params.width) {
    throw ConfigError("codec: latent width " + std::to_string(params.width) +
                      " is smaller than patch dimension " + std::to_string(patch_dim()));
  }
  Rng rng(mix_seed(params.seed, 0xC0DEC));
  const Mat<double> g = random_normal<double>(params.width, params.width, 1.0, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(params.width, params.width);
  embed_ = q.topRows(patch_dim());
}

int Codec::tokens_per_frame(int height, int width) const {
  return (height / params_.patch) * (width / params_.patch);
}

void Codec::check_dims(int channels, int height, int width) const {
  if (channels != params_.channels) {
    throw ConfigError("codec: expected " + std::to_string(params_.channels) + " channels, got " +
                      std::to_string(channels));
  }
  if (height % params_.patch != 0 || width % params_.patch != 0 || height <= 0 || width <= 0) {
    throw ConfigError("codec: frame " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by patch " + std::to_string(params_.patch));
  }
}

template <class T>
LatentFrames<T> Codec::encode_video(const VideoTensor& v) const {
  check_dims(v.channels, v.height, v.width);
  const int ps = params_.patch;
  const int gw = v.width / ps;
  const int tokens = tokens_per_frame(v.height, v.width);
  Mat<double> patches(static_cast<Eigen::Index>(v.frames) * tokens, patch_dim());
  for (int f = 0; f < v.frames; ++f) {
    for (int t = 0; t < tokens; ++t) {
      const int py = t / gw, px = t % gw;
      const Eigen::Index row = static_cast<Eigen::Index>(f) * tokens + t;
      int k = 0;
      for (int c = 0; c < v.channels; ++c)
        for (int dy = 0; dy < ps; ++dy)
          for (int dx = 0; dx < ps; ++dx) patches(row, k++) = v.at(f, c, py * ps + dy, px * ps + dx);
    }
  }
  LatentFrames<T> z;
  z.frames = v.frames;
  z.tokens_per_frame = tokens;
  z.rows = (params_.scale * (patches * embed_)).template cast<T>();
  return z;
}

template <class T>
VideoTensor Codec::decode_video(const LatentFrames<T>& z, int height, int width) const {
  check_dims(params_.channels, height, width);
  if (z.tokens_per_frame != tokens_per_frame(height, width) ||
      z.rows.rows() != static_cast<Eigen::Index>(z.frames) * z.tokens_per_frame ||
      z.rows.cols() != params_.width) {
    throw ConfigError("codec: latent shape does not match decode target");
  }
  Mat<double> patches = z.rows.template cast<double>() * embed_.transpose();
  patches /= params_.scale;
  const int ps = params_.patch;
  const int gw = width / ps;
  VideoTensor v(z.frames, params_.channels, height, width);
  for (int f = 0; f < z.frames; ++f) {
    for (int t = 0; t < z.tokens_per_frame; ++t) {
      const int py = t / gw, px = t % gw;
      const Eigen::Index row = static_cast<Eigen::Index>(f) * z.tokens_per_frame + t;
      int k = 0;
      for (int c = 0; c < params_.channels; ++c)
        for (int dy = 0; dy < ps; ++dy)
          for (int dx = 0; dx < ps; ++dx)
            v.at(f, c, py * ps + dy, px * ps + dx) = static_cast<float>(patches(row, k++));
    }
  }
  return v;
}

template <class T>
GarmentBlock<T> Codec::encode_image(const VideoTensor& image) const {
  return encode_image<T>(image, params_.mode);
}

template <class T>
GarmentBlock<T> Codec::encode_image(const VideoTensor& image, GarmentMode mode) const {
  if (image.frames != 1) throw ConfigError("encode_image: expected a single frame");
  LatentFrames<T> z = encode_video<T>(image);
  GarmentBlock<T> g;
  if (mode == GarmentMode::FrameBlock) {
    g.rows = std::move(z.rows);
  } else {
    g.rows = z.rows.colwise().mean();
  }
  return g;
}

template <class T>
LatentSequence<T> assemble_sequence(const GarmentBlock<T>& g, const LatentFrames<T>& p) {
  if (g.rows.cols() != p.rows.cols()) {
    throw ConfigError("assemble_sequence: garment width " + std::to_string(g.rows.cols()) +
                      " != pose width " + std::to_string(p.rows.cols()));
  }
  LatentSequence<T> s;
  s.garment_rows = static_cast<int>(g.rows.rows());
  s.frames = p.frames;
  s.tokens_per_frame = p.tokens_per_frame;
  s.rows.resize(g.rows.rows() + p.rows.rows(), g.rows.cols());
  s.rows.topRows(g.rows.rows()) = g.rows;
  s.rows.bottomRows(p.rows.rows()) = p.rows;
  s.index.reserve(static_cast<std::size_t>(s.rows.rows()));
  for (int i = 0; i < s.garment_rows; ++i) s.index.push_back({true, -1, i});
  for (int f = 0; f < p.frames; ++f)
    for (int t = 0; t < p.tokens_per_frame; ++t) s.index.push_back({false, f, t});
  return s;
}

template <class T>
GarmentBlock<T> LatentSequence<T>::garment_block() const {
  return {rows.topRows(garment_rows)};
}

template <class T>
LatentFrames<T> LatentSequence<T>::pose_latents() const {
  return {frames, tokens_per_frame, rows.bottomRows(rows.rows() - garment_rows)};
}

#define OIE_INSTANTIATE(T)                                                                   \
  template LatentFrames<T> Codec::encode_video<T>(const VideoTensor&) const;                 \
  template VideoTensor Codec::decode_video<T>(const LatentFrames<T>&, int, int) const;       \
  template GarmentBlock<T> Codec::encode_image<T>(const VideoTensor&) const;                 \
  template GarmentBlock<T> Codec::encode_image<T>(const VideoTensor&, GarmentMode) const;    \
  template LatentSequence<T> assemble_sequence<T>(const GarmentBlock<T>&, const LatentFrames<T>&); \
  template struct LatentSequence<T>;

OIE_INSTANTIATE(float)
OIE_INSTANTIATE(double)

#undef OIE_INSTANTIATE

}  // namespace oie
