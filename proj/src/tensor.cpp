// SPDX-License-Identifier: Apache-2.0
#include "oie/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace oie {

namespace {

constexpr char kMagic[8] = {'O', 'I', 'E', 'T', 'N', 'S', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "tns I/O assumes a little-endian host");

}  // namespace

VideoTensor::VideoTensor(int f, int c, int h, int w, float fill)
    : frames(f), channels(c), height(h), width(w),
      data(static_cast<std::size_t>(f) * c * h * w, fill) {
  if (f < 0 || c < 0 || h < 0 || w < 0) {
    throw ConfigError("negative video dimension");
  }
}

VideoTensor VideoTensor::frame(int f) const {
  if (f < 0 || f >= frames) throw ConfigError("frame index out of range");
  VideoTensor out(1, channels, height, width);
  const std::size_t n = static_cast<std::size_t>(channels) * height * width;
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(f * n), n, out.data.begin());
  return out;
}

void VideoTensor::set_frame(int f, const VideoTensor& img) {
  if (img.frames != 1 || img.channels != channels || img.height != height ||
      img.width != width) {
    throw ConfigError("set_frame: image shape does not match video frame");
  }
  const std::size_t n = static_cast<std::size_t>(channels) * height * width;
  std::copy_n(img.data.begin(), n, data.begin() + static_cast<std::ptrdiff_t>(f * n));
}

float max_abs_diff(const VideoTensor& a, const VideoTensor& b) {
  if (!a.same_shape(b)) throw ConfigError("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void save_tns(const std::filesystem::path& path, const Tensor& t) {
  if (t.numel() != t.data.size()) throw ConfigError("tensor dims do not match payload");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto rank = static_cast<std::uint32_t>(t.dims.size());
  out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  out.write(reinterpret_cast<const char*>(t.dims.data()),
            static_cast<std::streamsize>(t.dims.size() * sizeof(std::uint32_t)));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw RuntimeError("write failed: " + path.string());
}

Tensor load_tns(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open tensor file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw RuntimeError("bad tns magic: " + path.string());
  }
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  if (!in || rank > 16) throw RuntimeError("bad tns header: " + path.string());
  Tensor t;
  t.dims.resize(rank);
  in.read(reinterpret_cast<char*>(t.dims.data()),
          static_cast<std::streamsize>(rank * sizeof(std::uint32_t)));
  if (!in) throw RuntimeError("truncated tns header: " + path.string());
  t.data.resize(t.numel());
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!in) throw RuntimeError("truncated tns payload: " + path.string());
  in.peek();
  if (!in.eof()) throw RuntimeError("trailing bytes in tns file: " + path.string());
  return t;
}

Tensor to_tensor(const VideoTensor& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.frames), static_cast<std::uint32_t>(v.channels),
            static_cast<std::uint32_t>(v.height), static_cast<std::uint32_t>(v.width)};
  t.data = v.data;
  return t;
}

VideoTensor video_from_tensor(const Tensor& t) {
  if (t.dims.size() != 4) throw RuntimeError("expected a rank-4 video tensor");
  VideoTensor v(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]));
  v.data = t.data;
  return v;
}

template <class T>
Tensor to_tensor(const Mat<T>& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data[i] = static_cast<float>(m.data()[i]);
  return t;
}

template <class T>
Mat<T> mat_from_tensor(const Tensor& t) {
  if (t.dims.size() != 2) throw RuntimeError("expected a rank-2 tensor");
  Mat<T> m(t.dims[0], t.dims[1]);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(t.data[i]);
  return m;
}

template Tensor to_tensor<float>(const Mat<float>&);
template Tensor to_tensor<double>(const Mat<double>&);
template Mat<float> mat_from_tensor<float>(const Tensor&);
template Mat<double> mat_from_tensor<double>(const Tensor&);

double Rng::uniform() {
  // 53 random bits in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto fmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return fmix(fmix(fmix(a) ^ b) ^ c);
}

template <class T>
Mat<T> random_normal(int rows, int cols, double stddev, Rng& rng) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * rng.normal());
  return m;
}

template Mat<float> random_normal<float>(int, int, double, Rng&);
template Mat<double> random_normal<double>(int, int, double, Rng&);

}  // namespace oie
