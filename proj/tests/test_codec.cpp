// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "oie/codec.hpp"
#include "support.hpp"

using namespace oie;

namespace {

LatentFrames<double> random_latents(int frames, int tokens, int d, std::uint64_t seed) {
  Rng rng(seed);
  LatentFrames<double> z;
  z.frames = frames;
  z.tokens_per_frame = tokens;
  z.rows = random_normal<double>(frames * tokens, d, 1.0, rng);
  return z;
}

}  // namespace

TEST_CASE("embedding rows are orthonormal") {
  Codec c(CodecParams{});
  const Mat<double>& e = c.embedding();
  REQUIRE(e.rows() == 48);
  REQUIRE(e.cols() == 64);
  CHECK((e * e.transpose() - Mat<double>::Identity(48, 48)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode is linear and shape follows F, H, W, ps, d") {
  Codec c(CodecParams{});
  const VideoTensor zero(8, 3, 32, 32);
  const auto z0 = c.encode_video<double>(zero);
  CHECK(z0.frames == 8);
  CHECK(z0.tokens_per_frame == 64);
  CHECK(z0.rows.rows() == 512);
  CHECK(z0.rows.cols() == 64);
  CHECK(z0.rows.cwiseAbs().maxCoeff() == 0.0);

  const VideoTensor a = test::random_video(8, 3, 32, 32, 1), b = test::random_video(8, 3, 32, 32, 2);
  VideoTensor sum = a;
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] += b.data[i];
  const auto za = c.encode_video<double>(a), zb = c.encode_video<double>(b), zs = c.encode_video<double>(sum);
  CHECK((zs.rows - za.rows - zb.rows).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("decode inverts encode") {
  Codec c(CodecParams{});
  for (std::uint64_t s = 0; s < 10; ++s) {
    const VideoTensor v = test::random_video(8, 3, 32, 32, 100 + s);
    CHECK(max_abs_diff(c.decode_video(c.encode_video<double>(v), 32, 32), v) <= 1e-5);
    CHECK(max_abs_diff(c.decode_video(c.encode_video<float>(v), 32, 32), v) <= 1e-5);
  }
}

TEST_CASE("decode is linear") {
  Codec c(CodecParams{});
  auto z = random_latents(8, 64, 64, 3);
  const VideoTensor zero = c.decode_video(LatentFrames<double>{8, 64, Mat<double>::Zero(512, 64)}, 32, 32);
  CHECK(*std::max_element(zero.data.begin(), zero.data.end()) == 0.0f);
  CHECK(*std::min_element(zero.data.begin(), zero.data.end()) == 0.0f);
  const VideoTensor once = c.decode_video(z, 32, 32);
  z.rows *= 2.0;
  const VideoTensor twice = c.decode_video(z, 32, 32);
  for (std::size_t i = 0; i < once.size(); ++i) REQUIRE(std::abs(twice.data[i] - 2 * once.data[i]) <= 1e-6);
}

TEST_CASE("codec rejects bad shapes") {
  Codec c(CodecParams{});
  CHECK_THROWS_AS(c.encode_video<double>(VideoTensor(2, 3, 30, 32)), ConfigError);
  CHECK_THROWS_AS(c.encode_video<double>(VideoTensor(2, 1, 32, 32)), ConfigError);
  CHECK_THROWS_AS(c.decode_video(random_latents(2, 64, 64, 1), 32, 36), ConfigError);
  CHECK_THROWS_AS(c.decode_video(random_latents(2, 64, 32, 1), 32, 32), ConfigError);
  CodecParams narrow;
  narrow.width = 32;
  CHECK_THROWS_AS(Codec{narrow}, ConfigError);
  CodecParams bad_scale;
  bad_scale.scale = 0.0;
  CHECK_THROWS_AS(Codec{bad_scale}, ConfigError);
}

TEST_CASE("garment image modes") {
  Codec c(CodecParams{});
  const VideoTensor video = test::random_video(8, 3, 32, 32, 9);
  const auto z = c.encode_video<double>(video);

  CHECK(c.encode_image<double>(VideoTensor(1, 3, 32, 32)).rows.cwiseAbs().maxCoeff() == 0.0);
  for (int f : {0, 5}) {
    const auto block = c.encode_image<double>(video.frame(f), GarmentMode::FrameBlock);
    REQUIRE(block.rows.rows() == 64);
    CHECK((block.rows - z.rows.middleRows(f * 64, 64)).cwiseAbs().maxCoeff() == 0.0);
    const auto pooled = c.encode_image<double>(video.frame(f), GarmentMode::SinglePooled);
    REQUIRE(pooled.rows.rows() == 1);
    CHECK((pooled.rows - block.rows.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-6);
  }
  CHECK_THROWS_AS(c.encode_image<double>(video), ConfigError);
  CHECK(garment_mode_from_string(to_string(GarmentMode::SinglePooled)) == GarmentMode::SinglePooled);
  CHECK_THROWS_AS(garment_mode_from_string("tiled"), ConfigError);
}

TEST_CASE("assembled sequence layout") {
  Codec c(CodecParams{});
  const VideoTensor video = test::random_video(8, 3, 32, 32, 4);
  const auto p = c.encode_video<double>(video);
  const auto g = c.encode_image<double>(video.frame(0));
  const auto seq = assemble_sequence(g, p);
  CHECK(seq.rows.rows() == 576);
  CHECK(seq.garment_rows == 64);
  REQUIRE(seq.index.size() == 576);
  for (int i = 0; i < 576; ++i) {
    const TokenRef& r = seq.index[static_cast<std::size_t>(i)];
    if (i < 64) {
      CHECK(r.garment);
      CHECK(r.patch == i);
    } else {
      CHECK_FALSE(r.garment);
      CHECK(r.frame == (i - 64) / 64);
      CHECK(r.patch == (i - 64) % 64);
    }
  }
  CHECK((seq.garment_block().rows - g.rows).cwiseAbs().maxCoeff() == 0.0);
  const auto back = seq.pose_latents();
  CHECK(back.frames == 8);
  CHECK((back.rows - p.rows).cwiseAbs().maxCoeff() == 0.0);

  const auto pooled = assemble_sequence(c.encode_image<double>(video.frame(0), GarmentMode::SinglePooled), p);
  CHECK(pooled.rows.rows() == 513);

  GarmentBlock<double> narrow{Mat<double>::Zero(64, 32)};
  CHECK_THROWS_AS(assemble_sequence(narrow, p), ConfigError);
}
