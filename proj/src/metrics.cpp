// SPDX-License-Identifier: Apache-2.0
#include "oie/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "oie/autograd.hpp"

namespace oie {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    w[i] = std::exp(-x * x / (2 * kSigma * kSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

void check_same(const VideoTensor& a, const VideoTensor& b, const char* what) {
  if (!a.same_shape(b)) throw ConfigError(std::string(what) + ": shape mismatch");
}

Mat<double> relu(Mat<double> m) { return m.cwiseMax(0.0); }

// Row layout (y, x) x channels for frame f.
Mat<double> frame_rows(const VideoTensor& v, int f) {
  Mat<double> x(static_cast<Eigen::Index>(v.height) * v.width, v.channels);
  for (int y = 0; y < v.height; ++y)
    for (int xx = 0; xx < v.width; ++xx)
      for (int c = 0; c < v.channels; ++c) x(y * v.width + xx, c) = v.at(f, c, y, xx);
  return x;
}

Mat<double> video_rows(const VideoTensor& v) {
  Mat<double> x(static_cast<Eigen::Index>(v.frames) * v.height * v.width, v.channels);
  for (int f = 0; f < v.frames; ++f) x.middleRows(static_cast<Eigen::Index>(f) * v.height * v.width,
                                                  static_cast<Eigen::Index>(v.height) * v.width) = frame_rows(v, f);
  return x;
}

struct ConvLayer {
  Mat<double> weight;
  Mat<double> bias;
  int stride_t = 1;
  int stride_s = 1;
};

std::vector<ConvLayer> random_net(std::uint64_t seed, std::uint64_t salt, int cin,
                                  const std::vector<std::array<int, 3>>& spec) {
  Rng rng(mix_seed(seed, salt));
  std::vector<ConvLayer> net;
  for (const auto& [cout, st, ss] : spec) {
    ConvLayer l;
    l.weight = random_normal<double>(27 * cin, cout, std::sqrt(2.0 / (27.0 * cin)), rng);
    l.bias = random_normal<double>(1, cout, 0.1, rng);
    l.stride_t = st;
    l.stride_s = ss;
    net.push_back(std::move(l));
    cin = cout;
  }
  return net;
}

// Runs `net`, returning every layer's activations and their grid.
std::vector<std::pair<Mat<double>, ag::Conv3dShape>> run_net(const std::vector<ConvLayer>& net, Mat<double> x,
                                                             int frames, int height, int width) {
  ag::Graph<double> g(false);
  std::vector<std::pair<Mat<double>, ag::Conv3dShape>> out;
  for (const auto& l : net) {
    ag::Conv3dShape s{frames, height, width, l.stride_t, l.stride_s, l.stride_s};
    auto y = ag::conv3d(g, g.constant(std::move(x)), g.constant(l.weight), g.constant(l.bias), s);
    x = relu(y->value);
    frames = s.out_frames();
    height = s.out_height();
    width = s.out_width();
    out.push_back({x, ag::Conv3dShape{frames, height, width}});
  }
  return out;
}

const std::vector<std::array<int, 3>> kPerceptualNet = {{8, 1, 1}, {16, 1, 2}, {32, 1, 2}};
const std::vector<std::array<int, 3>> kVideoNet = {{8, 1, 2}, {16, 2, 2}, {32, 2, 2}};

Mat<double> unit_rows(const Mat<double>& m) {
  Mat<double> out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) /= (out.row(r).norm() + 1e-10);
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double ssim_image(const VideoTensor& a, const VideoTensor& b, int frame, int channel) {
  check_same(a, b, "ssim");
  static const auto w = gaussian_window();
  const int H = a.height, W = a.width;
  if (H < kWindow || W < kWindow) throw ConfigError("ssim: frames must be at least 11x11");
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + kWindow <= H; ++y) {
    for (int x = 0; x + kWindow <= W; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < kWindow; ++i) {
        for (int j = 0; j < kWindow; ++j) {
          const double k = w[i] * w[j];
          const double va = a.at(frame, channel, y + i, x + j), vb = b.at(frame, channel, y + i, x + j);
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
      ++count;
    }
  }
  return total / count;
}

double ssim_video(const VideoTensor& a, const VideoTensor& b) {
  check_same(a, b, "ssim");
  double s = 0.0;
  for (int f = 0; f < a.frames; ++f)
    for (int c = 0; c < a.channels; ++c) s += ssim_image(a, b, f, c);
  return s / (a.frames * a.channels);
}

double perceptual_distance(const VideoTensor& a, const VideoTensor& b, std::uint64_t feature_net_seed) {
  check_same(a, b, "perceptual_distance");
  const auto net = random_net(feature_net_seed, 0x1B1B5, a.channels, kPerceptualNet);
  double total = 0.0;
  for (int f = 0; f < a.frames; ++f) {
    const auto fa = run_net(net, frame_rows(a, f), 1, a.height, a.width);
    const auto fb = run_net(net, frame_rows(b, f), 1, b.height, b.width);
    for (std::size_t l = 0; l < fa.size(); ++l) {
      total += (unit_rows(fa[l].first) - unit_rows(fb[l].first)).rowwise().squaredNorm().mean();
    }
  }
  return total / a.frames;
}

std::vector<double> video_features(const VideoTensor& v, std::uint64_t feature_net_seed) {
  const auto net = random_net(feature_net_seed, 0xF1D, v.channels, kVideoNet);
  const auto acts = run_net(net, video_rows(v), v.frames, v.height, v.width);
  const Mat<double>& last = acts.back().first;
  const Eigen::RowVectorXd mean = last.colwise().mean();
  const Eigen::RowVectorXd sd = ((last.rowwise() - mean).array().square().colwise().mean()).sqrt();
  std::vector<double> out(mean.data(), mean.data() + mean.size());
  out.insert(out.end(), sd.data(), sd.data() + sd.size());
  return out;
}

double frechet_distance(const Mat<double>& fa, const Mat<double>& fb) {
  if (fa.rows() < 2 || fb.rows() < 2) throw ConfigError("frechet_distance: need at least 2 items per set");
  if (fa.cols() != fb.cols()) throw ConfigError("frechet_distance: feature width mismatch");
  const Eigen::RowVectorXd ma = fa.colwise().mean(), mb = fb.colwise().mean();
  const Eigen::MatrixXd ca = (fa.rowwise() - ma).transpose() * (fa.rowwise() - ma) / static_cast<double>(fa.rows() - 1);
  const Eigen::MatrixXd cb = (fb.rowwise() - mb).transpose() * (fb.rowwise() - mb) / static_cast<double>(fb.rows() - 1);
  // Tr((Ca Cb)^1/2) = Tr((Ca^1/2 Cb Ca^1/2)^1/2), symmetric in exact arithmetic.
  const Eigen::MatrixXd sa = psd_sqrt(ca);
  const Eigen::MatrixXd mid = sa * cb * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mid + mid.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
}

double frechet_video_distance(const std::vector<VideoTensor>& set_a, const std::vector<VideoTensor>& set_b,
                              std::uint64_t feature_net_seed) {
  if (set_a.size() < 2 || set_b.size() < 2) throw ConfigError("frechet_video_distance: need at least 2 videos per set");
  auto feats = [&](const std::vector<VideoTensor>& set) {
    Mat<double> m;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (!set[i].same_shape(set[0]) || !set[i].same_shape(set_a[0])) {
        throw ConfigError("frechet_video_distance: video shapes differ");
      }
      const auto f = video_features(set[i], feature_net_seed);
      if (i == 0) m.resize(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(f.size()));
      for (std::size_t j = 0; j < f.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
    return m;
  };
  return frechet_distance(feats(set_a), feats(set_b));
}

std::string to_string(EvalSetting s) { return s == EvalSetting::Paired ? "paired" : "unpaired"; }

EvalSetting eval_setting_from_string(const std::string& s) {
  if (s == "paired") return EvalSetting::Paired;
  if (s == "unpaired") return EvalSetting::Unpaired;
  throw ConfigError("unknown evaluation setting: " + s);
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"ssim", r.ssim},
          {"perc", r.perc},
          {"fvd", r.fvd},
          {"setting", to_string(r.setting)},
          {"samples", r.samples},
          {"feature_net_seed", r.feature_net_seed}};
}

}  // namespace oie
