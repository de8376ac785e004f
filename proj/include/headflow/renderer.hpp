// Copyright 2026 The headflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable landmark splat renderer and a frozen convolutional feature
// stub for image-space losses.
//
// A frame is rendered by posing the 68 blendshape landmarks with the frame's
// global rotation and translation, projecting them orthographically
// (u = 32 + 20 x, v = 32 - 20 y), summing one Gaussian splat (sigma 1.5 px)
// per landmark scaled by a trainable intensity, and squashing with tanh.
//
// Image files ("GRAY" container, little-endian):
//   "GRAY" | uint32 width | uint32 height | uint32 frames | float64 pixels,
//   frame-major then row-major.

#ifndef HEADFLOW_RENDERER_HPP
#define HEADFLOW_RENDERER_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "headflow/audio.hpp"
#include "headflow/autograd.hpp"
#include "headflow/blendshape.hpp"
#include "headflow/motion.hpp"
#include "headflow/params.hpp"

namespace headflow {

inline constexpr int kImageSize = 64;
inline constexpr int kLandmarks = 68;

namespace ag {

namespace detail {

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
  return m;
}

inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& r) {
  const double th = r.norm();
  if (th < 1e-12) return Eigen::Matrix3d::Identity() + skew(r);
  return Eigen::AngleAxisd(th, r / th).toRotationMatrix();
}

/// d(R v)/dr, 3 x 3.
inline Eigen::Matrix3d rotate_jacobian(const Eigen::Matrix3d& R, const Eigen::Vector3d& r, const Eigen::Vector3d& v) {
  const double n2 = r.squaredNorm();
  if (n2 < 1e-24) return -skew(v);
  return -R * skew(v) * (r * r.transpose() + (R.transpose() - Eigen::Matrix3d::Identity()) * skew(r)) / n2;
}

}  // namespace detail

/// Rigid transform of N frames of K points. points: N x 3K (x, y, z per
/// point); pose: N x 6 (axis-angle, translation). Output N x 3K.
inline Var<double> rigid_transform(Var<double> points, Var<double> pose) {
  headflow::ag::detail::require(points.cols() % 3 == 0 && pose.cols() == 6 && pose.rows() == points.rows(),
                                "rigid_transform: bad shapes");
  Graph<double>& g = points.graph();
  const auto N = points.rows(), K = points.cols() / 3;
  std::vector<Eigen::Matrix3d> Rs(static_cast<std::size_t>(N));
  Mat out(N, 3 * K);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::Vector3d r = pose.value().row(n).head<3>().transpose();
    const Eigen::Vector3d t = pose.value().row(n).tail<3>().transpose();
    Rs[static_cast<std::size_t>(n)] = detail::rodrigues(r);
    for (Eigen::Index k = 0; k < K; ++k) {
      const Eigen::Vector3d p = points.value().row(n).segment<3>(3 * k).transpose();
      out.row(n).segment<3>(3 * k) = (Rs[static_cast<std::size_t>(n)] * p + t).transpose();
    }
  }
  const int ip = points.id(), iq = pose.id();
  return g.emit(std::move(out), g.needs(points, pose), [ip, iq, Rs, N, K](Graph<double>& g, const Mat& G) {
    const Mat& P = g.value(ip);
    const Mat& Q = g.value(iq);
    Mat dp = Mat::Zero(N, 3 * K), dq = Mat::Zero(N, 6);
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::Matrix3d& R = Rs[static_cast<std::size_t>(n)];
      const Eigen::Vector3d r = Q.row(n).head<3>().transpose();
      Eigen::Vector3d dr = Eigen::Vector3d::Zero(), dt = Eigen::Vector3d::Zero();
      for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::Vector3d gk = G.row(n).segment<3>(3 * k).transpose();
        const Eigen::Vector3d v = P.row(n).segment<3>(3 * k).transpose();
        dp.row(n).segment<3>(3 * k) = (R.transpose() * gk).transpose();
        dr += detail::rotate_jacobian(R, r, v).transpose() * gk;
        dt += gk;
      }
      dq.row(n).head<3>() = dr.transpose();
      dq.row(n).tail<3>() = dt.transpose();
    }
    if (g.requires_grad(ip)) g.accumulate(ip, dp);
    if (g.requires_grad(iq)) g.accumulate(iq, dq);
  });
}

/// Separable Gaussian splats. uv: N x 2K pixel coordinates (u_k, v_k);
/// weight: 1 x K intensities. Output N x size^2, row-major images.
inline Var<double> splat(Var<double> uv, Var<double> weight, int size, double sigma) {
  headflow::ag::detail::require(uv.cols() % 2 == 0 && weight.rows() == 1 && weight.cols() == uv.cols() / 2,
                                "splat: bad shapes");
  Graph<double>& g = uv.graph();
  const auto N = uv.rows(), K = uv.cols() / 2;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  // Per frame: EX (K x size) along columns, EY (K x size) along rows.
  auto profiles = [size, inv2s2, K](const Mat& uvm, Eigen::Index n, Mat& ex, Mat& ey) {
    ex.resize(K, size);
    ey.resize(K, size);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double u = uvm(n, 2 * k), v = uvm(n, 2 * k + 1);
      for (int j = 0; j < size; ++j) {
        ex(k, j) = std::exp(-(j - u) * (j - u) * inv2s2);
        ey(k, j) = std::exp(-(j - v) * (j - v) * inv2s2);
      }
    }
  };
  Mat out(N, size * size);
  Mat ex, ey;
  for (Eigen::Index n = 0; n < N; ++n) {
    profiles(uv.value(), n, ex, ey);
    const Mat wx = weight.value().row(0).transpose().asDiagonal() * ex;
    Mat img = ey.transpose() * wx;  // size x size, row = v, col = u
    out.row(n) = Eigen::Map<const Eigen::RowVectorXd>(img.data(), size * size);
  }
  const int iu = uv.id(), iw = weight.id();
  return g.emit(std::move(out), g.needs(uv, weight),
                [iu, iw, N, K, size, inv2s2, profiles](Graph<double>& g, const Mat& G) {
                  const Mat& UV = g.value(iu);
                  const Eigen::RowVectorXd w = g.value(iw).row(0);
                  Mat duv = Mat::Zero(N, 2 * K), dw = Mat::Zero(1, K);
                  Mat ex, ey;
                  Eigen::RowVectorXd idx(size);
                  for (int j = 0; j < size; ++j) idx(j) = j;
                  for (Eigen::Index n = 0; n < N; ++n) {
                    profiles(UV, n, ex, ey);
                    const Eigen::Map<const Mat> Gi(G.row(n).data(), size, size);
                    const Mat A = ey * Gi;               // K x size (over u)
                    const Mat B = ex * Gi.transpose();   // K x size (over v)
                    for (Eigen::Index k = 0; k < K; ++k) {
                      const double u = UV(n, 2 * k), v = UV(n, 2 * k + 1);
                      const Eigen::RowVectorXd dex = ex.row(k).cwiseProduct((idx.array() - u).matrix()) * (2 * inv2s2);
                      const Eigen::RowVectorXd dey = ey.row(k).cwiseProduct((idx.array() - v).matrix()) * (2 * inv2s2);
                      dw(0, k) += A.row(k).dot(ex.row(k));
                      duv(n, 2 * k) = w(k) * A.row(k).dot(dex);
                      duv(n, 2 * k + 1) = w(k) * B.row(k).dot(dey);
                    }
                  }
                  if (g.requires_grad(iu)) g.accumulate(iu, duv);
                  if (g.requires_grad(iw)) g.accumulate(iw, dw);
                });
}

/// im2col for one multi-channel image stored (H*W) x C, pixel-major.
/// Output (Ho*Wo) x (k*k*C), column (ky*k + kx)*C + c.
template <class S>
Var<S> im2col(Var<S> a, int H, int W, int k, int stride, int pad) {
  headflow::ag::detail::require(a.rows() == static_cast<Eigen::Index>(H) * W, "im2col: rows must equal H*W");
  const auto C = a.cols();
  const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  auto src_of = [=](int oy, int ox, int ky, int kx) -> Eigen::Index {
    const int y = oy * stride - pad + ky, x = ox * stride - pad + kx;
    if (y < 0 || y >= H || x < 0 || x >= W) return -1;
    return static_cast<Eigen::Index>(y) * W + x;
  };
  Matrix<S> v = Matrix<S>::Zero(static_cast<Eigen::Index>(Ho) * Wo, k * k * C);
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const auto s = src_of(oy, ox, ky, kx);
          if (s >= 0) v.block(oy * Wo + ox, (ky * k + kx) * C, 1, C) = a.value().row(s);
        }
      }
    }
  }
  Graph<S>& g = a.graph();
  const int ia = a.id();
  const auto R = a.rows();
  return g.emit(std::move(v), g.needs(a), [ia, R, C, Ho, Wo, k, src_of](Graph<S>& g, const Matrix<S>& Gr) {
    Matrix<S> d = Matrix<S>::Zero(R, C);
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const auto s = src_of(oy, ox, ky, kx);
            if (s >= 0) d.row(s) += Gr.block(oy * Wo + ox, (ky * k + kx) * C, 1, C);
          }
        }
      }
    }
    g.accumulate(ia, d);
  });
}

}  // namespace ag

// ---------------------------------------------------------------------------

class SyntheticRenderer {
 public:
  static constexpr const char* kIntensity = "renderer.splat_intensity";

  explicit SyntheticRenderer(BlendshapeModel model = BlendshapeModel::synthetic(), int size = kImageSize,
                             double sigma = 1.5, double scale = 20.0, double offset = 32.0)
      : model_(std::move(model)), size_(size), sigma_(sigma) {
    basis_ = Mat::Zero(layout::kExpressionDim + layout::kJawDim, 3 * kLandmarks);
    template_ = Mat::Zero(1, 3 * kLandmarks);
    for (int l = 0; l < kLandmarks; ++l) {
      const int v = model_.landmark_indices[static_cast<std::size_t>(l)];
      for (int a = 0; a < 3; ++a) {
        template_(0, 3 * l + a) = model_.template_vertices(v, a);
        basis_.block(0, 3 * l + a, layout::kExpressionDim, 1) = model_.expression_basis.row(3 * v + a).transpose();
        basis_.block(layout::kExpressionDim, 3 * l + a, layout::kJawDim, 1) = model_.jaw_basis.row(3 * v + a).transpose();
      }
    }
    proj_ = Mat::Zero(3 * kLandmarks, 2 * kLandmarks);
    proj_offset_ = Mat::Constant(1, 2 * kLandmarks, offset);
    for (int l = 0; l < kLandmarks; ++l) {
      proj_(3 * l, 2 * l) = scale;
      proj_(3 * l + 1, 2 * l + 1) = -scale;
    }
  }

  const BlendshapeModel& blendshape() const { return model_; }
  int size() const { return size_; }
  double sigma() const { return sigma_; }
  /// 103 x 204 map from [expression | jaw] to flattened landmark offsets.
  const Mat& landmark_basis() const { return basis_; }
  const Mat& landmark_template() const { return template_; }

  /// Trainable fields with their initial values.
  ParameterStore<double> init_parameters() const {
    ParameterStore<double> p;
    p.set(kIntensity, Mat::Ones(1, kLandmarks));
    return p;
  }

  /// Images (N x size^2) of N coefficient frames.
  ag::Var<double> render(ag::Var<double> frames, ag::Var<double> intensity) const {
    if (frames.cols() != layout::kMotionDim) throw InvalidArgument("render: frames must have 115 columns");
    ag::Graph<double>& g = frames.graph();
    ag::Var<double> coeffs = ag::cols(frames, layout::kExpression, layout::kExpressionDim + layout::kJawDim);
    ag::Var<double> lm = ag::add_row(ag::matmul(coeffs, g.reference(basis_)), g.reference(template_));
    ag::Var<double> pose = ag::cols(frames, layout::kRotation, 2 * layout::kPoseDim);
    ag::Var<double> posed = ag::rigid_transform(lm, pose);
    ag::Var<double> uv = ag::add_row(ag::matmul(posed, g.reference(proj_)), g.reference(proj_offset_));
    ag::Var<double> img = ag::tanh(ag::splat(uv, intensity, size_, sigma_));
    if (!img.value().allFinite()) throw NumericFailure("render: non-finite pixels", 0);
    return img;
  }

  Mat render(const Mat& frames, const ParameterStore<double>& params) const {
    ag::Graph<double> g(false);
    return render(g.reference(frames), g.reference(params.at(kIntensity))).value();
  }

 private:
  BlendshapeModel model_;
  int size_;
  double sigma_;
  Mat basis_, template_, proj_, proj_offset_;
};

/// Frozen three-layer strided convolution stack, 1 -> 4 -> 8 -> 8 channels,
/// 3x3 kernels, stride 2, tanh. Features are all activations concatenated.
class PerceptualStub {
 public:
  explicit PerceptualStub(std::uint64_t seed = 11, int size = kImageSize) : size_(size) {
    std::mt19937_64 rng(seed);
    const int ch[4] = {1, 4, 8, 8};
    for (int l = 0; l < 3; ++l) {
      const int fan = 9 * ch[l];
      std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(fan));
      Mat w(fan, ch[l + 1]);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
      weights_.push_back(w);
    }
  }

  const std::vector<Mat>& weights() const { return weights_; }

  /// Features of N images (N x size^2) -> N x feature_count.
  ag::Var<double> features(ag::Var<double> images) const {
    ag::Graph<double>& g = images.graph();
    std::vector<ag::Var<double>> rows;
    for (Eigen::Index n = 0; n < images.rows(); ++n) {
      ag::Var<double> x = ag::reshape(ag::rows(images, n, 1), static_cast<Eigen::Index>(size_) * size_, 1);
      int s = size_;
      std::vector<ag::Var<double>> acts;
      for (const auto& w : weights_) {
        x = ag::tanh(ag::matmul(ag::im2col(x, s, s, 3, 2, 1), g.reference(w)));
        s = (s + 2 - 3) / 2 + 1;
        acts.push_back(ag::reshape(x, 1, x.value().size()));
      }
      rows.push_back(ag::concat_cols(acts));
    }
    return ag::concat_rows(rows);
  }

  Mat features(const Mat& images) const {
    ag::Graph<double> g(false);
    return features(g.reference(images)).value();
  }

 private:
  int size_;
  std::vector<Mat> weights_;
};

// ---------------------------------------------------------------------------

struct ImageSequence {
  int width = kImageSize;
  int height = kImageSize;
  Mat pixels;  // frames x (height * width)
};

inline void write_images(const std::string& path, const ImageSequence& seq) {
  if (seq.pixels.cols() != static_cast<Eigen::Index>(seq.width) * seq.height) {
    throw InvalidArgument("write_images: pixel columns must equal width * height");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  os.write("GRAY", 4);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.width));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.height));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.pixels.rows()));
  for (Eigen::Index i = 0; i < seq.pixels.size(); ++i) detail::put_le<double>(os, seq.pixels.data()[i]);
}

inline ImageSequence read_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open image file " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "GRAY") throw ConfigError(path + ": not a GRAY image file");
  ImageSequence seq;
  seq.width = static_cast<int>(detail::get_le<std::uint32_t>(is));
  seq.height = static_cast<int>(detail::get_le<std::uint32_t>(is));
  const auto frames = detail::get_le<std::uint32_t>(is);
  seq.pixels.resize(frames, static_cast<Eigen::Index>(seq.width) * seq.height);
  for (Eigen::Index i = 0; i < seq.pixels.size(); ++i) seq.pixels.data()[i] = detail::get_le<double>(is);
  return seq;
}

}  // namespace headflow

#endif  // HEADFLOW_RENDERER_HPP
