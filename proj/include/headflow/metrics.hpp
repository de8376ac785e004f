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

// Evaluation metrics over coefficient windows and rendered frames.
//
// Geometric metrics go through coefficients_to_vertices, which ignores the
// global pose, so they are invariant to head rotation and translation.
// Geometric units are synthetic scene units.
//
// Beat detection: angular speed s_k = geodesic(r_k, r_{k+1}) * 25 Hz is
// stamped at (k + 0.5) / 25 s. A beat is a local maximum
// (s_k > s_{k-1}, s_k >= s_{k+1}) above mean + 0.5 std of the series; peaks
// closer than 4 samples are thinned greedily, tallest first.
//
// Images are rows of 64 x 64 grayscale pixels in [0, 1]. PSNR uses peak 1
// and is capped at 99 dB; SSIM uses an 11 x 11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, averaged over valid window positions.

#ifndef HEADFLOW_METRICS_HPP
#define HEADFLOW_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "headflow/blendshape.hpp"
#include "headflow/errors.hpp"
#include "headflow/motion.hpp"

namespace headflow {

namespace detail {

inline void check_pair(const Mat& pred, const Mat& gt, const char* what) {
  if (pred.rows() != gt.rows() || pred.cols() != layout::kMotionDim || gt.cols() != layout::kMotionDim) {
    throw InvalidArgument(std::string(what) + ": windows must have equal length and 115 columns");
  }
  if (pred.rows() == 0) throw InvalidArgument(std::string(what) + ": empty window");
}

inline std::vector<Mat> window_vertices(const Mat& w, const BlendshapeModel& model) {
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index t = 0; t < w.rows(); ++t) out.push_back(coefficients_to_vertices(w.row(t), model));
  return out;
}

}  // namespace detail

/// Mean over frames of the largest lip-vertex displacement.
inline double lve(const Mat& pred, const Mat& gt, const BlendshapeModel& model) {
  detail::check_pair(pred, gt, "lve");
  const auto vp = detail::window_vertices(pred, model), vg = detail::window_vertices(gt, model);
  double sum = 0.0;
  for (std::size_t t = 0; t < vp.size(); ++t) {
    double worst = 0.0;
    for (int i : model.lip_region) worst = std::max(worst, (vp[t].row(i) - vg[t].row(i)).norm());
    sum += worst;
  }
  return sum / static_cast<double>(vp.size());
}

/// Temporal std of upper-face motion relative to the first frame, one entry
/// per upper-region vertex.
inline std::vector<double> upper_face_dynamics(const Mat& w, const BlendshapeModel& model) {
  const auto v = detail::window_vertices(w, model);
  const double T = static_cast<double>(v.size());
  std::vector<double> sigma;
  sigma.reserve(model.upper_region.size());
  for (int i : model.upper_region) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (const auto& f : v) mean += f.row(i) - v.front().row(i);
    mean /= T;
    double acc = 0.0;
    for (const auto& f : v) acc += (f.row(i) - v.front().row(i) - mean).squaredNorm();
    sigma.push_back(std::sqrt(acc / T));
  }
  return sigma;
}

inline double fdd(const Mat& pred, const Mat& gt, const BlendshapeModel& model) {
  detail::check_pair(pred, gt, "fdd");
  if (pred.rows() < 2) throw InvalidArgument("fdd: need at least 2 frames");
  const auto sp = upper_face_dynamics(pred, model), sg = upper_face_dynamics(gt, model);
  double sum = 0.0;
  for (std::size_t i = 0; i < sp.size(); ++i) sum += std::abs(sp[i] - sg[i]);
  return sum / static_cast<double>(sp.size());
}

/// Distance between landmarks 66 and 62 per frame.
inline std::vector<double> mouth_opening(const Mat& w, const BlendshapeModel& model) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index t = 0; t < w.rows(); ++t) {
    const Mat v = coefficients_to_vertices(w.row(t), model);
    d.push_back((v.row(model.landmark_indices[66]) - v.row(model.landmark_indices[62])).norm());
  }
  return d;
}

inline double mod(const Mat& pred, const Mat& gt, const BlendshapeModel& model) {
  detail::check_pair(pred, gt, "mod");
  const auto dp = mouth_opening(pred, model), dg = mouth_opening(gt, model);
  double sum = 0.0;
  for (std::size_t t = 0; t < dp.size(); ++t) sum += std::abs(dp[t] - dg[t]);
  return sum / static_cast<double>(dp.size());
}

struct BeatOptions {
  double sigma = 0.1;          // seconds
  double threshold_std = 0.5;  // beats exceed mean + threshold_std * std
  int min_separation = 4;      // samples
  double frame_rate = layout::kFrameRate;
};

/// Beat timestamps (seconds, ascending) of a T x 3 axis-angle sequence.
inline std::vector<double> detect_beats(const Mat& rot, const BeatOptions& o = {}) {
  if (rot.cols() != 3) throw InvalidArgument("detect_beats: rotations must be T x 3");
  const Eigen::Index n = rot.rows() - 1;
  if (n < 3) return {};
  std::vector<double> s(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    s[static_cast<std::size_t>(k)] =
        geodesic_angle(rot.row(k).transpose(), rot.row(k + 1).transpose()) * o.frame_rate;
  }
  double mean = 0.0, var = 0.0;
  for (double x : s) mean += x;
  mean /= static_cast<double>(n);
  for (double x : s) var += (x - mean) * (x - mean);
  const double thr = mean + o.threshold_std * std::sqrt(var / static_cast<double>(n));

  std::vector<std::size_t> peaks;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    if (s[k] > s[k - 1] && s[k] >= s[k + 1] && s[k] > thr) peaks.push_back(k);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&s](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t p : peaks) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t q) {
      return (p > q ? p - q : q - p) < static_cast<std::size_t>(o.min_separation);
    });
    if (clear) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<double> beats;
  for (std::size_t k : kept) beats.push_back((static_cast<double>(k) + 0.5) / o.frame_rate);
  return beats;
}

/// Symmetric Gaussian-kernel alignment of two beat sets. Empty sets give 0.
inline double beat_alignment_score(const std::vector<double>& pred, const std::vector<double>& gt, double sigma) {
  if (pred.empty() || gt.empty()) return 0.0;
  auto one_way = [sigma](const std::vector<double>& from, const std::vector<double>& to) {
    double acc = 0.0;
    for (double b : from) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : to) best = std::min(best, (b - c) * (b - c));
      acc += std::exp(-best / (2.0 * sigma * sigma));
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(pred, gt) + one_way(gt, pred));
}

struct BeatAlignment {
  double score = 0.0;
  bool degenerate = false;  // one of the beat sets was empty
};

inline BeatAlignment beat_alignment(const Mat& pred_rot, const Mat& gt_rot, const BeatOptions& o = {}) {
  if (pred_rot.rows() == 0 || gt_rot.rows() == 0) throw InvalidArgument("beat_alignment: empty sequence");
  const auto bp = detect_beats(pred_rot, o), bg = detect_beats(gt_rot, o);
  if (bp.empty() || bg.empty()) return {0.0, true};
  return {beat_alignment_score(bp, bg, o.sigma), false};
}

inline constexpr double kEntropyEps = 1e-8;

/// -sum p_c log2(p_c + eps) over a cluster histogram.
inline double assignment_entropy(const std::vector<std::size_t>& counts) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  if (n == 0) throw InvalidArgument("assignment_entropy: empty histogram");
  double h = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log2(p + kEntropyEps);
  }
  return h;
}

/// Lloyd's k-means with k-means++ seeding.
class KMeans {
 public:
  KMeans(int k, std::uint64_t seed = 0, int iterations = 50) : k_(k), seed_(seed), iterations_(iterations) {
    if (k < 1) throw InvalidArgument("KMeans: K must be at least 1");
  }

  void fit(const Mat& x) {
    const Eigen::Index n = x.rows();
    if (n < k_) throw InvalidArgument("KMeans: K exceeds the sample count");
    std::mt19937_64 rng(seed_);
    centroids_.resize(k_, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids_.row(0) = x.row(first(rng));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centroids_.row(0)).squaredNorm();
    for (int c = 1; c < k_; ++c) {
      Eigen::Index pick = 0;
      const double total = d2.sum();
      if (total > 0.0) {
        double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (pick = 0; pick + 1 < n && r >= d2(pick); ++pick) r -= d2(pick);
      } else {
        pick = first(rng);
      }
      centroids_.row(c) = x.row(pick);
      for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centroids_.row(c)).squaredNorm());
    }
    for (int it = 0; it < iterations_; ++it) {
      Mat sums = Mat::Zero(k_, x.cols());
      std::vector<std::size_t> count(static_cast<std::size_t>(k_), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int c = nearest(x.row(i));
        sums.row(c) += x.row(i);
        ++count[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < k_; ++c) {
        if (count[static_cast<std::size_t>(c)] > 0) {
          centroids_.row(c) = sums.row(c) / static_cast<double>(count[static_cast<std::size_t>(c)]);
        }
      }
    }
  }

  /// Index of the closest centroid, lowest index on ties.
  int nearest(const Eigen::Ref<const Eigen::RowVectorXd>& p) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k_; ++c) {
      const double d = (p - centroids_.row(c)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    return best;
  }

  std::vector<std::size_t> histogram(const Mat& x) const {
    std::vector<std::size_t> h(static_cast<std::size_t>(k_), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) ++h[static_cast<std::size_t>(nearest(x.row(i)))];
    return h;
  }

  int k() const { return k_; }
  const Mat& centroids() const { return centroids_; }

 private:
  int k_;
  std::uint64_t seed_;
  int iterations_;
  Mat centroids_;
};

struct SidGroup {
  const char* name;
  int offset;
  int size;
};

inline constexpr std::array<SidGroup, 3> kSidGroups{{
    {"jaw", layout::kJaw, layout::kJawDim},
    {"exp50", layout::kExpression, 50},
    {"rot", layout::kRotation, layout::kPoseDim},
}};

/// Cluster-assignment entropy of generated frames under per-group k-means
/// fitted on ground-truth frames; mean over jaw, exp50 and rot. Rows are
/// 115-dim frames.
inline double sid(const Mat& generated, const Mat& gt, int k = 10, std::uint64_t seed = 0) {
  if (gt.rows() == 0 || generated.rows() == 0) throw InvalidArgument("sid: empty sample set");
  if (gt.cols() != layout::kMotionDim || generated.cols() != layout::kMotionDim) {
    throw InvalidArgument("sid: samples must have 115 columns");
  }
  double sum = 0.0;
  for (const auto& g : kSidGroups) {
    KMeans km(k, seed);
    km.fit(gt.middleCols(g.offset, g.size));
    sum += assignment_entropy(km.histogram(generated.middleCols(g.offset, g.size)));
  }
  return sum / static_cast<double>(kSidGroups.size());
}

inline constexpr double kPsnrCap = 99.0;

inline double psnr(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
    throw InvalidArgument("psnr: images must have equal nonempty shape");
  }
  const double mse = (a - b).squaredNorm() / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline Mat gaussian_window(int size = 11, double sigma = 1.5) {
  Eigen::VectorXd g(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) g(i) = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  g /= g.sum();
  return g * g.transpose();
}

/// SSIM of two H x W images.
inline double ssim(const Mat& a, const Mat& b) {
  constexpr int kWin = 11;
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("ssim: images differ in shape");
  if (a.rows() < kWin || a.cols() < kWin) throw InvalidArgument("ssim: images smaller than the 11 x 11 window");
  static const Mat w = gaussian_window(kWin, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Mat aa = a.cwiseProduct(a), bb = b.cwiseProduct(b), ab = a.cwiseProduct(b);
  double total = 0.0;
  const Eigen::Index nr = a.rows() - kWin + 1, nc = a.cols() - kWin + 1;
  for (Eigen::Index r = 0; r < nr; ++r) {
    for (Eigen::Index c = 0; c < nc; ++c) {
      const double mx = a.block(r, c, kWin, kWin).cwiseProduct(w).sum();
      const double my = b.block(r, c, kWin, kWin).cwiseProduct(w).sum();
      const double sxx = aa.block(r, c, kWin, kWin).cwiseProduct(w).sum() - mx * mx;
      const double syy = bb.block(r, c, kWin, kWin).cwiseProduct(w).sum() - my * my;
      const double sxy = ab.block(r, c, kWin, kWin).cwiseProduct(w).sum() - mx * my;
      total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
  }
  return total / static_cast<double>(nr * nc);
}

/// One image per row, side x side pixels.
inline Mat frame_image(const Mat& seq, Eigen::Index frame, int side = 64) {
  if (seq.cols() != side * side) throw InvalidArgument("frame_image: row length is not side * side");
  Mat img(side, side);
  for (int r = 0; r < side; ++r) img.row(r) = seq.row(frame).segment(r * side, side);
  return img;
}

/// Per-frame PSNR and SSIM averaged over an image sequence.
inline std::pair<double, double> image_metrics(const Mat& pred, const Mat& gt, int side = 64) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.rows() == 0) {
    throw InvalidArgument("image_metrics: sequences differ in shape");
  }
  double p = 0.0, s = 0.0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    const Mat a = frame_image(pred, t, side), b = frame_image(gt, t, side);
    p += psnr(a, b);
    s += ssim(a, b);
  }
  const double n = static_cast<double>(pred.rows());
  return {p / n, s / n};
}

struct MetricReport {
  double lve = 0.0;
  double fdd = 0.0;
  double mod = 0.0;
  double ba = 0.0;
  bool ba_degenerate = false;
  std::optional<double> sid;
  std::optional<double> psnr;
  std::optional<double> ssim;
};

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"lve", r.lve},   {"fdd", r.fdd},   {"mod", r.mod},
                     {"ba", r.ba},     {"ba_degenerate", r.ba_degenerate},
                     {"sid", opt(r.sid)}, {"psnr", opt(r.psnr)}, {"ssim", opt(r.ssim)}};
}

struct EvalOptions {
  int sid_clusters = 10;
  std::uint64_t sid_seed = 0;
  BeatOptions beats;
};

/// Full report for a predicted and a ground-truth window. Image metrics are
/// filled when both image sequences are given; SID when the ground truth has
/// at least sid_clusters frames.
inline MetricReport evaluate(const Mat& pred, const Mat& gt, const BlendshapeModel& model, const EvalOptions& o = {},
                             const Mat* pred_images = nullptr, const Mat* gt_images = nullptr) {
  MetricReport r;
  r.lve = lve(pred, gt, model);
  r.fdd = fdd(pred, gt, model);
  r.mod = mod(pred, gt, model);
  const auto ba = beat_alignment(pred.middleCols(layout::kRotation, 3), gt.middleCols(layout::kRotation, 3), o.beats);
  r.ba = ba.score;
  r.ba_degenerate = ba.degenerate;
  if (gt.rows() >= o.sid_clusters) r.sid = sid(pred, gt, o.sid_clusters, o.sid_seed);
  if (pred_images && gt_images) {
    const auto [p, s] = image_metrics(*pred_images, *gt_images);
    r.psnr = p;
    r.ssim = s;
  }
  return r;
}

}  // namespace headflow

#endif  // HEADFLOW_METRICS_HPP
