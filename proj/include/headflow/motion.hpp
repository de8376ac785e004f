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

#ifndef HEADFLOW_MOTION_HPP
#define HEADFLOW_MOTION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "headflow/autograd.hpp"
#include "headflow/errors.hpp"

namespace headflow {

/// Column layout of one motion frame: 100 expression weights followed by
/// jaw (3), two eyeball rotations (2 x 3), global rotation (3) and global
/// translation (3). Rotations are axis-angle vectors in radians.
namespace layout {
inline constexpr int kExpression = 0;
inline constexpr int kExpressionDim = 100;
inline constexpr int kJaw = 100;
inline constexpr int kJawDim = 3;
inline constexpr int kEyes = 103;
inline constexpr int kEyesDim = 6;
inline constexpr int kRotation = 109;
inline constexpr int kTranslation = 112;
inline constexpr int kPoseDim = 3;
inline constexpr int kMotionDim = 115;
inline constexpr int kShapeDim = 300;
inline constexpr int kShapeConditioningDim = 100;
inline constexpr double kFrameRate = 25.0;
}  // namespace layout

/// A parameter group of the motion vector, used for per-group loss weights.
struct MotionGroup {
  const char* name;
  int offset;
  int size;
};

inline constexpr std::array<MotionGroup, 5> kMotionGroups{{
    {"expr", layout::kExpression, layout::kExpressionDim},
    {"jaw", layout::kJaw, layout::kJawDim},
    {"eye", layout::kEyes, layout::kEyesDim},
    {"rot", layout::kRotation, layout::kPoseDim},
    {"trans", layout::kTranslation, layout::kPoseDim},
}};

struct MotionFrame {
  std::array<double, 100> expression{};
  std::array<double, 3> jaw{};
  std::array<double, 6> eyes{};
  std::array<double, 3> rotation{};
  std::array<double, 3> translation{};

  Eigen::Matrix<double, 1, layout::kMotionDim> to_row() const {
    Eigen::Matrix<double, 1, layout::kMotionDim> r;
    auto put = [&r](int off, const auto& a) {
      for (std::size_t i = 0; i < a.size(); ++i) r(0, off + static_cast<int>(i)) = a[i];
    };
    put(layout::kExpression, expression);
    put(layout::kJaw, jaw);
    put(layout::kEyes, eyes);
    put(layout::kRotation, rotation);
    put(layout::kTranslation, translation);
    return r;
  }

  template <class Row>
  static MotionFrame from_row(const Row& r) {
    if (r.size() != layout::kMotionDim) throw InvalidArgument("MotionFrame: expected 115 values");
    MotionFrame f;
    auto get = [&r](int off, auto& a) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = r(off + static_cast<int>(i));
    };
    get(layout::kExpression, f.expression);
    get(layout::kJaw, f.jaw);
    get(layout::kEyes, f.eyes);
    get(layout::kRotation, f.rotation);
    get(layout::kTranslation, f.translation);
    return f;
  }
};

/// A run of frames at 25 Hz, stored one frame per row (frames x 115).
class MotionWindow {
 public:
  MotionWindow() = default;
  explicit MotionWindow(Mat frames) : frames_(std::move(frames)) {
    if (frames_.cols() != layout::kMotionDim) throw InvalidArgument("MotionWindow: expected 115 columns");
    if (!frames_.allFinite()) throw InvalidArgument("MotionWindow: non-finite coefficient");
  }
  static MotionWindow zeros(int length) { return MotionWindow(Mat::Zero(length, layout::kMotionDim)); }

  int length() const { return static_cast<int>(frames_.rows()); }
  const Mat& matrix() const { return frames_; }
  Mat& matrix() { return frames_; }
  MotionFrame frame(int i) const { return MotionFrame::from_row(frames_.row(i)); }
  double frame_rate() const { return layout::kFrameRate; }

 private:
  Mat frames_;
};

enum class LSState : std::int8_t { kListening = -1, kSpeaking = 1 };
using LSStateSequence = std::vector<LSState>;

inline double state_value(LSState s) { return static_cast<double>(static_cast<int>(s)); }

inline LSStateSequence constant_states(int n, LSState s) { return LSStateSequence(static_cast<std::size_t>(n), s); }

struct AvatarIdentity {
  Eigen::VectorXd shape = Eigen::VectorXd::Zero(layout::kShapeDim);
  MotionFrame reference;
};

struct MagnitudePair {
  double rot_mag = 0.0;
  double trans_mag = 0.0;
};

/// Min-max bounds mapping raw magnitudes into [0, 1].
struct NormalizationSpec {
  double rot_min = 0.0;
  double rot_max = 2.0;
  double trans_min = 0.0;
  double trans_max = 4.0;

  MagnitudePair normalize(const MagnitudePair& raw) const {
    auto n = [](double v, double lo, double hi) {
      if (hi <= lo) return 0.0;
      return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    };
    return {n(raw.rot_mag, rot_min, rot_max), n(raw.trans_mag, trans_min, trans_max)};
  }

  MagnitudePair denormalize(const MagnitudePair& m) const {
    return {rot_min + m.rot_mag * (rot_max - rot_min), trans_min + m.trans_mag * (trans_max - trans_min)};
  }
};

/// Bounds fitted to a dataset: lower bound 0, upper bound at the given
/// percentile (linear interpolation between order statistics).
inline NormalizationSpec fit_normalization(std::span<const MagnitudePair> raw, double percentile = 99.0) {
  if (raw.empty()) return {};
  auto pct = [percentile](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double pos = percentile / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  std::vector<double> r, t;
  for (const auto& m : raw) {
    r.push_back(m.rot_mag);
    t.push_back(m.trans_mag);
  }
  NormalizationSpec spec;
  spec.rot_max = pct(r);
  spec.trans_max = pct(t);
  return spec;
}

// ---------------------------------------------------------------------------
// Rotations

inline Eigen::Quaterniond axis_angle_to_quaternion(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  if (angle < 1e-300) return Eigen::Quaterniond::Identity();
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, r / angle));
}

/// SO(3) geodesic distance between two axis-angle rotations, in [0, pi].
inline double geodesic_angle(const Eigen::Vector3d& r1, const Eigen::Vector3d& r2) {
  if (!r1.allFinite() || !r2.allFinite()) throw InvalidArgument("geodesic_angle: non-finite input");
  const Eigen::Quaterniond q1 = axis_angle_to_quaternion(r1);
  const Eigen::Quaterniond q2 = axis_angle_to_quaternion(r2);
  return q1.angularDistance(q2);
}

struct MagnitudeResult {
  MagnitudePair raw;
  MagnitudePair normalized;
};

/// Mean successive-frame rotational geodesic angle and translation step
/// length over a window, raw and normalized.
inline MagnitudeResult compute_magnitude(const Mat& window, const NormalizationSpec& norm = {}) {
  if (window.rows() < 2) throw InvalidArgument("compute_magnitude: window needs at least 2 frames");
  if (window.cols() != layout::kMotionDim) throw InvalidArgument("compute_magnitude: expected 115 columns");
  double rot = 0.0, trans = 0.0;
  for (Eigen::Index i = 0; i + 1 < window.rows(); ++i) {
    const Eigen::Vector3d a = window.row(i).segment<3>(layout::kRotation).transpose();
    const Eigen::Vector3d b = window.row(i + 1).segment<3>(layout::kRotation).transpose();
    rot += geodesic_angle(a, b);
    trans += (window.row(i + 1).segment<3>(layout::kTranslation) - window.row(i).segment<3>(layout::kTranslation)).norm();
  }
  const double steps = static_cast<double>(window.rows() - 1);
  MagnitudeResult out;
  out.raw = {rot / steps, trans / steps};
  out.normalized = norm.normalize(out.raw);
  return out;
}

inline MagnitudeResult compute_magnitude(const MotionWindow& window, const NormalizationSpec& norm = {}) {
  return compute_magnitude(window.matrix(), norm);
}

}  // namespace headflow

#endif  // HEADFLOW_MOTION_HPP
