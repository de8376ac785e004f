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

// Synthetic linear blendshape head used wherever vertex or landmark geometry
// is needed (lip/upper-face metrics, the differentiable splat renderer).
//
// Vertex map (V = 128):
//   0-7     inner lip ring     (landmarks 60-67, 62 = upper centre, 66 = lower centre)
//   8-15    outer lip ring     (landmarks 48-55)
//   16-19   perioral           (landmarks 56-59)
//   20-63   cheeks, scattered
//   64-73   brows              (landmarks 17-26)
//   74-85   eyes               (landmarks 36-47)
//   86-95   forehead
//   96-104  nose               (landmarks 27-35)
//   105-121 jaw line           (landmarks 0-16)
//   122-127 scattered
// Lip region = 0-15, upper region = 64-95.
//
// Expression and jaw bases are seeded Gaussians (std 0.01). The jaw basis
// additionally carries a linearized rotation of the lower face about a
// pivot behind the mouth so that jaw pitch opens the mouth.

#ifndef HEADFLOW_BLENDSHAPE_HPP
#define HEADFLOW_BLENDSHAPE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "headflow/motion.hpp"

namespace headflow {

struct BlendshapeModel {
  Mat template_vertices;   // V x 3
  Mat expression_basis;    // 3V x 100, row 3*v + axis
  Mat jaw_basis;           // 3V x 3
  std::vector<int> lip_region;
  std::vector<int> upper_region;
  std::array<int, 68> landmark_indices{};

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }

  /// Synthetic head with the fixed layout documented above.
  static BlendshapeModel synthetic(std::uint64_t seed = 7);
};

namespace detail {

inline void place_arc(Mat& tv, int first, int count, double cx, double cy, double rx, double ry,
                      double a0_deg, double a1_deg) {
  for (int i = 0; i < count; ++i) {
    const double a = (a0_deg + (a1_deg - a0_deg) * i / std::max(1, count - 1)) * std::numbers::pi / 180.0;
    tv(first + i, 0) = cx + rx * std::cos(a);
    tv(first + i, 1) = cy + ry * std::sin(a);
  }
}

}  // namespace detail

inline BlendshapeModel BlendshapeModel::synthetic(std::uint64_t seed) {
  constexpr int V = 128;
  BlendshapeModel m;
  Mat tv = Mat::Zero(V, 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.8, 0.8), uy(-0.9, 0.6);

  // Inner lip ring: corner, upper-left, upper centre, upper-right, corner,
  // lower-right, lower centre, lower-left (landmark order 60-67).
  const std::array<double, 8> inner_deg{180, 135, 90, 45, 0, -45, -90, -135};
  for (int i = 0; i < 8; ++i) {
    const double a = inner_deg[static_cast<std::size_t>(i)] * std::numbers::pi / 180.0;
    tv(i, 0) = 0.25 * std::cos(a);
    tv(i, 1) = -0.55 + 0.06 * std::sin(a);
  }
  // Outer lip (landmarks 48-59) spans vertices 8-19.
  detail::place_arc(tv, 8, 12, 0.0, -0.55, 0.35, 0.15, 180.0, -150.0);
  for (int v = 20; v < 64; ++v) {
    tv(v, 0) = ux(rng);
    tv(v, 1) = uy(rng);
  }
  detail::place_arc(tv, 64, 5, -0.35, 0.50, 0.22, 0.06, 160.0, 20.0);  // brows
  detail::place_arc(tv, 69, 5, 0.35, 0.50, 0.22, 0.06, 160.0, 20.0);
  detail::place_arc(tv, 74, 6, -0.35, 0.30, 0.12, 0.05, 180.0, -120.0);  // eyes
  detail::place_arc(tv, 80, 6, 0.35, 0.30, 0.12, 0.05, 180.0, -120.0);
  for (int i = 0; i < 10; ++i) {  // forehead grid
    tv(86 + i, 0) = -0.6 + 0.3 * (i % 5);
    tv(86 + i, 1) = 0.75 + 0.12 * (i / 5);
  }
  for (int i = 0; i < 4; ++i) {  // nose bridge
    tv(96 + i, 0) = 0.0;
    tv(96 + i, 1) = 0.30 - 0.13 * i;
  }
  detail::place_arc(tv, 100, 5, 0.0, -0.15, 0.15, 0.05, 200.0, 340.0);  // nostrils
  detail::place_arc(tv, 105, 17, 0.0, 0.25, 0.9, 1.25, 180.0, 360.0);   // jaw line
  for (int v = 122; v < V; ++v) {
    tv(v, 0) = ux(rng);
    tv(v, 1) = uy(rng);
  }
  for (int v = 0; v < V; ++v) {
    const double x = tv(v, 0), y = tv(v, 1);
    tv(v, 2) = 0.4 - 0.25 * (x * x + y * y);
  }
  m.template_vertices = tv;

  std::normal_distribution<double> gauss(0.0, 0.01);
  m.expression_basis = Mat(3 * V, layout::kExpressionDim);
  for (Eigen::Index i = 0; i < m.expression_basis.size(); ++i) m.expression_basis.data()[i] = gauss(rng);
  m.jaw_basis = Mat(3 * V, layout::kJawDim);
  for (Eigen::Index i = 0; i < m.jaw_basis.size(); ++i) m.jaw_basis.data()[i] = gauss(rng);

  // Lower-face weight for the linearized jaw rotation about a pivot behind
  // the mouth: full below the lip line, zero on the upper lip.
  const Eigen::Vector3d pivot(0.0, -0.35, -0.6);
  for (int v = 0; v < V; ++v) {
    const double y = tv(v, 1);
    double w = 0.0;
    if (y < -0.56) w = 1.0;
    else if (y < -0.54) w = 0.5;
    if (v >= 64 && v < 105) w = 0.0;
    if (v == 2) w = 0.0;
    if (v == 6) w = 1.0;
    if (w == 0.0) continue;
    const Eigen::Vector3d d = tv.row(v).transpose() - pivot;
    for (int axis = 0; axis < 3; ++axis) {
      const Eigen::Vector3d omega = Eigen::Vector3d::Unit(axis);
      const Eigen::Vector3d disp = w * omega.cross(d);
      for (int c = 0; c < 3; ++c) m.jaw_basis(3 * v + c, axis) += disp(c);
    }
  }

  for (int v = 0; v < 16; ++v) m.lip_region.push_back(v);
  for (int v = 64; v < 96; ++v) m.upper_region.push_back(v);

  auto& lm = m.landmark_indices;
  for (int i = 0; i < 17; ++i) lm[static_cast<std::size_t>(i)] = 105 + i;
  for (int i = 0; i < 10; ++i) lm[static_cast<std::size_t>(17 + i)] = 64 + i;
  for (int i = 0; i < 9; ++i) lm[static_cast<std::size_t>(27 + i)] = 96 + i;
  for (int i = 0; i < 12; ++i) lm[static_cast<std::size_t>(36 + i)] = 74 + i;
  for (int i = 0; i < 12; ++i) lm[static_cast<std::size_t>(48 + i)] = 8 + i;
  for (int i = 0; i < 8; ++i) lm[static_cast<std::size_t>(60 + i)] = i;
  return m;
}

/// Vertices of one frame, V x 3: template + expression and jaw blendshapes.
/// Global rotation and translation are not applied.
inline Mat coefficients_to_vertices(const Eigen::Ref<const Eigen::RowVectorXd>& frame, const BlendshapeModel& model) {
  if (frame.size() != layout::kMotionDim) throw InvalidArgument("coefficients_to_vertices: expected 115 coefficients");
  const Eigen::Index V = model.template_vertices.rows();
  if (model.expression_basis.rows() != 3 * V || model.expression_basis.cols() != layout::kExpressionDim ||
      model.jaw_basis.rows() != 3 * V || model.jaw_basis.cols() != layout::kJawDim) {
    throw InvalidArgument("coefficients_to_vertices: basis dimensions do not match the template");
  }
  Eigen::VectorXd flat = model.expression_basis * frame.segment(layout::kExpression, layout::kExpressionDim).transpose() +
                         model.jaw_basis * frame.segment(layout::kJaw, layout::kJawDim).transpose();
  Mat out = model.template_vertices;
  out += Eigen::Map<const Mat>(flat.data(), V, 3);
  return out;
}

inline Mat coefficients_to_vertices(const MotionFrame& frame, const BlendshapeModel& model) {
  return coefficients_to_vertices(frame.to_row(), model);
}

/// 68 x 3 landmark positions of one frame.
inline Mat landmarks(const Mat& vertices, const BlendshapeModel& model) {
  Mat out(68, 3);
  for (int i = 0; i < 68; ++i) out.row(i) = vertices.row(model.landmark_indices[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace headflow

#endif  // HEADFLOW_BLENDSHAPE_HPP
