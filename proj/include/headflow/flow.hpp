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

// Straight-path flow: interpolation, uniform Euler sampling and the
// single-step endpoint estimate.

#ifndef HEADFLOW_FLOW_HPP
#define HEADFLOW_FLOW_HPP

#include <cstdint>
#include <random>

#include "headflow/autograd.hpp"
#include "headflow/errors.hpp"

namespace headflow {

struct FlowSample {
  Mat x0;
  Mat x1;
  double t = 0.0;
  Mat xt;
  Mat target_velocity;
};

/// xt = x0 + t (x1 - x0), target velocity x1 - x0. The endpoint t = 1 is
/// x1 itself rather than its rounded reconstruction.
inline FlowSample interpolate(const Mat& x0, const Mat& x1, double t) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) throw InvalidArgument("interpolate: shape mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("interpolate: t outside [0, 1]");
  FlowSample s;
  s.x0 = x0;
  s.x1 = x1;
  s.t = t;
  s.target_velocity = x1 - x0;
  s.xt = t == 1.0 ? x1 : Mat(x0 + t * s.target_velocity);
  return s;
}

/// Integrates dx/dt = field(x, t, cond) from t = 0 to 1 with `steps`
/// left-endpoint Euler updates. `field` must be reentrant.
template <class S, class Field, class Cond>
Matrix<S> euler_integrate(Field&& field, const Matrix<S>& x0, const Cond& cond, int steps) {
  if (steps < 1) throw InvalidArgument("euler_integrate: steps must be >= 1");
  Matrix<S> x = x0;
  const S dt = S(1) / static_cast<S>(steps);
  for (int k = 0; k < steps; ++k) {
    const S t = static_cast<S>(k) / static_cast<S>(steps);
    const Matrix<S> v = field(x, t, cond);
    if (v.rows() != x.rows() || v.cols() != x.cols()) throw InvalidArgument("euler_integrate: field changed shape");
    if (!v.allFinite()) throw NumericFailure("euler_integrate: non-finite velocity", k);
    x += dt * v;
  }
  return x;
}

/// x1 estimate from a single Euler update: xt + (1 - t) v.
template <class S>
Matrix<S> one_step_endpoint(const Matrix<S>& xt, S t, const Matrix<S>& velocity) {
  if (!(t >= S(0) && t <= S(1))) throw InvalidArgument("one_step_endpoint: t outside [0, 1]");
  if (xt.rows() != velocity.rows() || xt.cols() != velocity.cols()) {
    throw InvalidArgument("one_step_endpoint: shape mismatch");
  }
  if (t == S(1)) return xt;
  if (!velocity.allFinite()) throw NumericFailure("one_step_endpoint: non-finite velocity", 0);
  return xt + (S(1) - t) * velocity;
}

/// Differentiable form used by the image-domain loss.
template <class S>
ag::Var<S> one_step_endpoint(ag::Var<S> xt, S t, ag::Var<S> velocity) {
  if (!(t >= S(0) && t <= S(1))) throw InvalidArgument("one_step_endpoint: t outside [0, 1]");
  return ag::add(xt, ag::scale(velocity, S(1) - t));
}

/// Standard normal rows x cols matrix from a seeded generator.
inline Mat gaussian_noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = n(rng);
  return out;
}

template <class Rng>
Mat gaussian_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = n(rng);
  return out;
}

}  // namespace headflow

#endif  // HEADFLOW_FLOW_HPP
