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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "headflow/flow.hpp"
#include "headflow/metrics.hpp"
#include "oracles.hpp"

using namespace headflow;

namespace {

// synthetic head whose only moving basis column shifts one vertex along `axis`
BlendshapeModel single_vertex_model(int vertex, int axis, double amount) {
  BlendshapeModel m = BlendshapeModel::synthetic();
  m.expression_basis.setZero();
  m.jaw_basis.setZero();
  m.expression_basis(3 * vertex + axis, 0) = amount;
  return m;
}

Mat random_window(int T, std::uint64_t seed) { return gaussian_noise(T, layout::kMotionDim, seed) * 0.5; }

}  // namespace

TEST(Lve, IdentityAndSingleDisplacement) {
  const auto model = BlendshapeModel::synthetic();
  const Mat w = random_window(12, 1);
  EXPECT_EQ(lve(w, w, model), 0.0);

  const auto one = single_vertex_model(3, 0, 1.0);
  const int T = 8;
  const double d = 0.37;
  Mat pred = Mat::Zero(T, layout::kMotionDim), gt = pred;
  pred(5, layout::kExpression) = d;
  EXPECT_NEAR(lve(pred, gt, one), d / T, 1e-15);
}

TEST(Lve, MatchesLoopOracleAndIgnoresPose) {
  const auto model = BlendshapeModel::synthetic();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Mat p = random_window(10, 10 + s), g = random_window(10, 20 + s);
    EXPECT_NEAR(lve(p, g, model), oracle::lve(p, g, model), 1e-12);
    Mat q = p;
    q.middleCols(layout::kRotation, 6) = gaussian_noise(10, 6, 30 + s);
    EXPECT_EQ(lve(q, g, model), lve(p, g, model));
  }
  EXPECT_THROW(lve(Mat::Zero(3, 115), Mat::Zero(4, 115), model), InvalidArgument);
  EXPECT_THROW(lve(Mat::Zero(0, 115), Mat::Zero(0, 115), model), InvalidArgument);
}

TEST(Fdd, IdentityStaticOffsetsAndOracle) {
  const auto model = BlendshapeModel::synthetic();
  const Mat w = random_window(9, 2);
  EXPECT_EQ(fdd(w, w, model), 0.0);

  const Mat a = Mat::Ones(9, 1) * random_window(1, 3), b = Mat::Ones(9, 1) * random_window(1, 4);
  EXPECT_EQ(fdd(a, b, model), 0.0);

  for (std::uint64_t s = 0; s < 5; ++s) {
    const Mat p = random_window(7, 40 + s), g = random_window(7, 50 + s);
    EXPECT_NEAR(fdd(p, g, model), oracle::fdd(p, g, model), 1e-12);
  }
  EXPECT_THROW(fdd(Mat::Zero(1, 115), Mat::Zero(1, 115), model), InvalidArgument);
}

TEST(Fdd, PopulationStd) {
  // one upper vertex alternating between 0 and 1 along x: population std 0.5
  const int v = 70;
  const auto m = single_vertex_model(v, 0, 1.0);
  Mat p = Mat::Zero(4, layout::kMotionDim);
  p(1, layout::kExpression) = p(3, layout::kExpression) = 1.0;
  const auto sigma = upper_face_dynamics(p, m);
  ASSERT_EQ(sigma.size(), m.upper_region.size());
  EXPECT_NEAR(sigma[static_cast<std::size_t>(v - 64)], 0.5, 1e-15);
  EXPECT_NEAR(fdd(p, Mat::Zero(4, layout::kMotionDim), m), 0.5 / 32.0, 1e-15);
}

TEST(Mod, ConstantWiderOpening) {
  const auto model = BlendshapeModel::synthetic();
  const Mat w = random_window(6, 5);
  EXPECT_EQ(mod(w, w, model), 0.0);

  // landmark 66 (lower inner lip) moves directly away from 62
  BlendshapeModel m = single_vertex_model(0, 0, 0.0);
  const int lo = model.landmark_indices[66], up = model.landmark_indices[62];
  const Eigen::RowVector3d dir = (m.template_vertices.row(lo) - m.template_vertices.row(up)).normalized();
  for (int axis = 0; axis < 3; ++axis) m.expression_basis(3 * lo + axis, 0) = dir(axis);
  Mat pred = Mat::Zero(6, layout::kMotionDim), gt = pred;
  pred.col(layout::kExpression).setConstant(0.3);
  EXPECT_NEAR(mod(pred, gt, m), 0.3, 1e-12);

  for (std::uint64_t s = 0; s < 5; ++s) {
    const Mat p = random_window(6, 60 + s), g = random_window(6, 70 + s);
    EXPECT_NEAR(mod(p, g, model), oracle::mod(p, g, model), 1e-12);
  }
}

TEST(Beats, KernelArithmetic) {
  const std::vector<double> a{0.2, 0.9, 1.7};
  EXPECT_EQ(beat_alignment_score(a, a, 0.1), 1.0);
  std::vector<double> b = a;
  for (double& x : b) x += 0.3;
  EXPECT_NEAR(beat_alignment_score(a, b, 0.1), std::exp(-4.5), 1e-12);
  EXPECT_EQ(beat_alignment_score({}, a, 0.1), 0.0);
}

TEST(Beats, SymmetricBoundedAndMatchesOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 4.0), j(-0.15, 0.15);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p, g;
    for (int i = 0; i < 1 + trial % 7; ++i) p.push_back(u(rng));
    for (double x : p) g.push_back(x + j(rng));
    if (trial % 3 == 0) g.push_back(u(rng));
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    const double s = beat_alignment_score(p, g, 0.1);
    EXPECT_NEAR(s, oracle::ba_score(p, g, 0.1), 1e-12);
    EXPECT_EQ(s, beat_alignment_score(g, p, 0.1));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Beats, DetectionMatchesOracle) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Mat rot = gaussian_noise(60, 3, 90 + s).array() * 0.05;
    for (int t = 1; t < 60; ++t) rot.row(t) += rot.row(t - 1) * 0.8;
    EXPECT_EQ(detect_beats(rot), oracle::beats(rot)) << s;
  }
}

TEST(Beats, SinglePeakTimestampAndThinning) {
  // rotation about x that jumps between frames 10 and 11 and again 2 frames later
  Mat rot = Mat::Zero(30, 3);
  for (int t = 11; t < 30; ++t) rot(t, 0) = 0.2;
  for (int t = 13; t < 30; ++t) rot(t, 0) = 0.3;
  const auto beats = detect_beats(rot);
  ASSERT_EQ(beats.size(), 1u);  // the smaller peak is within 4 samples of the taller
  EXPECT_DOUBLE_EQ(beats[0], 10.5 / 25.0);
}

TEST(Beats, DegenerateWhenStill) {
  const Mat still = Mat::Zero(40, 3);
  Mat moving = still;
  for (int t = 0; t < 40; ++t) moving(t, 1) = 0.3 * std::sin(0.7 * t);
  const auto r = beat_alignment(still, moving);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.score, 0.0);
  const auto self = beat_alignment(moving, moving);
  EXPECT_FALSE(self.degenerate);
  EXPECT_EQ(self.score, 1.0);
  EXPECT_THROW(detect_beats(Mat::Zero(10, 4)), InvalidArgument);
  EXPECT_THROW(beat_alignment(Mat::Zero(0, 3), moving), InvalidArgument);
}

TEST(Entropy, DegenerateAndUniform) {
  EXPECT_EQ(assignment_entropy({0, 12, 0}), -std::log2(1.0 + kEntropyEps));
  EXPECT_NEAR(assignment_entropy(std::vector<std::size_t>(8, 5)), 3.0, 1e-6);
  EXPECT_THROW(assignment_entropy({0, 0}), InvalidArgument);
}

TEST(Entropy, MatchesOracleOnRandomAssignments) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const int K = 2 + trial % 9;
    std::uniform_int_distribution<int> pick(0, K - 1);
    std::vector<int> assign(static_cast<std::size_t>(5 + trial * 3));
    std::vector<std::size_t> hist(static_cast<std::size_t>(K), 0);
    for (int& a : assign) ++hist[static_cast<std::size_t>(a = pick(rng))];
    EXPECT_NEAR(assignment_entropy(hist), oracle::entropy_of_assignments(assign, K), 1e-12);
  }
}

TEST(Entropy, MergingDisjointHistogramsAddsOneBit) {
  // equal totals on disjoint clusters: H(merge) = 1 + (H1 + H2) / 2, up to eps
  const std::vector<std::size_t> a{4, 4, 0, 0, 0}, b{0, 0, 1, 2, 5};
  std::vector<std::size_t> m(5);
  for (std::size_t i = 0; i < 5; ++i) m[i] = a[i] + b[i];
  const double ha = assignment_entropy(a), hb = assignment_entropy(b), hm = assignment_entropy(m);
  EXPECT_NEAR(hm, 1.0 + 0.5 * (ha + hb), 1e-6);
  EXPECT_GE(hm, std::min(ha, hb));
}

TEST(Sid, MatchesOracleAndIsPermutationInvariant) {
  const Mat gt = random_window(60, 11), gen = random_window(40, 12);
  const double s = sid(gen, gt, 10, 3);
  EXPECT_NEAR(s, oracle::sid(gen, gt, 10, 3), 1e-12);
  EXPECT_GE(s, 0.0);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(40);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 40, std::mt19937_64(4));
  EXPECT_EQ(sid(Mat(perm * gen), gt, 10, 3), s);
}

TEST(Sid, CollapsedGenerationHasNoDiversity) {
  const Mat gt = random_window(50, 13);
  const Mat gen = Mat::Ones(20, 1) * gt.row(7);
  EXPECT_NEAR(sid(gen, gt, 10, 0), -std::log2(1.0 + kEntropyEps), 1e-15);
  EXPECT_THROW(sid(gen, Mat::Zero(0, 115), 10, 0), InvalidArgument);
  EXPECT_THROW(sid(gen, gt, 51, 0), InvalidArgument);
  EXPECT_THROW(KMeans(0), InvalidArgument);
}

TEST(KMeans, SeparatesObviousClusters) {
  Mat x(40, 2);
  const Mat noise = gaussian_noise(40, 2, 14) * 0.01;
  for (int i = 0; i < 40; ++i) x.row(i) << (i % 4) * 10.0, (i % 4 == 3 ? 5.0 : 0.0);
  x += noise;
  KMeans km(4, 2);
  km.fit(x);
  const auto h = km.histogram(x);
  EXPECT_EQ(h, std::vector<std::size_t>(4, 10));
  EXPECT_LT((km.centroids() - oracle::kmeans(x, 4, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Psnr, CapHalfGrayAndMonotone) {
  const Mat a = Mat::Zero(64, 64);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(a, Mat::Constant(64, 64, 0.5)), 20.0 * std::log10(2.0), 1e-12);
  const Mat base = Mat::Constant(64, 64, 0.5);
  const Mat u = Mat::Random(64, 64);
  double prev = kPsnrCap + 1.0;
  for (double amp : {0.01, 0.03, 0.1, 0.2, 0.4}) {
    const double p = psnr(base, Mat(base + amp * u));
    EXPECT_LT(p, prev) << amp;
    prev = p;
  }
  EXPECT_THROW(psnr(a, Mat::Zero(64, 63)), InvalidArgument);
}

TEST(Ssim, SelfIsOneAndMatchesOracle) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat a(32, 32), b(32, 32);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = u(rng);
    b.data()[i] = std::clamp(a.data()[i] + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
  }
  EXPECT_EQ(ssim(a, a), 1.0);
  const double s = ssim(a, b);
  EXPECT_NEAR(s, oracle::ssim(a, b), 1e-9);
  EXPECT_GE(s, -1.0);
  EXPECT_LT(s, 1.0);
  EXPECT_NEAR(ssim(a, Mat(1.0 - a.array())), oracle::ssim(a, Mat(1.0 - a.array())), 1e-9);
  EXPECT_THROW(ssim(Mat::Zero(10, 10), Mat::Zero(10, 10)), InvalidArgument);
}

TEST(Evaluate, FillsOptionalFields) {
  const auto model = BlendshapeModel::synthetic();
  const Mat g = random_window(12, 16), p = random_window(12, 17);
  const MetricReport r = evaluate(p, g, model);
  EXPECT_NEAR(r.lve, oracle::lve(p, g, model), 1e-12);
  EXPECT_TRUE(r.sid.has_value());
  EXPECT_FALSE(r.psnr.has_value());
  EXPECT_GE(r.ba, 0.0);
  EXPECT_LE(r.ba, 1.0);
  const nlohmann::json j = r;
  EXPECT_TRUE(j.at("psnr").is_null());

  const Mat img = Mat::Constant(12, 4096, 0.25);
  const MetricReport withimg = evaluate(p, g, model, {}, &img, &img);
  EXPECT_EQ(*withimg.psnr, kPsnrCap);
  EXPECT_EQ(*withimg.ssim, 1.0);

  const MetricReport shortw = evaluate(p.topRows(5), g.topRows(5), model);
  EXPECT_FALSE(shortw.sid.has_value());
}
