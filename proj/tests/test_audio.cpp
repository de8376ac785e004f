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

#include <cmath>
#include <filesystem>

#include "headflow/audio.hpp"

using namespace headflow;

namespace {

LayeredFeatures random_features(int frames, int dim, int layers, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n;
  LayeredFeatures f;
  for (int l = 0; l < layers; ++l) {
    Mat m(frames, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    f.layers.push_back(m);
  }
  return f;
}

// independent triangle weight for a frequency in band b
double triangle(double f, int b) {
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  const double top = mel(8000.0);
  auto edge = [&](int i) { return 700.0 * (std::pow(10.0, top * i / 25.0 / 2595.0) - 1.0); };
  const double lo = edge(b), mid = edge(b + 1), hi = edge(b + 2);
  if (f > lo && f < mid) return (f - lo) / (mid - lo);
  if (f >= mid && f < hi) return (hi - f) / (hi - mid);
  return 0.0;
}

}  // namespace

TEST(Features, FrameCountAndShape) {
  const LayeredFeatures f = extract_features(synth::noise(2000, 1));
  EXPECT_EQ(f.frames(), 100);
  EXPECT_EQ(f.feat_dim(), kFeatureBands);
  ASSERT_EQ(f.layers.size(), 3u);
  for (const auto& l : f.layers) EXPECT_TRUE(l.allFinite());
  EXPECT_EQ(extract_features(synth::noise(1000, 1)).frames(), 50);
}

TEST(Features, SilenceHitsLogFloor) {
  const LayeredFeatures f = extract_features(synth::silence(400));
  const double floor = std::log(kLogFloor);
  EXPECT_TRUE((f.layers[0].array() == floor).all());
  EXPECT_TRUE((f.layers[1].array() == 0.0).all());
  for (int r = 0; r < 8; ++r) {
    EXPECT_EQ(f.layers[2](3, 3 * r), floor);
    EXPECT_EQ(f.layers[2](3, 3 * r + 1), 0.0);
    EXPECT_EQ(f.layers[2](3, 3 * r + 2), 0.0);
  }
}

TEST(Features, ToneLandsInItsBand) {
  for (double hz : {440.0, 1000.0, 3000.0}) {
    const LayeredFeatures f = extract_features(synth::tone(hz, 500));
    Eigen::Index arg;
    f.layers[0].row(10).maxCoeff(&arg);
    int best = 0;
    for (int b = 1; b < kFeatureBands; ++b) {
      if (triangle(hz, b) > triangle(hz, best)) best = b;
    }
    // spectral leakage may favour the neighbour when the tone sits near a crossover
    EXPECT_LE(std::abs(static_cast<int>(arg) - best), 1) << hz;
    EXPECT_GT(triangle(hz, static_cast<int>(arg)), 0.0) << hz;
  }
}

TEST(Features, FilterbankMatchesTriangles) {
  const Mat w = filterbank_weights();
  ASSERT_EQ(w.rows(), 24);
  ASSERT_EQ(w.cols(), 321);
  for (int b = 0; b < 24; ++b) {
    for (int k = 0; k < 321; ++k) EXPECT_NEAR(w(b, k), triangle(k * 25.0, b), 1e-9);
  }
  EXPECT_TRUE((w.array() >= 0.0).all());
}

TEST(Features, DeltaLayerIsDifference) {
  const LayeredFeatures f = extract_features(synth::noise(600, 4));
  EXPECT_TRUE((f.layers[1].row(0).array() == 0.0).all());
  for (int i = 1; i < f.frames(); ++i) EXPECT_EQ(f.layers[1].row(i), f.layers[0].row(i) - f.layers[0].row(i - 1));
}

TEST(Features, ShiftByOneHopShiftsFrames) {
  const AudioBuffer a = synth::noise(1000, 9);
  AudioBuffer b;
  b.samples.assign(a.samples.begin() + kFeatureHop, a.samples.end());
  const LayeredFeatures fa = extract_features(a), fb = extract_features(b);
  ASSERT_EQ(fb.frames(), fa.frames() - 1);
  // interior frames only, the last window of each runs into zero padding
  for (int i = 0; i + 2 < fb.frames(); ++i) {
    EXPECT_LT((fb.layers[0].row(i) - fa.layers[0].row(i + 1)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((fb.layers[2].row(i) - fa.layers[2].row(i + 1)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Features, Errors) {
  EXPECT_THROW(extract_features(AudioBuffer{}), InvalidArgument);
  AudioBuffer wrong = synth::noise(100, 1);
  wrong.sample_rate = 44100;
  EXPECT_THROW(extract_features(wrong), InvalidArgument);
  AudioBuffer tiny;
  tiny.samples.assign(100, 0.1f);
  EXPECT_THROW(extract_features(tiny), InvalidArgument);
}

TEST(Features, SliceFrames) {
  const LayeredFeatures f = random_features(20, 4, 3, 1);
  const LayeredFeatures s = slice_frames(f, 5, 6);
  EXPECT_EQ(s.frames(), 6);
  EXPECT_EQ(s.layers[2], f.layers[2].middleRows(5, 6));
}

TEST(Fuse, SingletonAndIdentical) {
  const LayeredFeatures one = random_features(8, 5, 1, 2);
  EXPECT_EQ(fuse_layers(one, Eigen::RowVectorXd::Constant(1, 3.7)), one.layers[0]);
  LayeredFeatures same = one;
  same.layers.push_back(one.layers[0]);
  same.layers.push_back(one.layers[0]);
  Eigen::RowVectorXd logits(3);
  logits << -2.0, 0.5, 4.0;
  EXPECT_LT((fuse_layers(same, logits) - one.layers[0]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fuse, SaturatedLogitSelectsLayer) {
  const LayeredFeatures f = random_features(8, 5, 3, 3);
  Eigen::RowVectorXd logits(3);
  logits << 0.0, 800.0, 0.0;
  EXPECT_LT((fuse_layers(f, logits) - f.layers[1]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fuse, ConvexHull) {
  std::mt19937 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const LayeredFeatures f = random_features(6, 4, 3, 100 + trial);
    Eigen::RowVectorXd logits(3);
    logits << n(rng), n(rng), n(rng);
    const Mat out = fuse_layers(f, logits);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      double lo = 1e300, hi = -1e300;
      for (const auto& l : f.layers) {
        lo = std::min(lo, l.data()[i]);
        hi = std::max(hi, l.data()[i]);
      }
      EXPECT_GE(out.data()[i], lo - 1e-12);
      EXPECT_LE(out.data()[i], hi + 1e-12);
    }
  }
}

TEST(Fuse, LogitCountMismatch) {
  EXPECT_THROW(fuse_layers(random_features(4, 2, 3, 1), Eigen::RowVectorXd::Zero(2)), InvalidArgument);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Eigen::RowVectorXd l(4);
  l << 1.0, -3.0, 0.2, 7.0;
  const Eigen::RowVectorXd p = softmax(l);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_LT((softmax((l.array() + 100.0).matrix()) - p).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Align, HalvesTheRate) {
  const Mat fused = random_features(200, 24, 1, 5).layers[0];
  const Mat w = Mat::Random(5 * 24, 16);
  const Mat out = align_to_motion_rate(fused, w, Eigen::RowVectorXd::Zero(16), 100);
  EXPECT_EQ(out.rows(), 100);
  EXPECT_EQ(out.cols(), 16);
  EXPECT_THROW(align_to_motion_rate(fused, w, Eigen::RowVectorXd::Zero(16), 99), InvalidArgument);
}

TEST(Align, ZeroWeightsGiveBias) {
  const Mat fused = random_features(20, 6, 1, 6).layers[0];
  Eigen::RowVectorXd bias(3);
  bias << 1.0, -2.0, 0.5;
  const Mat out = align_to_motion_rate(fused, Mat::Zero(30, 3), bias, 10, false);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(out.row(i), bias);
}

TEST(Align, CentreTapPicksEvenFrames) {
  const int c = 6;
  const Mat fused = random_features(20, c, 1, 7).layers[0];
  Mat w = Mat::Zero(5 * c, c);
  w.middleRows(2 * c, c).setIdentity();
  const Mat out = align_to_motion_rate(fused, w, Eigen::RowVectorXd::Zero(c), 10, false);
  for (int j = 0; j < 10; ++j) EXPECT_LT((out.row(j) - fused.row(2 * j)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Align, EdgeTapsSeeZeroPadding) {
  const int c = 2;
  const Mat fused = random_features(8, c, 1, 8).layers[0];
  Mat w = Mat::Zero(5 * c, c);
  w.topRows(c).setIdentity();  // tap 0 reads frame 2j - 2
  const Mat out = align_to_motion_rate(fused, w, Eigen::RowVectorXd::Zero(c), 4, false);
  EXPECT_EQ(out.row(0).cwiseAbs().maxCoeff(), 0.0);
  for (int j = 1; j < 4; ++j) EXPECT_LT((out.row(j) - fused.row(2 * j - 2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Align, NormalizedRows) {
  const Mat fused = random_features(40, 8, 1, 9).layers[0];
  const Mat out = align_to_motion_rate(fused, Mat::Random(40, 12), Eigen::RowVectorXd::Random(12), 20);
  for (int i = 0; i < 20; ++i) {
    const double mean = out.row(i).mean();
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR((out.row(i).array() - mean).square().mean(), 1.0, 1e-3);
  }
}

TEST(Waveform, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "headflow_test_audio";
  std::filesystem::create_directories(dir);
  const AudioBuffer a = synth::tone(300, 100, 0.8);
  write_waveform((dir / "a.pcmd").string(), a);
  const AudioBuffer back = read_waveform((dir / "a.pcmd").string());
  EXPECT_EQ(back.samples, a.samples);
  EXPECT_EQ(back.sample_rate, kSampleRate);

  write_waveform((dir / "a.pcmi").string(), a, SampleFormat::kPcm16);
  const AudioBuffer q = read_waveform((dir / "a.pcmi").string());
  ASSERT_EQ(q.samples.size(), a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_NEAR(q.samples[i], a.samples[i], 1.0 / 32767.0);

  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "RIFFxxxxxxxxxxxx";
  }
  EXPECT_THROW(read_waveform((dir / "bad.bin").string()), ConfigError);
  EXPECT_THROW(read_waveform((dir / "missing.bin").string()), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Synth, Durations) {
  EXPECT_EQ(synth::tone(440, 1000).size(), 16000u);
  EXPECT_EQ(synth::silence(40).size(), 640u);
  EXPECT_DOUBLE_EQ(synth::noise(250, 1).duration_ms(), 250.0);
  EXPECT_EQ(synth::noise(100, 3).samples, synth::noise(100, 3).samples);
}
