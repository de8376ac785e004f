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

// Synthetic tone-to-motion task for desk-scale training.
//
// Each clip spans L + T frames. Two smooth random envelopes a(t), b(t) in
// [0.05, 1] modulate a low tone (300 Hz) and a high tone (1500 Hz) over a
// faint white-noise floor. Targets:
//   speaking frames:  expression[0] = 0.8 a,  jaw[0] = 0.3 a
//   listening frames: expression and jaw stay at zero
//   all frames:       rotation[1]    = 0.6 g_r (b - 0.55)
//                     translation[0] = 1.0 g_t (b - 0.55)
// with per-clip gains g_r, g_t ~ U[0.1, 1]. The gains are visible to the
// model only through the magnitude condition. The first L frames become the
// history, the last T the target window whose audio is fed to the model.

#ifndef HEADFLOW_TASK_HPP
#define HEADFLOW_TASK_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "headflow/audio.hpp"
#include "headflow/dit.hpp"
#include "headflow/motion.hpp"
#include "headflow/renderer.hpp"

namespace headflow {

struct TrainingExample {
  ConditionSet cond;
  Mat x1;      // T x 115 target window
  Mat images;  // T x 4096 reference renders, filled for image training
  MagnitudePair raw_magnitude;
};

enum class StatePattern { kSpeak, kListen, kListenThenSpeak, kSpeakThenListen };

struct MicroTask {
  int window = 20;
  int history = 6;
  double tone_a_hz = 300.0;
  double tone_b_hz = 1500.0;
  double expr_gain = 0.8;
  double jaw_gain = 0.3;
  double rot_gain = 0.6;
  double trans_gain = 1.0;
  double noise_floor = 0.005;

  /// Model configuration used for training on this task.
  static ModelConfig model_config() {
    ModelConfig c;
    c.window = 20;
    c.history_len = 6;
    c.group_spans = {4, 2};
    c.tokens_per_group = 2;
    c.model_dim = 128;
    c.blocks = 2;
    c.heads = 4;
    c.mlp_ratio = 2;
    c.time_embed_dim = 64;
    c.ref_embed_dim = 16;
    c.audio_embed_dim = 32;
    c.mag_embed_dim = 32;
    c.film_hidden = 32;
    c.audio_token_dim = 64;
    return c;
  }

  /// Smooth per-frame envelope in [0.05, 1].
  template <class Rng>
  static std::vector<double> envelope(int frames, Rng& rng) {
    std::uniform_real_distribution<double> f1(0.4, 1.6), f2(1.0, 3.0), ph(0.0, 2.0 * std::numbers::pi),
        base(0.35, 0.75);
    const double a = f1(rng), b = f2(rng), p = ph(rng), q = ph(rng), m = base(rng);
    std::vector<double> e(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i) {
      const double s = i / layout::kFrameRate;
      const double v = m + 0.3 * std::sin(2 * std::numbers::pi * a * s + p) + 0.15 * std::sin(2 * std::numbers::pi * b * s + q);
      e[static_cast<std::size_t>(i)] = std::clamp(v, 0.05, 1.0);
    }
    return e;
  }

  template <class Rng>
  TrainingExample sample(Rng& rng, StatePattern pattern) const {
    const int N = history + window;
    const auto ea = envelope(N, rng);
    const auto eb = envelope(N, rng);
    std::uniform_real_distribution<double> gain(0.1, 1.0);
    const double gr = gain(rng), gt = gain(rng);
    std::uniform_int_distribution<int> cut_d(1, N - 1);
    const int cut = cut_d(rng);

    LSStateSequence states(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
      bool speak = false;
      switch (pattern) {
        case StatePattern::kSpeak: speak = true; break;
        case StatePattern::kListen: speak = false; break;
        case StatePattern::kListenThenSpeak: speak = i >= cut; break;
        case StatePattern::kSpeakThenListen: speak = i < cut; break;
      }
      states[static_cast<std::size_t>(i)] = speak ? LSState::kSpeaking : LSState::kListening;
    }

    Mat frames = Mat::Zero(N, layout::kMotionDim);
    for (int i = 0; i < N; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (states[k] == LSState::kSpeaking) {
        frames(i, layout::kExpression) = expr_gain * ea[k];
        frames(i, layout::kJaw) = jaw_gain * ea[k];
      }
      frames(i, layout::kRotation + 1) = rot_gain * gr * (eb[k] - 0.55);
      frames(i, layout::kTranslation) = trans_gain * gt * (eb[k] - 0.55);
    }

    // Audio of the target window, envelopes linearly interpolated per sample.
    AudioBuffer audio;
    std::normal_distribution<double> hiss(0.0, noise_floor);
    const int S = window * kSamplesPerMotionFrame;
    audio.samples.resize(static_cast<std::size_t>(S));
    for (int n = 0; n < S; ++n) {
      const double f = history + (n + 0.5) / kSamplesPerMotionFrame - 0.5;
      const int i0 = std::clamp(static_cast<int>(std::floor(f)), 0, N - 1), i1 = std::min(i0 + 1, N - 1);
      const double w = std::clamp(f - i0, 0.0, 1.0);
      const double a = (1 - w) * ea[static_cast<std::size_t>(i0)] + w * ea[static_cast<std::size_t>(i1)];
      const double b = (1 - w) * eb[static_cast<std::size_t>(i0)] + w * eb[static_cast<std::size_t>(i1)];
      const double tsec = static_cast<double>(n) / kSampleRate;
      audio.samples[static_cast<std::size_t>(n)] = static_cast<float>(
          0.45 * a * std::sin(2 * std::numbers::pi * tone_a_hz * tsec) + 0.45 * b * std::sin(2 * std::numbers::pi * tone_b_hz * tsec) + hiss(rng));
    }

    TrainingExample ex;
    ex.cond.audio = extract_features(audio);
    ex.cond.history = frames.topRows(history);
    ex.cond.history_states.assign(states.begin(), states.begin() + history);
    ex.cond.current_states.assign(states.begin() + history, states.end());
    ex.x1 = frames.bottomRows(window);
    ex.raw_magnitude = compute_magnitude(ex.x1).raw;
    return ex;
  }

  /// `count` clips with patterns cycling speak, listen, listen-then-speak,
  /// speak-then-listen. Magnitudes are normalized with `norm`.
  std::vector<TrainingExample> pool(int count, std::uint64_t seed, const NormalizationSpec& norm) const {
    std::mt19937_64 rng(seed);
    std::vector<TrainingExample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      out.push_back(sample(rng, static_cast<StatePattern>(i % 4)));
      out.back().cond.magnitude = norm.normalize(out.back().raw_magnitude);
    }
    return out;
  }

  /// Normalization fitted to the raw magnitudes of a reference pool.
  NormalizationSpec fit(int count, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<MagnitudePair> raw;
    for (int i = 0; i < count; ++i) raw.push_back(sample(rng, static_cast<StatePattern>(i % 4)).raw_magnitude);
    return fit_normalization(raw);
  }

  static void attach_images(std::vector<TrainingExample>& pool, const SyntheticRenderer& renderer,
                            const ParameterStore<double>& renderer_params) {
    for (auto& ex : pool) ex.images = renderer.render(ex.x1, renderer_params);
  }
};

}  // namespace headflow

#endif  // HEADFLOW_TASK_HPP
