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

// Audio side of the model input: a deterministic layered feature extractor
// at 50 Hz, softmax layer fusion and a strided convolution that aligns the
// fused features to the 25 Hz motion rate.
//
// Feature layers (24 columns each):
//   1. log triangular mel filterbank energies, log(E + 1e-10)
//   2. first-order temporal differences of layer 1 (row 0 is zero)
//   3. [log frame energy, zero-crossing rate, spectral centroid in kHz], tiled 8x
//
// Raw waveform files carry a 16-byte little-endian header:
//   bytes 0-3   magic, "PCMI" (int16 samples) or "PCMD" (float64 samples)
//   bytes 4-11  sample count (uint64)
//   bytes 12-15 sample rate (uint32)
// followed by the samples, little-endian.

#ifndef HEADFLOW_AUDIO_HPP
#define HEADFLOW_AUDIO_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "headflow/autograd.hpp"
#include "headflow/errors.hpp"

namespace headflow {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFeatureHop = 320;     // 20 ms
inline constexpr int kFeatureWindow = 640;  // 40 ms
inline constexpr int kFeatureBands = 24;
inline constexpr int kFeatureLayers = 3;
inline constexpr double kLogFloor = 1e-10;
inline constexpr int kSamplesPerMotionFrame = kSampleRate / 25;  // 640

struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_ms() const { return 1000.0 * static_cast<double>(samples.size()) / sample_rate; }
};

namespace synth {

inline std::size_t samples_for_ms(double ms) {
  return static_cast<std::size_t>(std::llround(ms * kSampleRate / 1000.0));
}

inline AudioBuffer tone(double freq_hz, double dur_ms, double amplitude = 0.5) {
  AudioBuffer b;
  b.samples.resize(samples_for_ms(dur_ms));
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    b.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / kSampleRate));
  }
  return b;
}

inline AudioBuffer noise(double dur_ms, std::uint64_t seed, double amplitude = 0.3) {
  AudioBuffer b;
  b.samples.resize(samples_for_ms(dur_ms));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (auto& s : b.samples) s = static_cast<float>(u(rng));
  return b;
}

inline AudioBuffer silence(double dur_ms) {
  AudioBuffer b;
  b.samples.assign(samples_for_ms(dur_ms), 0.0f);
  return b;
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Raw waveform files

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::uint64_t u = 0;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ConfigError("unexpected end of file");
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

}  // namespace detail

enum class SampleFormat { kPcm16, kFloat64 };

inline void write_waveform(const std::string& path, const AudioBuffer& buf, SampleFormat fmt = SampleFormat::kFloat64) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  os.write(fmt == SampleFormat::kPcm16 ? "PCMI" : "PCMD", 4);
  detail::put_le<std::uint64_t>(os, buf.samples.size());
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(buf.sample_rate));
  for (float s : buf.samples) {
    if (fmt == SampleFormat::kPcm16) {
      const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
      detail::put_le<std::int16_t>(os, static_cast<std::int16_t>(std::lround(c * 32767.0)));
    } else {
      detail::put_le<double>(os, static_cast<double>(s));
    }
  }
}

inline AudioBuffer read_waveform(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open waveform " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw ConfigError(path + ": missing header");
  const bool pcm = std::memcmp(magic, "PCMI", 4) == 0;
  const bool f64 = std::memcmp(magic, "PCMD", 4) == 0;
  if (!pcm && !f64) throw ConfigError(path + ": bad waveform magic");
  const auto count = detail::get_le<std::uint64_t>(is);
  AudioBuffer b;
  b.sample_rate = static_cast<int>(detail::get_le<std::uint32_t>(is));
  b.samples.resize(count);
  for (auto& s : b.samples) {
    s = pcm ? static_cast<float>(detail::get_le<std::int16_t>(is) / 32767.0) : static_cast<float>(detail::get_le<double>(is));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Feature extraction

struct LayeredFeatures {
  std::vector<Mat> layers;  // each frames x feat_dim
  double layer_rate = 50.0;

  int frames() const { return layers.empty() ? 0 : static_cast<int>(layers.front().rows()); }
  int feat_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().cols()); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Band edges in Hz: band b is the triangle (edge[b], edge[b+1], edge[b+2]).
inline std::vector<double> filterbank_edges(int bands = kFeatureBands) {
  std::vector<double> edges(static_cast<std::size_t>(bands + 2));
  const double top = hz_to_mel(kSampleRate / 2.0);
  for (int i = 0; i < bands + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(top * i / (bands + 1));
  return edges;
}

/// bands x bins triangular weights over the bins of a `n_fft`-point spectrum.
inline Mat filterbank_weights(int n_fft = kFeatureWindow, int bands = kFeatureBands) {
  const int bins = n_fft / 2 + 1;
  const auto edges = filterbank_edges(bands);
  Mat w = Mat::Zero(bands, bins);
  for (int b = 0; b < bands; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)], mid = edges[static_cast<std::size_t>(b + 1)],
                 hi = edges[static_cast<std::size_t>(b + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / n_fft;
      if (f > lo && f < mid) w(b, k) = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) w(b, k) = (hi - f) / (hi - mid);
    }
  }
  return w;
}

inline LayeredFeatures extract_features(const AudioBuffer& buffer) {
  if (buffer.samples.empty()) throw InvalidArgument("extract_features: empty buffer");
  if (buffer.sample_rate != kSampleRate) throw InvalidArgument("extract_features: sample rate must be 16 kHz");
  if (buffer.samples.size() < static_cast<std::size_t>(kFeatureHop)) {
    throw InvalidArgument("extract_features: buffer shorter than one hop");
  }
  const int frames = static_cast<int>(buffer.samples.size() / kFeatureHop);
  const int bins = kFeatureWindow / 2 + 1;
  static const Mat fb = filterbank_weights();
  std::vector<double> hann(kFeatureWindow);
  for (int i = 0; i < kFeatureWindow; ++i) hann[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kFeatureWindow);

  LayeredFeatures out;
  out.layers.assign(kFeatureLayers, Mat::Zero(frames, kFeatureBands));
  Eigen::FFT<double> fft;
  std::vector<double> frame(kFeatureWindow);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(bins);
  for (int f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * kFeatureHop;
    double energy = 0.0;
    int crossings = 0;
    for (int i = 0; i < kFeatureWindow; ++i) {
      const std::size_t idx = start + static_cast<std::size_t>(i);
      const double s = idx < buffer.samples.size() ? static_cast<double>(buffer.samples[idx]) : 0.0;
      energy += s * s;
      if (i > 0 && ((s >= 0.0) != (frame[static_cast<std::size_t>(i - 1)] >= 0.0))) ++crossings;
      frame[static_cast<std::size_t>(i)] = s;
    }
    std::vector<double> windowed(kFeatureWindow);
    for (int i = 0; i < kFeatureWindow; ++i) windowed[static_cast<std::size_t>(i)] = frame[static_cast<std::size_t>(i)] * hann[static_cast<std::size_t>(i)];
    fft.fwd(spec, windowed);
    double total = 0.0, weighted = 0.0;
    for (int k = 0; k < bins; ++k) {
      power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
      total += power(k);
      weighted += power(k) * (static_cast<double>(k) * kSampleRate / kFeatureWindow);
    }
    const Eigen::VectorXd band = fb * power;
    for (int b = 0; b < kFeatureBands; ++b) out.layers[0](f, b) = std::log(band(b) + kLogFloor);
    const double log_energy = std::log(energy / kFeatureWindow + kLogFloor);
    const double zcr = static_cast<double>(crossings) / (kFeatureWindow - 1);
    const double centroid_khz = total > 0.0 ? weighted / total / 1000.0 : 0.0;
    for (int r = 0; r < kFeatureBands / 3; ++r) {
      out.layers[2](f, 3 * r) = log_energy;
      out.layers[2](f, 3 * r + 1) = zcr;
      out.layers[2](f, 3 * r + 2) = centroid_khz;
    }
  }
  for (int f = 1; f < frames; ++f) out.layers[1].row(f) = out.layers[0].row(f) - out.layers[0].row(f - 1);
  return out;
}

/// Copy of `features` restricted to rows [begin, begin + count).
inline LayeredFeatures slice_frames(const LayeredFeatures& features, int begin, int count) {
  LayeredFeatures out;
  out.layer_rate = features.layer_rate;
  for (const auto& l : features.layers) out.layers.push_back(l.middleRows(begin, count));
  return out;
}

// ---------------------------------------------------------------------------
// Fusion and alignment

inline Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

/// Softmax-weighted sum over layers.
inline Mat fuse_layers(const LayeredFeatures& features, const Eigen::RowVectorXd& logits) {
  if (logits.size() != static_cast<Eigen::Index>(features.layers.size())) {
    throw InvalidArgument("fuse_layers: one logit per layer required");
  }
  const Eigen::RowVectorXd w = softmax(logits);
  Mat out = Mat::Zero(features.frames(), features.feat_dim());
  for (std::size_t l = 0; l < features.layers.size(); ++l) out += w(static_cast<Eigen::Index>(l)) * features.layers[l];
  return out;
}

template <class S>
ag::Var<S> fuse_layers(const std::vector<Matrix<S>>& layers, ag::Var<S> logits) {
  return ag::weighted_sum(layers, ag::softmax_rows(logits));
}

inline constexpr int kAlignKernel = 5;
inline constexpr int kAlignStride = 2;
inline constexpr int kAlignPad = 2;

/// Kernel-5 stride-2 convolution along time (weight: 5*feat_dim x out,
/// row k*feat_dim + c for tap k and channel c), then per-token layer norm.
template <class S>
ag::Var<S> align_to_motion_rate(ag::Var<S> fused, ag::Var<S> weight, ag::Var<S> bias, int motion_frames, bool normalize = true) {
  if (fused.rows() != 2 * motion_frames) throw InvalidArgument("align_to_motion_rate: expected 2T feature frames");
  ag::Var<S> y = ag::linear(ag::patches(fused, kAlignKernel, kAlignStride, kAlignPad), weight, bias);
  return normalize ? ag::layer_norm(y) : y;
}

inline Mat align_to_motion_rate(const Mat& fused, const Mat& weight, const Eigen::RowVectorXd& bias, int motion_frames,
                                bool normalize = true) {
  ag::Graph<double> g(false);
  Mat b = bias;
  return align_to_motion_rate(g.reference(fused), g.reference(weight), g.reference(b), motion_frames, normalize).value();
}

}  // namespace headflow

#endif  // HEADFLOW_AUDIO_HPP
