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

// The conditional velocity field: state-augmented motion tokens with packed
// history, AdaLN global conditioning, rotary self-attention and locality
// masked cross-attention to FiLM-modulated audio tokens.
//
// Parameter names:
//   hcp.group{g}.weight                  tokens_per_group x span, g oldest-first
//   embed.{weight,bias}                  116 -> d
//   cond.ref.{weight,bias}               215 -> ref_embed_dim
//   cond.audio.{weight,bias}             audio_token_dim -> audio_embed_dim
//   cond.mag.fc{1,2}.{weight,bias}       2 -> mag -> mag
//   audio.{local,global}_logits          1 x feature_layers
//   audio.conv.{weight,bias}             5*feature_dim -> audio_token_dim
//   blocks.{b}.adaln.{weight,bias}       cond -> 9d (shift, scale, gate) x 3
//   blocks.{b}.self_attn.{q,k,v,o}.*     d -> d
//   blocks.{b}.cross_attn.{q,o}.*        d -> d
//   blocks.{b}.cross_attn.{k,v}.*        audio_token_dim -> d
//   blocks.{b}.film.fc{1,2}.*            1 -> film_hidden -> 2*audio_token_dim
//   blocks.{b}.ffn.fc{1,2}.*             d -> ffn -> d
//   final.adaln.{weight,bias}            cond -> 2d
//   final.proj.{weight,bias}             d -> 115

#ifndef HEADFLOW_DIT_HPP
#define HEADFLOW_DIT_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "headflow/audio.hpp"
#include "headflow/autograd.hpp"
#include "headflow/flow.hpp"
#include "headflow/motion.hpp"
#include "headflow/params.hpp"

namespace headflow {

/// Everything the velocity field conditions on besides (x_t, t).
struct ConditionSet {
  LayeredFeatures audio;  // 2T feature frames at 50 Hz
  AvatarIdentity identity;
  Mat history;  // L x 115, oldest first
  LSStateSequence history_states;
  LSStateSequence current_states;
  MagnitudePair magnitude;  // normalized

  void validate(const ModelConfig& cfg) const {
    if (audio.frames() != 2 * cfg.window) throw InvalidArgument("ConditionSet: audio must have 2T feature frames");
    if (static_cast<int>(audio.layers.size()) != cfg.feature_layers || audio.feat_dim() != cfg.feature_dim) {
      throw InvalidArgument("ConditionSet: audio layer layout does not match the model config");
    }
    if (history.rows() != cfg.history_len || history.cols() != layout::kMotionDim) {
      throw InvalidArgument("ConditionSet: history must be L x 115");
    }
    if (static_cast<int>(history_states.size()) != cfg.history_len) {
      throw InvalidArgument("ConditionSet: history state count must equal L");
    }
    if (static_cast<int>(current_states.size()) != cfg.window) {
      throw InvalidArgument("ConditionSet: current state count must equal T");
    }
    if (identity.shape.size() < layout::kShapeConditioningDim) throw InvalidArgument("ConditionSet: shape too short");
  }
};

/// Appends the state column: N x 115 -> N x 116.
inline Mat augment_with_state(const Mat& frames, const LSStateSequence& states) {
  if (static_cast<std::size_t>(frames.rows()) != states.size()) {
    throw InvalidArgument("augment_with_state: frame and state counts differ");
  }
  Mat out(frames.rows(), frames.cols() + 1);
  out.leftCols(frames.cols()) = frames;
  for (Eigen::Index i = 0; i < frames.rows(); ++i) out(i, frames.cols()) = state_value(states[static_cast<std::size_t>(i)]);
  return out;
}

inline std::string hcp_name(std::size_t group) { return "hcp.group" + std::to_string(group) + ".weight"; }

/// Compresses L x C history into H x C tokens, one learned linear map per
/// group along time. Groups run oldest-first, widest span first.
template <class S>
ag::Var<S> pack_history(ag::Var<S> history, Binder<S>& P, const ModelConfig& cfg) {
  if (history.rows() != cfg.history_len) throw InvalidArgument("pack_history: history length must equal L");
  const auto spans = cfg.packing_spans();
  std::vector<ag::Var<S>> parts;
  Eigen::Index at = 0;
  for (std::size_t g = 0; g < spans.size(); ++g) {
    ag::Var<S> w = P(hcp_name(g));
    if (w.rows() != cfg.tokens_per_group || w.cols() != spans[g]) throw InvalidArgument("pack_history: weight shape");
    parts.push_back(ag::matmul(w, ag::rows(history, at, spans[g])));
    at += spans[g];
  }
  return ag::concat_rows(parts);
}

inline Mat pack_history(const Mat& history, const ParameterStore<double>& params, const ModelConfig& cfg) {
  ag::Graph<double> g(false);
  Binder<double> P(g, params, false);
  return pack_history(g.reference(history), P, cfg).value();
}

/// Block-averaging weights for one group.
inline Mat averaging_projection(int tokens, int span) {
  Mat w = Mat::Zero(tokens, span);
  for (int r = 0; r < tokens; ++r) {
    const int b = r * span / tokens, e = std::max(b + 1, (r + 1) * span / tokens);
    w.block(r, b, 1, e - b).setConstant(1.0 / (e - b));
  }
  return w;
}

/// sin/cos interleaved: [2k] = sin(t' f_k), [2k+1] = cos(t' f_k), with
/// f_k = base^(-2k/dim) and t' = scale * t.
inline Mat timestep_embedding(double t, int dim, double scale = 1000.0, double base = 10000.0) {
  if (dim % 2 != 0) throw InvalidArgument("timestep_embedding: dim must be even");
  Mat e(1, dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double a = scale * t * std::pow(base, -2.0 * k / dim);
    e(0, 2 * k) = std::sin(a);
    e(0, 2 * k + 1) = std::cos(a);
  }
  return e;
}

/// Additive mask, 0 where |i - j| <= R and -inf elsewhere.
inline Mat build_locality_mask(int rows, int cols, int radius) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = std::abs(i - j) <= radius ? 0.0 : -std::numeric_limits<double>::infinity();
    }
  }
  return m;
}

inline Mat build_locality_mask(int T, int radius) { return build_locality_mask(T, T, radius); }

template <class S>
ag::Var<S> dense(ag::Var<S> x, Binder<S>& P, const std::string& prefix) {
  return ag::linear(x, P(prefix + ".weight"), P(prefix + ".bias"));
}

/// 1 x 215 identity input: first 100 shape coefficients then the reference frame.
inline Mat identity_features(const AvatarIdentity& id) {
  Mat f(1, layout::kShapeConditioningDim + layout::kMotionDim);
  f.leftCols(layout::kShapeConditioningDim) = id.shape.head(layout::kShapeConditioningDim).transpose();
  f.rightCols(layout::kMotionDim) = id.reference.to_row();
  return f;
}

/// Global condition row: [time | reference | global audio | magnitude].
/// `global_tokens` are the aligned audio tokens of the global branch.
template <class S>
ag::Var<S> build_global_condition(ag::Var<S> global_tokens, S t, const AvatarIdentity& identity,
                                  const MagnitudePair& magnitude, Binder<S>& P, const ModelConfig& cfg) {
  ag::Graph<S>& g = global_tokens.graph();
  if (global_tokens.cols() != cfg.audio_token_dim) throw InvalidArgument("build_global_condition: audio token width");
  ag::Var<S> te = g.constant(timestep_embedding(static_cast<double>(t), cfg.time_embed_dim, cfg.time_scale).cast<S>());
  ag::Var<S> ref = dense(g.constant(identity_features(identity).cast<S>()), P, "cond.ref");
  ag::Var<S> aud = dense(ag::mean_rows(global_tokens), P, "cond.audio");
  Matrix<S> m(1, 2);
  m << static_cast<S>(magnitude.rot_mag), static_cast<S>(magnitude.trans_mag);
  ag::Var<S> mag = dense(ag::silu(dense(g.constant(m), P, "cond.mag.fc1")), P, "cond.mag.fc2");
  ag::Var<S> c = ag::concat_cols(std::vector<ag::Var<S>>{te, ref, aud, mag});
  if (c.cols() != cfg.cond_dim()) throw InvalidArgument("build_global_condition: condition width mismatch");
  return c;
}

/// A_hat = A (1 + alpha(q)) + beta(q), [alpha, beta] from a two-layer MLP of
/// the per-frame state.
template <class S>
ag::Var<S> film_modulate(ag::Var<S> audio, const LSStateSequence& states, Binder<S>& P, const std::string& prefix) {
  if (static_cast<std::size_t>(audio.rows()) != states.size()) {
    throw InvalidArgument("film_modulate: state count must equal token count");
  }
  ag::Graph<S>& g = audio.graph();
  Matrix<S> q(audio.rows(), 1);
  for (Eigen::Index i = 0; i < q.rows(); ++i) q(i, 0) = static_cast<S>(state_value(states[static_cast<std::size_t>(i)]));
  ag::Var<S> ab = dense(ag::silu(dense(g.constant(std::move(q)), P, prefix + ".fc1")), P, prefix + ".fc2");
  const auto a = audio.cols();
  if (ab.cols() != 2 * a) throw InvalidArgument("film_modulate: modulator width must be twice the token width");
  return ag::add(ag::add(audio, ag::mul(audio, ag::cols(ab, 0, a))), ag::cols(ab, a, a));
}

/// Multi-head attention with rotary positions on queries and keys. `mask`
/// is an optional additive rows x keys matrix.
template <class S>
ag::Var<S> attention(ag::Var<S> x, ag::Var<S> kv, Binder<S>& P, const std::string& prefix, int heads,
                     const std::vector<int>& qpos, const std::vector<int>& kpos, double rope_base,
                     const ag::Var<S>* mask = nullptr) {
  ag::Var<S> q = ag::rope(dense(x, P, prefix + ".q"), qpos, heads, rope_base);
  ag::Var<S> k = ag::rope(dense(kv, P, prefix + ".k"), kpos, heads, rope_base);
  ag::Var<S> v = dense(kv, P, prefix + ".v");
  const auto hd = q.cols() / heads;
  const S inv = S(1) / std::sqrt(static_cast<S>(hd));
  std::vector<ag::Var<S>> outs;
  for (int h = 0; h < heads; ++h) {
    ag::Var<S> s = ag::scale(ag::matmul_nt(ag::cols(q, h * hd, hd), ag::cols(k, h * hd, hd)), inv);
    if (mask) s = ag::add(s, *mask);
    outs.push_back(ag::matmul(ag::softmax_rows(s), ag::cols(v, h * hd, hd)));
  }
  return dense(ag::concat_cols(outs), P, prefix + ".o");
}

/// LN(x) (1 + scale) + shift, with shift and scale 1 x d rows.
template <class S>
ag::Var<S> modulate(ag::Var<S> x, ag::Var<S> shift, ag::Var<S> scale) {
  return ag::add_row(ag::mul_row(ag::layer_norm(x), ag::add_scalar(scale, S(1))), shift);
}

/// Internal shapes and per-block intermediates, filled on request.
struct ForwardProbe {
  int self_attention_tokens = 0;
  int cross_attention_queries = 0;
  int cross_attention_keys = 0;
  Mat global_condition;
  Mat embedded;  // (H + T) x d input stream
  std::vector<Mat> cross_attention;  // per block, before the gate
};

/// Aligned audio tokens for one fusion branch.
template <class S>
ag::Var<S> audio_tokens(const std::vector<Matrix<S>>& layers, Binder<S>& P, const std::string& logits, int T) {
  ag::Var<S> fused = fuse_layers(layers, P(logits));
  return align_to_motion_rate(fused, P("audio.conv.weight"), P("audio.conv.bias"), T);
}

/// Velocity prediction for one window, recorded on P's graph.
template <class S>
ag::Var<S> velocity_forward(ag::Var<S> xt, S t, const ConditionSet& cond, Binder<S>& P, const ModelConfig& cfg,
                            ForwardProbe* probe = nullptr) {
  cond.validate(cfg);
  if (xt.rows() != cfg.window || xt.cols() != cfg.motion_dim) throw InvalidArgument("predict_velocity: x_t must be T x 115");
  ag::Graph<S>& g = P.graph();
  const int T = cfg.window, H = cfg.history_tokens(), d = cfg.model_dim;

  ag::Var<S> hist = pack_history(g.constant(augment_with_state(cond.history, cond.history_states).cast<S>()), P, cfg);
  Matrix<S> qcur(T, 1);
  for (int i = 0; i < T; ++i) qcur(i, 0) = static_cast<S>(state_value(cond.current_states[static_cast<std::size_t>(i)]));
  ag::Var<S> cur = ag::concat_cols(std::vector<ag::Var<S>>{xt, g.constant(std::move(qcur))});
  ag::Var<S> x = dense(ag::concat_rows(std::vector<ag::Var<S>>{hist, cur}), P, "embed");

  std::vector<Matrix<S>> layers;
  for (const auto& l : cond.audio.layers) layers.push_back(l.cast<S>());
  ag::Var<S> local = audio_tokens(layers, P, "audio.local_logits", T);
  ag::Var<S> global = audio_tokens(layers, P, "audio.global_logits", T);
  ag::Var<S> c = build_global_condition(global, t, cond.identity, cond.magnitude, P, cfg);

  std::vector<int> self_pos(static_cast<std::size_t>(H + T)), frame_pos(static_cast<std::size_t>(T));
  for (int i = 0; i < H + T; ++i) self_pos[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < T; ++i) frame_pos[static_cast<std::size_t>(i)] = i;
  ag::Var<S> mask = g.constant(build_locality_mask(T, cfg.locality_radius).cast<S>());

  if (probe) {
    probe->self_attention_tokens = static_cast<int>(x.rows());
    probe->cross_attention_queries = T;
    probe->cross_attention_keys = static_cast<int>(local.rows());
    probe->global_condition = c.value().template cast<double>();
    probe->embedded = x.value().template cast<double>();
    probe->cross_attention.clear();
  }

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string pre = "blocks." + std::to_string(b);
    ag::Var<S> mod = dense(c, P, pre + ".adaln");
    auto part = [&](int k) { return ag::cols(mod, static_cast<Eigen::Index>(k) * d, d); };

    ag::Var<S> h = modulate(x, part(0), part(1));
    x = ag::add(x, ag::mul_row(attention(h, h, P, pre + ".self_attn", cfg.heads, self_pos, self_pos, cfg.rope_base), part(2)));

    ag::Var<S> past = ag::rows(x, 0, H);
    ag::Var<S> now = ag::rows(x, H, T);
    ag::Var<S> a_hat = film_modulate(local, cond.current_states, P, pre + ".film");
    ag::Var<S> ca = attention(modulate(now, part(3), part(4)), a_hat, P, pre + ".cross_attn", cfg.heads, frame_pos,
                              frame_pos, cfg.rope_base, &mask);
    if (probe) probe->cross_attention.push_back(ca.value().template cast<double>());
    now = ag::add(now, ag::mul_row(ca, part(5)));
    x = ag::concat_rows(std::vector<ag::Var<S>>{past, now});

    ag::Var<S> f = dense(ag::gelu(dense(modulate(x, part(6), part(7)), P, pre + ".ffn.fc1")), P, pre + ".ffn.fc2");
    x = ag::add(x, ag::mul_row(f, part(8)));
    if (!x.value().allFinite()) throw NumericFailure("predict_velocity: non-finite activations", b);
  }

  ag::Var<S> fm = dense(c, P, "final.adaln");
  ag::Var<S> y = modulate(ag::rows(x, H, T), ag::cols(fm, 0, d), ag::cols(fm, d, d));
  ag::Var<S> v = dense(y, P, "final.proj");
  if (!v.value().allFinite()) throw NumericFailure("predict_velocity: non-finite output", cfg.blocks);
  return v;
}

/// Inference-path velocity for one window.
template <class S>
Matrix<S> predict_velocity(const Matrix<S>& xt, S t, const ConditionSet& cond, const ParameterStore<S>& params,
                           const ModelConfig& cfg, ForwardProbe* probe = nullptr) {
  ag::Graph<S> g(false);
  Binder<S> P(g, params, false);
  return velocity_forward(g.reference(xt), t, cond, P, cfg, probe).value();
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

template <class Rng>
Mat scaled_gaussian(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace detail

/// Seeded initial parameters. Weights ~ N(0, 1/fan_in), biases and all
/// modulators (AdaLN, FiLM output) zero, packing maps block averages,
/// fusion logits uniform.
inline ParameterStore<double> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterStore<double> p;
  auto lin = [&](const std::string& name, int in, int out, bool zero = false) {
    p.set(name + ".weight", zero ? Mat::Zero(in, out) : detail::scaled_gaussian(in, out, 1.0 / std::sqrt(in), rng));
    p.set(name + ".bias", Mat::Zero(1, out));
  };
  const int d = cfg.model_dim, a = cfg.audio_token_dim;
  const auto spans = cfg.packing_spans();
  for (std::size_t g = 0; g < spans.size(); ++g) p.set(hcp_name(g), averaging_projection(cfg.tokens_per_group, spans[g]));
  lin("embed", cfg.token_dim(), d);
  lin("cond.ref", layout::kShapeConditioningDim + layout::kMotionDim, cfg.ref_embed_dim);
  lin("cond.audio", a, cfg.audio_embed_dim);
  lin("cond.mag.fc1", 2, cfg.mag_embed_dim);
  lin("cond.mag.fc2", cfg.mag_embed_dim, cfg.mag_embed_dim);
  p.set("audio.local_logits", Mat::Zero(1, cfg.feature_layers));
  p.set("audio.global_logits", Mat::Zero(1, cfg.feature_layers));
  lin("audio.conv", kAlignKernel * cfg.feature_dim, a);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string pre = "blocks." + std::to_string(b);
    lin(pre + ".adaln", cfg.cond_dim(), 9 * d, true);
    for (const char* k : {".q", ".k", ".v", ".o"}) lin(pre + ".self_attn" + k, d, d);
    lin(pre + ".cross_attn.q", d, d);
    lin(pre + ".cross_attn.k", a, d);
    lin(pre + ".cross_attn.v", a, d);
    lin(pre + ".cross_attn.o", d, d);
    lin(pre + ".film.fc1", 1, cfg.film_hidden);
    lin(pre + ".film.fc2", cfg.film_hidden, 2 * a, true);
    lin(pre + ".ffn.fc1", d, cfg.ffn_dim());
    lin(pre + ".ffn.fc2", cfg.ffn_dim(), d);
  }
  lin("final.adaln", cfg.cond_dim(), 2 * d, true);
  lin("final.proj", d, cfg.motion_dim);
  return p;
}

/// Overwrites every zero-initialized modulator and bias with small seeded
/// values so that all parameter paths carry signal.
inline void perturb_parameters(ParameterStore<double>& p, std::uint64_t seed, double stddev = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& [name, t] : p.tensors()) {
    if (t.isZero(0.0)) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
    }
  }
}

// ---------------------------------------------------------------------------

/// A parameter set bound to its configuration.
template <class S>
class VelocityModel {
 public:
  /// Tensors under "renderer." are ignored.
  VelocityModel(ModelConfig cfg, const ParameterStore<S>& params)
      : cfg_(std::move(cfg)), params_(params.without_prefix("renderer.")) {
    cfg_.validate();
    check_compatible(params_, init_parameters(cfg_, 0).template cast<S>());
  }

  const ModelConfig& config() const { return cfg_; }
  const ParameterStore<S>& params() const { return params_; }

  Matrix<S> operator()(const Matrix<S>& xt, S t, const ConditionSet& cond) const {
    return predict_velocity(xt, t, cond, params_, cfg_);
  }

  /// Euler-integrated sample from seeded noise, in 64-bit.
  Mat sample(const ConditionSet& cond, int steps, std::uint64_t seed) const {
    const Matrix<S> x0 = gaussian_noise(cfg_.window, cfg_.motion_dim, seed).template cast<S>();
    const Matrix<S> x1 = euler_integrate<S>(*this, x0, cond, steps);
    return x1.template cast<double>();
  }

 private:
  ModelConfig cfg_;
  ParameterStore<S> params_;
};

}  // namespace headflow

#endif  // HEADFLOW_DIT_HPP
