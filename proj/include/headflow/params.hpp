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

// Model configuration, named parameter storage and the checkpoint container.
//
// Checkpoint layout (all integers little-endian):
//   "HFCK"                      magic
//   uint32 version              currently 1
//   uint32 tensor count
//   per tensor, sorted by name:
//     uint32 name length, name bytes (UTF-8, no terminator)
//     uint32 rows, uint32 cols
//     rows*cols float64 values, row-major

#ifndef HEADFLOW_PARAMS_HPP
#define HEADFLOW_PARAMS_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "headflow/audio.hpp"
#include "headflow/autograd.hpp"
#include "headflow/errors.hpp"
#include "headflow/motion.hpp"

namespace headflow {

struct ModelConfig {
  int motion_dim = layout::kMotionDim;
  int window = 100;          // T
  int history_len = 75;      // L
  std::vector<int> group_spans{5, 10, 20, 40};
  int tokens_per_group = 5;
  int model_dim = 448;
  int blocks = 8;
  int heads = 8;
  int mlp_ratio = 4;
  int locality_radius = 2;
  double rope_base = 10000.0;
  int time_embed_dim = 448;
  int ref_embed_dim = 112;
  int audio_embed_dim = 224;
  int mag_embed_dim = 112;
  int film_hidden = 112;
  int audio_token_dim = 448;
  int feature_dim = kFeatureBands;
  int feature_layers = kFeatureLayers;
  double time_scale = 1000.0;

  int token_dim() const { return motion_dim + 1; }
  int history_tokens() const { return tokens_per_group * static_cast<int>(group_spans.size()); }
  int cond_dim() const { return time_embed_dim + ref_embed_dim + audio_embed_dim + mag_embed_dim; }
  int head_dim() const { return model_dim / heads; }
  int ffn_dim() const { return model_dim * mlp_ratio; }

  /// Packing spans ordered oldest-first, widest span first.
  std::vector<int> packing_spans() const {
    std::vector<int> s = group_spans;
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("model config: " + what);
    };
    need(motion_dim == layout::kMotionDim, "motion_dim must be 115");
    need(window >= 1 && history_len >= 1, "window and history_len must be positive");
    need(!group_spans.empty() && std::accumulate(group_spans.begin(), group_spans.end(), 0) == history_len,
         "group spans must sum to history_len");
    for (int s : group_spans) need(s >= 1, "group spans must be positive");
    need(tokens_per_group >= 1, "tokens_per_group must be positive");
    need(heads >= 1 && model_dim % heads == 0, "model_dim must be divisible by heads");
    need(head_dim() % 2 == 0, "head dimension must be even for rotary positions");
    need(blocks >= 1 && mlp_ratio >= 1, "blocks and mlp_ratio must be positive");
    need(locality_radius >= 0, "locality_radius must be >= 0");
    need(time_embed_dim % 2 == 0, "time_embed_dim must be even");
    need(ref_embed_dim > 0 && audio_embed_dim > 0 && mag_embed_dim > 0 && film_hidden > 0 && audio_token_dim > 0,
         "embedding widths must be positive");
    need(feature_dim > 0 && feature_layers > 0, "feature dims must be positive");
  }

  /// Full-size configuration.
  static ModelConfig full() { return {}; }

  /// Small configuration for gradient checks and fast tests.
  static ModelConfig micro() {
    ModelConfig c;
    c.window = 10;
    c.history_len = 6;
    c.group_spans = {4, 2};
    c.tokens_per_group = 2;
    c.model_dim = 32;
    c.blocks = 2;
    c.heads = 4;
    c.time_embed_dim = 32;
    c.ref_embed_dim = 8;
    c.audio_embed_dim = 16;
    c.mag_embed_dim = 8;
    c.film_hidden = 8;
    c.audio_token_dim = 32;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"motion_dim", c.motion_dim},       {"window", c.window},
                     {"history_len", c.history_len},     {"group_spans", c.group_spans},
                     {"tokens_per_group", c.tokens_per_group}, {"model_dim", c.model_dim},
                     {"blocks", c.blocks},               {"heads", c.heads},
                     {"mlp_ratio", c.mlp_ratio},         {"locality_radius", c.locality_radius},
                     {"rope_base", c.rope_base},         {"time_embed_dim", c.time_embed_dim},
                     {"ref_embed_dim", c.ref_embed_dim}, {"audio_embed_dim", c.audio_embed_dim},
                     {"mag_embed_dim", c.mag_embed_dim}, {"film_hidden", c.film_hidden},
                     {"audio_token_dim", c.audio_token_dim}, {"feature_dim", c.feature_dim},
                     {"feature_layers", c.feature_layers}, {"time_scale", c.time_scale}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("motion_dim", c.motion_dim);
  opt("window", c.window);
  opt("history_len", c.history_len);
  opt("group_spans", c.group_spans);
  opt("tokens_per_group", c.tokens_per_group);
  opt("model_dim", c.model_dim);
  opt("blocks", c.blocks);
  opt("heads", c.heads);
  opt("mlp_ratio", c.mlp_ratio);
  opt("locality_radius", c.locality_radius);
  opt("rope_base", c.rope_base);
  opt("time_embed_dim", c.time_embed_dim);
  opt("ref_embed_dim", c.ref_embed_dim);
  opt("audio_embed_dim", c.audio_embed_dim);
  opt("mag_embed_dim", c.mag_embed_dim);
  opt("film_hidden", c.film_hidden);
  opt("audio_token_dim", c.audio_token_dim);
  opt("feature_dim", c.feature_dim);
  opt("feature_layers", c.feature_layers);
  opt("time_scale", c.time_scale);
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open model config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  ModelConfig c = j.get<ModelConfig>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

/// Ordered map of named 2-D tensors.
template <class S>
class ParameterStore {
 public:
  using M = Matrix<S>;

  void set(const std::string& name, M value) { tensors_[name] = std::move(value); }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const M& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InvalidArgument("unknown parameter " + name);
    return it->second;
  }
  M& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InvalidArgument("unknown parameter " + name);
    return it->second;
  }
  const std::map<std::string, M>& tensors() const { return tensors_; }
  std::map<std::string, M>& tensors() { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
  }

  template <class T>
  ParameterStore<T> cast() const {
    ParameterStore<T> out;
    for (const auto& [k, v] : tensors_) out.set(k, v.template cast<T>());
    return out;
  }

  /// Copy without the tensors whose names start with `prefix`.
  ParameterStore without_prefix(const std::string& prefix) const {
    ParameterStore out;
    for (const auto& [k, v] : tensors_) {
      if (k.rfind(prefix, 0) != 0) out.set(k, v);
    }
    return out;
  }

  /// Copies tensors from `other` whose names start with `prefix`.
  void merge(const ParameterStore& other, const std::string& prefix = "") {
    for (const auto& [k, v] : other.tensors()) {
      if (k.rfind(prefix, 0) == 0) tensors_[k] = v;
    }
  }

 private:
  std::map<std::string, M> tensors_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParameterStore<double>& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  os.write("HFCK", 4);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.tensors()) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rows()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) detail::put_le<double>(os, t.data()[i]);
  }
}

inline ParameterStore<double> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "HFCK") throw ConfigError(path + ": not a checkpoint");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ConfigError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = detail::get_le<std::uint32_t>(is);
  ParameterStore<double> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ConfigError(path + ": truncated tensor name");
    const auto r = detail::get_le<std::uint32_t>(is);
    const auto c = detail::get_le<std::uint32_t>(is);
    Mat t(r, c);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = detail::get_le<double>(is);
    store.set(name, std::move(t));
  }
  return store;
}

/// Checks that `store` holds exactly the tensors of `expected` with equal
/// shapes. Throws ConfigError naming the first mismatch.
template <class S>
void check_compatible(const ParameterStore<S>& store, const ParameterStore<S>& expected) {
  for (const auto& [name, t] : expected.tensors()) {
    if (!store.contains(name)) throw ConfigError("checkpoint is missing tensor " + name);
    const auto& have = store.at(name);
    if (have.rows() != t.rows() || have.cols() != t.cols()) {
      throw ConfigError("shape mismatch for " + name + ": checkpoint " + std::to_string(have.rows()) + "x" +
                        std::to_string(have.cols()) + ", model config expects " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
    }
  }
  for (const auto& [name, _] : store.tensors()) {
    if (!expected.contains(name)) throw ConfigError("checkpoint has unexpected tensor " + name);
  }
}

/// Binds stored parameters into a graph, creating each leaf once. With a
/// gradient sink, every bound trainable parameter adds its gradient into the
/// sink entry of the same name (created as zeros when missing).
template <class S>
class Binder {
 public:
  Binder(ag::Graph<S>& g, const ParameterStore<S>& store, bool trainable,
         std::map<std::string, Matrix<S>>* sink = nullptr)
      : g_(g), store_(store), trainable_(trainable && g.grad_enabled()), sink_(sink) {}

  ag::Var<S> operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    const auto& m = store_.at(name);
    ag::Var<S> v;
    if (!trainable_) {
      v = g_.reference(m);
    } else if (sink_) {
      auto& slot = (*sink_)[name];
      if (slot.size() == 0) slot = Matrix<S>::Zero(m.rows(), m.cols());
      v = g_.variable_ref(m, &slot);
    } else {
      v = g_.variable_ref(m);
    }
    ids_.emplace(name, v);
    return v;
  }

  ag::Graph<S>& graph() { return g_; }

  /// Gradients of every bound parameter after Graph::backward.
  std::map<std::string, Matrix<S>> gradients() const {
    std::map<std::string, Matrix<S>> out;
    for (const auto& [name, v] : ids_) out[name] = g_.grad(v);
    return out;
  }

 private:
  ag::Graph<S>& g_;
  const ParameterStore<S>& store_;
  bool trainable_;
  std::map<std::string, Matrix<S>>* sink_;
  std::unordered_map<std::string, ag::Var<S>> ids_;
};

}  // namespace headflow

#endif  // HEADFLOW_PARAMS_HPP
