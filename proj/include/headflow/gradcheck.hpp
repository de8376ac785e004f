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

// Reverse-mode gradients against central finite differences.
//
// Every tensor contributes at least one sampled entry; the rest of the budget
// is drawn uniformly over all scalars. Relative error of an entry is
// |a - n| / max(|a|, |n|, 1e-6).

#ifndef HEADFLOW_GRADCHECK_HPP
#define HEADFLOW_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "headflow/renderer.hpp"
#include "headflow/task.hpp"
#include "headflow/train.hpp"

namespace headflow {

/// Coarse grouping of parameter names for coverage reporting.
inline std::string param_family(const std::string& name) {
  auto has = [&name](const char* s) { return name.find(s) != std::string::npos; };
  if (is_renderer_param(name)) return "renderer";
  if (has("logits")) return "fusion_logits";
  if (has("audio.conv")) return "alignment_conv";
  if (has("hcp.")) return "hcp";
  if (has("film")) return "film";
  if (has("adaln")) return "adaln";
  if (has("attn")) return "attention";
  if (has("ffn")) return "ffn";
  return "projection";
}

inline const std::vector<std::string>& required_families() {
  static const std::vector<std::string> f{"attention", "ffn",           "adaln",          "film",
                                          "hcp",       "fusion_logits", "alignment_conv", "renderer"};
  return f;
}

struct GradientEntry {
  std::string name;
  Eigen::Index row = 0, col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientReport {
  int stage = 1;
  double threshold = 1e-4;
  std::vector<GradientEntry> entries;
  double max_rel_error = 0.0;
  std::map<std::string, double> per_tensor_max;

  std::set<std::string> families() const {
    std::set<std::string> f;
    for (const auto& [name, _] : per_tensor_max) f.insert(param_family(name));
    return f;
  }
  bool pass() const { return !entries.empty() && max_rel_error < threshold; }
};

inline void to_json(nlohmann::json& j, const GradientReport& r) {
  j = nlohmann::json{{"stage", r.stage},
                     {"threshold", r.threshold},
                     {"sampled", r.entries.size()},
                     {"max_rel_error", r.max_rel_error},
                     {"pass", r.pass()},
                     {"per_tensor_max", r.per_tensor_max}};
}

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

struct GradcheckOptions {
  int samples = 240;
  double step = 1e-5;
  double threshold = 1e-4;
  std::uint64_t seed = 3;
};

/// A fixed loss over a parameter store: same example, t and noise each call.
struct GradcheckProblem {
  ModelConfig cfg;
  ParameterStore<double> params;  // model plus renderer.*
  TrainingExample example;
  SyntheticRenderer renderer{BlendshapeModel::synthetic()};
  PerceptualStub perceptual;
  LossWeights weights;
  std::uint64_t draw_seed = 17;

  /// Micro configuration with every zero-initialized tensor perturbed.
  static GradcheckProblem micro(std::uint64_t seed = 1) {
    GradcheckProblem p;
    p.cfg = ModelConfig::micro();
    p.params = init_parameters(p.cfg, seed);
    perturb_parameters(p.params, seed + 1);
    MicroTask task;
    task.window = p.cfg.window;
    task.history = p.cfg.history_len;
    std::mt19937_64 rng(seed + 2);
    p.example = task.sample(rng, StatePattern::kListenThenSpeak);
    p.example.cond.magnitude = NormalizationSpec{}.normalize(p.example.raw_magnitude);
    const ParameterStore<double> ref = p.renderer.init_parameters();
    p.example.images = p.renderer.render(p.example.x1, ref);
    Mat intensity = ref.at(SyntheticRenderer::kIntensity);
    std::normal_distribution<double> n(0.0, 0.2);
    for (Eigen::Index i = 0; i < intensity.size(); ++i) intensity.data()[i] += n(rng);
    p.params.set(SyntheticRenderer::kIntensity, intensity);
    return p;
  }

  double loss(const ParameterStore<double>& at, int stage, std::map<std::string, Mat>* grads = nullptr) const {
    TrainContext ctx{cfg, &renderer, &perceptual};
    std::mt19937_64 rng(draw_seed);
    return example_loss(example, at, stage, ctx, weights, rng, grads, nullptr);
  }
};

inline GradientReport gradient_check(const GradcheckProblem& prob, int stage, const GradcheckOptions& o = {}) {
  if (stage != 1 && stage != 2) throw InvalidArgument("gradient_check: stage must be 1 or 2");
  std::map<std::string, Mat> grads;
  prob.loss(prob.params, stage, &grads);

  std::vector<std::pair<std::string, const Mat*>> tensors;
  for (const auto& [name, t] : prob.params.tensors()) {
    if (stage == 1 && is_renderer_param(name)) continue;
    tensors.emplace_back(name, &t);
  }
  std::mt19937_64 rng(o.seed);
  std::vector<std::pair<std::size_t, Eigen::Index>> picks;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    picks.emplace_back(i, std::uniform_int_distribution<Eigen::Index>(0, tensors[i].second->size() - 1)(rng));
  }
  Eigen::Index total = 0;
  for (const auto& [_, t] : tensors) total += t->size();
  std::uniform_int_distribution<Eigen::Index> any(0, total - 1);
  while (static_cast<int>(picks.size()) < o.samples) {
    Eigen::Index k = any(rng);
    std::size_t i = 0;
    while (k >= tensors[i].second->size()) k -= tensors[i++].second->size();
    picks.emplace_back(i, k);
  }

  GradientReport r;
  r.stage = stage;
  r.threshold = o.threshold;
  ParameterStore<double> work = prob.params;
  for (const auto& [i, flat] : picks) {
    const std::string& name = tensors[i].first;
    Mat& p = work.at(name);
    const double orig = p.data()[flat];
    p.data()[flat] = orig + o.step;
    const double up = prob.loss(work, stage);
    p.data()[flat] = orig - o.step;
    const double down = prob.loss(work, stage);
    p.data()[flat] = orig;

    GradientEntry e;
    e.name = name;
    e.row = flat / p.cols();
    e.col = flat % p.cols();
    const auto g = grads.find(name);
    e.analytic = g == grads.end() ? 0.0 : g->second.data()[flat];
    e.numeric = (up - down) / (2.0 * o.step);
    e.rel_error = relative_error(e.analytic, e.numeric);
    r.max_rel_error = std::max(r.max_rel_error, e.rel_error);
    auto& m = r.per_tensor_max[name];
    m = std::max(m, e.rel_error);
    r.entries.push_back(e);
  }
  return r;
}

}  // namespace headflow

#endif  // HEADFLOW_GRADCHECK_HPP
