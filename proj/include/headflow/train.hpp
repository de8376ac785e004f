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

// Optimizer and training loop for both stages.
//
// Training config (JSON, every key optional):
//   stage               1 (coefficients) or 2 (coefficients + images)
//   steps, warmup_steps learning rate ramps linearly over warmup_steps
//   schedule            "constant" or "cosine" (decay to zero after warmup)
//   lr, batch, seed
//   weight_decay        decoupled; skipped for biases and fusion logits
//   renderer_lr_scale   stage 2 multiplier for renderer.* parameters
//   weights             {expr, jaw, eye, rot, trans, smooth, coef, img, l1, perc}

#ifndef HEADFLOW_TRAIN_HPP
#define HEADFLOW_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "headflow/dit.hpp"
#include "headflow/flow.hpp"
#include "headflow/losses.hpp"
#include "headflow/params.hpp"
#include "headflow/renderer.hpp"
#include "headflow/task.hpp"

namespace headflow {

struct TrainConfig {
  int stage = 1;
  int steps = 2000;
  int warmup_steps = 100;
  double lr = 1e-3;
  int batch = 8;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double renderer_lr_scale = 0.5;
  std::string schedule = "constant";
  LossWeights weights;

  void validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("train config: stage must be 1 or 2");
    if (steps < 0 || warmup_steps < 0 || batch < 1) throw ConfigError("train config: steps, warmup_steps, batch");
    if (!(lr > 0.0) || weight_decay < 0.0) throw ConfigError("train config: lr must be positive, decay nonnegative");
    if (schedule != "constant" && schedule != "cosine") throw ConfigError("train config: unknown schedule " + schedule);
    weights.validate();
  }

  double lr_at(int step) const {
    if (step < warmup_steps) return lr * static_cast<double>(step + 1) / warmup_steps;
    if (schedule == "constant" || steps <= warmup_steps) return lr;
    const double p = std::min(1.0, static_cast<double>(step - warmup_steps) / (steps - warmup_steps));
    return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
  }
};

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known{"stage", "steps",        "warmup_steps", "lr",    "batch", "seed",
                                           "weight_decay", "beta1", "beta2",       "eps",   "renderer_lr_scale",
                                           "schedule", "weights"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("stage", c.stage);
  opt("steps", c.steps);
  opt("warmup_steps", c.warmup_steps);
  opt("lr", c.lr);
  opt("batch", c.batch);
  opt("seed", c.seed);
  opt("weight_decay", c.weight_decay);
  opt("beta1", c.beta1);
  opt("beta2", c.beta2);
  opt("eps", c.eps);
  opt("renderer_lr_scale", c.renderer_lr_scale);
  opt("schedule", c.schedule);
  opt("weights", c.weights);
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open train config " + path);
  TrainConfig c;
  try {
    c = nlohmann::json::parse(is).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  c.validate();
  return c;
}

inline bool is_renderer_param(const std::string& name) { return name.rfind("renderer.", 0) == 0; }

inline bool decays(const std::string& name) {
  return name.find("bias") == std::string::npos && name.find("logits") == std::string::npos;
}

/// Adam with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& c) : b1_(c.beta1), b2_(c.beta2), eps_(c.eps), decay_(c.weight_decay) {}

  /// Updates every parameter that has a gradient entry. `lr_of` gives the
  /// step size per parameter name.
  void step(ParameterStore<double>& params, const std::map<std::string, Mat>& grads,
            const std::function<double(const std::string&)>& lr_of) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (const auto& [name, g] : grads) {
      Mat& p = params.at(name);
      auto& [m, v] = state_[name];
      if (m.size() == 0) {
        m = Mat::Zero(p.rows(), p.cols());
        v = Mat::Zero(p.rows(), p.cols());
      }
      m = b1_ * m + (1.0 - b1_) * g;
      v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
      const double lr = lr_of(name);
      if (decay_ > 0.0 && decays(name)) p *= (1.0 - lr * decay_);
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
  }

  int steps_taken() const { return t_; }

 private:
  double b1_, b2_, eps_, decay_;
  int t_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> state_;
};

struct TrainContext {
  ModelConfig model;
  const SyntheticRenderer* renderer = nullptr;
  const PerceptualStub* perceptual = nullptr;
};

/// Loss and gradients of one example. Stage 1 draws (t, x0) from `rng`.
inline double example_loss(const TrainingExample& ex, const ParameterStore<double>& params, int stage,
                           const TrainContext& ctx, const LossWeights& w, std::mt19937_64& rng,
                           std::map<std::string, Mat>* grads, LossBreakdown* out) {
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  const double t = ut(rng);
  const FlowSample s = interpolate(gaussian_noise(ex.x1.rows(), ex.x1.cols(), rng), ex.x1, t);
  ag::Graph<double> g(grads != nullptr);
  Binder<double> P(g, params, grads != nullptr, grads);
  ag::Var<double> loss;
  if (stage == 1) {
    ag::Var<double> xt = g.reference(s.xt);
    ag::Var<double> v = velocity_forward(xt, t, ex.cond, P, ctx.model);
    loss = stage1_loss(v, g.reference(s.target_velocity), pose_columns(one_step_endpoint(xt, t, v)), w, out);
  } else {
    if (!ctx.renderer || !ctx.perceptual) throw InvalidArgument("stage 2 needs a renderer and a perceptual stub");
    if (ex.images.rows() != ex.x1.rows()) throw InvalidArgument("stage 2 needs reference images");
    loss = stage2_loss(s, ex.cond, P, ctx.model, *ctx.renderer, *ctx.perceptual, ex.images, w, out);
  }
  if (grads) g.backward(loss);
  return loss.item();
}

/// One optimizer update on a batch. Throws NumericFailure(step) when the loss
/// is not finite.
inline double train_step(const std::vector<const TrainingExample*>& batch, ParameterStore<double>& params, AdamW& opt,
                         const TrainConfig& cfg, int step, const TrainContext& ctx, std::mt19937_64& rng,
                         LossBreakdown* out = nullptr) {
  if (batch.empty()) throw InvalidArgument("train_step: empty batch");
  std::map<std::string, Mat> grads;
  double total = 0.0;
  LossBreakdown sum;
  for (const auto* ex : batch) {
    LossBreakdown b;
    total += example_loss(*ex, params, cfg.stage, ctx, cfg.weights, rng, &grads, &b);
    for (const auto& [k, v] : b.terms) sum.terms[k] += v;
  }
  const double n = static_cast<double>(batch.size());
  total /= n;
  if (!std::isfinite(total)) throw NumericFailure("train_step: non-finite loss", step);
  for (auto& [_, g] : grads) {
    g /= n;
    if (!g.allFinite()) throw NumericFailure("train_step: non-finite gradient", step);
  }
  const double lr = cfg.lr_at(step);
  opt.step(params, grads, [&](const std::string& name) {
    return cfg.stage == 2 && is_renderer_param(name) ? lr * cfg.renderer_lr_scale : lr;
  });
  if (out) {
    out->terms.clear();
    for (const auto& [k, v] : sum.terms) out->terms[k] = v / n;
    out->total = total;
  }
  return total;
}

struct LossRecord {
  int step = 0;
  LossBreakdown loss;
};

/// Runs cfg.steps updates with batches drawn uniformly from `pool`.
inline std::vector<LossRecord> train(ParameterStore<double>& params, const std::vector<TrainingExample>& pool,
                                     const TrainConfig& cfg, const TrainContext& ctx,
                                     const std::function<void(const LossRecord&)>& on_step = {}) {
  cfg.validate();
  if (pool.empty()) throw InvalidArgument("train: empty pool");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  AdamW opt(cfg);
  std::vector<LossRecord> curve;
  curve.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<const TrainingExample*> batch(static_cast<std::size_t>(cfg.batch));
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& b : batch) b = &pool[pick(rng)];
    LossRecord rec;
    rec.step = step;
    train_step(batch, params, opt, cfg, step, ctx, rng, &rec.loss);
    curve.push_back(rec);
    if (on_step) on_step(rec);
  }
  return curve;
}

/// CSV with header step,total,<terms in key order>.
inline void write_loss_curve(const std::string& path, const std::vector<LossRecord>& curve) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  os << "step,total";
  if (!curve.empty()) {
    for (const auto& [k, _] : curve.front().loss.terms) os << ',' << k;
  }
  os << '\n';
  char buf[64];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss.total);
    os << r.step << ',' << buf;
    for (const auto& [_, v] : r.loss.terms) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

/// Mean of `values` over [begin, end).
inline double window_mean(const std::vector<LossRecord>& curve, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += curve[i].loss.total;
  return s / static_cast<double>(end - begin);
}

}  // namespace headflow

#endif  // HEADFLOW_TRAIN_HPP
