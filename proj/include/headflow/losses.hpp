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

// Training objectives.
//
// Coefficient loss: sum over parameter groups of lambda_k * mean squared
// velocity error within the group, plus lambda_smooth times the summed
// squared frame-to-frame differences of the predicted endpoint's rotation
// and translation.
//
// Image loss: the endpoint x_t + (1 - t) v is rendered and compared with the
// reference frames by mean absolute pixel error and mean squared error of
// frozen convolutional features.

#ifndef HEADFLOW_LOSSES_HPP
#define HEADFLOW_LOSSES_HPP

#include <map>
#include <string>

#include <json.hpp>

#include "headflow/autograd.hpp"
#include "headflow/dit.hpp"
#include "headflow/flow.hpp"
#include "headflow/motion.hpp"
#include "headflow/renderer.hpp"

namespace headflow {

struct LossWeights {
  double expr = 0.6;
  double jaw = 0.1;
  double eye = 0.1;
  double rot = 0.1;
  double trans = 0.1;
  double smooth = 0.1;
  double coef = 0.2;
  double img = 1.0;
  double l1 = 0.2;
  double perc = 0.2;

  double group(std::size_t k) const {
    const double w[] = {expr, jaw, eye, rot, trans};
    return w[k];
  }

  void validate() const {
    for (double v : {expr, jaw, eye, rot, trans, smooth, coef, img, l1, perc}) {
      if (!(v >= 0.0)) throw ConfigError("loss weights must be nonnegative");
    }
  }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"expr", w.expr},     {"jaw", w.jaw},   {"eye", w.eye}, {"rot", w.rot},
                     {"trans", w.trans},   {"smooth", w.smooth}, {"coef", w.coef},
                     {"img", w.img},       {"l1", w.l1},     {"perc", w.perc}};
}

inline void from_json(const nlohmann::json& j, LossWeights& w) {
  for (auto& [key, field] : std::map<std::string, double*>{{"expr", &w.expr},   {"jaw", &w.jaw},
                                                           {"eye", &w.eye},     {"rot", &w.rot},
                                                           {"trans", &w.trans}, {"smooth", &w.smooth},
                                                           {"coef", &w.coef},   {"img", &w.img},
                                                           {"l1", &w.l1},       {"perc", &w.perc}}) {
    if (j.contains(key)) j.at(key).get_to(*field);
  }
}

/// Named loss terms, unweighted, plus the weighted total.
struct LossBreakdown {
  std::map<std::string, double> terms;
  double total = 0.0;
};

inline constexpr int kPoseColumns = 2 * layout::kPoseDim;  // rotation then translation

template <class S>
ag::Var<S> stage1_loss(ag::Var<S> pred, ag::Var<S> target, ag::Var<S> endpoint_pose, const LossWeights& w,
                       LossBreakdown* out = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.cols() != layout::kMotionDim) {
    throw InvalidArgument("stage1_loss: prediction and target must both be T x 115");
  }
  if (endpoint_pose.rows() != pred.rows() || endpoint_pose.cols() != kPoseColumns) {
    throw InvalidArgument("stage1_loss: endpoint pose must be T x 6");
  }
  ag::Var<S> diff = ag::sub(pred, target);
  ag::Var<S> total;
  for (std::size_t k = 0; k < kMotionGroups.size(); ++k) {
    const auto& grp = kMotionGroups[k];
    ag::Var<S> term = ag::mean(ag::square(ag::cols(diff, grp.offset, grp.size)));
    if (out) out->terms[grp.name] = static_cast<double>(term.item());
    term = ag::scale(term, static_cast<S>(w.group(k)));
    total = total.valid() ? ag::add(total, term) : term;
  }
  ag::Var<S> smooth;
  if (pred.rows() >= 2) {
    const auto T = endpoint_pose.rows();
    smooth = ag::sum(ag::square(ag::sub(ag::rows(endpoint_pose, 1, T - 1), ag::rows(endpoint_pose, 0, T - 1))));
  } else {
    smooth = pred.graph().constant(Matrix<S>::Zero(1, 1));
  }
  if (out) out->terms["smooth"] = static_cast<double>(smooth.item());
  total = ag::add(total, ag::scale(smooth, static_cast<S>(w.smooth)));
  if (out) out->total = static_cast<double>(total.item());
  return total;
}

inline double stage1_loss(const Mat& pred, const Mat& target, const Mat& endpoint_pose, const LossWeights& w,
                          LossBreakdown* out = nullptr) {
  ag::Graph<double> g(false);
  return stage1_loss(g.reference(pred), g.reference(target), g.reference(endpoint_pose), w, out).item();
}

/// Pose columns (rotation, translation) of a T x 115 window.
template <class S>
ag::Var<S> pose_columns(ag::Var<S> frames) {
  return ag::cols(frames, layout::kRotation, kPoseColumns);
}

/// Image term lambda_l1 * mean|I_hat - I| + lambda_perc * mean (psi(I_hat) - psi(I))^2.
inline ag::Var<double> image_loss(ag::Var<double> rendered, const Mat& reference, const PerceptualStub& perceptual,
                                  const LossWeights& w, LossBreakdown* out = nullptr) {
  ag::Graph<double>& g = rendered.graph();
  if (rendered.rows() != reference.rows() || rendered.cols() != reference.cols()) {
    throw InvalidArgument("image_loss: rendered and reference images differ in shape");
  }
  ag::Var<double> ref = g.reference(reference);
  ag::Var<double> l1 = ag::mean(ag::abs(ag::sub(rendered, ref)));
  ag::Var<double> perc =
      ag::mean(ag::square(ag::sub(perceptual.features(rendered), g.constant(perceptual.features(reference)))));
  if (out) {
    out->terms["image_l1"] = l1.item();
    out->terms["perceptual"] = perc.item();
  }
  return ag::add(ag::scale(l1, w.l1), ag::scale(perc, w.perc));
}

/// Joint objective on one flow sample. `P` must bind both model and renderer
/// parameters. Returns the total; `endpoint` receives x_hat_1 when given.
inline ag::Var<double> stage2_loss(const FlowSample& sample, const ConditionSet& cond, Binder<double>& P,
                                   const ModelConfig& cfg, const SyntheticRenderer& renderer,
                                   const PerceptualStub& perceptual, const Mat& gt_images, const LossWeights& w,
                                   LossBreakdown* out = nullptr, Mat* endpoint = nullptr) {
  ag::Graph<double>& g = P.graph();
  ag::Var<double> xt = g.reference(sample.xt);
  ag::Var<double> v = velocity_forward(xt, sample.t, cond, P, cfg);
  ag::Var<double> x1_hat = one_step_endpoint(xt, sample.t, v);
  if (endpoint) *endpoint = x1_hat.value();
  LossBreakdown coef;
  ag::Var<double> l_coef =
      stage1_loss(v, g.reference(sample.target_velocity), pose_columns(x1_hat), w, out ? &coef : nullptr);
  ag::Var<double> img = renderer.render(x1_hat, P(SyntheticRenderer::kIntensity));
  ag::Var<double> l_img = image_loss(img, gt_images, perceptual, w, out);
  ag::Var<double> total = ag::add(ag::scale(l_coef, w.coef), ag::scale(l_img, w.img));
  if (out) {
    for (const auto& [k, val] : coef.terms) out->terms[k] = val;
    out->terms["coef"] = l_coef.item();
    out->terms["image"] = l_img.item();
    out->total = total.item();
  }
  return total;
}

}  // namespace headflow

#endif  // HEADFLOW_LOSSES_HPP
