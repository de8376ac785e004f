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

// headflow command line: run, train, eval, bench, gradcheck.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
// 1 anything else. HEADFLOW_OUT_DIR sets the default output directory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "headflow/headflow.hpp"

namespace {

using namespace headflow;
using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Keys in a --config file replace the corresponding flags.
void apply_engine_overrides(EngineConfig& c, const json& j) {
  for (const auto& [key, v] : j.items()) {
    if (key == "model_config") c.model_config_path = v.get<std::string>();
    else if (key == "checkpoint") c.checkpoint_path = v.get<std::string>();
    else if (key == "random_init") c.random_init = v.get<bool>();
    else if (key == "steps") c.steps = v.get<int>();
    else if (key == "magnitude") c.magnitude = {v.get<double>(), v.get<double>()};
    else if (key == "rot_mag") c.magnitude.rot_mag = v.get<double>();
    else if (key == "trans_mag") c.magnitude.trans_mag = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "scenario") c.scenario_path = v.get<std::string>();
    else if (key == "out") c.output_dir = v.get<std::string>();
    else if (key == "producer_threads") c.producer_threads = v.get<int>();
    else throw ConfigError("engine config: unknown key '" + key + "'");
  }
}

struct EngineFlags {
  EngineConfig cfg;
  std::string config_file;
  double magnitude = -1.0;
  double rot_mag = -1.0, trans_mag = -1.0;
};

void add_engine_flags(CLI::App* app, EngineFlags& f) {
  app->add_option("--model-config", f.cfg.model_config_path, "Model config JSON (default: full-size model)");
  app->add_option("--checkpoint", f.cfg.checkpoint_path, "Checkpoint file");
  app->add_flag("--random-init", f.cfg.random_init, "Use seeded random weights when no checkpoint is given");
  app->add_option("--steps", f.cfg.steps, "Euler sampling steps")->capture_default_str();
  app->add_option("--magnitude", f.magnitude, "Magnitude guidance for rotation and translation (default 0.3)");
  app->add_option("--rot-mag", f.rot_mag, "Rotation magnitude guidance");
  app->add_option("--trans-mag", f.trans_mag, "Translation magnitude guidance");
  app->add_option("--seed", f.cfg.seed, "Noise seed")->capture_default_str();
  app->add_option("--config", f.config_file, "JSON file whose keys override flags");
}

EngineConfig resolve(EngineFlags& f) {
  if (f.magnitude >= 0.0) f.cfg.magnitude = {f.magnitude, f.magnitude};
  if (f.rot_mag >= 0.0) f.cfg.magnitude.rot_mag = f.rot_mag;
  if (f.trans_mag >= 0.0) f.cfg.magnitude.trans_mag = f.trans_mag;
  if (!f.config_file.empty()) apply_engine_overrides(f.cfg, load_json(f.config_file));
  f.cfg.validate();
  return f.cfg;
}

int cmd_run(EngineFlags& f) {
  const EngineConfig c = resolve(f);
  if (c.scenario_path.empty()) throw ConfigError("run: --scenario is required");
  const RunResult r = run_scenario(c);
  const std::string dir = c.output_dir.empty() ? default_output_dir() : c.output_dir;
  std::printf("windows %zu, frames %lld -> %s/trace.csv, %s/windows.jsonl\n", r.windows.size(),
              static_cast<long long>(r.trace.size()), dir.c_str(), dir.c_str());
  return 0;
}

struct TrainFlags {
  std::string config_file, model_config, init_checkpoint, out;
  int clips = 512;
  std::uint64_t data_seed = 1, init_seed = 5;
};

int cmd_train(const TrainFlags& f) {
  TrainConfig tc = f.config_file.empty() ? TrainConfig{} : load_train_config(f.config_file);
  tc.validate();
  const ModelConfig mc = f.model_config.empty() ? MicroTask::model_config() : load_model_config(f.model_config);
  MicroTask task;
  task.window = mc.window;
  task.history = mc.history_len;
  const NormalizationSpec norm = task.fit(f.clips, f.data_seed + 1000);
  auto pool = task.pool(f.clips, f.data_seed, norm);

  ParameterStore<double> params = f.init_checkpoint.empty() ? init_parameters(mc, f.init_seed)
                                                            : load_checkpoint(f.init_checkpoint);
  const SyntheticRenderer renderer(BlendshapeModel::synthetic());
  const PerceptualStub perceptual;
  if (tc.stage == 2) {
    MicroTask::attach_images(pool, renderer, renderer.init_parameters());
    if (!params.contains(SyntheticRenderer::kIntensity)) params.merge(renderer.init_parameters());
  }
  check_compatible(params.without_prefix("renderer."), init_parameters(mc, 0));

  const std::string dir = f.out.empty() ? default_output_dir() : f.out;
  std::filesystem::create_directories(dir);
  TrainContext ctx{mc, &renderer, &perceptual};
  const auto curve = train(params, pool, tc, ctx, [&](const LossRecord& r) {
    if ((r.step + 1) % 100 == 0) std::printf("step %d loss %.6g\n", r.step + 1, r.loss.total);
  });
  save_checkpoint(dir + "/checkpoint.bin", params);
  write_loss_curve(dir + "/loss.csv", curve);
  std::ofstream(dir + "/model_config.json") << json(mc).dump(2) << '\n';
  std::ofstream(dir + "/normalization.json")
      << json{{"rot_min", norm.rot_min}, {"rot_max", norm.rot_max}, {"trans_min", norm.trans_min},
              {"trans_max", norm.trans_max}}.dump(2)
      << '\n';
  if (curve.size() >= 60) {
    std::printf("loss: first-10 mean %.6g, last-50 mean %.6g\n", window_mean(curve, 0, 10),
                window_mean(curve, curve.size() - 50, curve.size()));
  }
  std::printf("wrote %s/checkpoint.bin and %s/loss.csv\n", dir.c_str(), dir.c_str());
  return 0;
}

struct EvalFlags {
  std::string pred, gt, pred_images, gt_images;
  int sid_k = 10;
};

int cmd_eval(const EvalFlags& f) {
  const MotionTrace p = read_trace(f.pred), g = read_trace(f.gt);
  if (p.size() != g.size()) throw ConfigError("eval: traces have different lengths");
  EvalOptions o;
  o.sid_clusters = f.sid_k;
  Mat pi, gi;
  const bool images = !f.pred_images.empty() && !f.gt_images.empty();
  if (images) {
    pi = read_images(f.pred_images).pixels;
    gi = read_images(f.gt_images).pixels;
  }
  const MetricReport r = evaluate(p.frames, g.frames, BlendshapeModel::synthetic(), o, images ? &pi : nullptr,
                                  images ? &gi : nullptr);
  std::cout << json(r).dump(2) << '\n';
  return 0;
}

struct BenchFlags {
  EngineFlags engine;
  int windows = 3;
  std::string precision = "double";
};

int cmd_bench(BenchFlags& f) {
  const EngineConfig c = resolve(f.engine);
  EngineConfig withweights = c;
  if (c.checkpoint_path.empty()) withweights.random_init = true;
  const auto [mc, params] = load_engine_model(withweights);
  const BenchReport r = f.precision == "float" ? bench<float>(mc, params, c.steps, f.windows, c.seed)
                                               : bench<double>(mc, params, c.steps, f.windows, c.seed);
  json j = r;
  j["precision"] = f.precision;
  std::cout << j.dump(2) << '\n';
  std::printf("coefficient generation: %.1f FPS (reference figure: over 900 FPS on a desktop GPU)\n",
              r.coefficient_fps);
  std::printf("with synthetic renderer: %.1f FPS (reference figure: 59 FPS with a neural renderer on a GPU)\n",
              r.end_to_end_fps);
  std::printf("one %d-frame window: %.3f s; real time at 25 FPS needs <= %.1f s\n", r.window, r.seconds_per_window,
              r.window / 25.0);
  return 0;
}

struct GradFlags {
  int samples = 240;
  double step = 1e-5;
  std::uint64_t seed = 3;
};

int cmd_gradcheck(const GradFlags& f) {
  const GradcheckProblem prob = GradcheckProblem::micro();
  GradcheckOptions o;
  o.samples = f.samples;
  o.step = f.step;
  o.seed = f.seed;
  bool ok = true;
  std::set<std::string> families;
  for (int stage : {1, 2}) {
    const GradientReport r = gradient_check(prob, stage, o);
    std::cout << json(r).dump(2) << '\n';
    ok = ok && r.pass();
    for (const auto& fam : r.families()) families.insert(fam);
  }
  for (const auto& fam : required_families()) {
    if (!families.count(fam)) {
      std::printf("family %s not covered\n", fam.c_str());
      ok = false;
    }
  }
  std::printf("gradient check %s\n", ok ? "passed" : "FAILED");
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headflow: streaming speech-to-facial-motion engine"};
  app.require_subcommand(1);

  EngineFlags run_flags;
  auto* run = app.add_subcommand("run", "Run a conversation scenario and write a motion trace");
  add_engine_flags(run, run_flags);
  run->add_option("--scenario", run_flags.cfg.scenario_path, "Scenario file (JSON Lines)");
  run->add_option("--out", run_flags.cfg.output_dir, "Output directory (default $HEADFLOW_OUT_DIR or headflow_out)");
  run->add_option("--producer-threads", run_flags.cfg.producer_threads, "1 or 2 ingest threads")
      ->capture_default_str();

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train on the synthetic tone-to-motion task");
  train_cmd->add_option("--config", train_flags.config_file, "Training config JSON");
  train_cmd->add_option("--model-config", train_flags.model_config, "Model config JSON (default: task model)");
  train_cmd->add_option("--init", train_flags.init_checkpoint, "Start from this checkpoint");
  train_cmd->add_option("--clips", train_flags.clips, "Training clips")->capture_default_str();
  train_cmd->add_option("--data-seed", train_flags.data_seed, "Task data seed")->capture_default_str();
  train_cmd->add_option("--init-seed", train_flags.init_seed, "Weight init seed")->capture_default_str();
  train_cmd->add_option("--out", train_flags.out, "Output directory");

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Compare a predicted trace with a ground-truth trace");
  eval->add_option("--pred", eval_flags.pred, "Predicted trace CSV")->required();
  eval->add_option("--gt", eval_flags.gt, "Ground-truth trace CSV")->required();
  eval->add_option("--pred-images", eval_flags.pred_images, "Predicted image sequence");
  eval->add_option("--gt-images", eval_flags.gt_images, "Ground-truth image sequence");
  eval->add_option("--sid-k", eval_flags.sid_k, "Clusters for SID")->capture_default_str();

  BenchFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "Measure sampling and rendering throughput");
  add_engine_flags(bench_cmd, bench_flags.engine);
  bench_cmd->add_option("--windows", bench_flags.windows, "Windows to time")->capture_default_str();
  bench_cmd->add_option("--precision", bench_flags.precision, "double or float")
      ->check(CLI::IsMember({"double", "float"}))
      ->capture_default_str();

  GradFlags grad_flags;
  auto* grad = app.add_subcommand("gradcheck", "Compare gradients with finite differences on the micro model");
  grad->add_option("--samples", grad_flags.samples, "Sampled parameters per stage")->capture_default_str();
  grad->add_option("--step", grad_flags.step, "Finite-difference step")->capture_default_str();
  grad->add_option("--seed", grad_flags.seed, "Sampling seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*train_cmd) return cmd_train(train_flags);
    if (*eval) return cmd_eval(eval_flags);
    if (*bench_cmd) return cmd_bench(bench_flags);
    if (*grad) return cmd_gradcheck(grad_flags);
  } catch (const NumericFailure& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
