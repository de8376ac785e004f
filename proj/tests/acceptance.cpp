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

// Acceptance run: one [PASS]/[FAIL] line per criterion. Exit status is the
// number of failures.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "headflow/headflow.hpp"
#include "oracles.hpp"

using namespace headflow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Scheduler against the brute-force simulator

struct Op {
  enum Kind { kMic, kLlm, kFlush, kTick } kind;
  AudioBuffer buffer;
  int T = 0;
  std::vector<float>& audio() { return buffer.samples; }
  const std::vector<float>& audio() const { return buffer.samples; }
};

// Counter-based distinct sample values; a serial generator would dominate
// the runtime.
void fill_audio(std::vector<float>& v, std::uint64_t& state) {
  const std::uint64_t base = state;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (i + 1);
    z = (z ^ (z >> 31)) * 0xBF58476D1CE4E5B9ull;
    z ^= z >> 29;
    v[i] = static_cast<float>(static_cast<std::int64_t>(z >> 40) - (1 << 23)) / static_cast<float>(1 << 23);
  }
  state += 0x9E3779B97F4A7C15ull * (v.size() + 1);
}

std::vector<Op> random_schedule(std::mt19937_64& rng, int ops) {
  std::uniform_int_distribution<int> kind(0, 9), small(0, 40), large(0, 150), ragged(0, 639), Td(0, 2);
  std::uint64_t state = rng() | 1;
  std::vector<Op> s;
  for (int i = 0; i < ops; ++i) {
    const int k = kind(rng);
    Op op{k < 3 ? Op::kMic : k < 6 ? Op::kLlm : k < 7 ? Op::kFlush : Op::kTick, {}, 0};
    if (op.kind == Op::kMic || op.kind == Op::kLlm) {
      // Mostly short chunks, sometimes long enough to overrun the listening
      // buffer or fill a whole window at once; ragged tails half the time.
      int n = (kind(rng) < 2 ? large(rng) : small(rng)) * 640;
      if (kind(rng) < 5) n += ragged(rng);
      op.audio().resize(static_cast<std::size_t>(n));
      fill_audio(op.audio(), state);
    }
    if (op.kind == Op::kTick) op.T = std::array<int, 3>{20, 50, 100}[static_cast<std::size_t>(Td(rng))];
    s.push_back(std::move(op));
  }
  return s;
}

bool same_window(const ScheduledWindow& a, const ScheduledWindow& b) {
  return a.waveform.size() == b.waveform.size() &&
         std::memcmp(a.waveform.data(), b.waveform.data(), a.waveform.size() * sizeof(float)) == 0 &&
         a.states == b.states && a.speak_frames_consumed == b.speak_frames_consumed;
}

std::vector<ScheduledWindow> run_library(const std::vector<Op>& ops, int capacity) {
  SchedulerState s(capacity);
  std::vector<ScheduledWindow> out;
  for (const auto& op : ops) {
    switch (op.kind) {
      case Op::kMic: s.ingest(Source::kMic, op.buffer); break;
      case Op::kLlm: s.ingest(Source::kLlm, op.buffer); break;
      case Op::kFlush: s.flush_speaking(); break;
      case Op::kTick: out.push_back(s.next_window(op.T)); break;
    }
  }
  return out;
}

Outcome criterion_scheduler() {
  const auto t0 = clk::now();
  std::mt19937_64 rng(20261015);
  std::uniform_int_distribution<int> opsd(4, 24);
  const int capacity = 100;
  int windows = 0, bad = 0;
  // branch coverage: full speaking, speech-first, speech-last, listening,
  // listening windows read after the buffer wrapped
  std::array<int, 5> seen_case{};
  std::string first_bad;
  for (int run = 0; run < 10000; ++run) {
    const auto ops = random_schedule(rng, opsd(rng));
    SchedulerState lib(capacity);
    oracle::SchedulerSim sim(capacity);
    std::vector<ScheduledWindow> produced;
    long long consumed = 0;
    std::size_t mic_samples = 0;
    int tick = 0;
    auto fail = [&](const std::string& why) {
      if (bad++ == 0) first_bad = fmt("run %d tick %d: ", run, tick) + why;
    };
    for (const auto& op : ops) {
      switch (op.kind) {
        case Op::kMic:
          lib.ingest(Source::kMic, op.buffer);
          sim.ingest_mic(op.audio());
          mic_samples += op.audio().size();
          break;
        case Op::kLlm:
          lib.ingest(Source::kLlm, op.buffer);
          sim.ingest_llm(op.audio());
          break;
        case Op::kFlush:
          lib.flush_speaking();
          sim.flush();
          break;
        case Op::kTick: {
          ScheduledWindow w = lib.next_window(op.T);
          const oracle::Window o = sim.tick(op.T);
          ++windows;
          if (w.waveform.size() != o.samples.size() ||
              std::memcmp(w.waveform.data(), o.samples.data(), o.samples.size() * sizeof(float)) != 0) {
            fail("waveform differs from simulator");
          }
          std::vector<int> states;
          for (auto q : w.states) states.push_back(static_cast<int>(q));
          if (states != o.states) fail("states differ from simulator");
          if (w.speak_frames_consumed != o.consumed) fail("consumed count differs");
          // Conservation: every state slot is filled, +1 exactly for the
          // consumed speaking frames, and the queue accounting balances.
          int plus = 0;
          for (int q : states) plus += q == 1;
          if (static_cast<int>(states.size()) != op.T || plus != w.speak_frames_consumed) fail("state slots");
          consumed += w.speak_frames_consumed;
          if (consumed != lib.speak_cursor() || consumed != sim.cursor()) fail("speak cursor accounting");
          const int U = w.speak_frames_consumed;
          if (U == op.T) ++seen_case[0];
          else if (U > 0) ++seen_case[states.front() == 1 ? 1 : 2];
          else ++seen_case[3];
          if (U < op.T && mic_samples / 640 > static_cast<std::size_t>(capacity)) ++seen_case[4];
          produced.push_back(std::move(w));
          ++tick;
          break;
        }
      }
    }
    // Causality: rewriting everything after a random tick leaves earlier
    // windows untouched.
    if (tick > 0) {
      const int cut = std::uniform_int_distribution<int>(0, tick - 1)(rng);
      std::vector<Op> alt;
      std::uint64_t state = rng() | 1;
      int seen = 0;
      for (const auto& op : ops) {
        Op copy = op;
        if (seen > cut) {
          fill_audio(copy.audio(), state);
          if (copy.kind == Op::kFlush) copy.kind = Op::kTick, copy.T = 20;
        }
        if (op.kind == Op::kTick) ++seen;
        alt.push_back(std::move(copy));
      }
      const auto b = run_library(alt, capacity);
      for (int k = 0; k <= cut; ++k) {
        if (!same_window(produced[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(k)])) {
          fail("window depends on later input");
          break;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome r;
  const int rarest = *std::min_element(seen_case.begin(), seen_case.end());
  r.pass = bad == 0 && secs < 30.0 && rarest >= 100;
  r.detail = fmt("10000 schedules, %d windows (full %d, speech-first %d, speech-last %d, listening %d, wrapped %d), "
                 "%d mismatches, %.1f s",
                 windows, seen_case[0], seen_case[1], seen_case[2], seen_case[3], seen_case[4], bad, secs);
  if (bad) r.detail += " (" + first_bad + ")";
  return r;
}

// ---------------------------------------------------------------------------
// 2. Straight paths

Outcome criterion_straight_path() {
  std::mt19937_64 rng(7);
  double worst_const = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Mat x0 = gaussian_noise(20, layout::kMotionDim, rng);
    const Mat c = gaussian_noise(20, layout::kMotionDim, rng);
    auto field = [&c](const Mat&, double, int) { return c; };
    const Mat ref = euler_integrate<double>(field, x0, 0, 1);
    for (int steps : {2, 4, 10, 25}) {
      const Mat x = euler_integrate<double>(field, x0, 0, steps);
      worst_const = std::max(worst_const, (x - ref).cwiseAbs().maxCoeff());
    }
  }
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  double worst_one = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat x0 = gaussian_noise(20, layout::kMotionDim, rng);
    const Mat x1 = gaussian_noise(20, layout::kMotionDim, rng);
    const FlowSample s = interpolate(x0, x1, ut(rng));
    const Mat est = one_step_endpoint<double>(s.xt, s.t, s.target_velocity);
    worst_one = std::max(worst_one, (est - x1).cwiseAbs().maxCoeff());
  }
  return {worst_const <= 1e-12 && worst_one <= 1e-10,
          fmt("constant field max diff %.2e over steps {1,2,4,10,25}; one-step max error %.2e over 1000 samples",
              worst_const, worst_one)};
}

// ---------------------------------------------------------------------------
// 3. Gradients

Outcome criterion_gradients() {
  const auto t0 = clk::now();
  const GradcheckProblem prob = GradcheckProblem::micro();
  GradcheckOptions o;
  const GradientReport s1 = gradient_check(prob, 1, o);
  const GradientReport s2 = gradient_check(prob, 2, o);
  std::set<std::string> fams = s1.families();
  for (const auto& f : s2.families()) fams.insert(f);
  std::string missing;
  for (const auto& f : required_families()) {
    if (!fams.count(f)) missing += " " + f;
  }
  std::size_t trainable = 0;
  for (const auto& [name, _] : prob.params.tensors()) trainable += 1;
  const bool all_tensors = s2.per_tensor_max.size() == trainable;
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = s1.pass() && s2.pass() && s1.entries.size() >= 200 && s2.entries.size() >= 200 && missing.empty() &&
           all_tensors && secs < 300.0;
  r.detail = fmt("stage 1 max rel %.2e (%zu entries), stage 2 max rel %.2e (%zu entries), %zu/%zu tensors, %.1f s",
                 s1.max_rel_error, s1.entries.size(), s2.max_rel_error, s2.entries.size(), s2.per_tensor_max.size(),
                 trainable, secs);
  if (!missing.empty()) r.detail += "; missing families:" + missing;
  return r;
}

// ---------------------------------------------------------------------------
// 4-6. Micro-task training

struct TrainedMicro {
  ModelConfig cfg;
  ParameterStore<double> params;
  std::vector<LossRecord> curve;
  std::vector<TrainingExample> train_pool, test_pool;
  double seconds = 0.0;
};

const TrainedMicro& trained_micro() {
  static const TrainedMicro m = [] {
    TrainedMicro t;
    const auto t0 = clk::now();
    MicroTask task;
    const NormalizationSpec norm = task.fit(512, 99);
    t.train_pool = task.pool(512, 1, norm);
    t.test_pool = task.pool(64, 777, norm);
    t.cfg = MicroTask::model_config();
    t.params = init_parameters(t.cfg, 5);
    TrainContext ctx{t.cfg, nullptr, nullptr};
    TrainConfig tc;
    tc.steps = 4000;
    tc.batch = 8;
    tc.lr = 1.5e-3;
    tc.warmup_steps = 100;
    tc.schedule = "cosine";
    t.curve = train(t.params, t.train_pool, tc, ctx);
    t.seconds = seconds_since(t0);
    return t;
  }();
  return m;
}

Outcome criterion_training() {
  const TrainedMicro& m = trained_micro();
  const double first = window_mean(m.curve, 0, 10);
  const double at2000 = window_mean(m.curve, 1950, 2000);
  const double drop = 1.0 - at2000 / first;

  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(layout::kMotionDim);
  Eigen::Index n = 0;
  for (const auto& ex : m.train_pool) {
    mean += ex.x1.colwise().sum();
    n += ex.x1.rows();
  }
  mean /= static_cast<double>(n);
  const VelocityModel<double> model(m.cfg, m.params);
  const BlendshapeModel bs = BlendshapeModel::synthetic();
  double err = 0.0, base = 0.0;
  for (std::size_t i = 0; i < m.test_pool.size(); ++i) {
    const auto& ex = m.test_pool[i];
    const Mat gen = model.sample(ex.cond, 4, 1000 + i);
    err += lve(gen, ex.x1, bs);
    base += lve(mean.replicate(ex.x1.rows(), 1), ex.x1, bs);
  }
  const double ratio = base / err;
  return {drop >= 0.8 && ratio >= 3.0,
          fmt("loss %.3f -> %.4f by step 2000 (drop %.1f%%); LVE %.4f vs mean-predictor %.4f (%.2fx); trained in %.0f s",
              first, at2000, 100.0 * drop, err / m.test_pool.size(), base / m.test_pool.size(), ratio, m.seconds)};
}

Outcome criterion_listening() {
  const TrainedMicro& m = trained_micro();
  const VelocityModel<double> model(m.cfg, m.params);
  double listen = 0.0, speak = 0.0;
  int nl = 0, ns = 0;
  for (std::size_t i = 0; i < m.test_pool.size(); ++i) {
    const auto pattern = static_cast<StatePattern>(i % 4);
    if (pattern != StatePattern::kListen && pattern != StatePattern::kSpeak) continue;
    const Mat gen = model.sample(m.test_pool[i].cond, 4, 1000 + i);
    const Eigen::ArrayXd jaw = gen.col(layout::kJaw).array();
    const double var = (jaw - jaw.mean()).square().mean();
    if (pattern == StatePattern::kListen) {
      listen += var;
      ++nl;
    } else {
      speak += var;
      ++ns;
    }
  }
  const double ratio = (listen / nl) / (speak / ns);
  return {ratio < 0.1, fmt("jaw-opening variance listening %.3e vs speaking %.3e (ratio %.3f)", listen / nl,
                            speak / ns, ratio)};
}

Outcome criterion_magnitude() {
  const TrainedMicro& m = trained_micro();
  const VelocityModel<double> model(m.cfg, m.params);
  std::string detail;
  bool ok = true;
  for (int which = 0; which < 2; ++which) {
    double prev = -1.0;
    detail += which == 0 ? "rot" : "; trans";
    for (double level : {0.1, 0.5, 0.9}) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.test_pool.size(); ++i) {
        ConditionSet c = m.test_pool[i].cond;
        c.magnitude = which == 0 ? MagnitudePair{level, 0.5} : MagnitudePair{0.5, level};
        const auto raw = compute_magnitude(model.sample(c, 4, 2000 + i)).raw;
        acc += which == 0 ? raw.rot_mag : raw.trans_mag;
      }
      acc /= static_cast<double>(m.test_pool.size());
      detail += fmt(" %.4f", acc);
      ok = ok && acc >= prev;
      prev = acc;
    }
  }
  return {ok, detail + " at levels 0.1/0.5/0.9"};
}

// ---------------------------------------------------------------------------
// 7. Metric oracles

Outcome criterion_metrics() {
  std::mt19937_64 rng(99);
  const BlendshapeModel bs = BlendshapeModel::synthetic();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_window = [&](int T) {
    Mat w = Mat::Zero(T, layout::kMotionDim);
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < layout::kMotionDim; ++k) w(t, k) = 0.3 * gauss(rng);
    }
    return w;
  };
  auto random_rotations = [&](int T) {
    Mat r(T, 3);
    const double f = 0.5 + 2.0 * unit(rng), p = 6.28 * unit(rng);
    for (int t = 0; t < T; ++t) {
      for (int a = 0; a < 3; ++a) r(t, a) = 0.3 * std::sin(f * (a + 1) * t / 25.0 + p) + 0.02 * gauss(rng);
    }
    return r;
  };
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };

  std::map<std::string, double> worst;
  std::map<std::string, int> failures;
  auto check = [&](const std::string& name, double lib, double ref) {
    worst[name] = std::max(worst[name], std::abs(lib - ref));
    if (!close(lib, ref)) ++failures[name];
  };
  int beat_sets = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 2 + static_cast<int>(unit(rng) * 40);
    const Mat p = random_window(T), g = random_window(T);
    check("LVE", lve(p, g, bs), oracle::lve(p, g, bs));
    check("FDD", fdd(p, g, bs), oracle::fdd(p, g, bs));
    check("MOD", mod(p, g, bs), oracle::mod(p, g, bs));

    const Mat rp = random_rotations(100), rg = random_rotations(100);
    const auto bp = detect_beats(rp), bg = detect_beats(rg);
    const auto op = oracle::beats(rp), og = oracle::beats(rg);
    if (bp.size() != op.size() || bg.size() != og.size()) {
      ++failures["BA"];
    } else {
      for (std::size_t i = 0; i < bp.size(); ++i) check("BA", bp[i], op[i]);
      for (std::size_t i = 0; i < bg.size(); ++i) check("BA", bg[i], og[i]);
    }
    beat_sets += !bp.empty();
    check("BA", beat_alignment(rp, rg).score, oracle::ba_score(op, og, 0.1));

    const Mat gen = random_window(60), gt = random_window(120);
    check("SID", sid(gen, gt, 10, trial), oracle::sid(gen, gt, 10, trial));

    Mat a(64, 64), b(64, 64);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = unit(rng);
      b.data()[i] = std::clamp(a.data()[i] + 0.1 * gauss(rng), 0.0, 1.0);
    }
    check("PSNR", psnr(a, b), oracle::psnr(a, b));
    check("SSIM", ssim(a, b), oracle::ssim(a, b));
  }

  // Self-comparison identities, exact.
  int identity_failures = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Mat w = random_window(30);
    identity_failures += lve(w, w, bs) != 0.0;
    identity_failures += fdd(w, w, bs) != 0.0;
    identity_failures += mod(w, w, bs) != 0.0;
    const Mat r = random_rotations(100);
    if (!detect_beats(r).empty()) identity_failures += beat_alignment(r, r).score != 1.0;
    Mat a(64, 64);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = unit(rng);
    identity_failures += ssim(a, a) != 1.0;
    identity_failures += psnr(a, a) != kPsnrCap;
    const Mat same = w.row(0).replicate(30, 1);
    // One occupied cluster: -1 * log2(1 + eps) per group, averaged.
    const double h = -std::log2(1.0 + kEntropyEps);
    identity_failures += sid(same, w, 10, 0) != (0.0 + h + h + h) / 3.0;
  }

  Outcome r;
  int total_fail = identity_failures;
  for (const auto& [_, n] : failures) total_fail += n;
  r.pass = total_fail == 0 && beat_sets > 50;
  for (const auto& [name, d] : worst) r.detail += fmt("%s %.1e ", name.c_str(), d);
  r.detail += fmt("(max abs diff, 100 inputs each); %d identity failures; %d/100 inputs with beats", identity_failures,
                  beat_sets);
  return r;
}

// ---------------------------------------------------------------------------
// 8. Throughput

Outcome criterion_throughput() {
  const ModelConfig cfg = ModelConfig::full();
  ParameterStore<double> params = init_parameters(cfg, 0);
  perturb_parameters(params, 1);
  const BenchReport r = bench<double>(cfg, params, 4, 2);
  return {r.seconds_per_window <= 4.0,
          fmt("%.2f s per %d-frame window at 4 steps; %.0f coefficient FPS (reference figure: over 900 FPS, not "
              "asserted); %.0f FPS with rendering",
              r.seconds_per_window, cfg.window, r.coefficient_fps, r.end_to_end_fps)};
}

// ---------------------------------------------------------------------------
// 9. Determinism

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "headflow_acceptance_determinism";
  std::filesystem::create_directories(dir);
  {
    std::ofstream mc(dir / "model.json");
    mc << nlohmann::json(ModelConfig::micro()).dump();
    std::ofstream sc(dir / "scenario.jsonl");
    sc << R"({"settings": {"windows": 12}})" << '\n'
       << R"({"at_ms": 0, "source": "mic", "audio": {"synth": "noise", "dur_ms": 3000, "seed": 4}})" << '\n'
       << R"({"at_ms": 300, "source": "llm", "audio": {"synth": "tone", "dur_ms": 1000, "freq_hz": 220}})" << '\n'
       << R"({"at_ms": 1100, "flush": true})" << '\n'
       << R"({"at_ms": 1500, "source": "llm", "audio": {"synth": "tone", "dur_ms": 900, "freq_hz": 330}})" << '\n'
       << R"({"at_ms": 2000, "source": "llm", "audio": {"synth": "noise", "dur_ms": 650, "seed": 9}})" << '\n';
  }
  EngineConfig c;
  c.model_config_path = (dir / "model.json").string();
  c.random_init = true;
  c.seed = 42;
  c.scenario_path = (dir / "scenario.jsonl").string();
  std::vector<std::string> traces, logs;
  for (const auto& [name, threads] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 2}, {"d", 2}}) {
    c.output_dir = (dir / name).string();
    c.producer_threads = threads;
    run_scenario(c);
    traces.push_back(slurp(dir / name / "trace.csv"));
    logs.push_back(slurp(dir / name / "windows.jsonl"));
  }
  bool same = !traces[0].empty();
  for (std::size_t i = 1; i < traces.size(); ++i) same = same && traces[i] == traces[0] && logs[i] == logs[0];
  std::filesystem::remove_all(dir);
  return {same, fmt("4 runs (2 single-producer, 2 with a producer thread per source): %zu-byte traces %s",
                    traces[0].size(), same ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headflow acceptance run"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"scheduler oracle", criterion_scheduler},
      {"straight path / one-step endpoint", criterion_straight_path},
      {"gradient verification", criterion_gradients},
      {"micro-training reproducibility", criterion_training},
      {"listening suppression", criterion_listening},
      {"magnitude controllability", criterion_magnitude},
      {"metric oracles", criterion_metrics},
      {"throughput floor", criterion_throughput},
      {"determinism", criterion_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
