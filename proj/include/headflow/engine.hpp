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

// Streaming engine: scheduler -> features -> sampler -> trace.
//
// Scenario files are JSON Lines. Blank lines and lines starting with '#' are
// skipped. Every other line is one object, either an event
//   {"at_ms": 0, "source": "mic", "audio": {"synth": "noise", "dur_ms": 2000}}
//   {"at_ms": 500, "source": "llm", "audio": "reply.pcm"}
//   {"at_ms": 900, "flush": true}
// or a settings line
//   {"settings": {"windows": 6, "magnitude": [0.3, 0.5], "reference": [...115],
//                 "shape": [...300]}}
// Synth audio takes synth in {tone, noise, silence}, dur_ms, and optionally
// freq_hz, amplitude, seed. Relative audio paths resolve against the
// scenario's directory.
//
// Timing: window k is assembled at tick (k + 1) * T * 40 ms. Microphone audio
// streams in real time, one 640-sample frame becoming available every 40 ms
// after at_ms; LLM audio arrives whole at at_ms. Flushes apply at at_ms.
// Everything due at or before a tick is ingested before that tick. Without a
// window count the run stops at the first tick after every event has been
// delivered and the speaking queue has drained.
//
// Outputs in the output directory: trace.csv (see trace.hpp) and
// windows.jsonl, one line per window:
//   {"window_idx": k, "states": [[-1, 70], [1, 30]], "speak_frames_consumed": 30}
// with states run-length encoded as [value, count] pairs.

#ifndef HEADFLOW_ENGINE_HPP
#define HEADFLOW_ENGINE_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "headflow/audio.hpp"
#include "headflow/dit.hpp"
#include "headflow/params.hpp"
#include "headflow/renderer.hpp"
#include "headflow/scheduler.hpp"
#include "headflow/trace.hpp"

namespace headflow {

struct EngineConfig {
  std::string model_config_path;  // empty: full-size configuration
  std::string checkpoint_path;    // empty: requires random_init
  bool random_init = false;
  int steps = 4;
  MagnitudePair magnitude{0.3, 0.3};
  std::uint64_t seed = 0;
  std::string scenario_path;
  std::string output_dir;
  int producer_threads = 1;  // 1: ingest inline; 2: one thread per source

  void validate() const {
    if (steps < 1) throw ConfigError("engine: steps must be at least 1");
    for (double m : {magnitude.rot_mag, magnitude.trans_mag}) {
      if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("engine: magnitude must lie in [0, 1]");
    }
    if (producer_threads < 1) throw ConfigError("engine: producer_threads must be positive");
  }
};

/// Directory from HEADFLOW_OUT_DIR, else "headflow_out".
inline std::string default_output_dir() {
  const char* env = std::getenv("HEADFLOW_OUT_DIR");
  return env && *env ? std::string(env) : std::string("headflow_out");
}

struct ScenarioEvent {
  double at_ms = 0.0;
  Source source = Source::kMic;
  bool flush = false;
  AudioBuffer audio;
  int line = 0;
};

struct Scenario {
  std::vector<ScenarioEvent> events;  // sorted by at_ms, stable
  std::optional<int> windows;
  std::optional<MagnitudePair> magnitude;
  AvatarIdentity identity;
};

namespace detail {

inline AudioBuffer scenario_audio(const nlohmann::json& a, const std::filesystem::path& base, int line,
                                  const std::string& where) {
  if (a.is_string()) {
    std::filesystem::path p = a.get<std::string>();
    if (p.is_relative()) p = base / p;
    try {
      return read_waveform(p.string());
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what(), line);
    }
  }
  if (!a.is_object() || !a.contains("synth") || !a.contains("dur_ms")) {
    throw ConfigError(where + ": audio must be a path or {synth, dur_ms, ...}", line);
  }
  const auto kind = a.at("synth").get<std::string>();
  const double dur = a.at("dur_ms").get<double>();
  if (!(dur >= 0.0)) throw ConfigError(where + ": dur_ms must be nonnegative", line);
  const double amp = a.value("amplitude", kind == "tone" ? 0.5 : 0.3);
  if (kind == "tone") {
    if (!a.contains("freq_hz")) throw ConfigError(where + ": tone needs freq_hz", line);
    return synth::tone(a.at("freq_hz").get<double>(), dur, amp);
  }
  if (kind == "noise") return synth::noise(dur, a.value("seed", std::uint64_t{0}), amp);
  if (kind == "silence") return synth::silence(dur);
  throw ConfigError(where + ": unknown synth '" + kind + "'", line);
}

inline void parse_settings(const nlohmann::json& s, Scenario& sc, int line, const std::string& where) {
  for (const auto& [key, v] : s.items()) {
    if (key == "windows") {
      const int w = v.get<int>();
      if (w < 1) throw ConfigError(where + ": windows must be positive", line);
      sc.windows = w;
    } else if (key == "magnitude") {
      MagnitudePair m;
      if (v.is_number()) {
        m = {v.get<double>(), v.get<double>()};
      } else {
        const auto p = v.get<std::vector<double>>();
        if (p.size() != 2) throw ConfigError(where + ": magnitude must be a number or [rot, trans]", line);
        m = {p[0], p[1]};
      }
      sc.magnitude = m;
    } else if (key == "reference") {
      const auto r = v.get<std::vector<double>>();
      if (r.size() != layout::kMotionDim) throw ConfigError(where + ": reference needs 115 values", line);
      sc.identity.reference = MotionFrame::from_row(Eigen::Map<const Eigen::RowVectorXd>(r.data(), layout::kMotionDim));
    } else if (key == "shape") {
      const auto r = v.get<std::vector<double>>();
      if (r.size() != layout::kShapeDim) throw ConfigError(where + ": shape needs 300 values", line);
      sc.identity.shape = Eigen::Map<const Eigen::VectorXd>(r.data(), layout::kShapeDim);
    } else {
      throw ConfigError(where + ": unknown setting '" + key + "'", line);
    }
  }
}

}  // namespace detail

/// Parses a JSON Lines scenario. Errors carry "path:line: ..." messages.
inline Scenario parse_scenario(std::istream& is, const std::string& name = "scenario",
                               const std::filesystem::path& base = ".") {
  Scenario sc;
  std::string text;
  int lineno = 0;
  while (std::getline(is, text)) {
    ++lineno;
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    const std::string where = name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(where + ": " + e.what(), lineno);
    }
    try {
      if (!j.is_object()) throw ConfigError(where + ": expected an object", lineno);
      if (j.contains("settings")) {
        detail::parse_settings(j.at("settings"), sc, lineno, where);
        continue;
      }
      ScenarioEvent ev;
      ev.line = lineno;
      if (!j.contains("at_ms")) throw ConfigError(where + ": event needs at_ms", lineno);
      ev.at_ms = j.at("at_ms").get<double>();
      if (!(ev.at_ms >= 0.0)) throw ConfigError(where + ": at_ms must be nonnegative", lineno);
      if (j.value("flush", false)) {
        ev.flush = true;
      } else {
        const auto src = j.value("source", std::string{});
        if (src == "mic") {
          ev.source = Source::kMic;
        } else if (src == "llm") {
          ev.source = Source::kLlm;
        } else {
          throw ConfigError(where + ": source must be \"mic\" or \"llm\"", lineno);
        }
        if (!j.contains("audio")) throw ConfigError(where + ": event needs audio", lineno);
        ev.audio = detail::scenario_audio(j.at("audio"), base, lineno, where);
        if (ev.audio.sample_rate != kSampleRate) throw ConfigError(where + ": audio must be 16 kHz", lineno);
      }
      sc.events.push_back(std::move(ev));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": " + e.what(), lineno);
    }
  }
  std::stable_sort(sc.events.begin(), sc.events.end(),
                   [](const ScenarioEvent& a, const ScenarioEvent& b) { return a.at_ms < b.at_ms; });
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario " + path);
  return parse_scenario(is, path, std::filesystem::path(path).parent_path());
}

/// Run-length encoding of a state sequence as [value, count] pairs.
inline nlohmann::json rle_states(const LSStateSequence& q) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < q.size();) {
    std::size_t j = i;
    while (j < q.size() && q[j] == q[i]) ++j;
    out.push_back({static_cast<int>(q[i]), j - i});
    i = j;
  }
  return out;
}

inline LSStateSequence rle_decode(const nlohmann::json& runs) {
  LSStateSequence q;
  for (const auto& r : runs) {
    const int v = r.at(0).get<int>();
    q.insert(q.end(), r.at(1).get<std::size_t>(), v > 0 ? LSState::kSpeaking : LSState::kListening);
  }
  return q;
}

struct WindowRecord {
  int window_idx = 0;
  LSStateSequence states;
  int speak_frames_consumed = 0;
  Mat history;  // L x 115 history fed to this window
  LSStateSequence history_states;
};

struct RunResult {
  MotionTrace trace;
  std::vector<WindowRecord> windows;
};

/// Per-window noise seed.
inline std::uint64_t window_seed(std::uint64_t seed, int window) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(window + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Feeds scenario events into a scheduler tick by tick.
class ScenarioFeeder {
 public:
  ScenarioFeeder(const Scenario& sc, int threads) : threads_(threads) {
    for (const auto& ev : sc.events) {
      if (ev.flush) {
        flushes_.push_back(ev.at_ms);
      } else if (ev.source == Source::kLlm) {
        llm_.push_back({ev.at_ms, ev.audio});
      } else {
        // Real-time microphone: one frame per 40 ms.
        const std::size_t F = SchedulerState::kFrame;
        for (std::size_t off = 0, k = 1; off < ev.audio.samples.size(); off += F, ++k) {
          AudioBuffer chunk;
          chunk.samples.assign(ev.audio.samples.begin() + static_cast<std::ptrdiff_t>(off),
                               ev.audio.samples.begin() +
                                   static_cast<std::ptrdiff_t>(std::min(off + F, ev.audio.samples.size())));
          const double due = ev.at_ms + 40.0 * static_cast<double>(std::min(k * F, ev.audio.samples.size())) / F;
          mic_.push_back({due, std::move(chunk)});
        }
      }
    }
    std::stable_sort(mic_.begin(), mic_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  /// Ingests everything due at or before `tick_ms`. Flushes due in this
  /// interval run after LLM audio that arrived before them.
  void advance(ConcurrentScheduler& s, double tick_ms) {
    auto feed_llm = [&] {
      while (llm_next_ < llm_.size() && llm_[llm_next_].first <= tick_ms) {
        while (flush_next_ < flushes_.size() && flushes_[flush_next_] < llm_[llm_next_].first) {
          s.flush_speaking();
          ++flush_next_;
        }
        s.ingest(Source::kLlm, llm_[llm_next_++].second);
      }
      while (flush_next_ < flushes_.size() && flushes_[flush_next_] <= tick_ms) {
        s.flush_speaking();
        ++flush_next_;
      }
    };
    auto feed_mic = [&] {
      while (mic_next_ < mic_.size() && mic_[mic_next_].first <= tick_ms) s.ingest(Source::kMic, mic_[mic_next_++].second);
    };
    if (threads_ > 1) {
      std::thread llm(feed_llm);
      feed_mic();
      llm.join();
    } else {
      feed_mic();
      feed_llm();
    }
  }

  bool exhausted() const {
    return llm_next_ == llm_.size() && mic_next_ == mic_.size() && flush_next_ == flushes_.size();
  }

 private:
  int threads_;
  std::vector<std::pair<double, AudioBuffer>> llm_, mic_;
  std::vector<double> flushes_;
  std::size_t llm_next_ = 0, mic_next_ = 0, flush_next_ = 0;
};

/// Window sampler: anything mapping a condition and seed to a T x 115 window.
using WindowSampler = std::function<Mat(const ConditionSet&, std::uint64_t seed)>;

/// Runs the streaming loop. `on_window` sees each window's frames as they
/// are produced.
inline RunResult run_stream(const Scenario& sc, const ModelConfig& cfg, const WindowSampler& sampler,
                            MagnitudePair magnitude, std::uint64_t seed, int producer_threads,
                            const std::function<void(const WindowRecord&, const Mat&)>& on_window = {}) {
  const int T = cfg.window, L = cfg.history_len;
  ConcurrentScheduler sched(std::max(T, 100));
  ScenarioFeeder feeder(sc, producer_threads);
  RunResult out;
  out.trace.frames.resize(0, layout::kMotionDim);
  Mat history = Mat::Zero(L, layout::kMotionDim);
  LSStateSequence history_states = constant_states(L, LSState::kListening);
  std::vector<Mat> blocks;
  const double window_ms = 40.0 * T;
  for (int k = 0;; ++k) {
    if (sc.windows ? k >= *sc.windows : (k > 0 && feeder.exhausted() && sched.unconsumed_frames() == 0)) break;
    feeder.advance(sched, (k + 1) * window_ms);
    ScheduledWindow w = sched.next_window(T);

    ConditionSet cond;
    AudioBuffer audio;
    audio.samples = std::move(w.waveform);
    cond.audio = extract_features(audio);
    cond.identity = sc.identity;
    cond.history = history;
    cond.history_states = history_states;
    cond.current_states = w.states;
    cond.magnitude = magnitude;
    Mat frames = sampler(cond, window_seed(seed, k));
    if (frames.rows() != T || frames.cols() != layout::kMotionDim) {
      throw ConsistencyError("run_stream: sampler returned a window of the wrong shape");
    }
    if (!frames.allFinite()) throw NumericFailure("run_stream: non-finite motion", k);

    WindowRecord rec{k, w.states, w.speak_frames_consumed, history, history_states};
    out.trace.states.insert(out.trace.states.end(), w.states.begin(), w.states.end());
    blocks.push_back(frames);

    // Next history: last L emitted frames, padded with the older history.
    Mat joined(L + T, layout::kMotionDim);
    joined << history, frames;
    history = joined.bottomRows(L);
    LSStateSequence qs = history_states;
    qs.insert(qs.end(), w.states.begin(), w.states.end());
    history_states.assign(qs.end() - L, qs.end());

    if (on_window) on_window(rec, frames);
    out.windows.push_back(std::move(rec));
  }
  out.trace.frames.resize(static_cast<Eigen::Index>(blocks.size()) * T, layout::kMotionDim);
  for (std::size_t i = 0; i < blocks.size(); ++i) out.trace.frames.middleRows(static_cast<Eigen::Index>(i) * T, T) = blocks[i];
  return out;
}

inline nlohmann::json window_log_entry(const WindowRecord& r) {
  return nlohmann::json{{"window_idx", r.window_idx},
                        {"states", rle_states(r.states)},
                        {"speak_frames_consumed", r.speak_frames_consumed}};
}

/// Model parameters per the engine configuration.
inline std::pair<ModelConfig, ParameterStore<double>> load_engine_model(const EngineConfig& c) {
  ModelConfig cfg = c.model_config_path.empty() ? ModelConfig::full() : load_model_config(c.model_config_path);
  cfg.validate();
  if (!c.checkpoint_path.empty()) return {cfg, load_checkpoint(c.checkpoint_path)};
  if (!c.random_init) throw ConfigError("engine: no checkpoint given (use --random-init for untrained weights)");
  ParameterStore<double> p = init_parameters(cfg, c.seed);
  perturb_parameters(p, c.seed + 1);
  return {cfg, p};
}

/// Runs a scenario end to end and writes trace.csv and windows.jsonl.
inline RunResult run_scenario(const EngineConfig& c) {
  c.validate();
  const Scenario sc = load_scenario(c.scenario_path);
  auto [cfg, params] = load_engine_model(c);
  const VelocityModel<double> model(cfg, params);
  const MagnitudePair mag = sc.magnitude.value_or(c.magnitude);
  for (double m : {mag.rot_mag, mag.trans_mag}) {
    if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("scenario: magnitude must lie in [0, 1]");
  }
  const std::string dir = c.output_dir.empty() ? default_output_dir() : c.output_dir;
  std::filesystem::create_directories(dir);
  TraceWriter trace(dir + "/trace.csv");
  std::ofstream log(dir + "/windows.jsonl", std::ios::binary);
  if (!log) throw ConfigError("cannot open " + dir + "/windows.jsonl for writing");
  const int steps = c.steps;
  return run_stream(
      sc, cfg, [&](const ConditionSet& cond, std::uint64_t s) { return model.sample(cond, steps, s); }, mag, c.seed,
      c.producer_threads, [&](const WindowRecord& r, const Mat& frames) {
        trace.append(frames, r.states);
        log << window_log_entry(r).dump() << '\n';
      });
}

struct BenchReport {
  int window = 0;
  int steps = 0;
  int windows = 0;
  double sample_seconds = 0.0;   // sampling loop only
  double render_seconds = 0.0;   // synthetic renderer on the same windows
  double coefficient_fps = 0.0;
  double end_to_end_fps = 0.0;
  double seconds_per_window = 0.0;
};

inline void to_json(nlohmann::json& j, const BenchReport& r) {
  j = nlohmann::json{{"window", r.window},
                     {"steps", r.steps},
                     {"windows", r.windows},
                     {"sample_seconds", r.sample_seconds},
                     {"render_seconds", r.render_seconds},
                     {"coefficient_fps", r.coefficient_fps},
                     {"end_to_end_fps", r.end_to_end_fps},
                     {"seconds_per_window", r.seconds_per_window}};
}

/// Times `windows` sampled windows on noise audio plus their renders.
template <class S = double>
BenchReport bench(const ModelConfig& cfg, const ParameterStore<double>& params, int steps, int windows,
                  std::uint64_t seed = 0) {
  if (steps < 1 || windows < 1) throw ConfigError("bench: steps and windows must be positive");
  const VelocityModel<S> model(cfg, params.cast<S>());
  ConditionSet cond;
  cond.audio = extract_features(synth::noise(40.0 * cfg.window, seed));
  cond.history = Mat::Zero(cfg.history_len, layout::kMotionDim);
  cond.history_states = constant_states(cfg.history_len, LSState::kListening);
  cond.current_states = constant_states(cfg.window, LSState::kSpeaking);
  cond.magnitude = {0.3, 0.3};
  const SyntheticRenderer renderer(BlendshapeModel::synthetic());
  const ParameterStore<double> rp = renderer.init_parameters();

  using clock = std::chrono::steady_clock;
  std::vector<Mat> out;
  const auto t0 = clock::now();
  for (int k = 0; k < windows; ++k) out.push_back(model.sample(cond, steps, window_seed(seed, k)));
  const auto t1 = clock::now();
  for (const auto& w : out) (void)renderer.render(w, rp);
  const auto t2 = clock::now();

  BenchReport r;
  r.window = cfg.window;
  r.steps = steps;
  r.windows = windows;
  r.sample_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.render_seconds = std::chrono::duration<double>(t2 - t1).count();
  const double frames = static_cast<double>(cfg.window) * windows;
  r.coefficient_fps = frames / r.sample_seconds;
  r.end_to_end_fps = frames / (r.sample_seconds + r.render_seconds);
  r.seconds_per_window = r.sample_seconds / windows;
  return r;
}

}  // namespace headflow

#endif  // HEADFLOW_ENGINE_HPP
