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

// Streaming audio scheduler. Microphone audio feeds a rolling listening
// buffer, LLM audio an append-only speaking queue with a monotonic consume
// cursor. Each tick assembles one window of T frames (640 samples per frame)
// and labels every frame by where its samples came from.
//
// Both queues work on whole frames; samples that do not yet complete a frame
// wait in a per-source accumulator. The listening buffer starts zero-filled,
// so the first window is valid silence.

#ifndef HEADFLOW_SCHEDULER_HPP
#define HEADFLOW_SCHEDULER_HPP

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

#include "headflow/audio.hpp"
#include "headflow/errors.hpp"
#include "headflow/motion.hpp"

namespace headflow {

enum class Source : std::int8_t { kMic, kLlm };
enum class Mode : std::int8_t { kListen, kSpeak };

/// mic -> listening (-1), llm -> speaking (+1). Untagged frames are a bug.
inline LSStateSequence label_by_source(const std::vector<std::optional<Source>>& tags) {
  LSStateSequence q;
  q.reserve(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!tags[i]) throw ConsistencyError("label_by_source: frame " + std::to_string(i) + " has no source tag");
    q.push_back(*tags[i] == Source::kLlm ? LSState::kSpeaking : LSState::kListening);
  }
  return q;
}

struct ScheduledWindow {
  std::vector<float> waveform;  // T * 640 samples
  std::vector<Source> sources;  // per frame
  LSStateSequence states;
  int speak_frames_consumed = 0;
};

class SchedulerState {
 public:
  static constexpr int kFrame = kSamplesPerMotionFrame;

  explicit SchedulerState(int listening_capacity_frames = 100)
      : capacity_(listening_capacity_frames),
        ring_(static_cast<std::size_t>(listening_capacity_frames) * kFrame, 0.0f) {
    if (listening_capacity_frames < 1) throw InvalidArgument("SchedulerState: capacity must be positive");
  }

  int listening_capacity() const { return capacity_; }
  Mode prev_mode() const { return prev_mode_; }
  /// Absolute count of speaking frames handed out so far.
  std::int64_t speak_cursor() const { return cursor_; }
  /// Complete speaking frames not yet consumed.
  int unconsumed_frames() const {
    return static_cast<int>(static_cast<std::int64_t>(speak_.size() / kFrame) + speak_base_ - cursor_);
  }

  void ingest(Source source, const AudioBuffer& audio) {
    if (audio.sample_rate != kSampleRate) throw InvalidArgument("ingest: audio must be 16 kHz");
    if (source == Source::kLlm) {
      speak_.insert(speak_.end(), audio.samples.begin(), audio.samples.end());
      return;
    }
    mic_pending_.insert(mic_pending_.end(), audio.samples.begin(), audio.samples.end());
    const std::size_t whole = mic_pending_.size() / kFrame * kFrame;
    push_listening(mic_pending_.data(), whole);
    mic_pending_.erase(mic_pending_.begin(), mic_pending_.begin() + static_cast<std::ptrdiff_t>(whole));
  }

  /// Most recent `n` samples of the listening buffer, oldest first.
  std::vector<float> listening_tail(std::size_t n) const {
    if (n > ring_.size()) throw InvalidArgument("listening_tail: request exceeds capacity");
    std::vector<float> out(n);
    const std::size_t cap = ring_.size();
    const std::size_t start = (head_ + cap - n) % cap;
    const std::size_t first = std::min(n, cap - start);
    std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(start), first, out.begin());
    std::copy_n(ring_.begin(), n - first, out.begin() + static_cast<std::ptrdiff_t>(first));
    return out;
  }

  /// Drops every unconsumed speaking frame and any partial speaking frame.
  void flush_speaking() {
    speak_.resize(static_cast<std::size_t>(cursor_ - speak_base_) * kFrame);
  }

  ScheduledWindow next_window(int T) {
    if (T <= 0) throw InvalidArgument("next_window: T must be positive");
    if (T > capacity_) throw InvalidArgument("next_window: T exceeds listening capacity");
    const int U = std::min(unconsumed_frames(), T);
    ScheduledWindow w;
    w.waveform.reserve(static_cast<std::size_t>(T) * kFrame);
    std::vector<std::optional<Source>> tags;
    auto take_speak = [&](int n) {
      const auto from = static_cast<std::size_t>(cursor_ - speak_base_) * kFrame;
      w.waveform.insert(w.waveform.end(), speak_.begin() + static_cast<std::ptrdiff_t>(from),
                        speak_.begin() + static_cast<std::ptrdiff_t>(from + static_cast<std::size_t>(n) * kFrame));
      tags.insert(tags.end(), static_cast<std::size_t>(n), Source::kLlm);
      cursor_ += n;
    };
    auto take_listen = [&](int n) {
      const auto tail = listening_tail(static_cast<std::size_t>(n) * kFrame);
      w.waveform.insert(w.waveform.end(), tail.begin(), tail.end());
      tags.insert(tags.end(), static_cast<std::size_t>(n), Source::kMic);
    };
    if (U == T) {
      take_speak(T);
      prev_mode_ = Mode::kSpeak;
    } else if (U > 0) {
      if (prev_mode_ == Mode::kSpeak) {
        take_speak(U);
        take_listen(T - U);
        prev_mode_ = Mode::kListen;
      } else {
        take_listen(T - U);
        take_speak(U);
        prev_mode_ = Mode::kSpeak;
      }
    } else {
      take_listen(T);
      prev_mode_ = Mode::kListen;
    }
    w.speak_frames_consumed = U;
    w.states = label_by_source(tags);
    for (const auto& t : tags) w.sources.push_back(*t);
    compact();
    return w;
  }

 private:
  void push_listening(const float* data, std::size_t n) {
    const std::size_t cap = ring_.size();
    if (n >= cap) {
      data += n - cap;
      n = cap;
    }
    const std::size_t first = std::min(n, cap - head_);
    std::copy_n(data, first, ring_.begin() + static_cast<std::ptrdiff_t>(head_));
    std::copy_n(data + first, n - first, ring_.begin());
    head_ = (head_ + n) % cap;
  }

  void compact() {
    const auto consumed = static_cast<std::size_t>(cursor_ - speak_base_) * kFrame;
    if (consumed >= (1u << 20)) {
      speak_.erase(speak_.begin(), speak_.begin() + static_cast<std::ptrdiff_t>(consumed));
      speak_base_ = cursor_;
    }
  }

  int capacity_;
  std::vector<float> ring_;
  std::size_t head_ = 0;
  std::vector<float> mic_pending_;
  std::vector<float> speak_;
  std::int64_t speak_base_ = 0;  // absolute frame index of speak_[0]
  std::int64_t cursor_ = 0;
  Mode prev_mode_ = Mode::kListen;
};

/// Mutex-guarded scheduler for concurrent producers and one consumer.
class ConcurrentScheduler {
 public:
  explicit ConcurrentScheduler(int listening_capacity_frames = 100) : state_(listening_capacity_frames) {}

  void ingest(Source source, const AudioBuffer& audio) {
    std::lock_guard lock(mu_);
    state_.ingest(source, audio);
  }
  ScheduledWindow next_window(int T) {
    std::lock_guard lock(mu_);
    return state_.next_window(T);
  }
  void flush_speaking() {
    std::lock_guard lock(mu_);
    state_.flush_speaking();
  }
  int unconsumed_frames() const {
    std::lock_guard lock(mu_);
    return state_.unconsumed_frames();
  }

 private:
  mutable std::mutex mu_;
  SchedulerState state_;
};

}  // namespace headflow

#endif  // HEADFLOW_SCHEDULER_HPP
