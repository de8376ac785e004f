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

// Motion trace files.
//
// One header line, then one row per frame:
//   frame_index,time_ms,ls_state,c0,...,c114
// time_ms = 40 * frame_index, ls_state is -1 or 1, coefficients follow the
// 115-dim layout and are printed with %.17g so they round-trip exactly.

#ifndef HEADFLOW_TRACE_HPP
#define HEADFLOW_TRACE_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "headflow/errors.hpp"
#include "headflow/motion.hpp"

namespace headflow {

struct MotionTrace {
  Mat frames;  // N x 115
  LSStateSequence states;

  Eigen::Index size() const { return frames.rows(); }
};

inline std::string trace_header() {
  std::string h = "frame_index,time_ms,ls_state";
  for (int k = 0; k < layout::kMotionDim; ++k) h += ",c" + std::to_string(k);
  return h;
}

inline std::string trace_row(std::int64_t index, LSState state, const Eigen::Ref<const Eigen::RowVectorXd>& frame) {
  std::string row = std::to_string(index) + ',' + std::to_string(index * 40) + ',' +
                    std::to_string(static_cast<int>(state));
  char buf[40];
  for (Eigen::Index k = 0; k < frame.size(); ++k) {
    std::snprintf(buf, sizeof buf, ",%.17g", frame(k));
    row += buf;
  }
  return row;
}

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path) : os_(path, std::ios::binary), path_(path) {
    if (!os_) throw ConfigError("cannot open " + path + " for writing");
    os_ << trace_header() << '\n';
  }

  void append(LSState state, const Eigen::Ref<const Eigen::RowVectorXd>& frame) {
    if (frame.size() != layout::kMotionDim) throw InvalidArgument("TraceWriter: frame must have 115 coefficients");
    os_ << trace_row(next_++, state, frame) << '\n';
  }

  void append(const Mat& frames, const LSStateSequence& states) {
    if (static_cast<std::size_t>(frames.rows()) != states.size()) {
      throw InvalidArgument("TraceWriter: frame and state counts differ");
    }
    for (Eigen::Index i = 0; i < frames.rows(); ++i) append(states[static_cast<std::size_t>(i)], frames.row(i));
  }

  void flush() { os_.flush(); }
  std::int64_t frames_written() const { return next_; }

 private:
  std::ofstream os_;
  std::string path_;
  std::int64_t next_ = 0;
};

inline void write_trace(const std::string& path, const MotionTrace& trace) {
  TraceWriter w(path);
  w.append(trace.frames, trace.states);
}

inline MotionTrace read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open trace " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  MotionTrace t;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("frame_index", 0) == 0) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'", lineno);
      }
    }
    if (vals.size() != 3 + layout::kMotionDim) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 118 columns, got " +
                            std::to_string(vals.size()),
                        lineno);
    }
    if (vals[2] != 1.0 && vals[2] != -1.0) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": ls_state must be -1 or 1", lineno);
    }
    t.states.push_back(vals[2] > 0 ? LSState::kSpeaking : LSState::kListening);
    rows.push_back(std::vector<double>(vals.begin() + 3, vals.end()));
  }
  t.frames.resize(static_cast<Eigen::Index>(rows.size()), layout::kMotionDim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < layout::kMotionDim; ++k) t.frames(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
  }
  return t;
}

}  // namespace headflow

#endif  // HEADFLOW_TRACE_HPP
