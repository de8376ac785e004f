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

#ifndef HEADFLOW_HEADFLOW_HPP
#define HEADFLOW_HEADFLOW_HPP

#include "headflow/audio.hpp"
#include "headflow/autograd.hpp"
#include "headflow/blendshape.hpp"
#include "headflow/dit.hpp"
#include "headflow/engine.hpp"
#include "headflow/errors.hpp"
#include "headflow/flow.hpp"
#include "headflow/gradcheck.hpp"
#include "headflow/losses.hpp"
#include "headflow/metrics.hpp"
#include "headflow/motion.hpp"
#include "headflow/params.hpp"
#include "headflow/renderer.hpp"
#include "headflow/scheduler.hpp"
#include "headflow/task.hpp"
#include "headflow/trace.hpp"
#include "headflow/train.hpp"

#endif  // HEADFLOW_HEADFLOW_HPP
