// Copyright 2026 The binsep Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "binsep/audio.hpp"
#include "binsep/em.hpp"
#include "binsep/error.hpp"
#include "binsep/experiment.hpp"
#include "binsep/fft.hpp"
#include "binsep/fusion.hpp"
#include "binsep/interaural.hpp"
#include "binsep/mask.hpp"
#include "binsep/metrics.hpp"
#include "binsep/pipeline.hpp"
#include "binsep/room.hpp"
#include "binsep/speech.hpp"
#include "binsep/stft.hpp"
