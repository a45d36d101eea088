/*
 * Copyright 2026 The tfsep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "tfsep/audio.hpp"
#include "tfsep/blocks.hpp"
#include "tfsep/bundle.hpp"
#include "tfsep/checkpoint.hpp"
#include "tfsep/erf.hpp"
#include "tfsep/gradcheck.hpp"
#include "tfsep/hash.hpp"
#include "tfsep/layers.hpp"
#include "tfsep/network.hpp"
#include "tfsep/ops.hpp"
#include "tfsep/random.hpp"
#include "tfsep/tensor.hpp"
#include "tfsep/train.hpp"
