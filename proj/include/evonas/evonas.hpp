// Copyright 2026 The evonas Authors.
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

#pragma once

#include "evonas/autodiff.hpp"
#include "evonas/compiler.hpp"
#include "evonas/config.hpp"
#include "evonas/evolution.hpp"
#include "evonas/genome.hpp"
#include "evonas/genome_json.hpp"
#include "evonas/image_io.hpp"
#include "evonas/ops.hpp"
#include "evonas/optim.hpp"
#include "evonas/rng.hpp"
#include "evonas/tasks.hpp"
#include "evonas/tensor.hpp"
#include "evonas/variation.hpp"
#include "evonas/weights.hpp"
