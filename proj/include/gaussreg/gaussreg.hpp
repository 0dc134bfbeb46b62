// Copyright 2026 The gaussreg Authors
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

#include "gaussreg/datasets.hpp"
#include "gaussreg/error.hpp"
#include "gaussreg/evaluation.hpp"
#include "gaussreg/gauss_head.hpp"
#include "gaussreg/model_io.hpp"
#include "gaussreg/network.hpp"
#include "gaussreg/rng.hpp"
#include "gaussreg/svg.hpp"
#include "gaussreg/tensor.hpp"
#include "gaussreg/trainer.hpp"
#include "gaussreg/uq_apps.hpp"
