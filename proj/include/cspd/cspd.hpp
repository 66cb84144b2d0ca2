/* Copyright 2026 The cspd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "cspd/autoregressive.hpp"
#include "cspd/bench.hpp"
#include "cspd/config.hpp"
#include "cspd/core_math.hpp"
#include "cspd/diffusion.hpp"
#include "cspd/error.hpp"
#include "cspd/oracle.hpp"
#include "cspd/random.hpp"
#include "cspd/run_stats.hpp"
#include "cspd/specdec.hpp"
