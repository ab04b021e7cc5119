/* Copyright 2026 The cspnpp Authors. All Rights Reserved.

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
#ifndef CSPN_CSPN_HPP_
#define CSPN_CSPN_HPP_

#include "cspn/affinity.hpp"
#include "cspn/context_aware.hpp"
#include "cspn/core.hpp"
#include "cspn/cost_model.hpp"
#include "cspn/fit.hpp"
#include "cspn/gradients.hpp"
#include "cspn/io.hpp"
#include "cspn/propagation.hpp"
#include "cspn/resource_aware.hpp"
#include "cspn/rng.hpp"
#include "cspn/scene.hpp"

#endif  // CSPN_CSPN_HPP_
