// Copyright 2026 The gfk Authors
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


#ifndef GFK_GFK_HPP
#define GFK_GFK_HPP

// Umbrella header.
#include "gfk/diffusion.hpp"
#include "gfk/gaussian_mixture.hpp"
#include "gfk/harness.hpp"
#include "gfk/io.hpp"
#include "gfk/linalg.hpp"
#include "gfk/metrics.hpp"
#include "gfk/rng.hpp"
#include "gfk/smc.hpp"
#include "gfk/twist_bridge.hpp"
#include "gfk/twist_canonical.hpp"

#endif  // GFK_GFK_HPP
