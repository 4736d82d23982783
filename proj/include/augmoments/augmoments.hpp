// Copyright 2026 The augmoments Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "augmoments/core.hpp"
#include "augmoments/dataio.hpp"
#include "augmoments/distribution.hpp"
#include "augmoments/losses.hpp"
#include "augmoments/moments.hpp"
#include "augmoments/montecarlo.hpp"
#include "augmoments/parallel.hpp"
#include "augmoments/random.hpp"
#include "augmoments/spectral.hpp"
#include "augmoments/transform.hpp"
