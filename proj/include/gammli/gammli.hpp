/*
 * Copyright 2026 The GAMMLI Authors.
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

#ifndef GAMMLI_GAMMLI_HPP_
#define GAMMLI_GAMMLI_HPP_

#include "gammli/additive.hpp"
#include "gammli/baseline.hpp"
#include "gammli/data.hpp"
#include "gammli/error.hpp"
#include "gammli/experiment.hpp"
#include "gammli/explain.hpp"
#include "gammli/kmeans.hpp"
#include "gammli/latent.hpp"
#include "gammli/metrics.hpp"
#include "gammli/model.hpp"
#include "gammli/model_io.hpp"
#include "gammli/random.hpp"
#include "gammli/simulate.hpp"
#include "gammli/subnet.hpp"
#include "gammli/tuner.hpp"

#endif  // GAMMLI_GAMMLI_HPP_
