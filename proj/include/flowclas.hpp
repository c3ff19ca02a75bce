/*
 * Copyright 2026 The flowclas Authors.
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

#include "flowclas/autodiff.hpp"
#include "flowclas/benchmark.hpp"
#include "flowclas/contrast.hpp"
#include "flowclas/error.hpp"
#include "flowclas/extractor.hpp"
#include "flowclas/flow.hpp"
#include "flowclas/gradcheck.hpp"
#include "flowclas/image.hpp"
#include "flowclas/io.hpp"
#include "flowclas/kernels.hpp"
#include "flowclas/latent.hpp"
#include "flowclas/losses.hpp"
#include "flowclas/manifest.hpp"
#include "flowclas/metrics.hpp"
#include "flowclas/model.hpp"
#include "flowclas/ops.hpp"
#include "flowclas/optim.hpp"
#include "flowclas/scorer.hpp"
#include "flowclas/synth.hpp"
#include "flowclas/tensor.hpp"
#include "flowclas/textures.hpp"
#include "flowclas/trainer.hpp"
