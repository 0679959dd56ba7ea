// Copyright 2026 The mixkern Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mixkern/packer.h"
#include "mixkern/sched.h"
#include "mixkern/tensor.h"

namespace mixkern {

// y = a * w^T with a f16 [M][K] and w f16 [N][K]. Every output accumulates
// its K products in ascending order in binary32 starting from +0 and is
// rounded once to binary16.
Tensor reference_gemm(const Tensor& a, const Tensor& w);

struct GemmResult {
  Tensor out;  // f16 [M][N]
  PipelineSchedule schedule;
};

// Online path: per 16-wide output column tile, per k-tile ascending, load
// the packed code fragment, dequantize it in registers and issue two
// 16x8x16 MMAs for every 16-row block of a. Throws kLayout when the weights
// were packed for a different profile.
GemmResult mixed_gemm(const Tensor& a, const PackedWeights& w, const ArchProfile& arch,
                      int depth = 3);

}  // namespace mixkern
