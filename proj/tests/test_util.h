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

#include <random>

#include "mixkern/quant.h"

namespace mixkern::testing {

// Random codes, scales and zero points, bypassing the quantizer.
inline QuantizedTensor random_quantized(int rows, int cols, int bits, int group,
                                        bool zero_point, std::mt19937_64& rng) {
  QuantizedTensor q;
  q.bits = bits;
  q.group_size = group;
  q.zero_point = zero_point && bits != 16;
  q.rows = rows;
  q.cols = cols;
  q.logical_shape = {rows, cols};
  q.codes = Tensor({rows, cols}, code_dtype(bits, q.zero_point));
  if (bits == 16) {
    std::normal_distribution<float> d(0.0f, 1.0f);
    for (std::size_t i = 0; i < q.codes.numel(); ++i) q.codes.set_f16(i, fp16_round(d(rng)));
    return q;
  }
  const bool is_signed = bits == 8 && !q.zero_point;
  std::uniform_int_distribution<int> code(is_signed ? -128 : 0, is_signed ? 127 : (1 << bits) - 1);
  for (std::size_t i = 0; i < q.codes.numel(); ++i) q.codes.set_code(i, code(rng));
  q.scales = Tensor({rows, q.groups()}, Dtype::kF16);
  std::uniform_real_distribution<float> sc(1.0f / 256, 1.0f / 8);
  for (std::size_t i = 0; i < q.scales.numel(); ++i) q.scales.set_f16(i, fp16_round(sc(rng)));
  if (q.zero_point) {
    q.zero_points = Tensor({rows, q.groups()}, Dtype::kU8);
    std::uniform_int_distribution<int> zp(0, (1 << bits) - 1);
    for (std::size_t i = 0; i < q.zero_points.numel(); ++i) q.zero_points.set_code(i, zp(rng));
  }
  return q;
}

inline bool same_codes(const QuantizedTensor& a, const QuantizedTensor& b) {
  if (a.rows != b.rows || a.cols != b.cols || a.bits != b.bits) return false;
  if (!a.codes.bit_equal(b.codes)) return false;
  if (a.bits == 16) return true;
  if (!a.scales.bit_equal(b.scales)) return false;
  return !a.zero_point || a.zero_points.bit_equal(b.zero_points);
}

}  // namespace mixkern::testing
