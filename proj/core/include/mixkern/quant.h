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

#include <cstdint>
#include <span>
#include <vector>

#include "mixkern/half.h"
#include "mixkern/tensor.h"

namespace mixkern {

// Precision configuration W{weight_bits}A{act_bits}KV{kv_bits}.
struct QuantSpec {
  int weight_bits = 4;    // 4, 8 or 16 (16 = pass-through)
  int act_bits = 16;      // only 16 is supported
  int kv_bits = 16;       // 4, 8 or 16
  int group_size = 128;   // elements sharing one scale
  bool zero_point = true; // asymmetric when true

  void validate() const;
};

// Floor applied to every scale: 2^-14, the smallest normal binary16.
inline constexpr float kScaleEpsilon = kHalfMinNormal;

// Group-quantized 2-D tensor. Groups run along the last (contiguous) axis:
// element (r, c) belongs to group (r, c / group_size).
//
// Code storage by mode:
//   bits 4            -> u4 codes 0..15; symmetric mode has implicit zp 8
//   bits 8, asym      -> u8 codes 0..255
//   bits 8, symmetric -> i8 codes -128..127, implicit zp 0
//   bits 16           -> f16 values stored verbatim, no scales
struct QuantizedTensor {
  int bits = 4;
  int group_size = 128;
  bool zero_point = true;
  std::vector<std::int64_t> logical_shape;  // rank 1 or 2
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  Tensor codes;        // [rows, cols]
  Tensor scales;       // [rows, groups] f16
  Tensor zero_points;  // [rows, groups] u8, only when zero_point && bits < 16

  std::int64_t groups() const {
    return (cols + group_size - 1) / group_size;
  }
  bool passthrough() const { return bits == 16; }

  int code(std::int64_t r, std::int64_t c) const {
    return codes.code(static_cast<std::size_t>(r * cols + c));
  }
  Half scale(std::int64_t r, std::int64_t g) const {
    return scales.f16(static_cast<std::size_t>(r * groups() + g));
  }
  // Effective zero point, including the implicit ones of symmetric modes.
  int zero_point_of(std::int64_t r, std::int64_t g) const;

  // Throws kInvalidArgument if codes, scales or zero points break the
  // invariants (range, positivity, group count).
  void validate() const;
};

// Dtype used for the codes of a (bits, zero_point) combination.
Dtype code_dtype(int bits, bool zero_point);
// Implicit zero point for symmetric storage (8 for u4, 0 for i8).
int implicit_zero_point(int bits);
// Code that dequantizes to exactly 0 for a group with zero point zp.
int zero_code(int bits, bool zero_point, int zp);

// Scale/zero-point choice for one group of values.
struct GroupParams {
  Half scale;
  int zero_point = 0;  // effective zero point
};

// Min/max (asymmetric) or abs-max (symmetric) parameters for one group. The
// asymmetric range is widened to include 0 so every value is reachable
// without clamping; constant groups use scale = |c| and land on a code.
GroupParams choose_group_params(std::span<const float> values, int bits,
                                bool zero_point);

// Stored code for v under params (round half to even, clamped to the range).
int encode_value(float v, const GroupParams& p, int bits, bool zero_point);

// The dequantization oracle: fp16_round((code - zp) * scale).
inline Half dequantize_value(int code, int zero_point, Half scale) {
  return fp16_round(static_cast<float>(code - zero_point) * scale.to_float());
}

// Quantizes a vector as a single row. Throws on non-finite input or bits
// outside {4, 8}.
QuantizedTensor quantize_group(std::span<const Half> values, int bits,
                               int group_size, bool zero_point);

// Row-wise group quantization of a 2-D f16 tensor. bits 16 is accepted and
// stores the values verbatim.
QuantizedTensor quantize_rows(const Tensor& values, int bits, int group_size,
                              bool zero_point);

// f16 tensor with the logical shape of q.
Tensor dequantize(const QuantizedTensor& q);

}  // namespace mixkern
