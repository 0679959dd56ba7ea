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

#include <bit>
#include <cstdint>
#include <limits>

namespace mixkern {

// IEEE-754 binary16 value stored as its raw bit pattern.
//
// There is deliberately no arithmetic on Half: every computation happens in
// binary32 and is brought back to binary16 through fp16_round() at the points
// where the pipelines round (dequantized weights/KV, final outputs).
struct Half {
  std::uint16_t bits = 0;

  static constexpr Half from_bits(std::uint16_t b) { return Half{b}; }

  constexpr bool is_nan() const {
    return (bits & 0x7C00u) == 0x7C00u && (bits & 0x03FFu) != 0;
  }
  constexpr bool is_inf() const { return (bits & 0x7FFFu) == 0x7C00u; }
  constexpr bool is_finite() const { return (bits & 0x7C00u) != 0x7C00u; }
  constexpr bool sign() const { return (bits & 0x8000u) != 0; }

  float to_float() const;

  friend constexpr bool operator==(Half a, Half b) { return a.bits == b.bits; }
};

inline constexpr std::uint16_t kCanonicalHalfNaN = 0x7E00u;
inline constexpr float kHalfMax = 65504.0f;
// Smallest positive normal binary16 value, 2^-14.
inline constexpr float kHalfMinNormal = 6.103515625e-05f;

// Nearest binary16 value, ties to even. Overflow saturates to signed infinity
// (|x| >= 65520 rounds up past 65504), NaN becomes kCanonicalHalfNaN.
Half fp16_round(float x);

// fp16_round(x).to_float(): the value x takes after one binary16 rounding.
inline float round_to_half(float x) { return fp16_round(x).to_float(); }

// Unit in the last place of the binary16 grid at |x| (x must be finite
// and representable). For subnormals this is 2^-24.
float half_ulp(float x);

// Smallest binary16 value >= x (x finite and positive, below kHalfMax).
Half fp16_round_up(float x);

}  // namespace mixkern
