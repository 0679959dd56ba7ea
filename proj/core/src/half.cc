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

#include "mixkern/half.h"

#include <cmath>

namespace mixkern {

float Half::to_float() const {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1Fu;
  const std::uint32_t mant = bits & 0x03FFu;
  if (exp == 0) {
    // Zero or subnormal: mant * 2^-24, exact in binary32.
    const float mag = std::ldexp(static_cast<float>(mant), -24);
    return sign ? -mag : mag;
  }
  if (exp == 0x1F) {
    return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  }
  return std::bit_cast<float>(sign | ((exp + 112u) << 23) | (mant << 13));
}

Half fp16_round(float x) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(x);
  const std::uint16_t sign = static_cast<std::uint16_t>((u >> 16) & 0x8000u);
  const std::uint32_t a = u & 0x7FFFFFFFu;

  if (a > 0x7F800000u) return Half::from_bits(kCanonicalHalfNaN);

  if (a >= 0x38800000u) {  // |x| >= 2^-14: binary16 normal range or overflow
    std::uint32_t r = a - (112u << 23);
    r += 0x0FFFu + ((r >> 13) & 1u);  // round half to even on the dropped bits
    r >>= 13;
    if (r >= 0x7C00u) r = 0x7C00u;
    return Half::from_bits(static_cast<std::uint16_t>(sign | r));
  }

  // Subnormal range: value = m * 2^-24 with m in [0, 1024]. Scaling by 2^24 is
  // exact, and nearbyint rounds ties to even in the default FP environment.
  const float scaled = std::ldexp(std::bit_cast<float>(a), 24);
  const auto m = static_cast<std::uint16_t>(std::nearbyint(scaled));
  return Half::from_bits(static_cast<std::uint16_t>(sign | m));
}

float half_ulp(float x) {
  const float a = std::fabs(x);
  if (a < kHalfMinNormal) return std::ldexp(1.0f, -24);
  int e = 0;
  std::frexp(a, &e);  // a = f * 2^e, f in [0.5, 1)
  return std::ldexp(1.0f, e - 11);
}

Half fp16_round_up(float x) {
  Half h = fp16_round(x);
  if (h.to_float() < x) h.bits = static_cast<std::uint16_t>(h.bits + 1);
  return h;
}

}  // namespace mixkern
