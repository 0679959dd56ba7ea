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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.h"

namespace mixkern {
namespace {

TEST(Fp16Round, Examples) {
  EXPECT_EQ(fp16_round(1.0f).bits, 0x3C00);
  EXPECT_EQ(fp16_round(2049.0f).to_float(), 2048.0f);
  EXPECT_EQ(fp16_round(2051.0f).to_float(), 2052.0f);
  EXPECT_TRUE(fp16_round(65520.0f).is_inf());
  EXPECT_FALSE(fp16_round(65519.0f).is_inf());
  EXPECT_TRUE(fp16_round(-65520.0f).sign());
  EXPECT_EQ(fp16_round(std::nanf("")).bits, kCanonicalHalfNaN);
}

TEST(Fp16Round, RepresentableValuesAreFixedPoints) {
  for (std::uint32_t b = 0; b < 0x10000; ++b) {
    const Half h = Half::from_bits(static_cast<std::uint16_t>(b));
    if (h.is_nan()) continue;
    EXPECT_EQ(h.to_float(), static_cast<float>(oracle::half_value(h.bits)));
    EXPECT_EQ(fp16_round(h.to_float()).bits, h.bits);
  }
}

TEST(Fp16Round, MatchesBruteForceNearest) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<float> mag(-26.0f, 17.0f);
  for (int i = 0; i < 400; ++i) {
    const float x = std::exp2(mag(rng)) * (i % 2 ? -1.0f : 1.0f);
    EXPECT_EQ(fp16_round(x).bits, oracle::nearest_half(x)) << x;
  }
  // Exact midpoints between neighbours.
  for (std::uint16_t b : {0x0001, 0x03FF, 0x3C00, 0x3C01, 0x6800, 0x7BFE}) {
    const double mid = (oracle::half_value(b) + oracle::half_value(static_cast<std::uint16_t>(b + 1))) / 2;
    EXPECT_EQ(fp16_round(static_cast<float>(mid)).bits, oracle::nearest_half(mid));
  }
}

TEST(Fp16Round, Monotone) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> d(0.0f, 3000.0f);
  for (int i = 0; i < 10000; ++i) {
    float a = d(rng), b = d(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(fp16_round(a).to_float(), fp16_round(b).to_float());
  }
}

TEST(HalfUlp, Values) {
  EXPECT_EQ(half_ulp(2048.0f), 2.0f);
  EXPECT_EQ(half_ulp(1.0f), std::exp2(-10.0f));
  EXPECT_EQ(half_ulp(1e-6f), std::exp2(-24.0f));
  EXPECT_EQ(fp16_round_up(1.0001f).to_float(), 1.0f + std::exp2(-10.0f));
}

}  // namespace
}  // namespace mixkern
