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

#include "mixkern/quant.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mixkern/error.h"

namespace mixkern {
namespace {

std::vector<Half> halves(const std::vector<float>& v) {
  std::vector<Half> h;
  for (float x : v) h.push_back(fp16_round(x));
  return h;
}

// |deq - v| <= scale / 2 + one binary16 ULP at the larger magnitude.
void expect_bound(const std::vector<Half>& in, const QuantizedTensor& q) {
  const Tensor d = dequantize(q);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const float v = in[i].to_float();
    const float got = d.f16(i).to_float();
    const float scale = q.scale(0, static_cast<std::int64_t>(i) / q.group_size).to_float();
    const float ulp = half_ulp(std::max(std::fabs(v), std::fabs(got)));
    EXPECT_LE(std::fabs(got - v), scale / 2 + ulp) << i;
  }
}

TEST(Quantize, RampGroupIsExact) {
  std::vector<float> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i);
  const auto q = quantize_group(halves(ramp), 4, 16, true);
  EXPECT_EQ(q.scale(0, 0).to_float(), 1.0f);
  EXPECT_EQ(q.zero_point_of(0, 0), 0);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(q.code(0, i), i);
}

TEST(Quantize, ZeroGroup) {
  const auto q = quantize_group(halves(std::vector<float>(32, 0.0f)), 4, 32, true);
  EXPECT_EQ(q.scale(0, 0).to_float(), kScaleEpsilon);
  const Tensor d = dequantize(q);
  for (int i = 0; i < 32; ++i) {
    EXPECT_EQ(q.code(0, i), q.zero_point_of(0, 0));
    EXPECT_EQ(d.f16(static_cast<std::size_t>(i)).bits, 0);
  }
}

TEST(Quantize, ConstantGroupRoundTrips) {
  for (bool zp : {true, false})
    for (float c : {5.0f, -3.25f, 1e-3f}) {
      const auto q = quantize_group(halves(std::vector<float>(64, c)), 8, 64, zp);
      const Tensor d = dequantize(q);
      for (int i = 0; i < 64; ++i) {
        EXPECT_EQ(q.code(0, i), q.code(0, 0));
        EXPECT_EQ(d.f16(static_cast<std::size_t>(i)), fp16_round(c));
      }
    }
}

TEST(Dequantize, Values) {
  EXPECT_EQ(dequantize_value(12, 4, fp16_round(0.5f)).to_float(), 4.0f);
  EXPECT_EQ(dequantize_value(7, 7, fp16_round(123.0f)).to_float(), 0.0f);
}

TEST(Quantize, ErrorBoundRandomGroups) {
  std::mt19937_64 rng(17);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::uniform_real_distribution<float> shift(-4.0f, 4.0f);
  for (int bits : {4, 8})
    for (bool zp : {true, false})
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> v(128);
        const float s = shift(rng);
        for (auto& x : v) x = d(rng) + s;
        const auto in = halves(v);
        const auto q = quantize_group(in, bits, 128, zp);
        q.validate();
        expect_bound(in, q);
      }
}

TEST(Quantize, Int8ThousandValues) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<float> d(-10.0f, 10.0f);
  std::vector<float> v(1024);
  for (auto& x : v) x = d(rng);
  const auto in = halves(v);
  expect_bound(in, quantize_group(in, 8, 128, false));
}

TEST(Quantize, SymmetricScaleEquivariance) {
  std::mt19937_64 rng(19);
  std::normal_distribution<float> d(0.0f, 2.0f);
  for (int bits : {4, 8})
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<float> v(64), v2(64);
      for (std::size_t i = 0; i < 64; ++i) {
        v[i] = fp16_round(d(rng)).to_float();
        v2[i] = 2 * v[i];
      }
      const auto a = quantize_group(halves(v), bits, 64, false);
      const auto b = quantize_group(halves(v2), bits, 64, false);
      EXPECT_TRUE(a.codes.bit_equal(b.codes));
      EXPECT_EQ(b.scale(0, 0).to_float(), 2 * a.scale(0, 0).to_float());
    }
}

TEST(Quantize, RowsAndValidation) {
  std::vector<float> v(3 * 40);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 17) - 8.0f;
  const auto q = quantize_rows(Tensor::from_float_rounded({3, 40}, v), 4, 16, true);
  EXPECT_EQ(q.groups(), 3);
  q.validate();
  const auto pass = quantize_rows(Tensor::from_float_rounded({3, 40}, v), 16, 16, false);
  EXPECT_TRUE(dequantize(pass).bit_equal(Tensor::from_float_rounded({3, 40}, v)));
  EXPECT_THROW(quantize_group(halves({1.0f, INFINITY}), 8, 2, true), Error);
  EXPECT_THROW(quantize_group(halves({1.0f}), 3, 1, true), Error);
  auto bad = q;
  bad.scales.set_f16(0, fp16_round(-1.0f));
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace mixkern
