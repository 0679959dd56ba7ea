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

// Independent oracles used by the unit and acceptance tests. None of them
// calls into the code under test beyond the plain Tensor container.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "mixkern/half.h"
#include "mixkern/tensor.h"

namespace mixkern::oracle {

// Decodes binary16 bits by the textbook formula, no bit tricks.
inline double half_value(std::uint16_t bits) {
  const int sign = bits >> 15;
  const int exp = (bits >> 10) & 0x1F;
  const int man = bits & 0x3FF;
  double v;
  if (exp == 0)
    v = std::ldexp(static_cast<double>(man), -24);
  else if (exp == 31)
    v = man == 0 ? std::numeric_limits<double>::infinity()
                 : std::numeric_limits<double>::quiet_NaN();
  else
    v = std::ldexp(1024.0 + man, exp - 25);
  return sign ? -v : v;
}

// Nearest binary16 by scanning every finite pattern; ties pick the even
// mantissa. Values at or beyond the overflow threshold 65520 map to inf.
inline std::uint16_t nearest_half(double x) {
  if (std::isnan(x)) return 0x7E00;
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::fabs(x);
  if (a >= 65520.0) return sign | 0x7C00;
  std::uint16_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::uint32_t b = 0; b < 0x7C00; ++b) {
    const double err = std::fabs(half_value(static_cast<std::uint16_t>(b)) - a);
    if (err < best_err || (err == best_err && (b & 1) == 0)) {
      best = static_cast<std::uint16_t>(b);
      best_err = err;
    }
  }
  return sign | best;
}

// Row-major naive product with binary32 accumulation in ascending k.
inline std::vector<float> naive_matmul(const std::vector<float>& a, const std::vector<float>& b,
                                       const std::vector<float>& c, int m, int n, int k) {
  std::vector<float> d(static_cast<std::size_t>(m * n));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float acc = c[static_cast<std::size_t>(i * n + j)];
      for (int kk = 0; kk < k; ++kk)
        acc += a[static_cast<std::size_t>(i * k + kk)] * b[static_cast<std::size_t>(kk * n + j)];
      d[static_cast<std::size_t>(i * n + j)] = acc;
    }
  return d;
}

// The m8n8 fragment rule: lane l owns row l / 4, columns 2 (l % 4) and
// 2 (l % 4) + 1.
inline std::pair<int, int> m8n8_owner(int lane) { return {lane / 4, 2 * (lane % 4)}; }

// Binary64 softmax attention for one query.
inline std::vector<double> attention_f64(const std::vector<double>& q,
                                         const std::vector<double>& k,
                                         const std::vector<double>& v, int tokens, int hd) {
  std::vector<double> s(static_cast<std::size_t>(tokens));
  double mx = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < tokens; ++t) {
    double acc = 0;
    for (int c = 0; c < hd; ++c)
      acc += q[static_cast<std::size_t>(c)] * k[static_cast<std::size_t>(t * hd + c)];
    s[static_cast<std::size_t>(t)] = acc / std::sqrt(static_cast<double>(hd));
    mx = std::max(mx, s[static_cast<std::size_t>(t)]);
  }
  double sum = 0;
  for (auto& x : s) {
    x = std::exp(x - mx);
    sum += x;
  }
  std::vector<double> o(static_cast<std::size_t>(hd), 0.0);
  for (int t = 0; t < tokens; ++t)
    for (int c = 0; c < hd; ++c)
      o[static_cast<std::size_t>(c)] +=
          s[static_cast<std::size_t>(t)] / sum * v[static_cast<std::size_t>(t * hd + c)];
  return o;
}

// Distance in binary16 ULPs between two finite halves of the same sign
// region (ordered by bit pattern).
inline int half_ulp_distance(std::uint16_t a, std::uint16_t b) {
  auto ordered = [](std::uint16_t x) {
    return (x & 0x8000) ? -static_cast<int>(x & 0x7FFF) : static_cast<int>(x);
  };
  return std::abs(ordered(a) - ordered(b));
}

inline Tensor random_half_tensor(std::vector<std::int64_t> shape, std::mt19937_64& rng,
                                 float stddev = 1.0f) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return Tensor::from_float_rounded(std::move(shape), v);
}

}  // namespace mixkern::oracle
