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

#include "mixkern/mma.h"

#include <gtest/gtest.h>

#include <random>

#include "oracles.h"

namespace mixkern {
namespace {

std::vector<float> tile_values(const Tensor& t) { return t.to_floats(); }

TEST(Fragment, ZeroTileZeroFragment) {
  for (Role r : {Role::kA, Role::kB, Role::kC}) {
    const auto [rows, cols] = operand_extent(r);
    const Fragment f = gather_fragment(Tensor({rows, cols}, Dtype::kF16), r);
    for (float v : f.values) EXPECT_EQ(v, 0.0f);
  }
}

// Enumerates the documented layout over all 256 A elements.
TEST(Fragment, LayoutEnumerationA) {
  std::vector<int> owner(256, -1);
  for (int lane = 0; lane < kWarpSize; ++lane)
    for (int i = 0; i < 8; ++i) {
      const int g = lane / 4, t = lane % 4;
      const int row = g + 8 * ((i / 2) % 2);
      const int col = 2 * t + i % 2 + 8 * (i / 4);
      EXPECT_EQ(owner[static_cast<std::size_t>(row * 16 + col)], -1);
      owner[static_cast<std::size_t>(row * 16 + col)] = lane * 8 + i;
    }
  EXPECT_EQ(fragment_slot(Role::kA, 9, 3), (LaneSlot{5, 3}));
  for (int row = 0; row < 16; ++row)
    for (int col = 0; col < 16; ++col) {
      const LaneSlot ls = fragment_slot(Role::kA, row, col);
      EXPECT_EQ(ls.lane * 8 + ls.slot, owner[static_cast<std::size_t>(row * 16 + col)]);
    }
}

TEST(Fragment, GatherScatterBijection) {
  std::mt19937_64 rng(1);
  for (Role r : {Role::kA, Role::kB, Role::kC}) {
    const auto [rows, cols] = operand_extent(r);
    const Tensor t = oracle::random_half_tensor({rows, cols}, rng);
    EXPECT_TRUE(scatter_fragment(gather_fragment(t, r), Dtype::kF16).bit_equal(t));
    for (int lane = 0; lane < kWarpSize; ++lane)
      for (int s = 0; s < slots_per_lane(r); ++s) {
        const auto [row, col] = fragment_coord(r, lane, s);
        EXPECT_EQ(fragment_slot(r, row, col), (LaneSlot{lane, s}));
      }
  }
}

TEST(MmaEmulate, ZeroAGivesC) {
  std::mt19937_64 rng(2);
  const Fragment c = gather_fragment(oracle::random_half_tensor({16, 8}, rng), Role::kC);
  const Fragment b = gather_fragment(oracle::random_half_tensor({16, 8}, rng), Role::kB);
  const Fragment d = mma_emulate(Fragment(Role::kA), b, c);
  EXPECT_EQ(d.values, c.values);
}

TEST(MmaEmulate, IdentityPassesB) {
  std::mt19937_64 rng(3);
  const Tensor b = oracle::random_half_tensor({16, 8}, rng);
  const Fragment a = gather_with(Role::kA, [](int r, int c) { return r == c ? 1.0f : 0.0f; });
  const Fragment d = mma_emulate(a, gather_fragment(b, Role::kB), Fragment(Role::kC));
  EXPECT_TRUE(scatter_fragment(d, Dtype::kF16).bit_equal(b));
}

TEST(MmaEmulate, MatchesNaiveOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = oracle::random_half_tensor({16, 16}, rng);
    const Tensor b = oracle::random_half_tensor({16, 8}, rng);
    const Tensor c = oracle::random_half_tensor({16, 8}, rng);
    const auto want = oracle::naive_matmul(tile_values(a), tile_values(b), tile_values(c), 16, 8, 16);
    const Fragment d = mma_emulate(gather_fragment(a, Role::kA), gather_fragment(b, Role::kB),
                                   gather_fragment(c, Role::kC));
    EXPECT_EQ(scatter_fragment(d).to_floats(), want);
  }
}

// Tiled full matmul over k-tiles equals the naive oracle for tile multiples.
TEST(MmaEmulate, TiledMatmul) {
  std::mt19937_64 rng(5);
  const int m = 32, n = 16, k = 64;
  const Tensor a = oracle::random_half_tensor({m, k}, rng);
  const Tensor b = oracle::random_half_tensor({k, n}, rng);
  const auto want = oracle::naive_matmul(tile_values(a), tile_values(b),
                                         std::vector<float>(m * n, 0.0f), m, n, k);
  const auto av = tile_values(a), bv = tile_values(b);
  for (int mt = 0; mt < m / 16; ++mt)
    for (int nt = 0; nt < n / 8; ++nt) {
      Fragment acc(Role::kC);
      for (int kt = 0; kt < k / 16; ++kt) {
        const Fragment fa = gather_with(Role::kA, [&](int r, int c) {
          return av[static_cast<std::size_t>((mt * 16 + r) * k + kt * 16 + c)];
        });
        const Fragment fb = gather_with(Role::kB, [&](int r, int c) {
          return bv[static_cast<std::size_t>((kt * 16 + r) * n + nt * 8 + c)];
        });
        acc = mma_emulate(fa, fb, acc);
      }
      for (int lane = 0; lane < kWarpSize; ++lane)
        for (int s = 0; s < 4; ++s) {
          const auto [r, c] = fragment_coord(Role::kD, lane, s);
          EXPECT_EQ(acc.at(lane, s), want[static_cast<std::size_t>((mt * 16 + r) * n + nt * 8 + c)]);
        }
    }
}

}  // namespace
}  // namespace mixkern
