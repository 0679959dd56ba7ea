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

#include "mixkern/kv_cache.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mixkern/error.h"
#include "oracles.h"

namespace mixkern {
namespace {

TEST(KvCache, AppendOneTokenMatchesQuantizeGroup) {
  std::mt19937_64 rng(1);
  KvCache cache(1, 2, 64, 8, 8, 32, true);
  const Tensor k = oracle::random_half_tensor({2, 64}, rng);
  const Tensor v = oracle::random_half_tensor({2, 64}, rng);
  const KvCache next = quantize_kv(k, v, cache);
  EXPECT_EQ(cache.tokens(0), 0);
  EXPECT_EQ(next.tokens(0), 1);
  for (int h = 0; h < 2; ++h) {
    std::vector<Half> row(64);
    for (int c = 0; c < 64; ++c) row[static_cast<std::size_t>(c)] = k.f16(static_cast<std::size_t>(h * 64 + c));
    const Tensor want = dequantize(quantize_group(row, 8, 32, true));
    const Tensor got = next.dequantized_keys(0, h);
    for (int c = 0; c < 64; ++c) EXPECT_EQ(got.f16(static_cast<std::size_t>(c)), want.f16(static_cast<std::size_t>(c)));
  }
}

TEST(KvCache, SixteenBitIsPassthrough) {
  std::mt19937_64 rng(2);
  KvCache cache(1, 1, 64, 4, 16);
  const Tensor k = oracle::random_half_tensor({3, 1, 64}, rng);
  cache.append(0, k, k);
  const Tensor got = cache.dequantized_values(0, 0);
  for (std::size_t i = 0; i < k.numel(); ++i) EXPECT_EQ(got.f16(i), k.f16(i));
}

TEST(KvCache, MacroTiles) {
  std::mt19937_64 rng(3);
  KvCache cache(2, 1, 64, 200, 4);
  cache.append(1, oracle::random_half_tensor({64, 1, 64}, rng), oracle::random_half_tensor({64, 1, 64}, rng));
  EXPECT_EQ(cache.macro_tile_count(1), 1);
  EXPECT_EQ(cache.macro_tile(1, 0).count, 64);
  EXPECT_EQ(cache.macro_tile_count(0), 0);
  cache.append(1, oracle::random_half_tensor({66, 1, 64}, rng), oracle::random_half_tensor({66, 1, 64}, rng));
  EXPECT_EQ(cache.macro_tile_count(1), 3);
  EXPECT_EQ(cache.macro_tile(1, 2).first, 128);
  EXPECT_EQ(cache.macro_tile(1, 2).count, 2);
}

TEST(KvCache, CapacityAndShapeErrors) {
  std::mt19937_64 rng(4);
  KvCache cache(1, 1, 64, 2, 8);
  cache.append(0, oracle::random_half_tensor({2, 1, 64}, rng), oracle::random_half_tensor({2, 1, 64}, rng));
  try {
    cache.append(0, oracle::random_half_tensor({1, 64}, rng), oracle::random_half_tensor({1, 64}, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapacity);
  }
  KvCache other(1, 1, 64, 8, 8);
  EXPECT_THROW(other.append(0, oracle::random_half_tensor({1, 32}, rng), oracle::random_half_tensor({1, 32}, rng)), Error);
  EXPECT_THROW(KvCache(1, 1, 64, 8, 5), Error);
}

TEST(KvCache, FileRoundTrip) {
  std::mt19937_64 rng(5);
  for (int bits : {4, 8, 16}) {
    KvCache cache(2, 2, 64, 100, bits, 32, bits != 8);
    cache.append(0, oracle::random_half_tensor({70, 2, 64}, rng), oracle::random_half_tensor({70, 2, 64}, rng));
    cache.append(1, oracle::random_half_tensor({3, 2, 64}, rng), oracle::random_half_tensor({3, 2, 64}, rng));
    const auto path = std::filesystem::temp_directory_path() / "mixkern_kv_test.tmkv";
    write_kv_cache(cache, path);
    const KvCache back = read_kv_cache(path);
    EXPECT_TRUE(back == cache);
    EXPECT_EQ(back.tokens(0), 70);
    EXPECT_EQ(back.tokens(1), 3);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
    EXPECT_THROW(read_kv_cache(path), Error);
    std::filesystem::remove(path);
  }
}

}  // namespace
}  // namespace mixkern
