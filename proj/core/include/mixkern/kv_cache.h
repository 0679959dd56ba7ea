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
#include <filesystem>
#include <vector>

#include "mixkern/quant.h"
#include "mixkern/tensor.h"

namespace mixkern {

// Tokens per KV macro-tile (the unit of global->shared prefetch).
inline constexpr int kMacroTileTokens = 64;
// Values per micro-tile (the unit of shared->register load).
inline constexpr int kMicroTileValues = 16;

struct TokenRange {
  std::int64_t first = 0;
  std::int64_t count = 0;
};

// Append-only quantized KV cache. Every (layer, head) keeps a K and a V
// QuantizedTensor of shape [capacity, head_dim]; each token row is quantized
// on its own with groups running along the channel axis.
class KvCache {
 public:
  KvCache() = default;
  KvCache(int layers, int heads, int head_dim, int capacity, int kv_bits,
          int group_size = 128, bool zero_point = true);

  int layers() const { return layers_; }
  int heads() const { return heads_; }
  int head_dim() const { return head_dim_; }
  int capacity() const { return capacity_; }
  int kv_bits() const { return kv_bits_; }
  // Effective channel group (min of the requested size and head_dim).
  int group_size() const { return group_size_; }
  bool zero_point() const { return zero_point_; }
  std::int64_t tokens(int layer) const { return tokens_.at(static_cast<std::size_t>(layer)); }

  // k_new / v_new: f16 [heads, head_dim] for one token or
  // [n, heads, head_dim] for n tokens. Throws kCapacity on overflow.
  void append(int layer, const Tensor& k_new, const Tensor& v_new);

  const QuantizedTensor& keys(int layer, int head) const;
  const QuantizedTensor& values(int layer, int head) const;

  // Dequantized [tokens, head_dim] f16 views of one head.
  Tensor dequantized_keys(int layer, int head) const;
  Tensor dequantized_values(int layer, int head) const;

  std::int64_t macro_tile_count(int layer) const;
  TokenRange macro_tile(int layer, std::int64_t index) const;

  bool operator==(const KvCache& other) const;

 private:
  friend void write_kv_cache(const KvCache&, const std::filesystem::path&);
  friend KvCache read_kv_cache(const std::filesystem::path&);

  std::size_t slot(int layer, int head) const;

  int layers_ = 0;
  int heads_ = 0;
  int head_dim_ = 0;
  int capacity_ = 0;
  int kv_bits_ = 16;
  int group_size_ = 128;
  bool zero_point_ = true;
  std::vector<std::int64_t> tokens_;
  std::vector<QuantizedTensor> k_;
  std::vector<QuantizedTensor> v_;
};

// Functional form of KvCache::append: returns the updated cache and leaves
// the input untouched.
KvCache quantize_kv(const Tensor& k_new, const Tensor& v_new,
                    const KvCache& cache, int layer = 0);

// Binary KV file: magic "TMKV", u32 version, u32 layers, heads, head_dim,
// capacity, u8 kv_bits, u32 group_size, u8 zero_point, u32 tokens per layer,
// then per (layer, head): K codes, K scales, K zero points, V codes, V
// scales, V zero points, each covering only the filled token rows.
void write_kv_cache(const KvCache& cache, const std::filesystem::path& path);
KvCache read_kv_cache(const std::filesystem::path& path);

}  // namespace mixkern
