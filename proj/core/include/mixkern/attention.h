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

#include <span>
#include <utility>
#include <vector>

#include "mixkern/kv_cache.h"
#include "mixkern/memmodel.h"
#include "mixkern/mma.h"
#include "mixkern/sched.h"
#include "mixkern/tensor.h"

namespace mixkern {

// Parameters of the Q rearrangement for one precision.
//   op_k: K-operand channels per 16-bit register column (16, 8, 4)
//   x:    low-bit values per 16-bit element, 16 / kv_bits
//   k_k:  K-slices, head_dim / op_k
struct RearrangeParams {
  int head_dim = 128;
  int kv_bits = 16;
  int op_k = 16;
  int op_n = 8;
  int k_n = 1;
  int x = 1;
  int k_k = 8;

  // 16x16 MMA k-steps per head: head_dim / 16.
  int fragments() const { return head_dim / 16; }
};

// Throws kInvalidArgument when head_dim is not a multiple of 64 (the Q
// shared-memory swizzle unit) or kv_bits is not 4, 8 or 16.
RearrangeParams make_rearrange_params(int head_dim, int kv_bits);

// (row, channel) of q_tile read into fragment k + x, register half d, by
// `lane`; k is the fragment index of the first fragment of an X-group.
//   hi = n * op_n + lane / 4
//   di = 16 * k + (lane % 4) * 2X + 2x + 8 d X
std::pair<int, int> rearrange_index(const RearrangeParams& p, int n, int k, int x, int d,
                                    int lane);

// Channel feeding k-position kk of fragment f, flattened as f * 16 + kk.
// Ascending for X = 1.
std::vector<int> fragment_channel_order(int head_dim, int x);

// Word address of (row, 32-bit word) in the modeled Q shared tile. Within
// each 32-word block the word index is XORed with the row's 3 low bits
// spread over the bank bits that the lane's t = lane % 4 does not select.
std::int64_t q_smem_word(const RearrangeParams& p, int row, int word);

struct RearrangedQ {
  std::vector<Fragment> frags;     // B operands, [n * fragments() + f]
  std::vector<AccessTrace> loads;  // one 4-byte LDS per (n, group, x, d)
};

// q_tile: f16 [8 * k_n][head_dim], staged in the swizzled shared tile.
RearrangedQ rearrange_q(const Tensor& q_tile, const RearrangeParams& p);

// S^T micro-tile: keys rows tok0 .. tok0 + 15 (only those below `tokens`,
// -1 meaning all rows) loaded by ldmatrix from the raw code bytes, decoded
// per element and multiplied against every fragment of rq. Returns the
// unscaled C fragment [16 tokens][8 query rows]; rows past `tokens` are 0.
Fragment key_scores(const RearrangedQ& rq, const RearrangeParams& params,
                    const QuantizedTensor& keys, std::int64_t tok0,
                    std::int64_t tokens = -1);

// [t][c] -> [c][t].
Tensor transpose_v(const Tensor& v_tile);

struct AttnIntermediates {
  std::vector<float> s;  // scaled scores
  std::vector<float> p;  // two-pass softmax of s
  Tensor o;              // f16 [head_dim]
};

// Decode attention of one query against T keys/values (all f16).
// Scores sum the channels in `channel_order` (ascending when empty) in
// binary32 and are scaled by 1 / sqrt(head_dim). O is the streaming softmax
// over 64-token macro-tiles: per tile m' = max(m, max s), a = exp(m - m'),
// p = exp(s - m'), l = l * a + sum p, acc = acc * a + sum p * v (tokens
// ascending, padded to whole 16-token micro-tiles with zero weight), and
// finally O = fp16(acc / l).
AttnIntermediates reference_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                      std::span<const int> channel_order = {});

// reference_attention per head on the dequantized cache, with the channel
// order the pipeline's fragments produce for the cache's kv_bits.
Tensor reference_attention_cache(const Tensor& q, const KvCache& cache, int layer = 0);

struct AttnResult {
  Tensor out;  // f16 [heads][head_dim]
  PipelineSchedule schedule;  // loading pipeline of one head
};

// q: f16 [heads][head_dim], one decode step. Throws kInvalidArgument on an
// empty cache or a head_dim mismatch.
AttnResult attention_mixed(const Tensor& q, const KvCache& cache, int layer = 0,
                           int depth = 3);

}  // namespace mixkern
