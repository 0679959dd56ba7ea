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

#include "mixkern/attention.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mixkern/error.h"
#include "mixkern/quant.h"

namespace mixkern {

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

float score_scale(int head_dim) { return 1.0f / std::sqrt(static_cast<float>(head_dim)); }

// Row g's 3 bits placed on the bank-index bits left free by the lane's
// t-dependent word offset X * t.
int spread_row_bits(int g, int x) {
  switch (x) {
    case 1: return g << 2;
    case 2: return (g & 1) | ((g >> 1) << 3);
    default: return (g & 3) | ((g >> 2) << 4);
  }
}

// Decodes element p of a 32-bit register holding 32 / bits packed values.
int raw_element(std::uint32_t reg, int p, int bits) {
  const std::uint32_t mask = bits == 32 ? 0xFFFFFFFFu : (1u << bits) - 1u;
  return static_cast<int>((reg >> (p * bits)) & mask);
}

float decode_k(const QuantizedTensor& q, std::int64_t row, int ch, int raw) {
  if (q.bits == 16) return Half::from_bits(static_cast<std::uint16_t>(raw)).to_float();
  int code = raw;
  if (q.codes.dtype() == Dtype::kI8) code = static_cast<std::int8_t>(static_cast<std::uint8_t>(raw));
  const std::int64_t g = ch / q.group_size;
  return dequantize_value(code, q.zero_point_of(row, g), q.scale(row, g)).to_float();
}

float dequant_at(const QuantizedTensor& q, std::int64_t row, int ch) {
  const auto i = static_cast<std::size_t>(row * q.cols + ch);
  if (q.passthrough()) return q.codes.f16(i).to_float();
  const std::int64_t g = ch / q.group_size;
  return dequantize_value(q.codes.code(i), q.zero_point_of(row, g), q.scale(row, g)).to_float();
}

}  // namespace

RearrangeParams make_rearrange_params(int head_dim, int kv_bits) {
  check(kv_bits == 4 || kv_bits == 8 || kv_bits == 16, ErrorKind::kInvalidArgument,
        "kv_bits must be 4, 8 or 16");
  RearrangeParams p;
  p.head_dim = head_dim;
  p.kv_bits = kv_bits;
  p.x = 16 / kv_bits;
  p.op_k = 16 / p.x;
  check(head_dim > 0 && head_dim % p.op_k == 0, ErrorKind::kInvalidArgument,
        "head_dim " + std::to_string(head_dim) + " not divisible by OP_K " +
            std::to_string(p.op_k));
  check(head_dim % 64 == 0, ErrorKind::kInvalidArgument,
        "head_dim must be a multiple of 64");
  p.k_k = head_dim / p.op_k;
  return p;
}

std::pair<int, int> rearrange_index(const RearrangeParams& p, int n, int k, int x, int d,
                                    int lane) {
  const int hi = n * p.op_n + lane / 4;
  const int di = 16 * k + (lane % 4) * 2 * p.x + 2 * x + 8 * d * p.x;
  return {hi, di};
}

std::vector<int> fragment_channel_order(int head_dim, int x) {
  check(x == 1 || x == 2 || x == 4, ErrorKind::kInvalidArgument, "X must be 1, 2 or 4");
  check(head_dim % (16 * x) == 0, ErrorKind::kInvalidArgument,
        "head_dim must be a multiple of 16 * X");
  std::vector<int> order(static_cast<std::size_t>(head_dim));
  for (int f = 0; f < head_dim / 16; ++f) {
    const int group = f / x;
    const int xi = f % x;
    for (int kk = 0; kk < 16; ++kk) {
      const int t = (kk % 8) / 2;
      const int d = kk / 8;
      order[static_cast<std::size_t>(f * 16 + kk)] =
          16 * x * group + 2 * x * t + 2 * xi + 8 * d * x + kk % 2;
    }
  }
  return order;
}

std::int64_t q_smem_word(const RearrangeParams& p, int row, int word) {
  const int row_words = p.head_dim / 2;
  check(row >= 0 && word >= 0 && word < row_words, ErrorKind::kInvalidArgument,
        "Q tile coordinate out of range");
  const int s = spread_row_bits(row % 8, p.x);
  return static_cast<std::int64_t>(row) * row_words + ((word & ~31) | ((word & 31) ^ s));
}

RearrangedQ rearrange_q(const Tensor& q_tile, const RearrangeParams& p) {
  const int rows = p.op_n * p.k_n;
  check(q_tile.dtype() == Dtype::kF16 && q_tile.rank() == 2 && q_tile.dim(0) == rows &&
            q_tile.dim(1) == p.head_dim,
        ErrorKind::kInvalidArgument, "q_tile must be f16 [8 * k_n][head_dim]");
  const int row_words = p.head_dim / 2;
  std::vector<std::uint32_t> smem(static_cast<std::size_t>(rows * row_words));
  for (int r = 0; r < rows; ++r)
    for (int w = 0; w < row_words; ++w) {
      const auto lo = q_tile.f16(static_cast<std::size_t>(r * p.head_dim + 2 * w)).bits;
      const auto hi = q_tile.f16(static_cast<std::size_t>(r * p.head_dim + 2 * w + 1)).bits;
      smem[static_cast<std::size_t>(q_smem_word(p, r, w))] =
          lo | (static_cast<std::uint32_t>(hi) << 16);
    }

  RearrangedQ out;
  out.frags.assign(static_cast<std::size_t>(p.k_n * p.fragments()), Fragment(Role::kB));
  for (int n = 0; n < p.k_n; ++n)
    for (int k = 0; k < p.fragments(); k += p.x)
      for (int x = 0; x < p.x; ++x)
        for (int d = 0; d < 2; ++d) {
          AccessTrace t;
          t.width = 4;
          Fragment& f = out.frags[static_cast<std::size_t>(n * p.fragments() + k + x)];
          for (int lane = 0; lane < kWarpSize; ++lane) {
            const auto [hi, di] = rearrange_index(p, n, k, x, d, lane);
            const std::int64_t word = q_smem_word(p, hi, di / 2);
            t.addr[static_cast<std::size_t>(lane)] = 4 * word;
            const std::uint32_t v = smem[static_cast<std::size_t>(word)];
            f.at(lane, 2 * d) = Half::from_bits(static_cast<std::uint16_t>(v)).to_float();
            f.at(lane, 2 * d + 1) = Half::from_bits(static_cast<std::uint16_t>(v >> 16)).to_float();
          }
          out.loads.push_back(t);
        }
  return out;
}

Tensor transpose_v(const Tensor& v_tile) {
  check(v_tile.rank() == 2, ErrorKind::kInvalidArgument, "transpose_v expects a 2-D tile");
  const std::int64_t t = v_tile.dim(0);
  const std::int64_t c = v_tile.dim(1);
  Tensor out({c, t}, v_tile.dtype());
  const std::size_t eb = v_tile.dtype() == Dtype::kF32 ? 4 : 2;
  check(v_tile.dtype() == Dtype::kF16 || v_tile.dtype() == Dtype::kF32,
        ErrorKind::kInvalidArgument, "transpose_v expects f16 or f32");
  auto src = v_tile.bytes();
  auto dst = out.bytes();
  for (std::int64_t i = 0; i < t; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((i * c + j) * eb), eb,
                  dst.begin() + static_cast<std::ptrdiff_t>((j * t + i) * eb));
  return out;
}

AttnIntermediates reference_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                      std::span<const int> channel_order) {
  check(q.dtype() == Dtype::kF16 && k.dtype() == Dtype::kF16 && v.dtype() == Dtype::kF16,
        ErrorKind::kInvalidArgument, "reference_attention expects f16 tensors");
  check(k.rank() == 2 && v.rank() == 2 && k.shape() == v.shape(),
        ErrorKind::kInvalidArgument, "K and V must be [tokens][head_dim] of equal shape");
  const std::int64_t tokens = k.dim(0);
  const int hd = static_cast<int>(k.dim(1));
  check(static_cast<std::int64_t>(q.numel()) == hd, ErrorKind::kInvalidArgument,
        "query length does not match head_dim");
  check(tokens >= 1, ErrorKind::kInvalidArgument, "attention needs at least one token");
  std::vector<int> order(channel_order.begin(), channel_order.end());
  if (order.empty()) {
    order.resize(static_cast<std::size_t>(hd));
    std::iota(order.begin(), order.end(), 0);
  }
  check(order.size() == static_cast<std::size_t>(hd), ErrorKind::kInvalidArgument,
        "channel order length does not match head_dim");

  const auto qf = q.to_floats();
  const auto kf = k.to_floats();
  const auto vf = v.to_floats();
  const float scale = score_scale(hd);
  AttnIntermediates r;
  r.s.resize(static_cast<std::size_t>(tokens));
  for (std::int64_t t = 0; t < tokens; ++t) {
    float acc = 0.0f;
    for (int ch : order)
      acc += kf[static_cast<std::size_t>(t * hd + ch)] * qf[static_cast<std::size_t>(ch)];
    r.s[static_cast<std::size_t>(t)] = acc * scale;
  }

  // Two-pass softmax for the intermediates.
  const float smax = *std::max_element(r.s.begin(), r.s.end());
  r.p.resize(r.s.size());
  float sum = 0.0f;
  for (std::size_t t = 0; t < r.s.size(); ++t) {
    r.p[t] = std::exp(r.s[t] - smax);
    sum += r.p[t];
  }
  for (auto& x : r.p) x /= sum;

  // Streaming softmax over macro-tiles.
  float m = kNegInf;
  float l = 0.0f;
  std::vector<float> acc(static_cast<std::size_t>(hd), 0.0f);
  for (std::int64_t t0 = 0; t0 < tokens; t0 += kMacroTileTokens) {
    const std::int64_t count = std::min<std::int64_t>(kMacroTileTokens, tokens - t0);
    const std::int64_t padded = (count + 15) / 16 * 16;
    float m_new = m;
    for (std::int64_t t = 0; t < count; ++t) m_new = std::max(m_new, r.s[static_cast<std::size_t>(t0 + t)]);
    const float alpha = std::exp(m - m_new);
    std::vector<float> p(static_cast<std::size_t>(padded), 0.0f);
    float l_tile = 0.0f;
    for (std::int64_t t = 0; t < count; ++t) {
      p[static_cast<std::size_t>(t)] = std::exp(r.s[static_cast<std::size_t>(t0 + t)] - m_new);
      l_tile += p[static_cast<std::size_t>(t)];
    }
    l = l * alpha + l_tile;
    for (int c = 0; c < hd; ++c) {
      float a = acc[static_cast<std::size_t>(c)] * alpha;
      for (std::int64_t t = 0; t < padded; ++t) {
        // Padding positions carry weight 0 against a zero value row.
        const float vv = t < count ? vf[static_cast<std::size_t>((t0 + t) * hd + c)] : 0.0f;
        a += p[static_cast<std::size_t>(t)] * vv;
      }
      acc[static_cast<std::size_t>(c)] = a;
    }
    m = m_new;
  }
  r.o = Tensor({hd}, Dtype::kF16);
  for (int c = 0; c < hd; ++c)
    r.o.set_f16(static_cast<std::size_t>(c), fp16_round(acc[static_cast<std::size_t>(c)] / l));
  return r;
}

Tensor reference_attention_cache(const Tensor& q, const KvCache& cache, int layer) {
  const int hd = cache.head_dim();
  check(q.dtype() == Dtype::kF16 && q.rank() == 2 && q.dim(0) == cache.heads() &&
            q.dim(1) == hd,
        ErrorKind::kInvalidArgument, "q must be f16 [heads][head_dim]");
  const auto order = fragment_channel_order(hd, 16 / cache.kv_bits());
  Tensor out({cache.heads(), hd}, Dtype::kF16);
  for (int h = 0; h < cache.heads(); ++h) {
    std::vector<Half> row(static_cast<std::size_t>(hd));
    for (int c = 0; c < hd; ++c) row[static_cast<std::size_t>(c)] = q.f16(static_cast<std::size_t>(h * hd + c));
    const Tensor qh = Tensor::from_f16({hd}, row);
    const auto r = reference_attention(qh, cache.dequantized_keys(layer, h),
                                       cache.dequantized_values(layer, h), order);
    for (int c = 0; c < hd; ++c)
      out.set_f16(static_cast<std::size_t>(h * hd + c), r.o.f16(static_cast<std::size_t>(c)));
  }
  return out;
}

Fragment key_scores(const RearrangedQ& rq, const RearrangeParams& params,
                    const QuantizedTensor& kq, std::int64_t tok0, std::int64_t tokens) {
  if (tokens < 0) tokens = kq.rows;
  const int hd = params.head_dim;
  const int bits = params.kv_bits;
  check(kq.cols == hd && kq.bits == bits, ErrorKind::kInvalidArgument,
        "keys do not match the rearrangement parameters");
  check(static_cast<int>(rq.frags.size()) >= params.fragments(), ErrorKind::kInvalidArgument,
        "rearranged Q has too few fragments");
  check(tokens <= kq.rows && tok0 >= 0 && tok0 < tokens, ErrorKind::kInvalidArgument,
        "token offset out of range");
  const int row_bytes = hd * bits / 8;
  const int groups = hd / (16 * params.x);
  const int valid = static_cast<int>(std::min<std::int64_t>(16, tokens - tok0));
  SharedTile ktile(16, row_bytes, row_bytes, false);
  const auto src = kq.codes.bytes();
  for (int r = 0; r < valid; ++r)
    for (int b = 0; b < row_bytes; b += 2) {
      const std::size_t off = static_cast<std::size_t>((tok0 + r) * row_bytes + b);
      ktile.store16(static_cast<std::int64_t>(r) * row_bytes + b,
                    static_cast<std::uint16_t>(src[off] | (src[off + 1] << 8)));
    }
  Fragment st(Role::kC);
  for (int gi = 0; gi < groups; ++gi) {
    std::vector<std::int64_t> addrs(kWarpSize);
    for (int lane = 0; lane < kWarpSize; ++lane) {
      const int j = lane / 8;  // (rows 0-7 | 8-15) x (bytes 0-15 | 16-31)
      const int row = (j % 2) * 8 + lane % 8;
      addrs[static_cast<std::size_t>(lane)] =
          static_cast<std::int64_t>(row) * row_bytes + gi * 32 + (j / 2) * 16;
    }
    const LdmatrixResult ld = ldmatrix_emulate(ktile, addrs, 4);
    for (int x = 0; x < params.x; ++x) {
      Fragment a(Role::kA);
      for (int lane = 0; lane < kWarpSize; ++lane)
        for (int i = 0; i < 8; ++i) {
          const int row = lane / 4 + 8 * ((i / 2) % 2);
          if (row >= valid) continue;
          const int d = i / 4;
          const int p = 2 * x + i % 2;
          const int ch = 16 * params.x * gi + 8 * params.x * d + 2 * params.x * (lane % 4) + p;
          const std::uint32_t reg =
              ld.regs[static_cast<std::size_t>(lane)][static_cast<std::size_t>(i / 2)];
          a.at(lane, i) = decode_k(kq, tok0 + row, ch, raw_element(reg, p, bits));
        }
      st = mma_emulate(a, rq.frags[static_cast<std::size_t>(gi * params.x + x)], st);
    }
  }
  return st;
}

AttnResult attention_mixed(const Tensor& q, const KvCache& cache, int layer, int depth) {
  const int hd = cache.head_dim();
  check(q.dtype() == Dtype::kF16 && q.rank() == 2 && q.dim(0) == cache.heads(),
        ErrorKind::kInvalidArgument, "q must be f16 [heads][head_dim]");
  check(q.dim(1) == hd, ErrorKind::kInvalidArgument, "head_dim mismatch between q and cache");
  const std::int64_t tokens = cache.tokens(layer);
  check(tokens >= 1, ErrorKind::kInvalidArgument, "empty KV cache");
  const RearrangeParams params = make_rearrange_params(hd, cache.kv_bits());
  const int bits = cache.kv_bits();
  const float scale = score_scale(hd);

  AttnResult res;
  res.out = Tensor({cache.heads(), hd}, Dtype::kF16);
  res.schedule = attention_schedule(tokens, bits, depth);

  for (int h = 0; h < cache.heads(); ++h) {
    const QuantizedTensor& kq = cache.keys(layer, h);
    const QuantizedTensor& vq = cache.values(layer, h);
    Tensor q_tile({params.op_n * params.k_n, hd}, Dtype::kF16);
    for (int c = 0; c < hd; ++c)
      q_tile.set_f16(static_cast<std::size_t>(c), q.f16(static_cast<std::size_t>(h * hd + c)));
    const RearrangedQ rq = rearrange_q(q_tile, params);

    float m = kNegInf;
    float l = 0.0f;
    std::vector<Fragment> acc(static_cast<std::size_t>(hd / 8), Fragment(Role::kC));

    for (std::int64_t t0 = 0; t0 < tokens; t0 += kMacroTileTokens) {
      const std::int64_t count = std::min<std::int64_t>(kMacroTileTokens, tokens - t0);
      const int micros = static_cast<int>((count + 15) / 16);
      std::vector<float> s(static_cast<std::size_t>(micros * 16), kNegInf);

      // S^T = K * Q per 16-token micro-tile; K fragments come from ldmatrix
      // over the raw code bytes followed by per-element dequantization.
      for (int mi = 0; mi < micros; ++mi) {
        const std::int64_t tok0 = t0 + 16 * mi;
        const int valid = static_cast<int>(std::min<std::int64_t>(16, tokens - tok0));
        const Fragment st = key_scores(rq, params, kq, tok0, tokens);
        for (int lane = 0; lane < kWarpSize; lane += 4)
          for (int i = 0; i < 4; i += 2) {
            const auto [row, col] = fragment_coord(Role::kD, lane, i);
            if (col == 0 && row < valid)
              s[static_cast<std::size_t>(16 * mi + row)] = st.at(lane, i) * scale;
          }
      }

      // Streaming softmax update on the ALU.
      float m_new = m;
      for (std::int64_t t = 0; t < count; ++t) m_new = std::max(m_new, s[static_cast<std::size_t>(t)]);
      const float alpha = std::exp(m - m_new);
      std::vector<float> p(static_cast<std::size_t>(micros * 16), 0.0f);
      float l_tile = 0.0f;
      for (std::int64_t t = 0; t < count; ++t) {
        p[static_cast<std::size_t>(t)] = std::exp(s[static_cast<std::size_t>(t)] - m_new);
        l_tile += p[static_cast<std::size_t>(t)];
      }
      l = l * alpha + l_tile;
      m = m_new;

      // O^T accumulation: P (row 0) times the transposed V micro-tile.
      for (int mi = 0; mi < micros; ++mi) {
        const std::int64_t tok0 = t0 + 16 * mi;
        const int valid = static_cast<int>(std::min<std::int64_t>(16, tokens - tok0));
        Tensor vt({16, hd}, Dtype::kF16);
        for (int r = 0; r < valid; ++r)
          for (int c = 0; c < hd; ++c)
            vt.set_f16(static_cast<std::size_t>(r * hd + c),
                       fp16_round(dequant_at(vq, tok0 + r, c)));
        const Tensor v_cm = transpose_v(vt);
        const Fragment pa = gather_with(Role::kA, [&](int r, int c) {
          return r == 0 ? p[static_cast<std::size_t>(16 * mi + c)] : 0.0f;
        });
        for (int cb = 0; cb < hd / 8; ++cb) {
          const Fragment vb = gather_with(Role::kB, [&](int k, int n) {
            return v_cm.f16(static_cast<std::size_t>((cb * 8 + n) * 16 + k)).to_float();
          });
          Fragment& c = acc[static_cast<std::size_t>(cb)];
          if (mi == 0)
            for (auto& val : c.values) val *= alpha;
          c = mma_emulate(pa, vb, c);
          c.role = Role::kC;
        }
      }
    }

    for (int cb = 0; cb < hd / 8; ++cb) {
      const Fragment& c = acc[static_cast<std::size_t>(cb)];
      for (int lane = 0; lane < 4; ++lane)
        for (int i = 0; i < 2; ++i) {
          const auto [row, col] = fragment_coord(Role::kD, lane, i);
          if (row != 0) continue;
          res.out.set_f16(static_cast<std::size_t>(h * hd + cb * 8 + col), fp16_round(c.at(lane, i) / l));
        }
    }
  }
  return res;
}

}  // namespace mixkern
