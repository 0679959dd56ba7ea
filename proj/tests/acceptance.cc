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

// Acceptance run: one PASS/FAIL line per criterion. Exit status is 0 only
// when every criterion passes. All tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mixkern/attention.h"
#include "mixkern/gemm.h"
#include "mixkern/kv_cache.h"
#include "mixkern/memmodel.h"
#include "mixkern/mma.h"
#include "mixkern/packer.h"
#include "mixkern/quant.h"
#include "mixkern/sched.h"
#include "oracles.h"
#include "test_util.h"

namespace {

using namespace mixkern;

// Pinned tolerances and sample sizes.
constexpr int kGemmProblems = 200;
constexpr int kGemmMaxShapes = 2;          // problems forced to 64 x 4096 x 4096
constexpr int kAttnProblems = 100;
constexpr int kRearrangeTiles = 50;        // per kv_bits
constexpr int kPackCases = 1000;
constexpr int kPropertyTrials = 10000;
constexpr int kSchedTrials = 10000;
constexpr int kQuantGroups = 100000;
constexpr double kMinInstrRatio = 1.3;
constexpr double kMaxCycleRatio = 1.10;
constexpr double kSecondsBudget = 300.0;   // per path-equivalence criterion

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int log_uniform(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_real_distribution<double> d(std::log(lo), std::log(hi + 1.0));
  return std::clamp(static_cast<int>(std::exp(d(rng))), lo, hi);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------
Outcome gemm_equivalence() {
  std::mt19937_64 rng(1001);
  const auto t0 = std::chrono::steady_clock::now();
  const ArchProfile& arch = find_arch("sm80");
  int exact = 0;
  std::string first_bad;
  for (int i = 0; i < kGemmProblems; ++i) {
    const bool u4 = i % 2 == 0;
    const int group = (i / 2) % 2 ? 128 : 64;
    int m = log_uniform(rng, 1, 64), n = log_uniform(rng, 16, 4096), k = log_uniform(rng, 16, 4096);
    if (i < kGemmMaxShapes) m = 64, n = 4096, k = 4096;
    const Tensor w = oracle::random_half_tensor({n, k}, rng);
    const PackedWeights p = pack_weights(quantize_rows(w, u4 ? 4 : 8, group, u4), arch);
    const Tensor a = oracle::random_half_tensor({m, k}, rng);
    const Tensor got = mixed_gemm(a, p, arch).out;
    if (got.bit_equal(reference_gemm(a, dequantize(unpack_weights(p)))))
      ++exact;
    else if (first_bad.empty())
      first_bad = fmt(" first failure %dx%dx%d %s g%d", m, n, k, u4 ? "u4" : "i8", group);
  }
  const double secs = seconds_since(t0);
  return {exact == kGemmProblems && secs < kSecondsBudget,
          fmt("%d/%d bit-exact (tol 0 bits), %.1fs (< %.0fs)", exact, kGemmProblems, secs,
              kSecondsBudget) + first_bad};
}

// 2 ---------------------------------------------------------------------------
Outcome attention_equivalence() {
  std::mt19937_64 rng(2002);
  const auto t0 = std::chrono::steady_clock::now();
  const int bits_set[] = {4, 8, 16};
  const int ctx_set[] = {1, 63, 64, 65, 130, 1024};
  const int hd_set[] = {64, 128};
  int exact = 0;
  std::string first_bad;
  for (int i = 0; i < kAttnProblems; ++i) {
    const int bits = bits_set[i % 3];
    const int ctx = ctx_set[(i / 3) % 6];
    const int hd = hd_set[(i / 18) % 2];
    const int heads = 1 + i % 2;
    KvCache cache(1, heads, hd, ctx, bits, 64, i % 4 != 1);
    cache.append(0, oracle::random_half_tensor({ctx, heads, hd}, rng),
                 oracle::random_half_tensor({ctx, heads, hd}, rng));
    const Tensor q = oracle::random_half_tensor({heads, hd}, rng);
    if (attention_mixed(q, cache).out.bit_equal(reference_attention_cache(q, cache)))
      ++exact;
    else if (first_bad.empty())
      first_bad = fmt(" first failure kv%d ctx%d hd%d", bits, ctx, hd);
  }
  const double secs = seconds_since(t0);
  return {exact == kAttnProblems && secs < kSecondsBudget,
          fmt("%d/%d bit-exact (tol 0 bits), %.1fs", exact, kAttnProblems, secs) + first_bad};
}

// 3 ---------------------------------------------------------------------------
Outcome layout_claims() {
  std::mt19937_64 rng(3003);
  int configs = 0, clean = 0;
  for (const char* arch : {"sm75", "sm80", "sm90"})
    for (int bits : {4, 8, 16})
      for (bool zp : {true, false})
        for (bool two : {true, false})
          for (auto [rows, cols] : {std::pair{16, 16}, {64, 128}, {37, 200}}) {
            const auto q = testing::random_quantized(rows, cols, bits, 32, zp, rng);
            const LayoutReport r = verify_layout(pack_weights(q, find_arch(arch), two));
            ++configs;
            if (r.transactions == 1 && r.conflict_degree == 1 && r.mma_aligned) ++clean;
          }
  const NaiveControls c = naive_controls();
  const bool controls = c.column_load_conflict == 8 && c.lane_stride_conflict == 32 &&
                        c.half_offset_transactions == 2 && c.row_major_tile_transactions >= 2 &&
                        c.column_load_after_ldmatrix == 1;
  return {clean == configs && controls,
          fmt("%d/%d packed configs {1,1,true}; controls: column load %d-way, lane stride %d-way, "
              "offset tile %d transactions, after ldmatrix %d-way",
              clean, configs, c.column_load_conflict, c.lane_stride_conflict,
              c.half_offset_transactions, c.column_load_after_ldmatrix)};
}

// 4 ---------------------------------------------------------------------------
Outcome k_slices() {
  const int f16 = make_rearrange_params(128, 16).k_k;
  const int i8 = make_rearrange_params(128, 8).k_k;
  const int u4 = make_rearrange_params(128, 4).k_k;
  return {f16 == 8 && i8 == 16 && u4 == 32, fmt("HeadDim 128: K_K = %d/%d/%d (want 8/16/32)", f16, i8, u4)};
}

// 5 ---------------------------------------------------------------------------
// Channel that the hardware delivers to k-position kk of MMA k-step f: the
// ldmatrix register of lane t = (kk % 8) / 2 covers bytes 4t..4t+3 of the
// 16-byte row segment (kk / 8) of 32-byte column group f / X, i.e. 2X packed
// values in natural order, and k-step f % X consumes the pair 2 (f % X).
int delivered_channel(int f, int kk, int x) {
  const int group = f / x, sub = f % x;
  const int t = (kk % 8) / 2, d = kk / 8, e = kk % 2;
  const int first = x * (16 * group + 8 * d + 2 * t);
  return first + 2 * sub + e;
}

Outcome rearrangement() {
  std::mt19937_64 rng(5005);
  int exact = 0, total = 0, worst_conflict = 0;
  for (int bits : {4, 8, 16}) {
    const int x = 16 / bits;
    for (int tile = 0; tile < kRearrangeTiles; ++tile) {
      const int hd = tile % 2 ? 128 : 64;
      const auto p = make_rearrange_params(hd, bits);
      const auto keys = testing::random_quantized(16, hd, bits, 32, tile % 3 != 0, rng);
      const Tensor q_tile = oracle::random_half_tensor({8, hd}, rng);
      const RearrangedQ rq = rearrange_q(q_tile, p);
      for (const auto& t : rq.loads) worst_conflict = std::max(worst_conflict, bank_conflict_degree(t));
      const Tensor st = scatter_fragment(key_scores(rq, p, keys, 0), Dtype::kF32);
      const Tensor kd = dequantize(keys);
      bool ok = true;
      for (int t = 0; t < 16 && ok; ++t)
        for (int r = 0; r < 8; ++r) {
          float acc = 0.0f;
          for (int f = 0; f < hd / 16; ++f)
            for (int kk = 0; kk < 16; ++kk) {
              const int ch = delivered_channel(f, kk, x);
              acc += kd.f16(static_cast<std::size_t>(t * hd + ch)).to_float() *
                     q_tile.f16(static_cast<std::size_t>(r * hd + ch)).to_float();
            }
          if (st.f32(static_cast<std::size_t>(t * 8 + r)) != acc) {
            ok = false;
            break;
          }
        }
      ++total;
      if (ok) ++exact;
    }
  }
  return {exact == total && worst_conflict == 1,
          fmt("%d/%d tiles S == q k^T bit-exact; Q shared-load conflict degree %d", exact, total,
              worst_conflict)};
}

// 6 ---------------------------------------------------------------------------
Outcome packing_round_trip() {
  std::mt19937_64 rng(6006);
  const char* archs[] = {"sm75", "sm80", "sm90"};
  int ok = 0;
  for (int i = 0; i < kPackCases; ++i) {
    const int bits = i % 3 == 0 ? 16 : (i % 3 == 1 ? 4 : 8);
    const int rows = 1 + static_cast<int>(rng() % 96);
    const int cols = 1 + static_cast<int>(rng() % 300);
    const int group = 16 * (1 + static_cast<int>(rng() % 8));
    const bool zp = rng() % 2 == 0;
    const auto q = testing::random_quantized(rows, cols, bits, group, zp, rng);
    const PackedWeights p = pack_weights(q, find_arch(archs[i % 3]), rng() % 4 != 0);
    const auto back = deserialize_packed(serialize_packed(p));
    if (testing::same_codes(unpack_weights(back), q)) ++ok;
  }

  int swizzle_ok = 0;
  for (int i = 0; i < kPropertyTrials; ++i) {
    const int row = static_cast<int>(rng() % 4096), chunk = static_cast<int>(rng() % 8);
    if (swizzle_index(row, swizzle_index(row, chunk)) == chunk) ++swizzle_ok;
  }

  // ldmatrix.x4 over a random 16 x 16 window of a random 16 x 64 tile, then
  // the inverse lane gather; alternated with fragment gather/scatter.
  int bijection_ok = 0;
  std::uniform_int_distribution<int> val(0, 0xFFFF);
  for (int i = 0; i < kPropertyTrials; ++i) {
    if (i % 2) {
      const Role role = std::array{Role::kA, Role::kB, Role::kC}[static_cast<std::size_t>(i % 3)];
      const auto [r, c] = operand_extent(role);
      const Tensor t = oracle::random_half_tensor({r, c}, rng);
      if (scatter_fragment(gather_fragment(t, role), Dtype::kF16).bit_equal(t)) ++bijection_ok;
      continue;
    }
    SharedTile tile(16, 128, 128, rng() % 2 == 0);
    std::vector<std::uint16_t> ref(16 * 64);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 64; ++c) {
        ref[static_cast<std::size_t>(r * 64 + c)] = static_cast<std::uint16_t>(val(rng));
        tile.set(r, c, ref[static_cast<std::size_t>(r * 64 + c)]);
      }
    const int cb = 2 * static_cast<int>(rng() % 4);
    std::vector<std::int64_t> rows;
    for (int j = 0; j < 32; ++j) rows.push_back(tile.address((j / 8) % 2 * 8 + j % 8, 16 * (cb + j / 16)));
    const auto ld = ldmatrix_emulate(tile, rows, 4);
    bool same = true;
    for (int m = 0; m < 4; ++m)
      for (int lane = 0; lane < kWarpSize; ++lane) {
        const auto [r, c] = oracle::m8n8_owner(lane);
        const std::size_t at = static_cast<std::size_t>(((m % 2) * 8 + r) * 64 + (cb + m / 2) * 8 + c);
        const auto w = ld.regs[static_cast<std::size_t>(lane)][static_cast<std::size_t>(m)];
        same = same && (w & 0xFFFF) == ref[at] && (w >> 16) == ref[at + 1];
      }
    if (same) ++bijection_ok;
  }
  return {ok == kPackCases && swizzle_ok == kPropertyTrials && bijection_ok == kPropertyTrials,
          fmt("round trip %d/%d; swizzle involution %d/%d; gather/scatter bijection %d/%d", ok,
              kPackCases, swizzle_ok, kPropertyTrials, bijection_ok, kPropertyTrials)};
}

// 7 ---------------------------------------------------------------------------
Outcome overlap_model() {
  const OverlapReport r =
      compare_overlap(gemm_schedule(256, 3, true), gemm_schedule(256, 3, false), UnitLatencies{});
  const bool ratios = r.instr_ratio > kMinInstrRatio && r.cycle_ratio < kMaxCycleRatio;

  std::mt19937_64 rng(7007);
  std::uniform_int_distribution<int> lat_d(0, 24);
  int ordered = 0;
  for (int i = 0; i < kSchedTrials; ++i) {
    UnitLatencies lat;
    lat.load = lat_d(rng);
    lat.lds = lat_d(rng);
    lat.i2f = lat_d(rng);
    lat.mma = lat_d(rng);
    lat.fma = lat_d(rng) / 4;
    const int depth = 1 + static_cast<int>(rng() % 4);
    const PipelineSchedule s =
        i % 2 ? gemm_schedule(1 + static_cast<int>(rng() % 64), depth, rng() % 4 != 0)
              : attention_schedule(1 + static_cast<std::int64_t>(rng() % 400), 4 << (rng() % 3), depth);
    if (simulate(s, lat).total <= simulate(serialize(s), lat).total) ++ordered;
  }

  // mma >= lds + i2f with loads hidden behind one macro-tile of MMAs.
  int hidden = 0, bubble_trials = 0;
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    UnitLatencies lat;
    lat.lds = lat_d(rng) / 2;
    lat.i2f = lat_d(rng) / 2;
    lat.mma = lat.lds + lat.i2f + lat_d(rng) / 4;
    if (lat.mma == 0) continue;
    lat.load = static_cast<int>(rng() % static_cast<std::uint64_t>(4 * lat.mma + 1));
    const int depth = 2 + static_cast<int>(rng() % 3);
    const auto s = attention_schedule(64 * (2 + static_cast<int>(rng() % 16)), i % 2 ? 4 : 8, depth);
    const double steady = attention_bubbles(s, lat).steady;
    worst = std::max(worst, steady);
    ++bubble_trials;
    if (steady == 0.0) ++hidden;
  }
  return {ratios && ordered == kSchedTrials && hidden == bubble_trials,
          fmt("instr_ratio %.3f (> %.2f), cycle_ratio %.4f (< %.2f); pipelined <= serial %d/%d; "
              "steady TC bubbles 0 in %d/%d (worst %.3f)",
              r.instr_ratio, kMinInstrRatio, r.cycle_ratio, kMaxCycleRatio, ordered, kSchedTrials,
              hidden, bubble_trials, worst)};
}

// 8 ---------------------------------------------------------------------------
Outcome quant_bound() {
  std::mt19937_64 rng(8008);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::uniform_real_distribution<float> spread(-6.0f, 6.0f);
  const int sizes[] = {16, 32, 64, 128};
  int within = 0;
  double worst = 0.0;  // error / bound
  std::vector<Half> v;
  for (int g = 0; g < kQuantGroups; ++g) {
    const int n = sizes[g % 4];
    const int bits = (g / 4) % 2 ? 8 : 4;
    const bool zp = (g / 8) % 2 == 0;
    const float mag = std::exp2(spread(rng));
    const float shift = (g % 3 == 0) ? nd(rng) * mag : 0.0f;
    v.resize(static_cast<std::size_t>(n));
    for (auto& h : v) h = fp16_round(nd(rng) * mag + shift);
    const QuantizedTensor q = quantize_group(v, bits, n, zp);
    const Tensor d = dequantize(q);
    const float scale = q.scale(0, 0).to_float();
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const float x = v[static_cast<std::size_t>(i)].to_float();
      const float y = d.f16(static_cast<std::size_t>(i)).to_float();
      const float bound = scale / 2 + half_ulp(std::max(std::fabs(x), std::fabs(y)));
      const float err = std::fabs(x - y);
      worst = std::max(worst, static_cast<double>(err / bound));
      ok = ok && err <= bound;
    }
    if (ok) ++within;
  }
  return {within == kQuantGroups,
          fmt("%d/%d groups within scale/2 + 1 ULP (worst error/bound %.3f)", within, kQuantGroups, worst)};
}

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "gemm path equivalence", gemm_equivalence},
      {2, "attention path equivalence", attention_equivalence},
      {3, "layout claims", layout_claims},
      {4, "k-slice counts", k_slices},
      {5, "rearrangement correctness", rearrangement},
      {6, "packing round trip", packing_round_trip},
      {7, "overlap model", overlap_model},
      {8, "quantization bound", quant_bound},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
