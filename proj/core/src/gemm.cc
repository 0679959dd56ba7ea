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

#include "mixkern/gemm.h"

#include <string>

#include "mixkern/error.h"
#include "mixkern/mma.h"

namespace mixkern {

Tensor reference_gemm(const Tensor& a, const Tensor& w) {
  check(a.dtype() == Dtype::kF16 && w.dtype() == Dtype::kF16, ErrorKind::kInvalidArgument,
        "reference_gemm expects f16 operands");
  check(a.rank() == 2 && w.rank() == 2 && a.dim(1) == w.dim(1), ErrorKind::kInvalidArgument,
        "inner extents do not agree");
  const std::int64_t m = a.dim(0);
  const std::int64_t n = w.dim(0);
  const std::int64_t k = a.dim(1);
  const auto af = a.to_floats();
  const auto wf = w.to_floats();
  Tensor out({m, n}, Dtype::kF16);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      const float* ar = af.data() + i * k;
      const float* wr = wf.data() + j * k;
      float acc = 0.0f;
      for (std::int64_t kk = 0; kk < k; ++kk) acc += ar[kk] * wr[kk];
      out.set_f16(static_cast<std::size_t>(i * n + j), fp16_round(acc));
    }
  return out;
}

namespace {

std::array<Fragment, 2> passthrough_fragments(const PackedWeights& p, int nt, int kt) {
  auto value = [&](int h) {
    return [&p, nt, kt, h](int k, int n) {
      const int row = nt * 16 + 8 * h + n;
      const int col = kt * 16 + k;
      if (row >= p.rows || col >= p.cols) return 0.0f;
      const std::size_t i = static_cast<std::size_t>(row) * static_cast<std::size_t>(p.cols) +
                            static_cast<std::size_t>(col);
      const auto bits = static_cast<std::uint16_t>(p.words[i / 2] >> (16 * (i % 2)));
      return Half::from_bits(bits).to_float();
    };
  };
  return {gather_with(Role::kB, value(0)), gather_with(Role::kB, value(1))};
}

}  // namespace

GemmResult mixed_gemm(const Tensor& a, const PackedWeights& w, const ArchProfile& arch,
                      int depth) {
  check(w.arch_id == arch.id, ErrorKind::kLayout,
        "weights packed for arch id " + std::to_string(w.arch_id) + ", active profile is " +
            arch.name);
  check(a.dtype() == Dtype::kF16 && a.rank() == 2 && a.dim(1) == w.cols,
        ErrorKind::kInvalidArgument, "activations must be f16 [M][K] with K matching the weights");
  const std::int64_t m = a.dim(0);
  const int k = w.cols;
  const bool passthrough = w.bits == 16;
  const int n_tiles = passthrough ? (w.rows + 15) / 16 : w.n_tiles();
  const int k_tiles = passthrough ? (w.cols + 15) / 16 : w.k_tiles();
  const int m_tiles = static_cast<int>((m + 15) / 16);

  const auto af = a.to_floats();
  GemmResult res;
  res.out = Tensor({m, w.rows}, Dtype::kF16);
  res.schedule = gemm_schedule(k_tiles, depth, !passthrough);

  std::vector<std::array<Fragment, 2>> acc(static_cast<std::size_t>(m_tiles));
  for (int nt = 0; nt < n_tiles; ++nt) {
    for (auto& c : acc) c = {Fragment(Role::kC), Fragment(Role::kC)};
    for (int kt = 0; kt < k_tiles; ++kt) {
      const auto b = passthrough
                         ? passthrough_fragments(w, nt, kt)
                         : dequant_fragment(load_code_fragment(w, nt, kt), tile_quant(w, nt, kt),
                                            w.perm_id);
      for (int mt = 0; mt < m_tiles; ++mt) {
        const Fragment af_tile = gather_with(Role::kA, [&](int r, int c) {
          const std::int64_t row = mt * 16 + r;
          const int col = kt * 16 + c;
          return row < m && col < k ? af[static_cast<std::size_t>(row * k + col)] : 0.0f;
        });
        auto& c = acc[static_cast<std::size_t>(mt)];
        c[0] = mma_emulate(af_tile, b[0], c[0]);
        c[1] = mma_emulate(af_tile, b[1], c[1]);
      }
    }
    for (int mt = 0; mt < m_tiles; ++mt)
      for (int h = 0; h < 2; ++h) {
        const Fragment& d = acc[static_cast<std::size_t>(mt)][static_cast<std::size_t>(h)];
        for (int lane = 0; lane < kWarpSize; ++lane)
          for (int s = 0; s < d.slots(); ++s) {
            const auto [r, c] = fragment_coord(Role::kD, lane, s);
            const std::int64_t row = mt * 16 + r;
            const int col = nt * 16 + 8 * h + c;
            if (row < m && col < w.rows)
              res.out.set_f16(static_cast<std::size_t>(row * w.rows + col),
                              fp16_round(d.at(lane, s)));
          }
      }
  }
  return res;
}

}  // namespace mixkern
