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

#include <utility>
#include <vector>

#include "mixkern/error.h"
#include "mixkern/memmodel.h"
#include "mixkern/tensor.h"

namespace mixkern {

struct MmaShape {
  int m = 16;
  int n = 8;
  int k = 16;

  friend bool operator==(const MmaShape&, const MmaShape&) = default;
};

enum class Role { kA, kB, kC, kD };

const char* role_name(Role r);

// Tile extents of an operand: A is m x k, B is k x n, C/D are m x n.
std::pair<int, int> operand_extent(Role role, const MmaShape& shape = {});
int slots_per_lane(Role role, const MmaShape& shape = {});

// Per-lane register contents of one warp for one operand tile. Slot values
// are kept as binary32; f16 operands hold exactly representable values.
struct Fragment {
  Role role = Role::kA;
  MmaShape shape;
  std::vector<float> values;  // [lane * slots + slot]

  Fragment() = default;
  Fragment(Role r, MmaShape s = {});

  int slots() const { return slots_per_lane(role, shape); }
  float at(int lane, int slot) const {
    return values[static_cast<std::size_t>(lane * slots() + slot)];
  }
  float& at(int lane, int slot) {
    return values[static_cast<std::size_t>(lane * slots() + slot)];
  }
  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct LaneSlot {
  int lane = 0;
  int slot = 0;
  friend bool operator==(const LaneSlot&, const LaneSlot&) = default;
};

// The m16n8k16 lane layout (g = lane / 4, t = lane % 4):
//   A  slot i: row g + 8 * ((i / 2) % 2), col 2t + i % 2 + 8 * (i / 4)
//   B  slot i: k   2t + i % 2 + 8 * (i / 2), n g
//   C/D slot i: row g + 8 * (i / 2),       col 2t + i % 2
// Returned coordinates are (row, col) of the operand tile; for B that is
// (k, n).
std::pair<int, int> fragment_coord(Role role, int lane, int slot,
                                   const MmaShape& shape = {});
LaneSlot fragment_slot(Role role, int row, int col, const MmaShape& shape = {});

// Builds a fragment from value(row, col) over the operand tile.
template <class F>
Fragment gather_with(Role role, F&& value, const MmaShape& shape = {}) {
  Fragment f(role, shape);
  for (int lane = 0; lane < kWarpSize; ++lane)
    for (int s = 0; s < f.slots(); ++s) {
      const auto [r, c] = fragment_coord(role, lane, s, shape);
      f.at(lane, s) = static_cast<float>(value(r, c));
    }
  return f;
}

// tile: 2-D f16 or f32 tensor with the operand's extents.
Fragment gather_fragment(const Tensor& tile, Role role, const MmaShape& shape = {});
// Inverse of gather_fragment; dtype f16 rounds nothing because f16 fragments
// only ever hold f16 values.
Tensor scatter_fragment(const Fragment& f, Dtype dtype = Dtype::kF32);

// D = C + A * B. Each output accumulates its k products in ascending order in
// binary32, starting from C.
Fragment mma_emulate(const Fragment& a, const Fragment& b, const Fragment& c);

}  // namespace mixkern
