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

#include <array>
#include <string>

namespace mixkern {

namespace {

void check_shape(const MmaShape& s) {
  check(s == MmaShape{}, ErrorKind::kInvalidArgument,
        "only the 16x8x16 lane layout is implemented");
}

}  // namespace

const char* role_name(Role r) {
  switch (r) {
    case Role::kA: return "A";
    case Role::kB: return "B";
    case Role::kC: return "C";
    case Role::kD: return "D";
  }
  return "?";
}

std::pair<int, int> operand_extent(Role role, const MmaShape& s) {
  switch (role) {
    case Role::kA: return {s.m, s.k};
    case Role::kB: return {s.k, s.n};
    default: return {s.m, s.n};
  }
}

int slots_per_lane(Role role, const MmaShape& s) {
  const auto [r, c] = operand_extent(role, s);
  return r * c / kWarpSize;
}

Fragment::Fragment(Role r, MmaShape s) : role(r), shape(s) {
  check_shape(s);
  values.assign(static_cast<std::size_t>(kWarpSize * slots()), 0.0f);
}

std::pair<int, int> fragment_coord(Role role, int lane, int slot, const MmaShape& shape) {
  check_shape(shape);
  check(lane >= 0 && lane < kWarpSize && slot >= 0 && slot < slots_per_lane(role, shape),
        ErrorKind::kInvalidArgument, "lane/slot out of range");
  const int g = lane / 4;
  const int t = lane % 4;
  switch (role) {
    case Role::kA:
      return {g + 8 * ((slot / 2) % 2), 2 * t + slot % 2 + 8 * (slot / 4)};
    case Role::kB:
      return {2 * t + slot % 2 + 8 * (slot / 2), g};
    default:
      return {g + 8 * (slot / 2), 2 * t + slot % 2};
  }
}

LaneSlot fragment_slot(Role role, int row, int col, const MmaShape& shape) {
  check_shape(shape);
  const auto [rows, cols] = operand_extent(role, shape);
  check(row >= 0 && row < rows && col >= 0 && col < cols, ErrorKind::kInvalidArgument,
        "tile coordinate out of range");
  switch (role) {
    case Role::kA: {
      const int lane = (row % 8) * 4 + (col % 8) / 2;
      return {lane, (col / 8) * 4 + (row / 8) * 2 + col % 2};
    }
    case Role::kB: {
      const int lane = col * 4 + (row % 8) / 2;
      return {lane, (row / 8) * 2 + row % 2};
    }
    default: {
      const int lane = (row % 8) * 4 + col / 2;
      return {lane, (row / 8) * 2 + col % 2};
    }
  }
}

Fragment gather_fragment(const Tensor& tile, Role role, const MmaShape& shape) {
  const auto [rows, cols] = operand_extent(role, shape);
  check(tile.rank() == 2 && tile.dim(0) == rows && tile.dim(1) == cols,
        ErrorKind::kInvalidArgument,
        std::string("tile extents do not match operand ") + role_name(role));
  check(tile.dtype() == Dtype::kF16 || tile.dtype() == Dtype::kF32,
        ErrorKind::kInvalidArgument, "fragments hold f16 or f32 values");
  return gather_with(
      role,
      [&](int r, int c) { return tile.value(static_cast<std::size_t>(r * cols + c)); },
      shape);
}

Tensor scatter_fragment(const Fragment& f, Dtype dtype) {
  check(dtype == Dtype::kF16 || dtype == Dtype::kF32, ErrorKind::kInvalidArgument,
        "fragments scatter to f16 or f32");
  const auto [rows, cols] = operand_extent(f.role, f.shape);
  Tensor t({rows, cols}, dtype);
  for (int lane = 0; lane < kWarpSize; ++lane)
    for (int s = 0; s < f.slots(); ++s) {
      const auto [r, c] = fragment_coord(f.role, lane, s, f.shape);
      const auto i = static_cast<std::size_t>(r * cols + c);
      if (dtype == Dtype::kF16)
        t.set_f16(i, fp16_round(f.at(lane, s)));
      else
        t.set_f32(i, f.at(lane, s));
    }
  return t;
}

Fragment mma_emulate(const Fragment& a, const Fragment& b, const Fragment& c) {
  check(a.role == Role::kA && b.role == Role::kB &&
            (c.role == Role::kC || c.role == Role::kD),
        ErrorKind::kInvalidArgument, "mma operands have the wrong roles");
  check(a.shape == b.shape && b.shape == c.shape && a.shape == MmaShape{},
        ErrorKind::kInvalidArgument, "mma operand shapes differ");
  struct Tables {
    std::array<int, 256> a_index{};  // lane * 8 + slot -> r * 16 + k
    std::array<int, 128> b_index{};  // lane * 4 + slot -> k * 8 + n
    std::array<int, 128> d_row{};
    std::array<int, 128> d_col{};
  };
  static const Tables tab = [] {
    Tables t;
    for (int lane = 0; lane < kWarpSize; ++lane) {
      for (int i = 0; i < 8; ++i) {
        const auto [r, k] = fragment_coord(Role::kA, lane, i);
        t.a_index[static_cast<std::size_t>(lane * 8 + i)] = r * 16 + k;
      }
      for (int i = 0; i < 4; ++i) {
        const auto [k, n] = fragment_coord(Role::kB, lane, i);
        t.b_index[static_cast<std::size_t>(lane * 4 + i)] = k * 8 + n;
        const auto [r, col] = fragment_coord(Role::kD, lane, i);
        t.d_row[static_cast<std::size_t>(lane * 4 + i)] = r;
        t.d_col[static_cast<std::size_t>(lane * 4 + i)] = col;
      }
    }
    return t;
  }();

  std::array<float, 256> at{};
  std::array<float, 128> bt{};
  for (std::size_t i = 0; i < 256; ++i) at[static_cast<std::size_t>(tab.a_index[i])] = a.values[i];
  for (std::size_t i = 0; i < 128; ++i) bt[static_cast<std::size_t>(tab.b_index[i])] = b.values[i];
  Fragment d(Role::kD);
  for (std::size_t i = 0; i < 128; ++i) {
    const float* ar = at.data() + tab.d_row[i] * 16;
    const int n = tab.d_col[i];
    float acc = c.values[i];
    for (int kk = 0; kk < 16; ++kk) acc += ar[kk] * bt[static_cast<std::size_t>(kk * 8 + n)];
    d.values[i] = acc;
  }
  return d;
}

}  // namespace mixkern
