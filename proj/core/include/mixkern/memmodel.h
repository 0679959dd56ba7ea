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

#include <array>
#include <cstdint>
#include <vector>

namespace mixkern {

inline constexpr int kWarpSize = 32;

struct MemConfig {
  int warp_size = kWarpSize;
  int bank_count = 32;
  int bank_width = 4;     // bytes
  int segment_size = 128; // bytes

  void validate() const;
};

// One warp-wide memory operation: a start address per lane plus a uniform
// access width. Inactive lanes are ignored by every model.
struct AccessTrace {
  std::array<std::int64_t, kWarpSize> addr{};
  int width = 4;
  std::uint32_t active = 0xFFFFFFFFu;

  bool is_active(int lane) const { return (active >> lane) & 1u; }

  // Lane i at base + i * stride, all lanes active.
  static AccessTrace strided(std::int64_t base, std::int64_t stride, int width);
  // Lanes 0..lanes-1 at the given addresses, the rest inactive.
  static AccessTrace from_addresses(const std::vector<std::int64_t>& addrs, int width);
};

// Distinct segment_size-aligned segments touched by the active lanes.
int coalesce_count(const AccessTrace& t, const MemConfig& cfg = {});

// Worst-case number of distinct words mapped to one bank within one phase.
// 4-byte accesses issue as one phase, 8-byte as two half-warp phases and
// 16-byte as four quarter-warp phases. Identical words broadcast.
int bank_conflict_degree(const AccessTrace& t, const MemConfig& cfg = {});

// 16-byte chunk index after the XOR swizzle of an 8 x 128-byte unit.
int swizzle_index(int row, int chunk);

// A modeled shared-memory region holding a 2-D array of 16-bit elements.
class SharedTile {
 public:
  SharedTile(int rows, int row_bytes, int row_stride, bool swizzled);

  int rows() const { return rows_; }
  int row_bytes() const { return row_bytes_; }
  int row_stride() const { return row_stride_; }
  bool swizzled() const { return swizzled_; }

  // Byte address of logical byte `col_byte` of `row` (swizzle applied).
  std::int64_t address(int row, int col_byte) const;

  std::uint16_t load16(std::int64_t addr) const;
  void store16(std::int64_t addr, std::uint16_t v);
  std::uint32_t load32(std::int64_t addr) const;

  // Element accessors in logical coordinates (16-bit elements).
  std::uint16_t at(int row, int col) const { return load16(address(row, 2 * col)); }
  void set(int row, int col, std::uint16_t v) { store16(address(row, 2 * col), v); }

 private:
  int rows_;
  int row_bytes_;
  int row_stride_;
  bool swizzled_;
  std::vector<std::uint8_t> mem_;
};

// Result of ldmatrix.x{1,2,4}: per lane one 32-bit register per matrix (two
// 16-bit elements, lower column in the low half) plus the trace of the 16-byte
// row reads.
struct LdmatrixResult {
  int count = 0;
  std::array<std::array<std::uint32_t, 4>, kWarpSize> regs{};
  AccessTrace trace;
};

// Lanes 8j..8j+7 supply the row addresses of matrix j. Throws kLayout on an
// address that is not 16-byte aligned or out of the region.
LdmatrixResult ldmatrix_emulate(const SharedTile& tile,
                                const std::vector<std::int64_t>& row_addrs,
                                int count);

}  // namespace mixkern
